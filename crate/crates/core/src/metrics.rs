//! OSPA distance between labelled state sets and its time average.
//!
//! The base distance is the Euclidean distance between positions; labels
//! and velocities do not enter it.

use nalgebra::Vector4;

use crate::error::{Error, Result};

/// States `[px, vx, py, vy]` with labels, at one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub items: Vec<(u64, Vector4<f64>)>,
}

impl LabeledSet {
    pub fn new(items: Vec<(u64, Vector4<f64>)>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn position_distance(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    (a[0] - b[0]).hypot(a[2] - b[2])
}

/// Minimum-cost assignment of every row to a distinct column for a
/// `rows x cols` cost matrix with `rows <= cols` (shortest augmenting path
/// with potentials). Returns the column of each row and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    // 1-based arrays; p[j] is the row matched to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assign, total)
}

/// OSPA distance of order `p` with cutoff `c`; 0 when both sets are empty.
pub fn ospa(x: &LabeledSet, y: &LabeledSet, p: f64, c: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid("OSPA order must be >= 1"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("OSPA cutoff must be positive"));
    }
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return Ok(0.0);
    }
    let cost: Vec<Vec<f64>> = small
        .items
        .iter()
        .map(|(_, a)| {
            large
                .items
                .iter()
                .map(|(_, b)| position_distance(a, b).min(c).powf(p))
                .collect()
        })
        .collect();
    let (_, matched) = hungarian(&cost);
    let total = matched + (n - m) as f64 * c.powf(p);
    Ok((total / n as f64).powf(1.0 / p))
}

/// Mean of the per-frame OSPA distances.
pub fn mospa(series: &[(LabeledSet, LabeledSet)], p: f64, c: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::invalid("MOSPA needs at least one frame"));
    }
    let mut acc = 0.0;
    for (x, y) in series {
        acc += ospa(x, y, p, c)?;
    }
    Ok(acc / series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: &[(f64, f64)]) -> LabeledSet {
        LabeledSet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| (i as u64, Vector4::new(x, 0.0, y, 0.0)))
                .collect(),
        )
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn basic_cases() {
        let a = set(&[(0.0, 1.0), (3.0, 4.0)]);
        assert_eq!(ospa(&a, &a, 1.0, 10.0).unwrap(), 0.0);
        assert!((ospa(&LabeledSet::default(), &a, 1.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(
            ospa(&LabeledSet::default(), &LabeledSet::default(), 1.0, 10.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn crossed_pairing() {
        let x = set(&[(0.0, 0.0), (10.0, 0.0)]);
        let y = set(&[(1.0, 0.0), (13.0, 0.0)]);
        // straight pairing costs (1, 3); crossing pairs are far apart
        let y2 = set(&[(11.0, 0.0), (1.0, 0.0)]);
        assert!((ospa(&x, &y2, 1.0, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ospa(&x, &y, 1.0, 10.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            let (assign, total) = hungarian(&cost);
            let best = permutations(n)
                .into_iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((total - best).abs() < 1e-9);
            let mut seen = assign.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn rectangular_assignment() {
        let cost = vec![vec![5.0, 1.0, 9.0], vec![1.0, 2.0, 9.0]];
        let (assign, total) = hungarian(&cost);
        assert_eq!(assign, vec![1, 0]);
        assert_eq!(total, 2.0);
    }

    #[test]
    fn metric_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random_set = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(0..5);
            set(&(0..k)
                .map(|_| (rng.random_range(-20.0..20.0), rng.random_range(0.0..40.0)))
                .collect::<Vec<_>>())
        };
        for _ in 0..200 {
            let a = random_set(&mut rng);
            let b = random_set(&mut rng);
            let c = random_set(&mut rng);
            let ab = ospa(&a, &b, 1.0, 10.0).unwrap();
            let ba = ospa(&b, &a, 1.0, 10.0).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!(ab <= 10.0 + 1e-12);
            let ac = ospa(&a, &c, 1.0, 10.0).unwrap();
            let cb = ospa(&c, &b, 1.0, 10.0).unwrap();
            assert!(ab <= ac + cb + 1e-9);
            let mut relabeled = b.clone();
            for (l, _) in relabeled.items.iter_mut() {
                *l += 100;
            }
            assert!((ospa(&a, &relabeled, 1.0, 10.0).unwrap() - ab).abs() < 1e-12);
        }
    }

    #[test]
    fn all_beyond_cutoff() {
        let x = set(&[(0.0, 0.0), (0.0, 50.0)]);
        let y = set(&[(40.0, 0.0), (40.0, 50.0)]);
        assert!((ospa(&x, &y, 1.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((ospa(&x, &y, 2.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mospa_cases() {
        let a = set(&[(0.0, 0.0)]);
        let b = set(&[(0.0, 3.0)]);
        let e = LabeledSet::default();
        assert!(
            (mospa(&[(a.clone(), b.clone()), (a.clone(), b.clone())], 1.0, 10.0).unwrap() - 3.0)
                .abs()
                < 1e-12
        );
        assert_eq!(mospa(&[(a.clone(), a.clone())], 1.0, 10.0).unwrap(), 0.0);
        assert!((mospa(&[(a.clone(), a.clone()), (e, b)], 1.0, 10.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(mospa(&[], 1.0, 10.0).is_err());
    }
}
