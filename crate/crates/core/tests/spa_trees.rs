//! Sum-product association is exact when the gating graph has no cycles.

use mmtrack::assoc::spa_iterate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact(beta0: &DMatrix<f64>, xi0: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (k, h) = (beta0.nrows(), xi0.nrows());
    let mut beta = DMatrix::zeros(k, h + 1);
    let mut xi = DMatrix::zeros(h, k + 1);
    let mut total = 0.0;
    for code in 0..(h + 1).pow(k as u32) {
        let mut a = vec![0; k];
        let mut c = code;
        for slot in a.iter_mut() {
            *slot = c % (h + 1);
            c /= h + 1;
        }
        let mut owner = vec![0; h];
        let mut ok = true;
        for (ki, &ai) in a.iter().enumerate() {
            if ai > 0 {
                ok &= owner[ai - 1] == 0;
                owner[ai - 1] = ki + 1;
            }
        }
        if !ok {
            continue;
        }
        let mut w: f64 = a
            .iter()
            .enumerate()
            .map(|(ki, &ai)| beta0[(ki, ai)])
            .product();
        w *= owner
            .iter()
            .enumerate()
            .map(|(hi, &o)| xi0[(hi, o)])
            .product::<f64>();
        total += w;
        for (ki, &ai) in a.iter().enumerate() {
            beta[(ki, ai)] += w;
        }
        for (hi, &o) in owner.iter().enumerate() {
            xi[(hi, o)] += w;
        }
    }
    (beta / total, xi / total)
}

/// Random gating forest: every track-measurement edge joins two components
/// that were disconnected before, so no cycle can form.
fn random_forest(rng: &mut ChaCha8Rng, k: usize, h: usize) -> Vec<Vec<bool>> {
    let mut parent: Vec<usize> = (0..k + h).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            i = p[i];
        }
        i
    }
    let mut gates = vec![vec![false; h]; k];
    for _ in 0..3 * (k + h) {
        let (ki, hi) = (rng.random_range(0..k), rng.random_range(0..h));
        let (a, b) = (root(&mut parent, ki), root(&mut parent, k + hi));
        if a != b {
            parent[a] = b;
            gates[ki][hi] = true;
        }
    }
    gates
}

#[test]
fn forests_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 1..=4 {
        for h in 1..=4 {
            for _ in 0..40 {
                let gates = random_forest(&mut rng, k, h);
                let mut beta0 = DMatrix::zeros(k, h + 1);
                let mut xi0 = DMatrix::zeros(h, k + 1);
                for ki in 0..k {
                    beta0[(ki, 0)] = rng.random_range(0.05..1.0);
                    for hi in 0..h {
                        if gates[ki][hi] {
                            beta0[(ki, hi + 1)] = rng.random_range(0.0..5.0);
                            xi0[(hi, ki + 1)] = 1.0;
                        }
                    }
                }
                for hi in 0..h {
                    xi0[(hi, 0)] = rng.random_range(0.001..2.0);
                }
                let spa = spa_iterate(&beta0, &xi0, 10, false).unwrap();
                let (beta, xi) = exact(&beta0, &xi0);
                assert!(
                    (&spa.beta - beta).amax() < 1e-9,
                    "k={k} h={h} gates={gates:?}"
                );
                assert!((&spa.xi - xi).amax() < 1e-9);
            }
        }
    }
}

#[test]
fn early_exit_reaches_same_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let beta0 = DMatrix::from_fn(3, 4, |_, h| {
            if h == 0 {
                0.1
            } else {
                rng.random_range(0.0..2.0)
            }
        });
        let xi0 = DMatrix::from_fn(3, 4, |_, k| if k == 0 { 0.01 } else { 1.0 });
        let full = spa_iterate(&beta0, &xi0, 200, false).unwrap();
        let early = spa_iterate(&beta0, &xi0, 200, true).unwrap();
        assert!(early.iterations <= full.iterations);
        assert!((&full.beta - &early.beta).amax() < 1e-6);
    }
}
