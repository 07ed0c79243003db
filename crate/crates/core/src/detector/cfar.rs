//! Cell-averaging CFAR over multi-snapshot periodograms.
//!
//! The cell statistic is `T = sum_l |<a, Y_l>|^2 / (N M)`. Under white noise
//! each term is `sigma2 / 2 * chi2(2)`, so `T` is `sigma2 / 2 * chi2(2L)` and
//! the mean of `n` independent training cells is `sigma2 / (2n) * chi2(2nL)`.
//! Their ratio is Fisher-Snedecor `F(2L, 2nL)`, which gives the multiplier.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarConfig {
    /// Per-frame design false alarm probability, spread over the `N M` cells.
    pub p_fa: f64,
    /// Outer half-widths of the training rectangle, `[range, Doppler]`.
    pub train_band: [usize; 2],
    /// Half-widths of the guard rectangle (includes the cell under test).
    pub guard_band: [usize; 2],
    /// Threshold multiplier override; computed from `p_fa` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub k_max: usize,
    pub k_invalid: usize,
    /// Oversampling factor of the argmax grid.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

fn default_oversample() -> usize {
    4
}

impl Default for CfarConfig {
    /// Per-frame `p_fa = 0.01` over a 128 x 64 grid, 50 training cells,
    /// `K_max = 30`, `K_invalid = 3`.
    fn default() -> Self {
        Self {
            p_fa: 0.01,
            train_band: [5, 4],
            guard_band: [3, 3],
            alpha: None,
            k_max: 30,
            k_invalid: 3,
            oversample: 4,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::invalid(format!(
                "p_fa must lie in (0, 1), got {}",
                self.p_fa
            )));
        }
        if self.k_invalid == 0 || self.k_max == 0 {
            return Err(Error::invalid("K_max and K_invalid must be at least 1"));
        }
        if self.oversample == 0 {
            return Err(Error::invalid("oversample must be at least 1"));
        }
        if self.n_train() == 0 {
            return Err(Error::invalid("training band is empty"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid("alpha override must be positive"));
            }
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        let outer = (2 * self.train_band[0] + 1) * (2 * self.train_band[1] + 1);
        let inner = (2 * self.guard_band[0].min(self.train_band[0]) + 1)
            * (2 * self.guard_band[1].min(self.train_band[1]) + 1);
        outer - inner
    }

    /// Per-cell false alarm probability for an `n x m` grid.
    pub fn cell_p_fa(&self, n: usize, m: usize) -> f64 {
        self.p_fa / (n * m) as f64
    }

    /// Override if set, otherwise the exact multiplier for `l` snapshots.
    pub fn alpha_for(&self, n: usize, m: usize, l: usize) -> Result<f64> {
        match self.alpha {
            Some(a) => Ok(a),
            None => cfar_threshold_multiplier(self.cell_p_fa(n, m), self.n_train(), l),
        }
    }
}

/// Survival function of `F(d1, d2)`.
fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
}

/// Multiplier `alpha` with `P(T > alpha * mean(training)) = p_fa` for one
/// cell with `l` snapshots and `n_train` training cells.
pub fn cfar_threshold_multiplier(p_fa: f64, n_train: usize, l: usize) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::invalid(format!(
            "p_fa must lie in (0, 1), got {p_fa}"
        )));
    }
    if n_train == 0 || l == 0 {
        return Err(Error::invalid("n_train and L must be at least 1"));
    }
    let d1 = 2.0 * l as f64;
    let d2 = 2.0 * (n_train * l) as f64;
    let target = p_fa.ln();
    let g = |x: f64| f_sf(x, d1, d2).ln() - target;

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut expansions = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::NoConvergence(
                "could not bracket CFAR multiplier".into(),
            ));
        }
    }
    // bisection on the log survival, which is monotone in x
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence(
        "CFAR multiplier bisection did not converge".into(),
    ))
}

/// Offsets of the training ring: the outer rectangle minus the guard
/// rectangle.
pub fn ring_offsets(train: [usize; 2], guard: [usize; 2]) -> Vec<(isize, isize)> {
    let (tx, ty) = (train[0] as isize, train[1] as isize);
    let (gx, gy) = (guard[0] as isize, guard[1] as isize);
    let mut out = Vec::new();
    for dy in -ty..=ty {
        for dx in -tx..=tx {
            if dx.abs() <= gx && dy.abs() <= gy {
                continue;
            }
            out.push((dx, dy));
        }
    }
    out
}

/// Mean of the training cells around `(ix, iy)` on an `n x m` torus.
/// `grid` is indexed `iy * n + ix`.
pub(crate) fn ring_mean(
    grid: &[f64],
    n: usize,
    m: usize,
    ix: usize,
    iy: usize,
    offsets: &[(isize, isize)],
) -> f64 {
    let mut acc = 0.0;
    for &(dx, dy) in offsets {
        let x = (ix as isize + dx).rem_euclid(n as isize) as usize;
        let y = (iy as isize + dy).rem_euclid(m as isize) as usize;
        acc += grid[y * n + x];
    }
    acc / offsets.len() as f64
}
