//! Oversampled 2D spectra of the per-antenna snapshots and the closed-form
//! residue update.
//!
//! The spectrum of snapshot `Y_l` at `(wx, wy)` is
//! `sum_{n,m} Y_l[n, m] e^{-j(n wx + m wy)}`, evaluated on the grid
//! `wx = 2 pi ix / (N os)`, `wy = 2 pi iy / (M os)` by a zero-padded FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::signal::BasebandCube;

/// A sinusoid already extracted from the data: frequencies and per-antenna
/// gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub omega: [f64; 2],
    pub gains: Vec<Complex64>,
}

/// Per-antenna spectra on an `(N os) x (M os)` grid, indexed `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectra {
    pub n: usize,
    pub m: usize,
    pub os: usize,
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<Vec<Complex64>>,
}

impl Spectra {
    pub fn snapshots(&self) -> usize {
        self.data.len()
    }

    pub fn omega_x(&self, ix: usize) -> f64 {
        2.0 * PI * ix as f64 / self.nx as f64
    }

    pub fn omega_y(&self, iy: usize) -> f64 {
        2.0 * PI * iy as f64 / self.ny as f64
    }

    /// Noncoherent power `sum_l |F_l|^2 / (N M)` at grid cell `(ix, iy)`.
    pub fn power_at(&self, ix: usize, iy: usize) -> f64 {
        let idx = iy * self.nx + ix;
        self.data.iter().map(|s| s[idx].norm_sqr()).sum::<f64>() / (self.n * self.m) as f64
    }

    /// Grid cell of maximum noncoherent power.
    pub fn argmax(&self) -> (usize, usize) {
        let cells = self.nx * self.ny;
        let mut power = vec![0.0; cells];
        for s in &self.data {
            for (p, z) in power.iter_mut().zip(s) {
                *p += z.norm_sqr();
            }
        }
        let (best, _) = power
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            );
        (best % self.nx, best / self.nx)
    }

    /// Noncoherent power on the critically sampled `N x M` sub-grid,
    /// indexed `iy * N + ix`.
    pub fn coarse_power(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.m];
        let norm = (self.n * self.m) as f64;
        for iy in 0..self.m {
            for ix in 0..self.n {
                let idx = iy * self.os * self.nx + ix * self.os;
                out[iy * self.n + ix] =
                    self.data.iter().map(|s| s[idx].norm_sqr()).sum::<f64>() / norm;
            }
        }
        out
    }

    /// Value of snapshot `l` at coarse bin `(ix, iy)`.
    pub fn coarse(&self, l: usize, ix: usize, iy: usize) -> Complex64 {
        self.data[l][iy * self.os * self.nx + ix * self.os]
    }
}

/// `D_len(delta) = sum_{k < len} e^{-j k delta}`.
pub fn dirichlet(len: usize, delta: f64) -> Complex64 {
    let d = crate::signal::wrap_pi(delta);
    let half = d / 2.0;
    let len_f = len as f64;
    let phase = Complex64::cis(-(len_f - 1.0) * half);
    if half.abs() < 1e-9 {
        return phase * len_f;
    }
    phase * ((len_f * half).sin() / half.sin())
}

/// Zero-padded 2D FFT of every snapshot with oversampling `os`.
pub fn compute_spectra(cube: &BasebandCube, os: usize) -> Spectra {
    let (n, m) = (cube.n, cube.m);
    let (nx, ny) = (n * os, m * os);
    let mut planner = FftPlanner::<f64>::new();
    let fx = planner.plan_fft_forward(nx);
    let fy = planner.plan_fft_forward(ny);
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    let mut data = Vec::with_capacity(cube.l);
    for l in 0..cube.l {
        let snap = cube.snapshot(l);
        let mut grid = vec![Complex64::new(0.0, 0.0); nx * ny];
        for mi in 0..m {
            let row = &mut grid[mi * nx..(mi + 1) * nx];
            row[..n].copy_from_slice(&snap[mi * n..(mi + 1) * n]);
            fx.process(row);
        }
        for ix in 0..nx {
            for (iy, c) in column.iter_mut().enumerate() {
                *c = grid[iy * nx + ix];
            }
            fy.process(&mut column);
            for (iy, c) in column.iter().enumerate() {
                grid[iy * nx + ix] = *c;
            }
        }
        data.push(grid);
    }
    Spectra {
        n,
        m,
        os,
        nx,
        ny,
        data,
    }
}

/// Subtracts the spectra of `components` in place using the Dirichlet
/// kernel; no FFT is recomputed.
pub fn subtract_components(spectra: &mut Spectra, components: &[Component]) {
    for c in components {
        let dx: Vec<Complex64> = (0..spectra.nx)
            .map(|ix| dirichlet(spectra.n, spectra.omega_x(ix) - c.omega[0]))
            .collect();
        let dy: Vec<Complex64> = (0..spectra.ny)
            .map(|iy| dirichlet(spectra.m, spectra.omega_y(iy) - c.omega[1]))
            .collect();
        for (s, &g) in spectra.data.iter_mut().zip(&c.gains) {
            for (iy, &y) in dy.iter().enumerate() {
                let gy = g * y;
                let row = &mut s[iy * spectra.nx..(iy + 1) * spectra.nx];
                for (v, &x) in row.iter_mut().zip(&dx) {
                    *v -= gy * x;
                }
            }
        }
    }
}

/// Spectra of the residue `Y_l - sum_k g_{k,l} a_N(wx_k) a_M(wy_k)^T`.
pub fn residue_spectrum(spectra: &Spectra, components: &[Component]) -> Spectra {
    let mut out = spectra.clone();
    subtract_components(&mut out, components);
    out
}

/// Spectrum of one component at coarse bin `(ix, iy)` of an `n x m` grid.
pub(crate) fn component_at_coarse(
    c: &Component,
    l: usize,
    n: usize,
    m: usize,
    ix: usize,
    iy: usize,
) -> Complex64 {
    let wx = 2.0 * PI * ix as f64 / n as f64;
    let wy = 2.0 * PI * iy as f64 / m as f64;
    c.gains[l] * dirichlet(n, wx - c.omega[0]) * dirichlet(m, wy - c.omega[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_matches_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let len = rng.random_range(1..40);
            let delta = match rng.random_range(0..4) {
                0 => 0.0,
                1 => 2.0 * PI * rng.random_range(-3..3) as f64 + rng.random_range(-1e-10..1e-10),
                _ => rng.random_range(-20.0..20.0),
            };
            let direct: Complex64 = (0..len).map(|k| Complex64::cis(-(k as f64) * delta)).sum();
            assert!(
                (dirichlet(len, delta) - direct).norm() < 1e-9,
                "len {len} delta {delta}"
            );
        }
    }

    fn direct_dft(y: &[Complex64], n: usize, m: usize, wx: f64, wy: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for mi in 0..m {
            for ni in 0..n {
                acc += y[mi * n + ni] * Complex64::cis(-(ni as f64 * wx + mi as f64 * wy));
            }
        }
        acc
    }

    #[test]
    fn fft_matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, m, l) = (6usize, 4usize, 2usize);
        let data = (0..n * m * l)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let cube = BasebandCube::from_data(n, m, l, data).unwrap();
        let sp = compute_spectra(&cube, 3);
        for li in 0..l {
            for iy in 0..sp.ny {
                for ix in 0..sp.nx {
                    let d = direct_dft(cube.snapshot(li), n, m, sp.omega_x(ix), sp.omega_y(iy));
                    assert!((sp.data[li][iy * sp.nx + ix] - d).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_residue_is_identity() {
        let cube = BasebandCube::from_data(2, 2, 1, vec![Complex64::new(1.0, 2.0); 4]).unwrap();
        let sp = compute_spectra(&cube, 2);
        assert_eq!(residue_spectrum(&sp, &[]), sp);
    }

    #[test]
    fn on_grid_detection_cancels() {
        let (n, m) = (8usize, 8usize);
        let (wx, wy) = (2.0 * PI * 3.0 / n as f64, 2.0 * PI * 5.0 / m as f64);
        let g = Complex64::new(0.7, -0.2);
        let mut data = vec![Complex64::new(0.0, 0.0); n * m];
        for mi in 0..m {
            for ni in 0..n {
                data[mi * n + ni] = g * Complex64::cis(ni as f64 * wx + mi as f64 * wy);
            }
        }
        let cube = BasebandCube::from_data(n, m, 1, data).unwrap();
        let sp = compute_spectra(&cube, 4);
        let before = sp.coarse(0, 3, 5).norm();
        let res = residue_spectrum(
            &sp,
            &[Component {
                omega: [wx, wy],
                gains: vec![g],
            }],
        );
        assert!(res.coarse(0, 3, 5).norm() <= 1e-9 * before);
        assert!(res.data[0].iter().all(|z| z.norm() < 1e-9 * before));
    }

    #[test]
    fn coarse_power_samples_oversampled_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = (0..4 * 4 * 2)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let cube = BasebandCube::from_data(4, 4, 2, data).unwrap();
        let fine = compute_spectra(&cube, 4);
        let crit = compute_spectra(&cube, 1);
        let p = fine.coarse_power();
        for iy in 0..4 {
            for ix in 0..4 {
                assert!((p[iy * 4 + ix] - crit.power_at(ix, iy)).abs() < 1e-12);
            }
        }
    }
}
