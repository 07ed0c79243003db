//! Multi-snapshot Newtonized OMP over the `(wx, wy)` plane with a CFAR
//! stopping rule.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::azimuth::azimuth_ls;
use super::cfar::{ring_mean, ring_offsets, CfarConfig};
use super::spectrum::{
    component_at_coarse, compute_spectra, dirichlet, residue_spectrum, Component, Spectra,
};
use super::{Detection, DetectionSet};
use crate::error::{Error, Result};
use crate::signal::{wrap_pi, wrap_two_pi, BasebandCube, PolarState, RadarLimits, RadarParams};

const SINGLE_NEWTON_STEPS: usize = 3;
/// Cap on cyclic rounds per greedy iteration; rounds stop earlier once no
/// frequency moves by more than `CYCLIC_TOL` radians.
const MAX_CYCLIC_ROUNDS: usize = 40;
const CYCLIC_TOL: f64 = 1e-5;
const FINAL_CYCLIC_PASSES: usize = 2;
const MAX_HALVINGS: usize = 10;

/// Objective `S(w) = sum_l |u_l(w)|^2 / (N M)` with
/// `u_l(w) = sum_{n,m} Y_l[n, m] e^{-j(n wx + m wy)}`, and its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveDerivs {
    pub s: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    /// `u_l` for every snapshot.
    pub u: Vec<Complex64>,
}

fn phasors(len: usize, w: f64) -> Vec<Complex64> {
    (0..len).map(|k| Complex64::cis(-(k as f64) * w)).collect()
}

fn snapshot_count(data: &[Complex64], n: usize, m: usize) -> usize {
    data.len() / (n * m)
}

/// `u_l(w)` for every snapshot of `data` (layout `(l * M + m) * N + n`).
pub(crate) fn project(data: &[Complex64], n: usize, m: usize, omega: [f64; 2]) -> Vec<Complex64> {
    let ex = phasors(n, omega[0]);
    let ey = phasors(m, omega[1]);
    data.chunks_exact(n * m)
        .map(|snap| {
            snap.chunks_exact(n)
                .zip(&ey)
                .map(|(row, &y)| y * row.iter().zip(&ex).map(|(&v, &x)| v * x).sum::<Complex64>())
                .sum()
        })
        .collect()
}

#[cfg(test)]
fn objective(data: &[Complex64], n: usize, m: usize, omega: [f64; 2]) -> f64 {
    project(data, n, m, omega)
        .iter()
        .map(|u| u.norm_sqr())
        .sum::<f64>()
        / (n * m) as f64
}

pub fn objective_derivatives(
    data: &[Complex64],
    n: usize,
    m: usize,
    omega: [f64; 2],
) -> ObjectiveDerivs {
    let ex = phasors(n, omega[0]);
    let ey = phasors(m, omega[1]);
    let j = Complex64::new(0.0, 1.0);
    let norm = (n * m) as f64;
    let mut out = ObjectiveDerivs {
        s: 0.0,
        grad: [0.0; 2],
        hess: [[0.0; 2]; 2],
        u: Vec::with_capacity(snapshot_count(data, n, m)),
    };
    for snap in data.chunks_exact(n * m) {
        let zero = Complex64::new(0.0, 0.0);
        let (mut u, mut ux, mut uy, mut uxx, mut uyy, mut uxy) =
            (zero, zero, zero, zero, zero, zero);
        for (mi, (row, &y)) in snap.chunks_exact(n).zip(&ey).enumerate() {
            let (mut a0, mut a1, mut a2) = (zero, zero, zero);
            for (ni, (&v, &x)) in row.iter().zip(&ex).enumerate() {
                let t = v * x;
                let nf = ni as f64;
                a0 += t;
                a1 += t * nf;
                a2 += t * (nf * nf);
            }
            let mf = mi as f64;
            u += y * a0;
            ux -= j * y * a1;
            uy -= j * y * a0 * mf;
            uxx -= y * a2;
            uyy -= y * a0 * (mf * mf);
            uxy -= y * a1 * mf;
        }
        out.s += u.norm_sqr();
        out.grad[0] += (u.conj() * ux).re;
        out.grad[1] += (u.conj() * uy).re;
        out.hess[0][0] += (ux.conj() * ux + u.conj() * uxx).re;
        out.hess[1][1] += (uy.conj() * uy + u.conj() * uyy).re;
        out.hess[0][1] += (ux.conj() * uy + u.conj() * uxy).re;
        out.u.push(u);
    }
    out.s /= norm;
    for g in out.grad.iter_mut() {
        *g *= 2.0 / norm;
    }
    out.hess[0][0] *= 2.0 / norm;
    out.hess[1][1] *= 2.0 / norm;
    out.hess[0][1] *= 2.0 / norm;
    out.hess[1][0] = out.hess[0][1];
    out
}

/// Result of one damped Newton step.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub omega: [f64; 2],
    /// Least-squares gains `u_l / (N M)` at the returned frequency.
    pub gains: Vec<Complex64>,
    pub objective: f64,
    pub accepted: bool,
}

/// One damped Newton step on `S` for a single sinusoid in `data`. The step
/// is halved until `S` increases (at most ten times); a Hessian that is
/// not negative definite, or a step longer than one DFT bin, leaves `omega`
/// unchanged.
pub fn newton_refine_2d(data: &[Complex64], n: usize, m: usize, omega: [f64; 2]) -> NewtonOutcome {
    let d = objective_derivatives(data, n, m, omega);
    let norm = (n * m) as f64;
    let unchanged = |d: ObjectiveDerivs| NewtonOutcome {
        omega,
        gains: d.u.iter().map(|u| u / norm).collect(),
        objective: d.s,
        accepted: false,
    };
    let [[h00, h01], [_, h11]] = d.hess;
    let det = h00 * h11 - h01 * h01;
    if !(h00 < 0.0 && det > 0.0) || !det.is_finite() {
        return unchanged(d);
    }
    let step = [
        -(h11 * d.grad[0] - h01 * d.grad[1]) / det,
        -(-h01 * d.grad[0] + h00 * d.grad[1]) / det,
    ];
    if step[0].abs() > 2.0 * PI / n as f64 || step[1].abs() > 2.0 * PI / m as f64 {
        return unchanged(d);
    }
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let trial = [omega[0] + t * step[0], omega[1] + t * step[1]];
        let u = project(data, n, m, trial);
        let s = u.iter().map(|u| u.norm_sqr()).sum::<f64>() / norm;
        if s > d.s {
            return NewtonOutcome {
                omega: trial,
                gains: u.iter().map(|u| u / norm).collect(),
                objective: s,
                accepted: true,
            };
        }
        t *= 0.5;
    }
    unchanged(d)
}

/// Adds `sign * g_l a_N(wx) a_M(wy)^T` to every snapshot.
fn add_component(data: &mut [Complex64], n: usize, m: usize, c: &Component, sign: f64) {
    let ex: Vec<Complex64> = (0..n)
        .map(|k| Complex64::cis(k as f64 * c.omega[0]))
        .collect();
    let ey: Vec<Complex64> = (0..m)
        .map(|k| Complex64::cis(k as f64 * c.omega[1]))
        .collect();
    for (snap, &g) in data.chunks_exact_mut(n * m).zip(&c.gains) {
        let g = g * sign;
        for (row, &y) in snap.chunks_exact_mut(n).zip(&ey) {
            let gy = g * y;
            for (v, &x) in row.iter_mut().zip(&ex) {
                *v += gy * x;
            }
        }
    }
}

/// Jointly re-solves all gains by least squares against the raw data.
fn solve_gains(raw: &[Complex64], n: usize, m: usize, comps: &mut [Component]) {
    let k = comps.len();
    if k == 0 {
        return;
    }
    let l = snapshot_count(raw, n, m);
    let gram = DMatrix::from_fn(k, k, |i, j| {
        dirichlet(n, comps[i].omega[0] - comps[j].omega[0])
            * dirichlet(m, comps[i].omega[1] - comps[j].omega[1])
    });
    let rhs: Vec<Vec<Complex64>> = comps.iter().map(|c| project(raw, n, m, c.omega)).collect();
    let chol = gram.clone().cholesky().or_else(|| {
        let ridge = 1e-9 * (n * m) as f64;
        (gram + DMatrix::from_diagonal_element(k, k, Complex64::new(ridge, 0.0))).cholesky()
    });
    let Some(chol) = chol else {
        return;
    };
    for li in 0..l {
        let b = DVector::from_fn(k, |i, _| rhs[i][li]);
        let x = chol.solve(&b);
        for (c, g) in comps.iter_mut().zip(x.iter()) {
            c.gains[li] = *g;
        }
    }
}

fn rebuild_residue(raw: &[Complex64], n: usize, m: usize, comps: &[Component]) -> Vec<Complex64> {
    let mut res = raw.to_vec();
    for c in comps {
        add_component(&mut res, n, m, c, -1.0);
    }
    res
}

/// One Newton step per component, each against the residue with that
/// component added back.
fn cyclic_pass(residue: &mut [Complex64], n: usize, m: usize, comps: &mut [Component]) {
    for c in comps.iter_mut() {
        add_component(residue, n, m, c, 1.0);
        let out = newton_refine_2d(residue, n, m, c.omega);
        c.omega = out.omega;
        c.gains = out.gains;
        add_component(residue, n, m, c, -1.0);
    }
}

fn energy(data: &[Complex64]) -> f64 {
    data.iter().map(|z| z.norm_sqr()).sum()
}

fn nearest_bin(w: f64, len: usize) -> usize {
    ((wrap_two_pi(w) * len as f64 / (2.0 * PI)).round() as usize) % len
}

/// CFAR test of `comp` against a residue spectrum that excludes it: the
/// cell under test is the nearest critically sampled bin with the
/// component added back, the noise level is the ring mean of the residue.
fn cfar_passes(
    rs: &Spectra,
    coarse_power: &[f64],
    comp: &Component,
    alpha: f64,
    offsets: &[(isize, isize)],
) -> bool {
    let (n, m) = (rs.n, rs.m);
    let cx = nearest_bin(comp.omega[0], n);
    let cy = nearest_bin(comp.omega[1], m);
    let cut = (0..rs.snapshots())
        .map(|l| (rs.coarse(l, cx, cy) + component_at_coarse(comp, l, n, m, cx, cy)).norm_sqr())
        .sum::<f64>()
        / (n * m) as f64;
    let noise = ring_mean(coarse_power, n, m, cx, cy, offsets);
    cut > alpha * noise
}

pub(crate) fn to_detection(
    omega: [f64; 2],
    gains: Vec<Complex64>,
    limits: &RadarLimits,
    n: usize,
    m: usize,
    sigma2: f64,
    passed: bool,
) -> Detection {
    let (wz, gamma) = if gains.len() >= 2 {
        azimuth_ls(&gains).unwrap_or((0.0, gains[0]))
    } else {
        (0.0, gains[0])
    };
    let wx = wrap_two_pi(omega[0]);
    let wy = wrap_pi(omega[1]);
    let state = PolarState {
        range: wx * limits.r_max / (2.0 * PI),
        velocity: wy * limits.v_max / PI,
        azimuth: (wz / limits.spatial_gain).clamp(-1.0, 1.0).asin(),
    };
    let snr = (n * m) as f64 * gamma.norm_sqr() / sigma2;
    Detection {
        omega: [wx, wy, wz],
        gains,
        gamma,
        state,
        snr_db: 10.0 * snr.log10(),
        passed_threshold: passed,
    }
}

/// Greedy multi-snapshot NOMP with CFAR stopping.
///
/// Each iteration picks the oversampled argmax of the residue power,
/// refines it, runs cyclic refinement rounds over every candidate (each
/// followed by a joint gain re-solve) until the frequencies settle, and
/// CFAR-tests the new candidate. Failed candidates stay in the set;
/// `K_invalid` consecutive failures stop the loop and those trailing
/// candidates are dropped. A later pass keeps the earlier failures.
pub fn mnomp_detect(
    cube: &BasebandCube,
    params: &RadarParams,
    cfg: &CfarConfig,
) -> Result<DetectionSet> {
    cfg.validate()?;
    if !cube.matches(params) {
        return Err(Error::invalid(format!(
            "cube shape {}x{}x{} does not match radar {}x{}x{}",
            cube.n, cube.m, cube.l, params.n, params.m, params.l
        )));
    }
    let (n, m, l) = (cube.n, cube.m, cube.l);
    let alpha = cfg.alpha_for(n, m, l)?;
    let offsets = ring_offsets(cfg.train_band, cfg.guard_band);
    let spectra = compute_spectra(cube, cfg.oversample);
    let raw = &cube.data;

    let mut comps: Vec<Component> = Vec::new();
    let mut residue = raw.clone();
    let mut rs = spectra.clone();
    let mut fails = 0;
    let mut residual_energy = vec![energy(&residue)];

    while comps.len() < cfg.k_max {
        let (ix, iy) = rs.argmax();
        let mut omega = [rs.omega_x(ix), rs.omega_y(iy)];
        for _ in 0..SINGLE_NEWTON_STEPS {
            let out = newton_refine_2d(&residue, n, m, omega);
            omega = out.omega;
            if !out.accepted {
                break;
            }
        }
        let gains = project(&residue, n, m, omega)
            .iter()
            .map(|u| u / (n * m) as f64)
            .collect();
        let cand = Component { omega, gains };
        add_component(&mut residue, n, m, &cand, -1.0);
        comps.push(cand);

        for _ in 0..MAX_CYCLIC_ROUNDS {
            let before: Vec<[f64; 2]> = comps.iter().map(|c| c.omega).collect();
            cyclic_pass(&mut residue, n, m, &mut comps);
            solve_gains(raw, n, m, &mut comps);
            residue = rebuild_residue(raw, n, m, &comps);
            let moved = comps
                .iter()
                .zip(&before)
                .map(|(c, b)| (c.omega[0] - b[0]).abs().max((c.omega[1] - b[1]).abs()))
                .fold(0.0, f64::max);
            if moved < CYCLIC_TOL {
                break;
            }
        }
        rs = residue_spectrum(&spectra, &comps);
        residual_energy.push(energy(&residue));

        let power = rs.coarse_power();
        let newest = comps.last().expect("candidate just pushed");
        if cfar_passes(&rs, &power, newest, alpha, &offsets) {
            fails = 0;
        } else {
            fails += 1;
            if fails >= cfg.k_invalid {
                break;
            }
        }
    }

    comps.truncate(comps.len() - fails);
    if !comps.is_empty() {
        for _ in 0..FINAL_CYCLIC_PASSES {
            residue = rebuild_residue(raw, n, m, &comps);
            cyclic_pass(&mut residue, n, m, &mut comps);
            solve_gains(raw, n, m, &mut comps);
        }
        residue = rebuild_residue(raw, n, m, &comps);
        rs = residue_spectrum(&spectra, &comps);
    } else {
        residue = raw.clone();
        rs = spectra;
    }

    let sigma2_hat = energy(&residue) / (n * m * l) as f64;
    let power = rs.coarse_power();
    let limits = params.limits();
    let detections = comps
        .iter()
        .map(|c| {
            let passed = cfar_passes(&rs, &power, c, alpha, &offsets);
            to_detection(c.omega, c.gains.clone(), &limits, n, m, sigma2_hat, passed)
        })
        .collect();
    Ok(DetectionSet {
        detections,
        sigma2_hat,
        residual_energy,
    })
}
