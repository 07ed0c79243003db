//! Gating and sum-product data association.
//!
//! Each track `k` either produced one measurement `h` or was missed
//! (`h = 0`); each measurement was produced by one track or is clutter
//! (`k = 0`). Loopy belief propagation over these two coupled choices yields
//! the marginals `beta[k][h]` and `xi[h][k]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::detector::Measurement;
use crate::error::{Error, Result};
use crate::tracker::H_POS;

/// Validation region used before association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateMode {
    /// Position only.
    #[serde(rename = "2d")]
    TwoD,
    /// Position plus radial velocity.
    #[serde(rename = "3d")]
    ThreeD,
}

impl std::str::FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2d" | "2D" => Ok(Self::TwoD),
            "3d" | "3D" => Ok(Self::ThreeD),
            other => Err(Error::Config(format!("unknown gate mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssocConfig {
    /// Detection probability.
    pub p_d: f64,
    /// Mean clutter count per frame.
    pub mu_c: f64,
    /// Clutter spatial density (1/m^2); the inverse ROI area when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_c: Option<f64>,
    /// Gate probability.
    pub p_g: f64,
    pub n_iter: usize,
    pub gate_mode: GateMode,
    /// Stop iterating once messages change by less than 1e-8.
    #[serde(default)]
    pub early_exit: bool,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            p_d: 0.9,
            mu_c: 4.0,
            f_c: None,
            p_g: 0.95,
            n_iter: 10,
            gate_mode: GateMode::ThreeD,
            early_exit: false,
        }
    }
}

/// Clutter density of a 60 m x 60 m region.
const DEFAULT_CLUTTER_DENSITY: f64 = 1.0 / 3600.0;

impl AssocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_d > 0.0 && self.p_d < 1.0) {
            return Err(Error::invalid("p_d must lie in (0, 1)"));
        }
        if !(self.p_g > 0.0 && self.p_g < 1.0) {
            return Err(Error::invalid("p_g must lie in (0, 1)"));
        }
        if self.n_iter == 0 {
            return Err(Error::invalid("n_iter must be at least 1"));
        }
        if !(self.mu_c >= 0.0) {
            return Err(Error::invalid("mu_c must be >= 0"));
        }
        if let Some(f) = self.f_c {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::invalid("f_c must be positive"));
            }
        }
        Ok(())
    }

    pub fn clutter_density(&self) -> f64 {
        self.f_c.unwrap_or(DEFAULT_CLUTTER_DENSITY)
    }
}

/// Predicted track state used for gating.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrack {
    pub x: Vector4<f64>,
    pub sigma: nalgebra::Matrix4<f64>,
    /// Azimuth used to project the velocity onto the line of sight.
    pub theta: f64,
}

impl PredictedTrack {
    /// Uses the azimuth of the predicted position.
    pub fn new(x: Vector4<f64>, sigma: nalgebra::Matrix4<f64>) -> Self {
        Self {
            theta: x[0].atan2(x[2]),
            x,
            sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocResult {
    /// `K x (H + 1)`; column 0 is the missed-detection hypothesis.
    pub beta: DMatrix<f64>,
    /// `H x (K + 1)`; column 0 is the clutter hypothesis.
    pub xi: DMatrix<f64>,
    /// `K x H` validity mask.
    pub gates: Vec<Vec<bool>>,
    pub iterations: usize,
}

/// `F^{-1}_{chi2(dof)}(p_g)`.
pub fn gate_threshold(dof: usize, p_g: f64) -> Result<f64> {
    if !(p_g > 0.0 && p_g < 1.0) {
        return Err(Error::invalid("p_g must lie in (0, 1)"));
    }
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(chi.inverse_cdf(p_g))
}

fn innovation_2d(
    meas: &Measurement,
    pred: &PredictedTrack,
) -> (nalgebra::Vector2<f64>, Matrix2<f64>) {
    let e = meas.z - H_POS * pred.x;
    let s = H_POS * pred.sigma * H_POS.transpose() + meas.r_cov;
    (e, s)
}

/// Squared Mahalanobis distance of the position innovation.
pub fn mahalanobis_2d(meas: &Measurement, pred: &PredictedTrack) -> Result<f64> {
    let (e, s) = innovation_2d(meas, pred);
    let inv = s
        .cholesky()
        .ok_or(Error::Singular("position innovation covariance"))?
        .inverse();
    Ok((e.transpose() * inv * e)[0])
}

/// Measurement matrix mapping `[px, vx, py, vy]` to `[px, py, v]` at
/// azimuth `theta`.
pub fn h_radial(theta: f64) -> Matrix3x4<f64> {
    Matrix3x4::new(
        1.0,
        0.0,
        0.0,
        0.0, //
        0.0,
        0.0,
        1.0,
        0.0, //
        0.0,
        theta.sin(),
        0.0,
        theta.cos(),
    )
}

/// Squared Mahalanobis distance of `[px, py, v]` against the prediction,
/// with `R' = blkdiag(R, var_v)`.
pub fn mahalanobis_3d(meas: &Measurement, pred: &PredictedTrack, theta: f64) -> Result<f64> {
    let h = h_radial(theta);
    let z = Vector3::new(meas.z[0], meas.z[1], meas.v_r);
    let e = z - h * pred.x;
    let mut r = Matrix3::zeros();
    r.fixed_view_mut::<2, 2>(0, 0).copy_from(&meas.r_cov);
    r[(2, 2)] = meas.var_v;
    let s = h * pred.sigma * h.transpose() + r;
    let inv = s
        .cholesky()
        .ok_or(Error::Singular("position-velocity innovation covariance"))?
        .inverse();
    Ok((e.transpose() * inv * e)[0])
}

pub fn gate_2d(meas: &Measurement, pred: &PredictedTrack, p_g: f64) -> Result<bool> {
    Ok(mahalanobis_2d(meas, pred)? <= gate_threshold(2, p_g)?)
}

pub fn gate_3d(meas: &Measurement, pred: &PredictedTrack, theta: f64, p_g: f64) -> Result<bool> {
    Ok(mahalanobis_3d(meas, pred, theta)? <= gate_threshold(3, p_g)?)
}

/// Gaussian likelihood `N(z; H x, H Sigma H^T + R)`.
fn position_likelihood(meas: &Measurement, pred: &PredictedTrack) -> Result<f64> {
    let (e, s) = innovation_2d(meas, pred);
    let det = s.determinant();
    let inv = s
        .cholesky()
        .ok_or(Error::Singular("position innovation covariance"))?
        .inverse();
    let d2 = (e.transpose() * inv * e)[0];
    Ok((-0.5 * d2).exp() / (2.0 * PI * det.sqrt()))
}

/// Gate mask and initial messages `(gates, beta0, xi0)`.
pub fn init_messages(
    tracks: &[PredictedTrack],
    meas: &[Measurement],
    cfg: &AssocConfig,
) -> Result<(Vec<Vec<bool>>, DMatrix<f64>, DMatrix<f64>)> {
    let (k, h) = (tracks.len(), meas.len());
    let d2 = gate_threshold(2, cfg.p_g)?;
    let d3 = gate_threshold(3, cfg.p_g)?;
    let mut gates = vec![vec![false; h]; k];
    let mut beta0 = DMatrix::zeros(k, h + 1);
    let mut xi0 = DMatrix::zeros(h, k + 1);
    for (ki, t) in tracks.iter().enumerate() {
        beta0[(ki, 0)] = 1.0 - cfg.p_d;
        for (hi, z) in meas.iter().enumerate() {
            let inside = match cfg.gate_mode {
                GateMode::TwoD => mahalanobis_2d(z, t)? <= d2,
                GateMode::ThreeD => mahalanobis_3d(z, t, t.theta)? <= d3,
            };
            gates[ki][hi] = inside;
            if inside {
                beta0[(ki, hi + 1)] = cfg.p_d * position_likelihood(z, t)?;
                xi0[(hi, ki + 1)] = 1.0;
            }
        }
    }
    let clutter = cfg.mu_c * cfg.clutter_density();
    for hi in 0..h {
        xi0[(hi, 0)] = clutter;
    }
    Ok((gates, beta0, xi0))
}

/// Iterates the two message equations `n_iter` times and normalizes.
pub fn spa_iterate(
    beta0: &DMatrix<f64>,
    xi0: &DMatrix<f64>,
    n_iter: usize,
    early_exit: bool,
) -> Result<AssocResult> {
    let k = beta0.nrows();
    let h = xi0.nrows();
    if k > 0 && beta0.ncols() != h + 1 || h > 0 && xi0.ncols() != k + 1 {
        return Err(Error::invalid("message matrices have inconsistent shapes"));
    }
    if beta0
        .iter()
        .chain(xi0.iter())
        .any(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(Error::invalid(
            "initial messages must be finite and nonnegative",
        ));
    }
    for ki in 0..k {
        if beta0[(ki, 0)] <= 0.0 {
            return Err(Error::invalid(format!(
                "track {ki} has no missed-detection mass"
            )));
        }
    }

    // delta[k][h] and v[h][k] over real indices only
    let mut delta = DMatrix::from_fn(k, h, |ki, hi| beta0[(ki, hi + 1)] / beta0[(ki, 0)]);
    let mut v = DMatrix::zeros(h, k);
    let mut iterations = 0;
    for _ in 0..n_iter {
        iterations += 1;
        let mut v_new = DMatrix::zeros(h, k);
        for hi in 0..h {
            let total: f64 = (0..k).map(|ki| xi0[(hi, ki + 1)] * delta[(ki, hi)]).sum();
            for ki in 0..k {
                let others = total - xi0[(hi, ki + 1)] * delta[(ki, hi)];
                let den = xi0[(hi, 0)] + others;
                v_new[(hi, ki)] = if den > 0.0 {
                    xi0[(hi, ki + 1)] / den
                } else {
                    0.0
                };
            }
        }
        let mut delta_new = DMatrix::zeros(k, h);
        for ki in 0..k {
            let total: f64 = (0..h).map(|hi| beta0[(ki, hi + 1)] * v_new[(hi, ki)]).sum();
            for hi in 0..h {
                let others = total - beta0[(ki, hi + 1)] * v_new[(hi, ki)];
                delta_new[(ki, hi)] = beta0[(ki, hi + 1)] / (beta0[(ki, 0)] + others);
            }
        }
        let change = (&delta_new - &delta).amax().max((&v_new - &v).amax());
        delta = delta_new;
        v = v_new;
        if early_exit && change < 1e-8 {
            break;
        }
    }

    let mut beta = DMatrix::zeros(k, h + 1);
    for ki in 0..k {
        let den = beta0[(ki, 0)]
            + (0..h)
                .map(|hi| beta0[(ki, hi + 1)] * v[(hi, ki)])
                .sum::<f64>();
        beta[(ki, 0)] = beta0[(ki, 0)] / den;
        for hi in 0..h {
            beta[(ki, hi + 1)] = beta0[(ki, hi + 1)] * v[(hi, ki)] / den;
        }
    }
    let mut xi = DMatrix::zeros(h, k + 1);
    for hi in 0..h {
        let den = xi0[(hi, 0)]
            + (0..k)
                .map(|ki| xi0[(hi, ki + 1)] * delta[(ki, hi)])
                .sum::<f64>();
        if den > 0.0 {
            xi[(hi, 0)] = xi0[(hi, 0)] / den;
            for ki in 0..k {
                xi[(hi, ki + 1)] = xi0[(hi, ki + 1)] * delta[(ki, hi)] / den;
            }
        } else {
            // no clutter mass and no candidate track
            xi[(hi, 0)] = 1.0;
        }
    }
    Ok(AssocResult {
        beta,
        xi,
        gates: Vec::new(),
        iterations,
    })
}

/// Gating, message initialization and SPA in one call.
pub fn associate(
    tracks: &[PredictedTrack],
    meas: &[Measurement],
    cfg: &AssocConfig,
) -> Result<AssocResult> {
    cfg.validate()?;
    let (gates, beta0, xi0) = init_messages(tracks, meas, cfg)?;
    let mut out = spa_iterate(&beta0, &xi0, cfg.n_iter, cfg.early_exit)?;
    out.gates = gates;
    Ok(out)
}
