//! Closed-form Fisher information and Cramér-Rao bounds for a single 3D
//! complex exponential in white Gaussian noise, and their images under the
//! frequency -> (r, v, theta) -> (px, py) maps.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, SMatrix};

use crate::error::{Error, Result};
use crate::signal::RadarLimits;

pub type Matrix6 = SMatrix<f64, 6, 6>;

/// One target's signal parameters: `xi = [wx, wy, wz, phi, g, sigma2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPoint {
    pub omega: [f64; 3],
    pub g: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub n: usize,
    pub m: usize,
    pub l: usize,
}

impl SignalPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::invalid(format!(
                "amplitude must be positive, got {}",
                self.g
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be positive, got {}",
                self.sigma2
            )));
        }
        if self.n == 0 || self.m == 0 || self.l == 0 {
            return Err(Error::invalid("dimensions must be at least 1"));
        }
        Ok(())
    }

    fn samples(&self) -> f64 {
        (self.n * self.m * self.l) as f64
    }

    /// `6 sigma2 / (N M L g^2)`, the common factor of every frequency bound.
    fn scale(&self) -> f64 {
        6.0 * self.sigma2 / (self.samples() * self.g * self.g)
    }
}

/// The 4x4 block of the normalized Fisher matrix over `(wx, wy, wz, phi)`.
pub fn phi_matrix(n: usize, m: usize, l: usize) -> nalgebra::Matrix4<f64> {
    let d = [n as f64 - 1.0, m as f64 - 1.0, l as f64 - 1.0];
    let mut phi = nalgebra::Matrix4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            phi[(i, j)] = if i == j {
                d[i] * (2.0 * d[i] + 1.0) / 6.0
            } else {
                d[i] * d[j] / 4.0
            };
        }
        phi[(i, 3)] = d[i] / 2.0;
        phi[(3, i)] = d[i] / 2.0;
    }
    phi[(3, 3)] = 1.0;
    phi
}

/// Fisher information over `[wx, wy, wz, phi, g, sigma2]`.
pub fn fisher_matrix(p: &SignalPoint) -> Result<Matrix6> {
    p.validate()?;
    let nml = p.samples();
    let mut f = Matrix6::zeros();
    let scale = 2.0 * nml * p.g * p.g / p.sigma2;
    let phi = phi_matrix(p.n, p.m, p.l);
    for i in 0..4 {
        for j in 0..4 {
            f[(i, j)] = scale * phi[(i, j)];
        }
    }
    f[(4, 4)] = 2.0 * nml / p.sigma2;
    f[(5, 5)] = nml / (p.sigma2 * p.sigma2);
    Ok(f)
}

/// Bound on `(wx, wy, wz)`.
pub fn crb_freq(p: &SignalPoint) -> Result<Matrix3<f64>> {
    p.validate()?;
    if p.n < 2 || p.m < 2 || p.l < 2 {
        return Err(Error::Unidentifiable(format!(
            "frequency bound needs N, M, L >= 2, got {}x{}x{}",
            p.n, p.m, p.l
        )));
    }
    let sq = |k: usize| (k * k) as f64 - 1.0;
    let s = p.scale();
    Ok(Matrix3::from_diagonal(&nalgebra::Vector3::new(
        s / sq(p.n),
        s / sq(p.m),
        s / sq(p.l),
    )))
}

fn check_angle(theta: f64) -> Result<f64> {
    let c = theta.cos();
    if !(theta.abs() < PI / 2.0) || c <= 0.0 {
        return Err(Error::Singular("azimuth at endfire, cos(theta) = 0"));
    }
    Ok(c)
}

/// Bound on `(r, v, theta)` by the chain rule through the linear range and
/// velocity maps and `theta = asin(wz / spatial_gain)`.
pub fn crb_rvtheta(p: &SignalPoint, limits: &RadarLimits, theta: f64) -> Result<Matrix3<f64>> {
    let c = check_angle(theta)?;
    let f = crb_freq(p)?;
    let j = [
        limits.r_max / (2.0 * PI),
        limits.v_max / PI,
        1.0 / (limits.spatial_gain * c),
    ];
    Ok(Matrix3::from_diagonal(&nalgebra::Vector3::new(
        j[0] * j[0] * f[(0, 0)],
        j[1] * j[1] * f[(1, 1)],
        j[2] * j[2] * f[(2, 2)],
    )))
}

/// Bound on the Cartesian position `(px, py) = (r sin theta, r cos theta)`.
pub fn crb_pxpy(p: &SignalPoint, limits: &RadarLimits, r: f64, theta: f64) -> Result<Matrix2<f64>> {
    let c = check_angle(theta)?;
    let rvt = crb_rvtheta(p, limits, theta)?;
    let (var_r, var_t) = (rvt[(0, 0)], rvt[(2, 2)]);
    let s = theta.sin();
    let xx = s * s * var_r + r * r * c * c * var_t;
    let xy = s * c * (var_r - r * r * var_t);
    let yy = c * c * var_r + r * r * s * s * var_t;
    Ok(Matrix2::new(xx, xy, xy, yy))
}

/// Block-diagonal bound on `(px, py, v)`.
pub fn crb_pxpyv(
    p: &SignalPoint,
    limits: &RadarLimits,
    r: f64,
    theta: f64,
) -> Result<Matrix3<f64>> {
    let pos = crb_pxpy(p, limits, r, theta)?;
    let v = crb_rvtheta(p, limits, theta)?[(1, 1)];
    let mut out = Matrix3::zeros();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(&pos);
    out[(2, 2)] = v;
    Ok(out)
}
