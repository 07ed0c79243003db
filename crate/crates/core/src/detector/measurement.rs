use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use super::Detection;
use crate::crb::{crb_pxpy, crb_rvtheta, SignalPoint};
use crate::error::{Error, Result};
use crate::signal::{wrap_two_pi, PolarState, RadarLimits, RadarParams};

/// Cartesian pseudo-measurement with a scaled-CRB covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub frame: usize,
    /// `[px, py]` in metres.
    pub z: Vector2<f64>,
    pub r_cov: Matrix2<f64>,
    pub v_r: f64,
    pub var_v: f64,
    pub r: f64,
    pub theta: f64,
    pub snr_db: f64,
    /// Azimuth was pulled in from endfire to keep the bound finite.
    pub clamped: bool,
}

impl Measurement {
    /// Measurement with position from polar coordinates; covariance supplied.
    pub fn from_polar(
        frame: usize,
        r: f64,
        theta: f64,
        v_r: f64,
        r_cov: Matrix2<f64>,
        var_v: f64,
    ) -> Self {
        Self {
            frame,
            z: Vector2::new(r * theta.sin(), r * theta.cos()),
            r_cov,
            v_r,
            var_v,
            r,
            theta,
            snr_db: f64::NAN,
            clamped: false,
        }
    }

    /// Adds `kappa` times the variance of a uniform rounding to the
    /// range-Doppler grid (`bin^2 / 12`), for detections reported at bin
    /// centres.
    pub fn add_grid_quantization(&mut self, limits: &RadarLimits, kappa: f64) {
        let var_r = limits.r_res * limits.r_res / 12.0;
        let j = Vector2::new(self.theta.sin(), self.theta.cos());
        self.r_cov += j * j.transpose() * (kappa * var_r);
        self.var_v += kappa * limits.v_res * limits.v_res / 12.0;
    }
}

/// Inverse of the frequency map: `r = wx r_max / 2 pi`, `v = wy v_max / pi`
/// with `wy` in `(-pi, pi]`, `theta = asin(wz / spatial_gain)`.
pub fn freq_to_state(omega: [f64; 3], limits: &RadarLimits) -> Result<PolarState> {
    let wx = wrap_two_pi(omega[0]);
    let mut wy = crate::signal::wrap_pi(omega[1]);
    if wy <= -PI {
        wy += 2.0 * PI;
    }
    let s = omega[2] / limits.spatial_gain;
    if !(s.abs() <= 1.0) {
        return Err(Error::invalid(format!(
            "spatial frequency {} outside [-{g}, {g}]",
            omega[2],
            g = limits.spatial_gain
        )));
    }
    Ok(PolarState {
        range: wx * limits.r_max / (2.0 * PI),
        velocity: wy * limits.v_max / PI,
        azimuth: s.asin(),
    })
}

const ENDFIRE_MARGIN: f64 = 1e-6;

/// Position `[r sin theta, r cos theta]` with covariance `kappa * CRB` at
/// the estimate, and the radial velocity with its scaled bound.
pub fn to_pseudo_measurement(
    det: &Detection,
    params: &RadarParams,
    sigma2_hat: f64,
    kappa: f64,
    frame: usize,
) -> Result<Measurement> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    let limits = params.limits();
    let mut theta = det.state.azimuth;
    let mut clamped = false;
    let edge = PI / 2.0 - ENDFIRE_MARGIN;
    if theta.abs() > edge {
        theta = theta.signum() * edge;
        clamped = true;
    }
    let point = SignalPoint {
        omega: det.omega,
        g: det.gamma.norm(),
        phi: det.gamma.arg(),
        sigma2: sigma2_hat,
        n: params.n,
        m: params.m,
        l: params.l,
    };
    let r = det.state.range;
    let r_cov = crb_pxpy(&point, &limits, r, theta)? * kappa;
    let var_v = crb_rvtheta(&point, &limits, theta)?[(1, 1)] * kappa;
    let mut out = Measurement::from_polar(frame, r, theta, det.state.velocity, r_cov, var_v);
    out.snr_db = det.snr_db;
    out.clamped = clamped;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn det(r: f64, v: f64, theta: f64) -> Detection {
        Detection {
            omega: [0.0, 0.0, PI * theta.sin()],
            gains: vec![Complex64::new(0.05, 0.0); 8],
            gamma: Complex64::new(0.05, 0.0),
            state: PolarState {
                range: r,
                velocity: v,
                azimuth: theta,
            },
            snr_db: 13.0,
            passed_threshold: true,
        }
    }

    #[test]
    fn freq_examples() {
        let mut lim = RadarParams::simulation().limits();
        lim.r_max = 100.0;
        lim.v_max = 6.08;
        let s = freq_to_state([PI, PI / 2.0, PI / 2.0], &lim).unwrap();
        assert!((s.range - 50.0).abs() < 1e-12);
        assert!((s.velocity - 3.04).abs() < 1e-12);
        assert!((s.azimuth - PI / 6.0).abs() < 1e-12);
        assert!(freq_to_state([0.0, 0.0, 3.5], &lim).is_err());
        // -pi maps to +v_max
        let s = freq_to_state([0.0, -PI, 0.0], &lim).unwrap();
        assert!((s.velocity - 6.08).abs() < 1e-12);
    }

    #[test]
    fn boresight_measurement() {
        let p = RadarParams::simulation();
        let m = to_pseudo_measurement(&det(10.0, 1.0, 0.0), &p, 1.0, 1.2, 3).unwrap();
        assert!((m.z - Vector2::new(0.0, 10.0)).norm() < 1e-12);
        assert_eq!(m.r_cov[(0, 1)], 0.0);
        assert_eq!(m.frame, 3);
        assert!(!m.clamped);
    }

    #[test]
    fn kappa_scales_linearly() {
        let p = RadarParams::simulation();
        let a = to_pseudo_measurement(&det(17.0, -2.0, 0.4), &p, 1.0, 1.0, 0).unwrap();
        let b = to_pseudo_measurement(&det(17.0, -2.0, 0.4), &p, 1.0, 1.2, 0).unwrap();
        assert!((b.r_cov - a.r_cov * 1.2).abs().max() <= 1e-15 * a.r_cov.abs().max());
        assert!((b.var_v - 1.2 * a.var_v).abs() <= 1e-15 * a.var_v);
    }

    #[test]
    fn endfire_is_clamped() {
        let p = RadarParams::simulation();
        let m = to_pseudo_measurement(&det(5.0, 0.0, PI / 2.0), &p, 1.0, 1.2, 0).unwrap();
        assert!(m.clamped);
        assert!(m.r_cov.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn grid_quantization_along_line_of_sight() {
        let p = RadarParams::simulation();
        let lim = p.limits();
        let mut m = to_pseudo_measurement(&det(12.0, 1.0, 0.5), &p, 1.0, 1.0, 0).unwrap();
        let before = m.clone();
        m.add_grid_quantization(&lim, 1.0);
        let d = m.r_cov - before.r_cov;
        let u = Vector2::new(0.5f64.sin(), 0.5f64.cos());
        let perp = Vector2::new(u[1], -u[0]);
        assert!(((u.transpose() * d * u)[0] - lim.r_res * lim.r_res / 12.0).abs() < 1e-15);
        assert!((perp.transpose() * d * perp)[0].abs() < 1e-15);
        assert!((m.var_v - before.var_v - lim.v_res * lim.v_res / 12.0).abs() < 1e-15);
    }

    #[test]
    fn velocity_variance_formula() {
        let p = RadarParams::simulation();
        let lim = p.limits();
        let m = to_pseudo_measurement(&det(8.0, 0.0, 0.1), &p, 2.0, 1.2, 0).unwrap();
        let nml = (128 * 64 * 8) as f64;
        let expected =
            1.2 * (lim.v_max / PI).powi(2) * 6.0 * 2.0 / (nml * 0.0025 * (64.0 * 64.0 - 1.0));
        assert!((m.var_v - expected).abs() < 1e-12 * expected);
    }
}
