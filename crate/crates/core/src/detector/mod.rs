//! Target extraction from baseband cubes.
//!
//! [`mnomp_detect`] is the super-resolving multi-snapshot NOMP detector with
//! a CFAR stopping rule; [`fft_cfar_detect`] is the grid-bound baseline.
//! Both produce [`Detection`]s which [`to_pseudo_measurement`] turns into
//! Cartesian [`Measurement`]s carrying a scaled CRB covariance.

mod azimuth;
mod cfar;
mod cluster;
mod fftcfar;
mod measurement;
mod nomp;
mod spectrum;

pub use azimuth::azimuth_ls;
pub use cfar::{cfar_threshold_multiplier, ring_offsets, CfarConfig};
pub use cluster::{cluster_measurements, ClusterGate};
pub use fftcfar::fft_cfar_detect;
pub use measurement::{freq_to_state, to_pseudo_measurement, Measurement};
pub use nomp::{
    mnomp_detect, newton_refine_2d, objective_derivatives, NewtonOutcome, ObjectiveDerivs,
};
pub use spectrum::{
    compute_spectra, dirichlet, residue_spectrum, subtract_components, Component, Spectra,
};

use num_complex::Complex64;

use crate::signal::PolarState;

/// One extracted target.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// `(wx, wy, wz)`: `wx` in `[0, 2 pi)`, `wy` and `wz` in `[-pi, pi)`.
    pub omega: [f64; 3],
    /// Per-antenna complex gains.
    pub gains: Vec<Complex64>,
    pub gamma: Complex64,
    pub state: PolarState,
    /// Integrated SNR estimate `N M |gamma|^2 / sigma2` in dB.
    pub snr_db: f64,
    pub passed_threshold: bool,
}

/// Output of one detector run on one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
    /// Noise variance estimate per complex sample.
    pub sigma2_hat: f64,
    /// Residual energy `sum_l |Y_r,l|^2` after each greedy iteration (MNOMP
    /// only).
    pub residual_energy: Vec<f64>,
}

/// Which detector a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Mnomp,
    Fftcfar,
}

impl std::str::FromStr for DetectorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mnomp" => Ok(Self::Mnomp),
            "fftcfar" => Ok(Self::Fftcfar),
            other => Err(crate::Error::Config(format!("unknown detector '{other}'"))),
        }
    }
}
