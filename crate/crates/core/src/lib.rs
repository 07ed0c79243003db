//! Multitarget detection, estimation and tracking for LFMCW mmWave radar.
//!
//! The pipeline runs per frame:
//!
//! ```text
//! baseband cube -> 2D multi-snapshot NOMP + CFAR -> azimuth LS -> pseudo-measurements
//!               -> gating (2D / 3D with radial velocity) -> sum-product association
//!               -> PDA-weighted Kalman update -> track birth / extrapolation / death
//! ```
//!
//! Modules map onto those stages: [`signal`] (radar model and simulation),
//! [`detector`] (estimation and detection), [`crb`] (Cramér-Rao bounds used as
//! measurement covariances), [`assoc`] (gating and SPA), [`tracker`] (Kalman
//! filter and track management), [`metrics`] (OSPA) and [`harness`]
//! (configuration, file formats and the CLI).

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod crb;
pub mod detector;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod signal;
pub mod tracker;

pub use error::{Error, Result};

pub use num_complex::Complex64;
