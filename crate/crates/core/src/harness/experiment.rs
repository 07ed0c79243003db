//! Building blocks for simulation runs: scenario plus cubes, pipelines from
//! a config, set conversion for OSPA and synthetic clutter measurements.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assoc::GateMode;
use crate::crb::{crb_pxpy, crb_rvtheta, SignalPoint};
use crate::detector::{DetectorKind, Measurement};
use crate::error::Result;
use crate::metrics::LabeledSet;
use crate::signal::{
    amplitude_for_snr, generate_scenario, state_to_frequency, synthesize_frame, BasebandCube,
    EchoSource, PolarState, RadarParams, Scenario, TruthTarget,
};
use crate::tracker::{Pipeline, Track, TrackStatus};

use super::config::RunConfig;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn echoes(targets: &[TruthTarget]) -> Vec<EchoSource> {
    targets.iter().map(TruthTarget::echo).collect()
}

/// Scenario and one synthesized cube per frame, all drawn from `rng`.
pub fn simulate<R: Rng + ?Sized>(
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<(Scenario, Vec<BasebandCube>)> {
    let scenario = generate_scenario(&cfg.scenario, &cfg.radar, rng)?;
    let cubes = scenario
        .truth
        .iter()
        .map(|targets| synthesize_frame(&cfg.radar, &echoes(targets), cfg.scenario.sigma2, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((scenario, cubes))
}

/// Pipeline for `cfg` with the detector and gate overridden.
pub fn build_pipeline(cfg: &RunConfig, detector: DetectorKind, gate: GateMode) -> Result<Pipeline> {
    let mut assoc = cfg.effective_assoc();
    assoc.gate_mode = gate;
    Pipeline::new(
        cfg.radar,
        cfg.cfar.clone(),
        detector,
        cfg.cluster,
        assoc,
        cfg.tracker.clone(),
    )
}

pub fn truth_set(targets: &[TruthTarget]) -> LabeledSet {
    LabeledSet::new(targets.iter().map(|t| (t.label, t.x)).collect())
}

/// Confirmed tracks only; tentative tracks have not yet been updated by a
/// measurement after birth.
pub fn active_set(tracks: &[Track]) -> LabeledSet {
    LabeledSet::new(
        tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Active)
            .map(|t| (t.label, t.x))
            .collect(),
    )
}

/// Measurement a detector would report for an echo at `(px, py)` with radial
/// velocity `v_r` and the given integrated SNR: exact position and velocity,
/// covariance `kappa` times the bound.
pub fn ideal_measurement(
    radar: &RadarParams,
    px: f64,
    py: f64,
    v_r: f64,
    snr_db: f64,
    sigma2: f64,
    kappa: f64,
    frame: usize,
) -> Result<Measurement> {
    let limits = radar.limits();
    let r = px.hypot(py);
    let edge = PI / 2.0 - 1e-6;
    let theta = px.atan2(py).clamp(-edge, edge);
    let state = PolarState {
        range: r,
        velocity: v_r,
        azimuth: theta,
    };
    let point = SignalPoint {
        omega: state_to_frequency(&state, &limits),
        g: amplitude_for_snr(snr_db, radar.n, radar.m, sigma2),
        phi: 0.0,
        sigma2,
        n: radar.n,
        m: radar.m,
        l: radar.l,
    };
    let r_cov = crb_pxpy(&point, &limits, r, theta)? * kappa;
    let var_v = crb_rvtheta(&point, &limits, theta)?[(1, 1)] * kappa;
    let mut m = Measurement::from_polar(frame, r, theta, v_r, r_cov, var_v);
    m.snr_db = snr_db;
    Ok(m)
}

/// Clutter measurements at the given positions with radial velocity uniform
/// in `[-v_max, v_max)`.
pub fn clutter_measurements<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    radar: &RadarParams,
    snr_db: f64,
    sigma2: f64,
    kappa: f64,
    frame: usize,
    rng: &mut R,
) -> Result<Vec<Measurement>> {
    let v_max = radar.limits().v_max;
    points
        .iter()
        .map(|p| {
            let v = rng.random_range(-v_max..v_max);
            ideal_measurement(radar, p[0], p[1], v, snr_db, sigma2, kappa, frame)
        })
        .collect()
}

/// Standard deviations of the bounds at one SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbRow {
    pub snr_db: f64,
    pub r: f64,
    pub theta: f64,
    pub sd_r: f64,
    pub sd_v: f64,
    pub sd_theta: f64,
    pub sd_px: f64,
    pub sd_py: f64,
    /// Correlation of the `px`, `py` errors.
    pub rho_pxpy: f64,
}

pub const CRB_HEADER: &str = "snr_db,r,theta,sd_r,sd_v,sd_theta,sd_px,sd_py,rho_pxpy";

pub fn crb_table(cfg: &RunConfig) -> Result<Vec<CrbRow>> {
    let [px, py] = cfg.crb.position;
    let radar = &cfg.radar;
    let limits = radar.limits();
    let r = px.hypot(py);
    let theta = px.atan2(py);
    let state = PolarState {
        range: r,
        velocity: cfg.crb.velocity,
        azimuth: theta,
    };
    cfg.crb
        .snr_db
        .iter()
        .map(|&snr| {
            let sigma2 = cfg.scenario.sigma2;
            let point = SignalPoint {
                omega: state_to_frequency(&state, &limits),
                g: amplitude_for_snr(snr, radar.n, radar.m, sigma2),
                phi: 0.0,
                sigma2,
                n: radar.n,
                m: radar.m,
                l: radar.l,
            };
            let polar = crb_rvtheta(&point, &limits, theta)?;
            let cart = crb_pxpy(&point, &limits, r, theta)?;
            Ok(CrbRow {
                snr_db: snr,
                r,
                theta,
                sd_r: polar[(0, 0)].sqrt(),
                sd_v: polar[(1, 1)].sqrt(),
                sd_theta: polar[(2, 2)].sqrt(),
                sd_px: cart[(0, 0)].sqrt(),
                sd_py: cart[(1, 1)].sqrt(),
                rho_pxpy: cart[(0, 1)] / (cart[(0, 0)] * cart[(1, 1)]).sqrt(),
            })
        })
        .collect()
}
