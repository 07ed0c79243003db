//! PDA-weighted Kalman filtering over SPA association probabilities, track
//! birth, extrapolation and death, and the per-frame pipeline.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::assoc::{associate, AssocConfig, AssocResult, PredictedTrack};
use crate::detector::{
    cluster_measurements, fft_cfar_detect, mnomp_detect, to_pseudo_measurement, CfarConfig,
    ClusterGate, Detection, DetectorKind, Measurement,
};
use crate::error::{Error, Result};
use crate::signal::{cv_noise_gain, cv_transition, BasebandCube, RadarParams};

/// Position rows of the state `[px, vx, py, vy]`.
pub const H_POS: Matrix2x4<f64> = Matrix2x4::new(
    1.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 1.0, 0.0,
);

const EIGEN_FLOOR: f64 = 1e-12;

/// Constant-velocity dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub a: Matrix4<f64>,
    pub gamma: Matrix4x2<f64>,
    pub q: Matrix2<f64>,
}

impl MotionModel {
    pub fn constant_velocity(t_frame: f64, q: [f64; 2]) -> Self {
        Self {
            a: cv_transition(t_frame),
            gamma: cv_noise_gain(t_frame),
            q: Matrix2::new(q[0], 0.0, 0.0, q[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Diagonal of the acceleration noise covariance.
    pub q: [f64; 2],
    /// Consecutive misses after which a track dies.
    pub n_ext: usize,
    /// Clutter probability above which a measurement starts a track.
    pub birth_threshold: f64,
    /// Scale applied to the CRB to form measurement covariances.
    pub kappa: f64,
    /// Standard deviation of each velocity component at birth; `v_max / 3`
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth_velocity_sd: Option<f64>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            q: [1e-6, 1e-6],
            n_ext: 2,
            birth_threshold: 0.5,
            kappa: 1.2,
            birth_velocity_sd: None,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ext == 0 {
            return Err(Error::invalid("n_ext must be at least 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if self.q.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::invalid("process noise must be >= 0"));
        }
        if !(self.birth_threshold > 0.0 && self.birth_threshold < 1.0) {
            return Err(Error::invalid("birth_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Active,
    Dead,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Tentative => "tentative",
            Self::Active => "active",
            Self::Dead => "dead",
        }
    }
}

impl std::str::FromStr for TrackStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tentative" => Ok(Self::Tentative),
            "active" => Ok(Self::Active),
            "dead" => Ok(Self::Dead),
            other => Err(Error::invalid(format!("unknown track status '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub label: u64,
    /// `[px, vx, py, vy]`.
    pub x: Vector4<f64>,
    pub sigma: Matrix4<f64>,
    pub miss_count: usize,
    pub status: TrackStatus,
    pub theta_last: f64,
}

impl Track {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x[0], self.x[2])
    }
}

/// Symmetrizes and floors the eigenvalues at 1e-12.
pub fn regularize(sigma: &Matrix4<f64>) -> Matrix4<f64> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() >= EIGEN_FLOOR {
        return sym;
    }
    let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let out = eig.eigenvectors * Matrix4::from_diagonal(&floored) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

/// `x(t|t-1) = A x`, `Sigma(t|t-1) = A Sigma A^T + Gamma Q Gamma^T`,
/// symmetrized.
pub fn predict(track: &Track, model: &MotionModel) -> (Vector4<f64>, Matrix4<f64>) {
    let x = model.a * track.x;
    let s = model.a * track.sigma * model.a.transpose()
        + model.gamma * model.q * model.gamma.transpose();
    (x, (s + s.transpose()) * 0.5)
}

/// PDA correction with per-measurement covariances. `beta[0]` is the miss
/// probability and `beta[i + 1]` belongs to `meas[i]`. The gain uses the
/// association-weighted mean of the measurement covariances.
pub fn update_pda(
    x_pred: &Vector4<f64>,
    sigma_pred: &Matrix4<f64>,
    meas: &[&Measurement],
    beta: &[f64],
) -> Result<(Vector4<f64>, Matrix4<f64>)> {
    if beta.len() != meas.len() + 1 {
        return Err(Error::invalid("beta row length must be measurements + 1"));
    }
    let mass: f64 = beta[1..].iter().sum();
    if mass <= 0.0 {
        return Ok((*x_pred, *sigma_pred));
    }
    let r_bar = meas
        .iter()
        .zip(&beta[1..])
        .fold(Matrix2::zeros(), |acc, (m, &b)| acc + m.r_cov * (b / mass));
    let s = H_POS * sigma_pred * H_POS.transpose() + r_bar;
    let s_inv = s
        .cholesky()
        .ok_or(Error::Singular("innovation covariance"))?
        .inverse();
    let gain = sigma_pred * H_POS.transpose() * s_inv;
    let z_pred = H_POS * x_pred;
    let mut delta = Vector2::zeros();
    let mut spread = Matrix2::zeros();
    for (m, &b) in meas.iter().zip(&beta[1..]) {
        let e = m.z - z_pred;
        delta += e * b;
        spread += e * e.transpose() * b;
    }
    spread -= delta * delta.transpose();
    let x = x_pred + gain * delta;
    let sigma =
        sigma_pred - gain * H_POS * sigma_pred * (1.0 - beta[0]) + gain * spread * gain.transpose();
    Ok((x, regularize(&sigma)))
}

/// New tentative track at the measured polar state, velocity along the
/// line of sight.
pub fn spawn_track(meas: &Measurement, label: u64, velocity_var: f64) -> Track {
    let (s, c) = meas.theta.sin_cos();
    let x = Vector4::new(meas.r * s, meas.v_r * s, meas.r * c, meas.v_r * c);
    let mut sigma = Matrix4::zeros();
    sigma[(0, 0)] = meas.r_cov[(0, 0)];
    sigma[(0, 2)] = meas.r_cov[(0, 1)];
    sigma[(2, 0)] = meas.r_cov[(1, 0)];
    sigma[(2, 2)] = meas.r_cov[(1, 1)];
    sigma[(1, 1)] = velocity_var;
    sigma[(3, 3)] = velocity_var;
    Track {
        label,
        x,
        sigma: regularize(&sigma),
        miss_count: 0,
        status: TrackStatus::Tentative,
        theta_last: meas.theta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackEventKind {
    Born,
    Extrapolated,
    Died,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackEvent {
    pub frame: usize,
    pub label: u64,
    pub kind: TrackEventKind,
}

/// Multi-target tracker state across frames.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    pub model: MotionModel,
    pub tracks: Vec<Track>,
    next_label: u64,
    birth_velocity_var: f64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, t_frame: f64, v_max: f64) -> Result<Self> {
        cfg.validate()?;
        let sd = cfg.birth_velocity_sd.unwrap_or(v_max / 3.0);
        Ok(Self {
            model: MotionModel::constant_velocity(t_frame, cfg.q),
            cfg,
            tracks: Vec::new(),
            next_label: 1,
            birth_velocity_var: sd * sd,
        })
    }

    /// Predictions of every live track, in track order.
    pub fn predictions(&self) -> Vec<PredictedTrack> {
        self.tracks
            .iter()
            .map(|t| {
                let (x, s) = predict(t, &self.model);
                PredictedTrack::new(x, s)
            })
            .collect()
    }

    /// Applies one frame of association results: PDA update or
    /// extrapolation per track, deaths, then births. New tracks join
    /// association from the next frame.
    pub fn lifecycle_step(
        &mut self,
        preds: &[PredictedTrack],
        assoc: &AssocResult,
        meas: &[Measurement],
        frame: usize,
    ) -> Result<Vec<TrackEvent>> {
        let mut events = Vec::new();
        for (k, (track, pred)) in self.tracks.iter_mut().zip(preds).enumerate() {
            let miss = assoc.beta[(k, 0)];
            if miss > 0.5 {
                track.x = pred.x;
                track.sigma = pred.sigma;
                track.miss_count += 1;
                if track.miss_count >= self.cfg.n_ext {
                    track.status = TrackStatus::Dead;
                    events.push(TrackEvent {
                        frame,
                        label: track.label,
                        kind: TrackEventKind::Died,
                    });
                } else {
                    events.push(TrackEvent {
                        frame,
                        label: track.label,
                        kind: TrackEventKind::Extrapolated,
                    });
                }
                continue;
            }
            let in_gate: Vec<usize> = (0..meas.len()).filter(|&h| assoc.gates[k][h]).collect();
            let used: Vec<&Measurement> = in_gate.iter().map(|&h| &meas[h]).collect();
            let mut beta = Vec::with_capacity(used.len() + 1);
            beta.push(miss);
            beta.extend(in_gate.iter().map(|&h| assoc.beta[(k, h + 1)]));
            let (x, sigma) = update_pda(&pred.x, &pred.sigma, &used, &beta)?;
            track.x = x;
            track.sigma = sigma;
            track.miss_count = 0;
            track.theta_last = x[0].atan2(x[2]);
            if track.status == TrackStatus::Tentative {
                track.status = TrackStatus::Active;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Dead);

        for (h, m) in meas.iter().enumerate() {
            if assoc.xi[(h, 0)] > self.cfg.birth_threshold {
                let label = self.next_label;
                self.next_label += 1;
                self.tracks
                    .push(spawn_track(m, label, self.birth_velocity_var));
                events.push(TrackEvent {
                    frame,
                    label,
                    kind: TrackEventKind::Born,
                });
            }
        }
        Ok(events)
    }

    /// Gating, SPA and the lifecycle for one frame of measurements.
    pub fn step(
        &mut self,
        meas: &[Measurement],
        assoc_cfg: &AssocConfig,
        frame: usize,
    ) -> Result<(AssocResult, Vec<TrackEvent>)> {
        let preds = self.predictions();
        let assoc = associate(&preds, meas, assoc_cfg)?;
        let events = self.lifecycle_step(&preds, &assoc, meas, frame)?;
        Ok((assoc, events))
    }
}

/// Input of one pipeline frame.
#[derive(Debug, Clone, Copy)]
pub enum FrameInput<'a> {
    Cube(&'a BasebandCube),
    Measurements(&'a [Measurement]),
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: usize,
    pub tracks: Vec<Track>,
    pub detections: Vec<Detection>,
    pub measurements: Vec<Measurement>,
    pub assoc: AssocResult,
    pub events: Vec<TrackEvent>,
}

/// Detector, clustering, association and tracker chained per frame.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub radar: RadarParams,
    pub cfar: CfarConfig,
    pub detector: DetectorKind,
    pub cluster: Option<ClusterGate>,
    pub assoc: AssocConfig,
    pub tracker: Tracker,
    frame: usize,
}

impl Pipeline {
    pub fn new(
        radar: RadarParams,
        cfar: CfarConfig,
        detector: DetectorKind,
        cluster: Option<ClusterGate>,
        assoc: AssocConfig,
        tracker_cfg: TrackerConfig,
    ) -> Result<Self> {
        radar.validate()?;
        cfar.validate()?;
        assoc.validate()?;
        let limits = radar.limits();
        let tracker = Tracker::new(tracker_cfg, radar.t_frame, limits.v_max)?;
        Ok(Self {
            radar,
            cfar,
            detector,
            cluster,
            assoc,
            tracker,
            frame: 0,
        })
    }

    /// Runs the detector on a cube and converts every detection to a
    /// measurement. Detections whose bound cannot be formed are dropped.
    /// FFT-CFAR measurements also carry the grid rounding variance.
    pub fn detect(
        &self,
        cube: &BasebandCube,
        frame: usize,
    ) -> Result<(Vec<Detection>, Vec<Measurement>)> {
        let set = match self.detector {
            DetectorKind::Mnomp => mnomp_detect(cube, &self.radar, &self.cfar)?,
            DetectorKind::Fftcfar => fft_cfar_detect(cube, &self.radar, &self.cfar)?,
        };
        let kappa = self.tracker.cfg.kappa;
        let limits = self.radar.limits();
        let meas = set
            .detections
            .iter()
            .filter_map(|d| {
                to_pseudo_measurement(d, &self.radar, set.sigma2_hat, kappa, frame).ok()
            })
            .map(|mut m| {
                if self.detector == DetectorKind::Fftcfar {
                    m.add_grid_quantization(&limits, kappa);
                }
                m
            })
            .collect();
        Ok((set.detections, meas))
    }

    pub fn process_frame(&mut self, input: FrameInput<'_>) -> Result<FrameOutput> {
        let frame = self.frame;
        let (detections, raw) = match input {
            FrameInput::Cube(cube) => self.detect(cube, frame)?,
            FrameInput::Measurements(m) => (Vec::new(), m.to_vec()),
        };
        let measurements = match self.cluster {
            Some(gate) => cluster_measurements(&raw, gate),
            None => raw,
        };
        let (assoc, events) = self.tracker.step(&measurements, &self.assoc, frame)?;
        self.frame += 1;
        Ok(FrameOutput {
            frame,
            tracks: self.tracker.tracks.clone(),
            detections,
            measurements,
            assoc,
            events,
        })
    }
}
