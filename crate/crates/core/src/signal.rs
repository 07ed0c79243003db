//! Radar parameterization, constant-velocity truth simulation and baseband
//! cube synthesis.
//!
//! After dechirping, one frame is an `N x M x L` complex tensor (fast time,
//! slow time, antenna). A point target at range `r`, radial velocity `v` and
//! azimuth `theta` contributes a 3D complex exponential whose angular
//! frequencies are
//!
//! ```text
//! wx = 2 pi r / r_max      wy = pi v / v_max      wz = (2 pi d / lambda) sin(theta)
//! ```
//!
//! With half-wavelength spacing `wz = pi sin(theta)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Waveform and array constants of an LFMCW radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarParams {
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Chirp rate (Hz/s).
    pub mu: f64,
    /// ADC sample interval (s).
    pub t_s: f64,
    /// Chirp repetition interval (s).
    pub t_r: f64,
    /// Ramp time (s).
    pub t_ramp: f64,
    /// Idle time between ramps (s).
    pub t_idle: f64,
    /// Element spacing (m); half a wavelength when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Fast-time samples per chirp.
    pub n: usize,
    /// Chirps per frame.
    pub m: usize,
    /// Receive antennas.
    pub l: usize,
    /// Frame interval (s).
    pub t_frame: f64,
}

impl RadarParams {
    /// Desk-scale simulation radar: 77 GHz, 128 x 64 x 8, 60 us ramp, 100 us
    /// idle, `r_max = 100 m`. The sample interval is the ramp time over `N`
    /// and the chirp rate follows from `r_max`.
    pub fn simulation() -> Self {
        let n = 128;
        let t_ramp = 60e-6;
        let t_s = t_ramp / n as f64;
        let r_max = 100.0;
        Self {
            f_c: 77e9,
            mu: SPEED_OF_LIGHT / (2.0 * r_max * t_s),
            t_s,
            t_r: 160e-6,
            t_ramp,
            t_idle: 100e-6,
            d: None,
            n,
            m: 64,
            l: 8,
            t_frame: 0.1,
        }
    }

    /// AWR1642 waveform used for the recorded experiments (two people, a
    /// cyclist, cars), with 4 receive channels.
    pub fn awr1642() -> Self {
        Self {
            f_c: 77e9,
            mu: 8.012e12,
            t_s: 1.0 / 5e6,
            t_r: 59e-6,
            t_ramp: 56e-6,
            t_idle: 3e-6,
            d: None,
            n: 128,
            m: 64,
            l: 4,
            t_frame: 0.1,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    pub fn spacing(&self) -> f64 {
        self.d.unwrap_or_else(|| self.wavelength() / 2.0)
    }

    /// `dwz / dsin(theta)`; equals pi for half-wavelength spacing.
    pub fn spatial_gain(&self) -> f64 {
        2.0 * PI * self.spacing() / self.wavelength()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_c", self.f_c),
            ("mu", self.mu),
            ("t_s", self.t_s),
            ("t_r", self.t_r),
            ("t_ramp", self.t_ramp),
            ("t_frame", self.t_frame),
            ("d", self.spacing()),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.t_idle.is_finite() && self.t_idle >= 0.0) {
            return Err(Error::invalid("t_idle must be nonnegative"));
        }
        if self.n == 0 || self.m == 0 || self.l == 0 {
            return Err(Error::invalid("N, M and L must be at least 1"));
        }
        if self.t_r < self.t_ramp {
            return Err(Error::invalid("chirp interval t_r shorter than ramp time"));
        }
        Ok(())
    }

    pub fn limits(&self) -> RadarLimits {
        compute_limits(self)
    }
}

/// Unambiguous extents and resolutions implied by [`RadarParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarLimits {
    pub r_max: f64,
    pub r_res: f64,
    pub v_max: f64,
    pub v_res: f64,
    pub theta_max: f64,
    /// Angle resolution at boresight.
    pub theta_res: f64,
    /// `wz = spatial_gain * sin(theta)`.
    pub spatial_gain: f64,
}

pub fn compute_limits(params: &RadarParams) -> RadarLimits {
    let lambda = params.wavelength();
    let d = params.spacing();
    RadarLimits {
        r_max: SPEED_OF_LIGHT / (2.0 * params.mu * params.t_s),
        r_res: SPEED_OF_LIGHT / (2.0 * params.mu * params.t_ramp),
        v_max: lambda / (4.0 * params.t_r),
        v_res: lambda / (2.0 * params.m as f64 * params.t_r),
        theta_max: (lambda / (2.0 * d)).min(1.0).asin(),
        theta_res: lambda / (params.l as f64 * d),
        spatial_gain: params.spatial_gain(),
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_two_pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y >= 2.0 * PI {
        0.0
    } else {
        y
    }
}

/// Range, radial velocity and azimuth of a point scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    pub range: f64,
    pub velocity: f64,
    pub azimuth: f64,
}

impl PolarState {
    /// Polar view of a Cartesian CV state `[px, vx, py, vy]`. Azimuth is
    /// measured from the y axis (boresight) towards x.
    pub fn from_cartesian(x: &Vector4<f64>) -> Self {
        let (px, vx, py, vy) = (x[0], x[1], x[2], x[3]);
        let range = px.hypot(py);
        let azimuth = px.atan2(py);
        let velocity = vx * azimuth.sin() + vy * azimuth.cos();
        Self {
            range,
            velocity,
            azimuth,
        }
    }
}

/// Maps a polar state to the `(wx, wy, wz)` frequencies of the baseband
/// model. `wx` lies in `[0, 2 pi)` and `wy` is wrapped into `[-pi, pi)`.
pub fn state_to_frequency(state: &PolarState, limits: &RadarLimits) -> [f64; 3] {
    [
        wrap_two_pi(2.0 * PI * state.range / limits.r_max),
        wrap_pi(PI * state.velocity / limits.v_max),
        limits.spatial_gain * state.azimuth.sin(),
    ]
}

/// A scatterer as seen by the waveform: polar state plus complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoSource {
    pub state: PolarState,
    pub gamma: Complex64,
}

/// Ground-truth target: label, CV state `[px, vx, py, vy]`, complex amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTarget {
    pub label: u64,
    pub x: Vector4<f64>,
    pub gamma: Complex64,
}

impl TruthTarget {
    pub fn echo(&self) -> EchoSource {
        EchoSource {
            state: PolarState::from_cartesian(&self.x),
            gamma: self.gamma,
        }
    }
}

/// One frame of baseband samples, stored antenna-major, then chirp, with
/// fast time fastest: `data[(l * M + m) * N + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandCube {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub data: Vec<Complex64>,
    pub noise_var: Option<f64>,
}

impl BasebandCube {
    pub fn zeros(n: usize, m: usize, l: usize) -> Self {
        Self {
            n,
            m,
            l,
            data: vec![Complex64::new(0.0, 0.0); n * m * l],
            noise_var: None,
        }
    }

    pub fn from_data(n: usize, m: usize, l: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * m * l {
            return Err(Error::invalid(format!(
                "cube payload has {} samples, expected {n}x{m}x{l}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("cube contains non-finite samples"));
        }
        Ok(Self {
            n,
            m,
            l,
            data,
            noise_var: None,
        })
    }

    #[inline]
    pub fn index(&self, n: usize, m: usize, l: usize) -> usize {
        (l * self.m + m) * self.n + n
    }

    /// The `N x M` matrix of antenna `l`, fast time fastest.
    pub fn snapshot(&self, l: usize) -> &[Complex64] {
        let len = self.n * self.m;
        &self.data[l * len..(l + 1) * len]
    }

    pub fn matches(&self, params: &RadarParams) -> bool {
        self.n == params.n && self.m == params.m && self.l == params.l
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// CV transition matrix for state `[px, vx, py, vy]`.
pub fn cv_transition(t: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, t, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, t, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Piecewise-constant white acceleration gain mapping `[ax, ay]` into the
/// CV state.
pub fn cv_noise_gain(t: f64) -> Matrix4x2<f64> {
    Matrix4x2::new(
        t * t / 2.0,
        0.0, //
        t,
        0.0, //
        0.0,
        t * t / 2.0, //
        0.0,
        t,
    )
}

/// Square-root factor `S` with `S S^T = Q` for a symmetric PSD `Q`.
fn psd_sqrt(q: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(*q);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix2::from_diagonal(&d)
}

/// Advances every target one frame: `x <- A x + Gamma w`, `w ~ N(0, Q)`.
pub fn propagate_targets<R: Rng + ?Sized>(
    targets: &[TruthTarget],
    a: &Matrix4<f64>,
    gamma: &Matrix4x2<f64>,
    q: &Matrix2<f64>,
    rng: &mut R,
) -> Vec<TruthTarget> {
    let s = psd_sqrt(q);
    targets
        .iter()
        .map(|t| {
            let e = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            TruthTarget {
                label: t.label,
                x: a * t.x + gamma * (s * e),
                gamma: t.gamma,
            }
        })
        .collect()
}

/// Draws `CN(0, sigma2)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn phasors(len: usize, omega: f64) -> Vec<Complex64> {
    (0..len).map(|k| Complex64::cis(k as f64 * omega)).collect()
}

/// Noise-free sum of target exponentials plus i.i.d. `CN(0, sigma2)` noise.
///
/// Radial velocities beyond `v_max` alias (the slow-time frequency wraps)
/// and are logged.
pub fn synthesize_frame<R: Rng + ?Sized>(
    params: &RadarParams,
    targets: &[EchoSource],
    sigma2: f64,
    rng: &mut R,
) -> Result<BasebandCube> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be >= 0, got {sigma2}"
        )));
    }
    let limits = params.limits();
    let (n, m, l) = (params.n, params.m, params.l);
    let mut cube = BasebandCube::zeros(n, m, l);
    for t in targets {
        if !(t.gamma.re.is_finite() && t.gamma.im.is_finite()) {
            return Err(Error::invalid("target amplitude is not finite"));
        }
        if t.state.velocity.abs() > limits.v_max {
            log::warn!(
                "radial velocity {:.3} m/s exceeds v_max {:.3} m/s and will alias",
                t.state.velocity,
                limits.v_max
            );
        }
        let [wx, wy, wz] = state_to_frequency(&t.state, &limits);
        let ex = phasors(n, wx);
        let ey = phasors(m, wy);
        let ez = phasors(l, wz);
        for (li, &pz) in ez.iter().enumerate() {
            let gl = t.gamma * pz;
            for (mi, &py) in ey.iter().enumerate() {
                let gm = gl * py;
                let base = (li * m + mi) * n;
                for (sample, &px) in cube.data[base..base + n].iter_mut().zip(&ex) {
                    *sample += gm * px;
                }
            }
        }
    }
    if sigma2 > 0.0 {
        for sample in cube.data.iter_mut() {
            *sample += complex_normal(rng, sigma2);
        }
    }
    cube.noise_var = Some(sigma2);
    Ok(cube)
}

/// Amplitude modulus giving integrated SNR `N M |gamma|^2 / sigma2` of `snr_db`.
pub fn amplitude_for_snr(snr_db: f64, n: usize, m: usize, sigma2: f64) -> f64 {
    (sigma2 * 10f64.powf(snr_db / 10.0) / (n * m) as f64).sqrt()
}

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Roi {
    pub fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        (self.x[0]..=self.x[1]).contains(&px) && (self.y[0]..=self.y[1]).contains(&py)
    }
}

/// Multitarget scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub roi: Roi,
    pub n_targets: usize,
    /// Initial position ranges: `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub init_position: [[f64; 2]; 2],
    /// Initial velocity ranges: `[[vx_lo, vx_hi], [vy_lo, vy_hi]]`.
    pub init_velocity: [[f64; 2]; 2],
    /// Explicit initial states `[px, vx, py, vy]`; overrides the random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<[f64; 4]>>,
    pub t_frame: f64,
    pub n_frames: usize,
    /// Diagonal of the 2x2 acceleration noise covariance.
    pub q: [f64; 2],
    /// Mean clutter count per frame.
    pub mu_c: f64,
    /// Integrated SNR `N M |gamma|^2 / sigma2` in dB, shared by all targets.
    pub snr_db: f64,
    /// Per-target integrated SNR overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db_per_target: Option<Vec<f64>>,
    /// Noise variance of the synthesized cubes.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    pub seed: u64,
}

fn default_sigma2() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// ROI `[-30, 30] x [0, 60]`, six targets starting in
    /// `[-10, 10] x [6, 24]` with velocities in `[-3, 3] x [-1, 5]`, 60 frames
    /// of 0.1 s, `q = 1e-6`, four clutter points per frame, 19 dB.
    pub fn desk_scale() -> Self {
        Self {
            roi: Roi {
                x: [-30.0, 30.0],
                y: [0.0, 60.0],
            },
            n_targets: 6,
            init_position: [[-10.0, 10.0], [6.0, 24.0]],
            init_velocity: [[-3.0, 3.0], [-1.0, 5.0]],
            initial_states: None,
            t_frame: 0.1,
            n_frames: 60,
            q: [1e-6, 1e-6],
            mu_c: 4.0,
            snr_db: 19.0,
            snr_db_per_target: None,
            sigma2: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            self.roi.x,
            self.roi.y,
            self.init_position[0],
            self.init_position[1],
            self.init_velocity[0],
            self.init_velocity[1],
        ];
        if ranges
            .iter()
            .any(|r| !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite())
        {
            return Err(Error::invalid(
                "scenario ranges must be finite and nonempty",
            ));
        }
        if self.roi.area() <= 0.0 {
            return Err(Error::invalid("ROI has zero area"));
        }
        if !(self.mu_c >= 0.0 && self.mu_c.is_finite()) {
            return Err(Error::invalid("clutter mean must be >= 0"));
        }
        if self.n_frames == 0 {
            return Err(Error::invalid("n_frames must be >= 1"));
        }
        if !(self.t_frame > 0.0) {
            return Err(Error::invalid("t_frame must be positive"));
        }
        if self.q.iter().any(|&q| !(q >= 0.0)) {
            return Err(Error::invalid("process noise must be >= 0"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        if let Some(states) = &self.initial_states {
            if states.len() != self.n_targets {
                return Err(Error::invalid(
                    "initial_states length differs from n_targets",
                ));
            }
        }
        if let Some(snr) = &self.snr_db_per_target {
            if snr.len() != self.n_targets {
                return Err(Error::invalid(
                    "snr_db_per_target length differs from n_targets",
                ));
            }
        }
        Ok(())
    }

    pub fn target_snr_db(&self, index: usize) -> f64 {
        self.snr_db_per_target
            .as_ref()
            .map(|v| v[index])
            .unwrap_or(self.snr_db)
    }
}

/// Truth states per frame and measurement-level clutter positions per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: Vec<Vec<TruthTarget>>,
    pub clutter: Vec<Vec<[f64; 2]>>,
}

/// Draws initial states, propagates them with the CV model and scatters
/// Poisson clutter over the ROI. Target amplitudes carry the configured
/// integrated SNR with a fresh uniform phase every frame.
pub fn generate_scenario<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    radar: &RadarParams,
    rng: &mut R,
) -> Result<Scenario> {
    cfg.validate()?;
    let uniform = |rng: &mut R, r: [f64; 2]| {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..r[1])
        }
    };
    let amplitude: Vec<f64> = (0..cfg.n_targets)
        .map(|k| amplitude_for_snr(cfg.target_snr_db(k), radar.n, radar.m, cfg.sigma2))
        .collect();

    let mut current: Vec<TruthTarget> = (0..cfg.n_targets)
        .map(|k| {
            let x = match &cfg.initial_states {
                Some(states) => Vector4::from(states[k]),
                None => {
                    let px = uniform(rng, cfg.init_position[0]);
                    let py = uniform(rng, cfg.init_position[1]);
                    let vx = uniform(rng, cfg.init_velocity[0]);
                    let vy = uniform(rng, cfg.init_velocity[1]);
                    Vector4::new(px, vx, py, vy)
                }
            };
            TruthTarget {
                label: k as u64 + 1,
                x,
                gamma: Complex64::new(0.0, 0.0),
            }
        })
        .collect();

    let a = cv_transition(cfg.t_frame);
    let gamma = cv_noise_gain(cfg.t_frame);
    let q = Matrix2::new(cfg.q[0], 0.0, 0.0, cfg.q[1]);
    let clutter_count = if cfg.mu_c > 0.0 {
        Some(Poisson::new(cfg.mu_c).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };

    let mut truth = Vec::with_capacity(cfg.n_frames);
    let mut clutter = Vec::with_capacity(cfg.n_frames);
    for frame in 0..cfg.n_frames {
        if frame > 0 {
            current = propagate_targets(&current, &a, &gamma, &q, rng);
        }
        for (t, &g) in current.iter_mut().zip(&amplitude) {
            t.gamma = Complex64::from_polar(g, rng.random_range(0.0..2.0 * PI));
        }
        truth.push(current.clone());

        let count = clutter_count
            .as_ref()
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0);
        clutter.push(
            (0..count)
                .map(|_| [uniform(rng, cfg.roi.x), uniform(rng, cfg.roi.y)])
                .collect(),
        );
    }
    Ok(Scenario { truth, clutter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn awr1642_limits() {
        let p = RadarParams::awr1642();
        let lim = p.limits();
        // the published 93.6 m uses c = 3e8
        assert!((3e8 / (2.0 * p.mu * p.t_s) - 93.6).abs() < 0.05);
        assert!(rel(lim.r_max, 93.6) < 1e-3, "r_max {}", lim.r_max);
        assert!((lim.v_max - 16.5).abs() < 0.05, "v_max {}", lim.v_max);
    }

    #[test]
    fn simulation_limits() {
        let lim = RadarParams::simulation().limits();
        assert!((lim.r_max - 100.0).abs() < 1e-9);
        assert!((lim.r_res - 0.78).abs() < 0.005, "r_res {}", lim.r_res);
        assert!((lim.v_res - 0.19).abs() < 0.005, "v_res {}", lim.v_res);
        assert!((lim.v_max - 6.08).abs() < 0.01, "v_max {}", lim.v_max);
        assert!((lim.theta_max - PI / 2.0).abs() < 1e-12);
        assert!((lim.theta_res - 2.0 / 8.0).abs() < 1e-12);
        assert!(lim.r_res <= lim.r_max && lim.v_res <= 2.0 * lim.v_max);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = RadarParams::simulation();
        p.t_r = p.t_ramp / 2.0;
        assert!(p.validate().is_err());
        let mut p = RadarParams::simulation();
        p.l = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn frequency_map_round_trip() {
        let lim = RadarParams::simulation().limits();
        for &(r, v, th) in &[
            (0.0, 0.0, 0.0),
            (37.2, -5.9, 1.2),
            (99.9, 6.0, -1.5),
            (3.3, 0.01, 0.4),
        ] {
            let s = PolarState {
                range: r,
                velocity: v,
                azimuth: th,
            };
            let w = state_to_frequency(&s, &lim);
            let r2 = w[0] * lim.r_max / (2.0 * PI);
            let v2 = w[1] * lim.v_max / PI;
            let th2 = (w[2] / lim.spatial_gain).asin();
            assert!((r2 - r).abs() <= 1e-12 * r.max(1.0));
            assert!((v2 - v).abs() <= 1e-12 * v.abs().max(1.0));
            assert!((th2 - th).abs() <= 1e-12);
        }
    }

    #[test]
    fn noiseless_cv_step() {
        let t = TruthTarget {
            label: 1,
            x: Vector4::new(0.0, 1.0, 0.0, 2.0),
            gamma: Complex64::new(1.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = propagate_targets(
            std::slice::from_ref(&t),
            &cv_transition(0.1),
            &cv_noise_gain(0.1),
            &Matrix2::zeros(),
            &mut rng,
        );
        assert!((out[0].x - Vector4::new(0.1, 1.0, 0.2, 2.0)).norm() < 1e-15);
        assert_eq!(out[0].label, 1);

        let still = TruthTarget {
            x: Vector4::new(3.0, 0.0, 4.0, 0.0),
            ..t
        };
        let out = propagate_targets(
            std::slice::from_ref(&still),
            &cv_transition(0.1),
            &cv_noise_gain(0.1),
            &Matrix2::zeros(),
            &mut rng,
        );
        assert_eq!(out[0].x, still.x);
    }

    #[test]
    fn process_noise_covariance_matches_closed_form() {
        let tf = 0.1;
        let a = cv_transition(tf);
        let g = cv_noise_gain(tf);
        let q = Matrix2::new(1e-6, 0.0, 0.0, 1e-6);
        let zero = TruthTarget {
            label: 0,
            x: Vector4::zeros(),
            gamma: Complex64::new(0.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = 10_000;
        let mut cov = Matrix4::<f64>::zeros();
        for _ in 0..samples {
            let w = propagate_targets(std::slice::from_ref(&zero), &a, &g, &q, &mut rng)[0].x;
            cov += w * w.transpose();
        }
        cov /= samples as f64;
        let expected = g * q * g.transpose();
        for i in 0..4 {
            assert!(
                rel(cov[(i, i)], expected[(i, i)]) < 0.1,
                "diag {i}: {} vs {}",
                cov[(i, i)],
                expected[(i, i)]
            );
        }
        // position/velocity cross terms on each axis
        assert!(rel(cov[(0, 1)], expected[(0, 1)]) < 0.1);
        assert!(rel(cov[(2, 3)], expected[(2, 3)]) < 0.1);
    }

    fn small_params(n: usize, m: usize, l: usize) -> RadarParams {
        let mut p = RadarParams::simulation();
        p.n = n;
        p.m = m;
        p.l = l;
        p
    }

    #[test]
    fn empty_frame_is_zero() {
        let p = small_params(8, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cube = synthesize_frame(&p, &[], 0.0, &mut rng).unwrap();
        assert!(cube.data.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn unit_target_has_unit_modulus() {
        let p = small_params(16, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = EchoSource {
            state: PolarState {
                range: 31.0,
                velocity: 2.2,
                azimuth: 0.3,
            },
            gamma: Complex64::new(1.0, 0.0),
        };
        let cube = synthesize_frame(&p, &[src], 0.0, &mut rng).unwrap();
        assert!(cube.data.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!((cube.energy() - (16 * 8 * 4) as f64).abs() < 1e-9);
    }

    #[test]
    fn on_grid_target_has_single_dft_bin() {
        let (n, m, l) = (16usize, 8usize, 2usize);
        let p = small_params(n, m, l);
        let lim = p.limits();
        // bin (3, 2): wx = 2 pi 3 / n, wy = 2 pi 2 / m
        let src = EchoSource {
            state: PolarState {
                range: 3.0 / n as f64 * lim.r_max,
                velocity: 2.0 * 2.0 / m as f64 * lim.v_max,
                azimuth: 0.2,
            },
            gamma: Complex64::new(1.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cube = synthesize_frame(&p, &[src], 0.0, &mut rng).unwrap();
        for li in 0..l {
            let y = cube.snapshot(li);
            for kx in 0..n {
                for ky in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for mi in 0..m {
                        for ni in 0..n {
                            let ph = -2.0 * PI * (ni * kx) as f64 / n as f64
                                - 2.0 * PI * (mi * ky) as f64 / m as f64;
                            acc += y[mi * n + ni] * Complex64::cis(ph);
                        }
                    }
                    let expected = if (kx, ky) == (3, 2) {
                        (n * m) as f64
                    } else {
                        0.0
                    };
                    assert!(
                        (acc.norm() - expected).abs() < 1e-9,
                        "bin ({kx},{ky}) = {}",
                        acc.norm()
                    );
                }
            }
        }
    }

    #[test]
    fn synthesis_is_linear() {
        let p = small_params(16, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = EchoSource {
            state: PolarState {
                range: 12.5,
                velocity: -1.0,
                azimuth: -0.4,
            },
            gamma: Complex64::new(0.3, -1.2),
        };
        let b = EchoSource {
            state: PolarState {
                range: 48.0,
                velocity: 3.5,
                azimuth: 0.9,
            },
            gamma: Complex64::new(2.0, 0.5),
        };
        let ca = synthesize_frame(&p, &[a], 0.0, &mut rng).unwrap();
        let cb = synthesize_frame(&p, &[b], 0.0, &mut rng).unwrap();
        let cab = synthesize_frame(&p, &[a, b], 0.0, &mut rng).unwrap();
        for i in 0..cab.data.len() {
            assert!((cab.data[i] - ca.data[i] - cb.data[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_periodogram_is_normalized() {
        let (n, m, l) = (16usize, 16usize, 4usize);
        let p = small_params(n, m, l);
        let sigma2 = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cube = synthesize_frame(&p, &[], sigma2, &mut rng).unwrap();
        let mut total = 0.0;
        for kx in 0..n {
            for ky in 0..m {
                let mut power = 0.0;
                for li in 0..l {
                    let y = cube.snapshot(li);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for mi in 0..m {
                        for ni in 0..n {
                            let ph = -2.0
                                * PI
                                * ((ni * kx) as f64 / n as f64 + (mi * ky) as f64 / m as f64);
                            acc += y[mi * n + ni] * Complex64::cis(ph);
                        }
                    }
                    power += acc.norm_sqr();
                }
                total += power / ((n * m * l) as f64 * sigma2);
            }
        }
        let mean = total / (n * m) as f64;
        assert!(
            (mean - 1.0).abs() <= 3.0 / ((n * m) as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn synthesis_rejects_bad_inputs() {
        let p = small_params(4, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(synthesize_frame(&p, &[], -1.0, &mut rng).is_err());
        let bad = EchoSource {
            state: PolarState {
                range: 1.0,
                velocity: 0.0,
                azimuth: 0.0,
            },
            gamma: Complex64::new(f64::NAN, 0.0),
        };
        assert!(synthesize_frame(&p, &[bad], 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_clutter_mean_gives_no_clutter() {
        let mut cfg = ScenarioConfig::desk_scale();
        cfg.mu_c = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sc = generate_scenario(&cfg, &RadarParams::simulation(), &mut rng).unwrap();
        assert!(sc.clutter.iter().all(|c| c.is_empty()));
        assert_eq!(sc.truth.len(), 60);
    }

    #[test]
    fn clutter_count_mean() {
        let mut cfg = ScenarioConfig::desk_scale();
        cfg.n_frames = 10_000;
        cfg.n_targets = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sc = generate_scenario(&cfg, &RadarParams::simulation(), &mut rng).unwrap();
        let mean = sc.clutter.iter().map(|c| c.len()).sum::<usize>() as f64 / 10_000.0;
        assert!((mean - 4.0).abs() < 0.1, "mean clutter {mean}");
        assert!(sc
            .clutter
            .iter()
            .flatten()
            .all(|p| cfg.roi.contains(p[0], p[1])));
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = ScenarioConfig::desk_scale();
        let radar = RadarParams::simulation();
        let a = generate_scenario(&cfg, &radar, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_scenario(&cfg, &radar, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let init = &a.truth[0];
        assert!(init
            .iter()
            .all(|t| (-10.0..=10.0).contains(&t.x[0]) && (6.0..=24.0).contains(&t.x[2])));
    }

    #[test]
    fn integrated_snr_arithmetic() {
        // -23.9 dB per sample plus 10 log10(128 * 64) is 15.2 dB integrated
        let g = amplitude_for_snr(15.2, 128, 64, 1.0);
        let per_sample = 10.0 * (g * g).log10();
        assert!((per_sample + 23.93).abs() < 0.01, "{per_sample}");
    }
}
