use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assoc::AssocConfig;
use crate::detector::{CfarConfig, ClusterGate, DetectorKind};
use crate::error::{Error, Result};
use crate::signal::{RadarParams, ScenarioConfig};
use crate::tracker::TrackerConfig;

/// OSPA order and cutoff (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub p: f64,
    pub c: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { p: 1.0, c: 10.0 }
    }
}

/// Target and SNR sweep of the `crb` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrbSweep {
    /// `[px, py]` of the target (m).
    pub position: [f64; 2],
    /// Radial velocity (m/s).
    pub velocity: f64,
    /// Integrated SNR values in dB.
    pub snr_db: Vec<f64>,
}

impl Default for CrbSweep {
    fn default() -> Self {
        Self {
            position: [-2.8, 7.5],
            velocity: 0.0,
            snr_db: (0..=30).map(f64::from).collect(),
        }
    }
}

/// Everything one CLI run needs. Every section but `scenario` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "RadarParams::simulation")]
    pub radar: RadarParams,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub cfar: CfarConfig,
    #[serde(default)]
    pub detector: DetectorKind,
    /// Measurement clustering; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterGate>,
    #[serde(default)]
    pub assoc: AssocConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub crb: CrbSweep,
    /// Master seed; `scenario.seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Simulation radar with the desk-scale six-target scenario.
    pub fn desk_scale() -> Self {
        Self {
            radar: RadarParams::simulation(),
            scenario: ScenarioConfig::desk_scale(),
            cfar: CfarConfig::default(),
            detector: DetectorKind::Mnomp,
            cluster: None,
            assoc: AssocConfig::default(),
            tracker: TrackerConfig::default(),
            metric: MetricConfig::default(),
            crb: CrbSweep::default(),
            seed: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.scenario.seed)
    }

    /// Association settings with the clutter density filled in from the ROI.
    pub fn effective_assoc(&self) -> AssocConfig {
        let mut a = self.assoc.clone();
        if a.f_c.is_none() {
            a.f_c = Some(1.0 / self.scenario.roi.area());
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        let section =
            |name: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("{name}: {e}")));
        section("radar", self.radar.validate())?;
        section("scenario", self.scenario.validate())?;
        section("cfar", self.cfar.validate())?;
        section("assoc", self.assoc.validate())?;
        section("tracker", self.tracker.validate())?;
        if let Some(g) = self.cluster {
            if !(g.d_pos >= 0.0 && g.d_vel >= 0.0) {
                return Err(Error::Config("cluster: thresholds must be >= 0".into()));
            }
        }
        if !(self.metric.p >= 1.0 && self.metric.p.is_finite()) {
            return Err(Error::Config("metric: p must be >= 1".into()));
        }
        if !(self.metric.c > 0.0 && self.metric.c.is_finite()) {
            return Err(Error::Config("metric: c must be positive".into()));
        }
        let dt = (self.scenario.t_frame - self.radar.t_frame).abs();
        if dt > 1e-12 * self.radar.t_frame {
            return Err(Error::Config(format!(
                "scenario.t_frame {} differs from radar.t_frame {}",
                self.scenario.t_frame, self.radar.t_frame
            )));
        }
        if self.crb.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("crb: SNR values must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a JSON config. A missing or unreadable file is a
    /// configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
