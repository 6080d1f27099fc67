//! Run configuration: a TOML document with fixed section names, strict about
//! unknown keys, with every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::AppKind;
use crate::brdi::BrdiConfig;
use crate::detection::{SrExperimentConfig, TrExperimentConfig};
use crate::edrl::EdrlConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    #[default]
    Edrl,
    Greedy,
    Random,
    Oracle,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 4] = [AllocatorKind::Edrl, AllocatorKind::Greedy, AllocatorKind::Random, AllocatorKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            AllocatorKind::Edrl => "edrl",
            AllocatorKind::Greedy => "greedy",
            AllocatorKind::Random => "random",
            AllocatorKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// One unit price per resource type, shared by all servers.
    #[default]
    PerType,
    /// Independent prices per server and type.
    PerServer,
}

/// Overrides for one device of the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePin {
    pub device: usize,
    /// Fixed behavior index; detection no longer moves it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brdi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomalous: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DevicesConfig {
    pub count: usize,
    /// Share of devices per application class, in class order.
    pub ratio: Vec<f64>,
    /// Explicit application per device; overrides `count` and `ratio`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apps: Option<Vec<AppKind>>,
    pub anomalous_fraction: f64,
    /// Probability that a request of an anomalous device is irregular.
    pub sr_anomaly_probability: f64,
    pub sr_intensity: f64,
    pub tr_intensity: f64,
    pub arrival_scale: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pin: Vec<DevicePin>,
}

impl Default for DevicesConfig {
    fn default() -> Self {
        Self {
            count: 20,
            ratio: vec![0.25; 4],
            apps: None,
            anomalous_fraction: 0.2,
            sr_anomaly_probability: 0.5,
            sr_intensity: 5.0,
            tr_intensity: 8.0,
            arrival_scale: 1.0,
            pin: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServersConfig {
    pub count: usize,
    /// Capacity per resource type in normalized units.
    pub capacity: f64,
    /// Processing rates are drawn uniformly from this range.
    pub rate_range: [f64; 2],
    pub cost_model: CostModel,
    pub cost_range: [f64; 2],
}

impl Default for ServersConfig {
    fn default() -> Self {
        Self { count: 5, capacity: 1.0, rate_range: [1.0, 5.0], cost_model: CostModel::PerType, cost_range: [0.5, 1.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RftaConfig {
    pub tau: Vec<f64>,
    pub units: Vec<f64>,
    pub data_size_range: [f64; 2],
    /// Grid step of the per-request oracle allocator.
    pub oracle_grid_step: f64,
}

impl Default for RftaConfig {
    fn default() -> Self {
        Self { tau: vec![1.0; 3], units: vec![1.0; 3], data_size_range: [0.5, 2.0], oracle_grid_step: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Measured epochs.
    pub epochs: usize,
    pub epoch_requests: usize,
    /// Epochs run before measurement starts.
    pub warmup_epochs: usize,
    /// Simulated clock at the first arrival, seconds after midnight.
    pub start_time_s: f64,
    /// Work per unit of demand; holding time is `service_work * x / (ER * y)`.
    pub service_work: f64,
    pub check_conservation: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { epochs: 100, epoch_requests: 50, warmup_epochs: 100, start_time_s: 32_400.0, service_work: 0.75, check_conservation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub servers: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Score every request in the simulator.
    pub sim_sr: bool,
    /// Score a synthetic day per device every `brdi.tr_period_s`.
    pub sim_tr: bool,
    /// Repetitions for the standalone detection experiment.
    pub runs: usize,
    pub sr: SrExperimentConfig,
    pub tr: TrExperimentConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { sim_sr: true, sim_tr: false, runs: 10, sr: SrExperimentConfig::default(), tr: TrExperimentConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub allocator: AllocatorKind,
    pub repeat: usize,
    pub devices: DevicesConfig,
    pub servers: ServersConfig,
    pub brdi: BrdiConfig,
    pub rfta: RftaConfig,
    pub edrl: EdrlConfig,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub detection: DetectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            allocator: AllocatorKind::default(),
            repeat: 1,
            devices: DevicesConfig::default(),
            servers: ServersConfig::default(),
            brdi: BrdiConfig::default(),
            rfta: RftaConfig::default(),
            edrl: EdrlConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

fn check_range(key: &str, r: [f64; 2], positive: bool) -> Result<(), ConfigError> {
    let ok = r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && if positive { r[0] > 0.0 } else { r[0] >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(invalid(key, format!("expected an ordered {} range, got {:?}", if positive { "positive" } else { "nonnegative" }, r)))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Number of devices after applying an explicit application list.
    pub fn device_count(&self) -> usize {
        self.devices.apps.as_ref().map_or(self.devices.count, Vec::len)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repeat == 0 {
            return Err(invalid("repeat", "must be at least 1"));
        }
        let d = &self.devices;
        if self.device_count() == 0 {
            return Err(invalid(if d.apps.is_some() { "devices.apps" } else { "devices.count" }, "need at least one device"));
        }
        if d.ratio.len() != AppKind::ALL.len() || d.ratio.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || d.ratio.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("devices.ratio", "need four nonnegative shares with a positive sum"));
        }
        if !(0.0..=1.0).contains(&d.anomalous_fraction) {
            return Err(invalid("devices.anomalous_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&d.sr_anomaly_probability) {
            return Err(invalid("devices.sr_anomaly_probability", "must lie in [0, 1]"));
        }
        if !(d.sr_intensity > 1.0 && d.sr_intensity.is_finite()) {
            return Err(invalid("devices.sr_intensity", "must exceed 1"));
        }
        if !(d.tr_intensity > 1.0 && d.tr_intensity.is_finite()) {
            return Err(invalid("devices.tr_intensity", "must exceed 1"));
        }
        if !(d.arrival_scale > 0.0 && d.arrival_scale.is_finite()) {
            return Err(invalid("devices.arrival_scale", "must be positive"));
        }
        for p in &d.pin {
            if p.device >= self.device_count() {
                return Err(invalid("devices.pin.device", format!("device {} does not exist", p.device)));
            }
            if p.brdi.is_some_and(|b| !(0.0..=1.0).contains(&b)) {
                return Err(invalid("devices.pin.brdi", "must lie in [0, 1]"));
            }
            if p.xi.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(invalid("devices.pin.xi", "must be positive"));
            }
        }
        let s = &self.servers;
        if s.count == 0 {
            return Err(invalid("servers.count", "need at least one server"));
        }
        if !(s.capacity > 0.0 && s.capacity.is_finite()) {
            return Err(invalid("servers.capacity", "must be positive"));
        }
        check_range("servers.rate_range", s.rate_range, true)?;
        check_range("servers.cost_range", s.cost_range, true)?;
        self.brdi.validate().map_err(|e| invalid("brdi", e.to_string()))?;
        if !(self.brdi.tr_period_s > 0.0) {
            return Err(invalid("brdi.tr_period_s", "must be positive"));
        }
        let r = &self.rfta;
        if r.tau.len() != 3 || r.units.len() != 3 {
            return Err(invalid("rfta.tau", "tau and units need one entry per resource type (3)"));
        }
        if r.tau.iter().chain(&r.units).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("rfta.tau", "tau and units must be positive"));
        }
        check_range("rfta.data_size_range", r.data_size_range, true)?;
        if !(r.oracle_grid_step > 0.0 && r.oracle_grid_step <= 1.0) {
            return Err(invalid("rfta.oracle_grid_step", "must lie in (0, 1]"));
        }
        self.edrl.validate().map_err(|e| invalid("edrl", e.to_string()))?;
        let m = &self.sim;
        if m.epochs == 0 {
            return Err(invalid("sim.epochs", "must be at least 1"));
        }
        if m.epoch_requests == 0 {
            return Err(invalid("sim.epoch_requests", "must be at least 1"));
        }
        if !(m.start_time_s >= 0.0 && m.start_time_s.is_finite()) {
            return Err(invalid("sim.start_time_s", "must be nonnegative"));
        }
        if !(m.service_work > 0.0 && m.service_work.is_finite()) {
            return Err(invalid("sim.service_work", "must be positive"));
        }
        if let Some(v) = &self.sweep.servers {
            if v.is_empty() || v.contains(&0) {
                return Err(invalid("sweep.servers", "must be a nonempty list of positive counts"));
            }
        }
        if let Some(v) = &self.sweep.devices {
            if v.is_empty() || v.contains(&0) {
                return Err(invalid("sweep.devices", "must be a nonempty list of positive counts"));
            }
            if self.devices.apps.is_some() {
                return Err(invalid("sweep.devices", "cannot sweep device count with an explicit devices.apps list"));
            }
        }
        if let Some(v) = &self.sweep.capacity {
            if v.is_empty() || v.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(invalid("sweep.capacity", "must be a nonempty list of positive multipliers"));
            }
        }
        if self.detection.runs == 0 {
            return Err(invalid("detection.runs", "must be at least 1"));
        }
        self.detection.sr.validate().map_err(|e| invalid("detection.sr", e.to_string()))?;
        self.detection.tr.validate().map_err(|e| invalid("detection.tr", e.to_string()))?;
        Ok(())
    }

    /// One configuration per point of the sweep grid, labeled for output
    /// directories; a single unlabeled point when no axis is set.
    pub fn sweep_points(&self) -> Vec<(String, RunConfig)> {
        let servers = self.sweep.servers.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or_else(|| vec![None]);
        let devices = self.sweep.devices.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or_else(|| vec![None]);
        let capacity = self.sweep.capacity.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or_else(|| vec![None]);
        let mut out = Vec::new();
        for s in &servers {
            for d in &devices {
                for c in &capacity {
                    let mut cfg = self.clone();
                    cfg.sweep = SweepConfig::default();
                    let mut label = Vec::new();
                    if let Some(s) = s {
                        cfg.servers.count = *s;
                        label.push(format!("servers{s}"));
                    }
                    if let Some(d) = d {
                        cfg.devices.count = *d;
                        label.push(format!("devices{d}"));
                    }
                    if let Some(c) = c {
                        cfg.servers.capacity = self.servers.capacity * c;
                        label.push(format!("capacity{c}"));
                    }
                    out.push((label.join("-"), cfg));
                }
            }
        }
        out
    }
}
