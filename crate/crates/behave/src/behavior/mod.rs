//! Devices, application classes and synthetic behavior-of-resource-demand
//! data in the single-request (SR) and temporal-requests (TR) granularities.

mod app;
mod arrivals;
mod csvio;
mod generate;
mod inject;

pub use app::{AppClass, AppKind, Interval, SrProfile, TransportProtocol, AppProtocol, RESOURCE_TYPES, DEMAND_UNIT_SCALE};
pub use arrivals::{request_arrivals, ArrivalProcess};
pub use csvio::{read_sr_csv, read_tr_csv, write_sr_csv, write_tr_csv};
pub use generate::{generate_sr_record, generate_tr_series, generate_tr_series_logged, truncated_normal};
pub use inject::{inject_sr_anomaly, inject_tr_anomaly, SrAnomalyMode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("invalid app class: {0}")]
    InvalidAppClass(String),
    #[error("anomaly intensity must exceed 1, got {0}")]
    InvalidIntensity(f64),
    #[error("interval of {0} minutes does not divide a day")]
    InvalidInterval(u32),
    #[error("slot range {start}..{end} outside series of length {len}")]
    SlotOutOfRange { start: usize, end: usize, len: usize },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// One request's attribute vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrRecord {
    pub device_id: usize,
    pub timestamp: f64,
    pub request_duration: f64,
    pub workload_size: f64,
    pub cpu_usage: f64,
    pub mem_usage: f64,
    pub disk_io_usage: f64,
    pub occupancy_time: f64,
    pub connection_count: u32,
    pub transport_protocol: TransportProtocol,
    pub app_protocol: AppProtocol,
    pub label: Label,
}

/// Number of numeric SR features seen by detectors.
pub const SR_FEATURES: usize = 7;

impl SrRecord {
    /// Numeric feature vector in the order duration, workload, cpu, mem,
    /// disk, occupancy, connections. Labels never leave the record this way.
    pub fn features(&self) -> [f64; SR_FEATURES] {
        [
            self.request_duration,
            self.workload_size,
            self.cpu_usage,
            self.mem_usage,
            self.disk_io_usage,
            self.occupancy_time,
            f64::from(self.connection_count),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrPoint {
    pub request_count: u64,
    pub total_workload: f64,
    pub occupancy_time: f64,
}

impl TrPoint {
    pub const ZERO: TrPoint = TrPoint { request_count: 0, total_workload: 0.0, occupancy_time: 0.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.request_count as f64, self.total_workload, self.occupancy_time]
    }
}

/// A day of fixed-interval aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrSeries {
    pub device_id: usize,
    pub day_index: u32,
    pub interval_minutes: u32,
    pub points: Vec<TrPoint>,
    pub labels: Vec<Label>,
}

impl TrSeries {
    pub fn slots_per_day(interval_minutes: u32) -> Result<usize, BehaviorError> {
        if interval_minutes == 0 || 1440 % interval_minutes != 0 {
            return Err(BehaviorError::InvalidInterval(interval_minutes));
        }
        Ok((1440 / interval_minutes) as usize)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_anomalous(&self) -> bool {
        self.labels.iter().any(|l| l.is_anomalous())
    }

    /// Per-slot attribute rows, without labels.
    pub fn matrix(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(TrPoint::as_array).collect()
    }
}

/// Which requests an SR anomaly applies to: indices in `[from, to)` hit with
/// probability `probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrSelector {
    pub from: u64,
    pub to: Option<u64>,
    pub probability: f64,
}

impl SrSelector {
    pub fn covers(&self, request_index: u64) -> bool {
        request_index >= self.from && self.to.map_or(true, |t| request_index < t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnomalySpec {
    Sr { selector: SrSelector, mode: SrAnomalyMode, intensity: f64 },
    Tr { first_day: u32, last_day: u32, slot_start: usize, slot_end: usize, intensity: f64 },
}

impl AnomalySpec {
    pub fn intensity(&self) -> f64 {
        match self {
            AnomalySpec::Sr { intensity, .. } | AnomalySpec::Tr { intensity, .. } => *intensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub device_id: usize,
    pub app: AppClass,
    pub xi_override: Option<f64>,
    pub anomaly_schedule: Vec<AnomalySpec>,
    pub rng_stream_id: u64,
}

impl DeviceProfile {
    pub fn new(device_id: usize, app: AppClass) -> Result<Self, BehaviorError> {
        app.validate()?;
        Ok(Self {
            device_id,
            app,
            xi_override: None,
            anomaly_schedule: Vec::new(),
            rng_stream_id: device_id as u64,
        })
    }

    pub fn with_anomaly(mut self, spec: AnomalySpec) -> Result<Self, BehaviorError> {
        if !(spec.intensity() > 1.0) {
            return Err(BehaviorError::InvalidIntensity(spec.intensity()));
        }
        self.anomaly_schedule.push(spec);
        Ok(self)
    }

    pub fn priority(&self) -> f64 {
        self.xi_override.unwrap_or(self.app.priority)
    }

    /// SR anomalies active for the given request index.
    pub fn sr_anomalies(&self, request_index: u64) -> impl Iterator<Item = (&SrSelector, SrAnomalyMode, f64)> {
        self.anomaly_schedule.iter().filter_map(move |a| match a {
            AnomalySpec::Sr { selector, mode, intensity } if selector.covers(request_index) => {
                Some((selector, *mode, *intensity))
            }
            _ => None,
        })
    }

    /// TR slot ranges and intensities scheduled for `day`.
    pub fn tr_anomalies(&self, day: u32) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.anomaly_schedule.iter().filter_map(move |a| match a {
            AnomalySpec::Tr { first_day, last_day, slot_start, slot_end, intensity }
                if day >= *first_day && day <= *last_day =>
            {
                Some((*slot_start, *slot_end, *intensity))
            }
            _ => None,
        })
    }
}
