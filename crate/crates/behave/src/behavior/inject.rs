use serde::{Deserialize, Serialize};

use super::{BehaviorError, Label, SrRecord, TrSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrAnomalyMode {
    /// Oversized task.
    Workload,
    /// Connection held for longer.
    Occupancy,
    Both,
}

pub fn inject_sr_anomaly(record: &SrRecord, intensity: f64, mode: SrAnomalyMode) -> Result<SrRecord, BehaviorError> {
    if !(intensity > 1.0 && intensity.is_finite()) {
        return Err(BehaviorError::InvalidIntensity(intensity));
    }
    let mut out = record.clone();
    if matches!(mode, SrAnomalyMode::Workload | SrAnomalyMode::Both) {
        out.workload_size *= intensity;
    }
    if matches!(mode, SrAnomalyMode::Occupancy | SrAnomalyMode::Both) {
        out.occupancy_time *= intensity;
    }
    out.label = Label::Anomalous;
    Ok(out)
}

/// Multiplies the slots `start..end` by `intensity`. A slot is relabeled
/// anomalous only when its values actually changed.
pub fn inject_tr_anomaly(series: &TrSeries, start: usize, end: usize, intensity: f64) -> Result<TrSeries, BehaviorError> {
    if !(intensity > 1.0 && intensity.is_finite()) {
        return Err(BehaviorError::InvalidIntensity(intensity));
    }
    if start >= end || end > series.len() {
        return Err(BehaviorError::SlotOutOfRange { start, end, len: series.len() });
    }
    let mut out = series.clone();
    for s in start..end {
        let p = &mut out.points[s];
        let before = *p;
        p.request_count = (p.request_count as f64 * intensity).round() as u64;
        p.total_workload *= intensity;
        p.occupancy_time *= intensity;
        if *p != before {
            out.labels[s] = Label::Anomalous;
        }
    }
    Ok(out)
}
