use std::path::Path;

use serde::Serialize;

use super::SimError;

/// Per-server load `mean_k assigned_k / (capacity_k * requests / servers)`:
/// the share of an even split of the window's requests that landed on each
/// server.
pub fn server_loads(assigned: &[Vec<f64>], capacities: &[Vec<f64>], requests: usize) -> Vec<f64> {
    let servers = assigned.len().max(1) as f64;
    let share = requests as f64 / servers;
    assigned
        .iter()
        .zip(capacities)
        .map(|(a, c)| {
            if share <= 0.0 || a.is_empty() {
                return 0.0;
            }
            a.iter().zip(c).map(|(a, c)| a / (c * share)).sum::<f64>() / a.len() as f64
        })
        .collect()
}

/// Mean and population variance.
pub fn server_load_stats(loads: &[f64]) -> (f64, f64) {
    if loads.is_empty() {
        return (0.0, 0.0);
    }
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / n;
    let var = loads.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub total_gain: f64,
    pub ef_index: Option<f64>,
    pub load_mean: f64,
    pub load_var: f64,
    pub detector_f1_sr: Option<f64>,
    pub detector_f1_tr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceRow {
    pub epoch: usize,
    pub device_id: usize,
    pub brdi: f64,
    /// Normalized budget `gamma * xi` at the end of the epoch.
    pub budget: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrdiRow {
    pub epoch: usize,
    pub device_id: usize,
    pub gamma_sr: f64,
    pub gamma_tr: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationRow {
    pub epoch: usize,
    pub server_id: usize,
    pub cpu: f64,
    pub mem: f64,
    pub bw: f64,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessRow {
    pub epoch: usize,
    pub ef_index: Option<f64>,
    pub budgeted_devices: usize,
    pub zero_budget_devices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRow {
    pub epoch: usize,
    pub total_gain: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub loss_mean: f64,
}

/// Writes `rows` with a header; an empty slice still gets the header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), SimError> {
    let io = |e: csv::Error| SimError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Output(format!("{}: {e}", path.display())))
}

pub const METRICS_HEADER: [&str; 7] = ["epoch", "total_gain", "ef_index", "load_mean", "load_var", "detector_f1_sr", "detector_f1_tr"];
pub const DEVICES_HEADER: [&str; 5] = ["epoch", "device_id", "brdi", "budget", "gain"];
pub const BRDI_HEADER: [&str; 5] = ["epoch", "device_id", "gamma_sr", "gamma_tr", "gamma"];
pub const ALLOCATION_HEADER: [&str; 6] = ["epoch", "server_id", "cpu", "mem", "bw", "load"];
pub const FAIRNESS_HEADER: [&str; 4] = ["epoch", "ef_index", "budgeted_devices", "zero_budget_devices"];
pub const LEARNING_HEADER: [&str; 5] = ["epoch", "total_gain", "epsilon", "theta", "loss_mean"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_stats_examples() {
        let (m, v) = server_load_stats(&[0.4, 0.4, 0.4]);
        assert!((m - 0.4).abs() < 1e-12 && v.abs() < 1e-12);
        let (m, v) = server_load_stats(&[0.2, 0.8]);
        assert!((m - 0.5).abs() < 1e-12 && (v - 0.09).abs() < 1e-12);
    }

    #[test]
    fn loads_normalize_by_even_split() {
        let loads = server_loads(&[vec![1.0, 1.0], vec![0.0, 0.0]], &[vec![1.0, 1.0], vec![1.0, 1.0]], 2);
        assert_eq!(loads, vec![1.0, 0.0]);
        assert_eq!(server_loads(&[vec![0.0]], &[vec![1.0]], 0), vec![0.0]);
    }

    #[test]
    fn csv_writes_blank_for_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![MetricsRow {
            epoch: 0,
            total_gain: 1.5,
            ef_index: None,
            load_mean: 0.25,
            load_var: 0.0,
            detector_f1_sr: Some(1.0),
            detector_f1_tr: None,
        }];
        write_csv(&p, &rows, &METRICS_HEADER).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "epoch,total_gain,ef_index,load_mean,load_var,detector_f1_sr,detector_f1_tr\n0,1.5,,0.25,0.0,1.0,\n");
    }
}
