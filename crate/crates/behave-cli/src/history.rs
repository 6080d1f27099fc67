use std::collections::BTreeMap;
use std::path::Path;

use behave::brdi::{BrdHistory, BrdiConfig, BrdiState};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Level {
    Sr,
    Tr,
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    device: usize,
    level: Level,
    time: f64,
    score: f64,
}

fn parse_row(line: u64, row: &csv::StringRecord) -> Result<Record, CliError> {
    let bad = |msg: String| CliError::Run(format!("history line {line}: {msg}"));
    if row.len() != 4 {
        return Err(bad(format!("expected 4 fields (device_id, granularity, time, score), got {}", row.len())));
    }
    let device = row[0].trim().parse().map_err(|_| bad(format!("device_id `{}` is not a nonnegative integer", &row[0])))?;
    let level = match row[1].trim() {
        "sr" => Level::Sr,
        "tr" => Level::Tr,
        other => return Err(bad(format!("granularity `{other}` is neither `sr` nor `tr`"))),
    };
    let time: f64 = row[2].trim().parse().map_err(|_| bad(format!("time `{}` is not a number", &row[2])))?;
    if !time.is_finite() || time < 0.0 || (level == Level::Tr && time.fract() != 0.0) {
        return Err(bad(format!("time `{}` must be a nonnegative {}", &row[2], if level == Level::Tr { "day index" } else { "number" })));
    }
    let score: f64 = row[3].trim().parse().map_err(|_| bad(format!("score `{}` is not a number", &row[3])))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(bad(format!("score {score} lies outside [0, 1]")));
    }
    Ok(Record { device, level, time, score })
}

/// Reads `device_id,granularity,time,score` rows and folds them, in time
/// order, into one history per device. `devices` widens the reported range
/// to `0..devices`.
pub fn load(path: &Path, cfg: &BrdiConfig, devices: Option<usize>) -> Result<Vec<BrdiState>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        let line = row.position().map_or(0, |p| p.line());
        records.push(parse_row(line, &row)?);
    }
    records.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut by_device: BTreeMap<usize, BrdHistory> = BTreeMap::new();
    for r in &records {
        let h = match by_device.entry(r.device) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(BrdHistory::new(cfg.capacity).map_err(|e| CliError::Config(e.to_string()))?),
        };
        let pushed = match r.level {
            Level::Sr => h.push_sr(r.time, r.score),
            Level::Tr => h.push_tr(r.time as u32, r.score),
        };
        pushed.map_err(|e| CliError::Run(format!("device {}: {e}", r.device)))?;
    }
    let count = by_device.keys().next_back().map_or(0, |m| m + 1).max(devices.unwrap_or(0)).max(1);
    let empty = BrdHistory::new(cfg.capacity).map_err(|e| CliError::Config(e.to_string()))?;
    (0..count)
        .map(|i| {
            let h = by_device.get(&i).unwrap_or(&empty);
            if h.sr_len() == 0 && h.tr_len() == 0 {
                eprintln!("warning: device {i} has no history; reporting the prior {}", cfg.prior);
            }
            h.state(cfg).map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn worked_history() {
        let cfg = BrdiConfig { alpha: std::f64::consts::LN_2, ..BrdiConfig::default() };
        let (_d, p) = write("device_id,granularity,time,score\n0,sr,2,1\n0,sr,1,0\n");
        let s = load(&p, &cfg, None).unwrap();
        assert!((s[0].gamma_sr - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[0].gamma_tr, 1.0);
    }

    #[test]
    fn empty_history_reports_prior() {
        let (_d, p) = write("device_id,granularity,time,score\n");
        let s = load(&p, &BrdiConfig::default(), Some(3)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|s| s.gamma_total == 1.0));
    }

    #[test]
    fn malformed_rows_are_named() {
        for (text, needle) in [
            ("device_id,granularity,time,score\n0,sr,1,1\n0,xx,2,1\n", "line 3"),
            ("device_id,granularity,time,score\n0,sr,1,1.5\n", "outside"),
            ("device_id,granularity,time,score\n0,tr,1.5,1\n", "day index"),
            ("device_id,granularity,time,score\n0,sr,1\n", "expected 4 fields"),
        ] {
            let (_d, p) = write(text);
            let err = load(&p, &BrdiConfig::default(), None).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        }
    }
}
