use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AppProtocol, BehaviorError, Label, SrRecord, TransportProtocol, TrPoint, TrSeries};

fn csv_err(e: impl std::fmt::Display) -> BehaviorError {
    BehaviorError::Csv(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct SrRow {
    device_id: usize,
    ts: f64,
    duration_s: f64,
    workload_mb: f64,
    cpu: f64,
    mem: f64,
    disk_io: f64,
    occupancy_s: f64,
    conn_count: u32,
    transport: TransportProtocol,
    app_proto: AppProtocol,
    label: Label,
}

#[derive(Serialize, Deserialize)]
struct TrRow {
    device_id: usize,
    day: u32,
    slot: usize,
    count: u64,
    workload_mb: f64,
    occupancy_s: f64,
    label: Label,
}

pub fn write_sr_csv<W: Write>(out: W, records: &[SrRecord]) -> Result<(), BehaviorError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in records {
        w.serialize(SrRow {
            device_id: r.device_id,
            ts: r.timestamp,
            duration_s: r.request_duration,
            workload_mb: r.workload_size,
            cpu: r.cpu_usage,
            mem: r.mem_usage,
            disk_io: r.disk_io_usage,
            occupancy_s: r.occupancy_time,
            conn_count: r.connection_count,
            transport: r.transport_protocol,
            app_proto: r.app_protocol,
            label: r.label,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_sr_csv<R: Read>(input: R) -> Result<Vec<SrRecord>, BehaviorError> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<SrRow>()
        .enumerate()
        .map(|(i, row)| {
            let r = row.map_err(|e| BehaviorError::Csv(format!("row {}: {e}", i + 1)))?;
            Ok(SrRecord {
                device_id: r.device_id,
                timestamp: r.ts,
                request_duration: r.duration_s,
                workload_size: r.workload_mb,
                cpu_usage: r.cpu,
                mem_usage: r.mem,
                disk_io_usage: r.disk_io,
                occupancy_time: r.occupancy_s,
                connection_count: r.conn_count,
                transport_protocol: r.transport,
                app_protocol: r.app_proto,
                label: r.label,
            })
        })
        .collect()
}

pub fn write_tr_csv<W: Write>(out: W, series: &[TrSeries]) -> Result<(), BehaviorError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for s in series {
        for (slot, (p, l)) in s.points.iter().zip(&s.labels).enumerate() {
            w.serialize(TrRow {
                device_id: s.device_id,
                day: s.day_index,
                slot,
                count: p.request_count,
                workload_mb: p.total_workload,
                occupancy_s: p.occupancy_time,
                label: *l,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// Reads series back; consecutive rows with the same (device, day) form one
/// series and the interval is inferred from its length.
pub fn read_tr_csv<R: Read>(input: R) -> Result<Vec<TrSeries>, BehaviorError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out: Vec<TrSeries> = Vec::new();
    for (i, row) in rd.deserialize::<TrRow>().enumerate() {
        let r = row.map_err(|e| BehaviorError::Csv(format!("row {}: {e}", i + 1)))?;
        let same = out
            .last()
            .map_or(false, |s| s.device_id == r.device_id && s.day_index == r.day);
        if !same {
            out.push(TrSeries { device_id: r.device_id, day_index: r.day, interval_minutes: 0, points: Vec::new(), labels: Vec::new() });
        }
        let s = out.last_mut().expect("series just pushed");
        if r.slot != s.points.len() {
            return Err(BehaviorError::Csv(format!("row {}: slot {} out of order", i + 1, r.slot)));
        }
        s.points.push(TrPoint { request_count: r.count, total_workload: r.workload_mb, occupancy_time: r.occupancy_s });
        s.labels.push(r.label);
    }
    for s in &mut out {
        if s.points.is_empty() || 1440 % s.points.len() != 0 {
            return Err(BehaviorError::Csv(format!("series of device {} day {} has {} slots", s.device_id, s.day_index, s.points.len())));
        }
        s.interval_minutes = (1440 / s.points.len()) as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{generate_sr_record, generate_tr_series, AppClass, AppKind, DeviceProfile};
    use crate::rng::substream;

    #[test]
    fn sr_round_trip() {
        let d = DeviceProfile::new(4, AppClass::default_for(AppKind::HomeVoiceAssistant)).unwrap();
        let mut rng = substream(1, "csv", 0);
        let recs: Vec<SrRecord> = (0..20).map(|i| generate_sr_record(&d, f64::from(i), &mut rng)).collect();
        let mut buf = Vec::new();
        write_sr_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("device_id,ts,duration_s,workload_mb,cpu,mem,disk_io,occupancy_s,conn_count,transport,app_proto,label\n"));
        assert_eq!(read_sr_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn tr_round_trip() {
        let d = DeviceProfile::new(1, AppClass::default_for(AppKind::HealthMonitoring)).unwrap();
        let series: Vec<TrSeries> = (0..2)
            .map(|day| generate_tr_series(&d, day, 30, &mut substream(2, "csv", u64::from(day))).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_tr_csv(&mut buf, &series).unwrap();
        assert_eq!(read_tr_csv(buf.as_slice()).unwrap(), series);
    }

    #[test]
    fn malformed_row_is_named() {
        let text = "device_id,day,slot,count,workload_mb,occupancy_s,label\n0,0,0,x,1.0,1.0,Normal\n";
        let err = read_tr_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }
}
