use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{BehaviorError, DeviceProfile, Interval, Label, SrRecord, TrPoint, TrSeries};

/// Gaussian centered in `iv` with standard deviation `width / 6`, truncated
/// to the interval by rejection. A point interval returns its endpoint.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, iv: Interval) -> f64 {
    let w = iv.width();
    if w <= 0.0 {
        return iv.lo;
    }
    let (mu, sd) = (iv.mid(), w / 6.0);
    for _ in 0..64 {
        let z: f64 = rng.sample(StandardNormal);
        let v = mu + sd * z;
        if iv.contains(v) {
            return v;
        }
    }
    mu
}

pub fn generate_sr_record<R: Rng + ?Sized>(device: &DeviceProfile, timestamp: f64, rng: &mut R) -> SrRecord {
    let p = &device.app.sr;
    SrRecord {
        device_id: device.device_id,
        timestamp,
        request_duration: truncated_normal(rng, p.duration_s),
        workload_size: truncated_normal(rng, p.workload_mb),
        cpu_usage: truncated_normal(rng, p.cpu),
        mem_usage: truncated_normal(rng, p.mem),
        disk_io_usage: truncated_normal(rng, p.disk_io),
        occupancy_time: truncated_normal(rng, p.occupancy_s),
        connection_count: truncated_normal(rng, p.connections).round() as u32,
        transport_protocol: p.transport,
        app_protocol: p.app_protocol,
        label: Label::Normal,
    }
}

/// Expected request count over `[t0, t1)` seconds of a day.
fn expected_count(device: &DeviceProfile, t0: f64, t1: f64) -> f64 {
    let mut total = 0.0;
    let mut t = t0;
    while t < t1 {
        let hour_end = ((t / 3600.0).floor() + 1.0) * 3600.0;
        let end = hour_end.min(t1);
        total += device.app.rate_at(t) * (end - t);
        t = end;
    }
    total
}

pub fn generate_tr_series<R: Rng + ?Sized>(
    device: &DeviceProfile,
    day_index: u32,
    interval_minutes: u32,
    rng: &mut R,
) -> Result<TrSeries, BehaviorError> {
    generate_tr_series_logged(device, day_index, interval_minutes, rng, |_| {})
}

/// Like [`generate_tr_series`] but hands every simulated SR record to `log`.
pub fn generate_tr_series_logged<R, F>(
    device: &DeviceProfile,
    day_index: u32,
    interval_minutes: u32,
    rng: &mut R,
    mut log: F,
) -> Result<TrSeries, BehaviorError>
where
    R: Rng + ?Sized,
    F: FnMut(&SrRecord),
{
    let n = TrSeries::slots_per_day(interval_minutes)?;
    let slot_s = f64::from(interval_minutes) * 60.0;
    let day_start = f64::from(day_index) * 86_400.0;
    let mut points = Vec::with_capacity(n);
    for slot in 0..n {
        let t0 = slot as f64 * slot_s;
        let mean = expected_count(device, t0, t0 + slot_s);
        let count = if mean > 0.0 {
            Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        };
        let mut times: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..slot_s)).collect();
        times.sort_by(f64::total_cmp);
        let mut pt = TrPoint { request_count: count, total_workload: 0.0, occupancy_time: 0.0 };
        for t in times {
            let rec = generate_sr_record(device, day_start + t0 + t, rng);
            pt.total_workload += rec.workload_size;
            pt.occupancy_time += rec.occupancy_time;
            log(&rec);
        }
        points.push(pt);
    }
    Ok(TrSeries {
        device_id: device.device_id,
        day_index,
        interval_minutes,
        labels: vec![Label::Normal; n],
        points,
    })
}
