use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::DeviceProfile;

/// Poisson arrivals with the device's diurnal rate, generated by thinning a
/// homogeneous process at the peak rate.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    peak: f64,
    now: f64,
}

impl ArrivalProcess {
    pub fn new(device: &DeviceProfile, start: f64) -> Self {
        Self { peak: device.app.max_rate(), now: start }
    }

    /// Next arrival strictly after the current time, or `None` for a silent device.
    pub fn next<R: Rng + ?Sized>(&mut self, device: &DeviceProfile, rng: &mut R) -> Option<f64> {
        if self.peak <= 0.0 {
            return None;
        }
        let exp = Exp::new(self.peak).ok()?;
        loop {
            self.now += exp.sample(rng);
            let accept: f64 = rng.gen();
            if accept * self.peak < device.app.rate_at(self.now) {
                return Some(self.now);
            }
        }
    }
}

/// Arrival timestamps in `[0, horizon)` seconds, sorted.
pub fn request_arrivals<R: Rng + ?Sized>(device: &DeviceProfile, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut proc = ArrivalProcess::new(device, 0.0);
    let mut out = Vec::new();
    while let Some(t) = proc.next(device, rng) {
        if t >= horizon {
            break;
        }
        out.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{AppClass, AppKind};
    use crate::rng::substream;

    fn flat(rate: f64, id: usize) -> DeviceProfile {
        let mut app = AppClass::default_for(AppKind::EmergencyResponse);
        app.arrival_rate = rate;
        DeviceProfile::new(id, app).unwrap()
    }

    #[test]
    fn silent_device_has_no_arrivals() {
        assert!(request_arrivals(&flat(0.0, 0), 1e6, &mut substream(1, "a", 0)).is_empty());
    }

    #[test]
    fn empirical_rate_within_three_sigma() {
        let d = flat(2.0, 0);
        let horizon = 20_000.0;
        let ts = request_arrivals(&d, horizon, &mut substream(2, "a", 0));
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        let expected = 2.0 * horizon;
        assert!((ts.len() as f64 - expected).abs() < 3.0 * expected.sqrt());
    }

    #[test]
    fn diurnal_profile_shapes_counts() {
        let d = DeviceProfile::new(0, AppClass::default_for(AppKind::BuildingAccessFaceDetection)).unwrap();
        let ts = request_arrivals(&d, 86_400.0, &mut substream(3, "a", 0));
        let night = ts.iter().filter(|t| **t < 5.0 * 3600.0).count();
        let noon = ts.iter().filter(|t| **t >= 10.0 * 3600.0 && **t < 15.0 * 3600.0).count();
        assert!(night * 5 < noon);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        // Per-second counts of two independent Poisson streams: the sample
        // correlation of 4000 pairs has sd about 1/sqrt(4000).
        let d = flat(3.0, 0);
        let horizon = 4000.0;
        let bin = |ts: &[f64]| {
            let mut c = vec![0.0; horizon as usize];
            for t in ts {
                c[*t as usize] += 1.0;
            }
            c
        };
        let a = bin(&request_arrivals(&d, horizon, &mut substream(4, "device", 0)));
        let b = bin(&request_arrivals(&d, horizon, &mut substream(4, "device", 1)));
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 4.0 / n.sqrt(), "{corr}");
    }
}
