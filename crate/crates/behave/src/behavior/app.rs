use serde::{Deserialize, Serialize};

use super::BehaviorError;

/// Resource types in demand vectors: vCPU, memory (GB), bandwidth (Mbps).
pub const RESOURCE_TYPES: [&str; 3] = ["cpu", "mem", "bw"];

/// Raw amounts (vCPU, GB, Mbps) that make up one normalized unit per type.
pub const DEMAND_UNIT_SCALE: [f64; 3] = [1.0, 5.0, 75.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.lo <= self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppKind {
    EmergencyResponse,
    HomeVoiceAssistant,
    BuildingAccessFaceDetection,
    HealthMonitoring,
}

impl AppKind {
    pub const ALL: [AppKind; 4] = [
        AppKind::EmergencyResponse,
        AppKind::HomeVoiceAssistant,
        AppKind::BuildingAccessFaceDetection,
        AppKind::HealthMonitoring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AppKind::EmergencyResponse => "emergency_response",
            AppKind::HomeVoiceAssistant => "home_voice_assistant",
            AppKind::BuildingAccessFaceDetection => "building_access_face_detection",
            AppKind::HealthMonitoring => "health_monitoring",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransportProtocol {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AppProtocol {
    Https,
    Http,
    Mqtt,
    Coap,
}

/// Ranges of the per-request attributes; values are drawn from truncated
/// Gaussians centered in each range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrProfile {
    pub duration_s: Interval,
    pub workload_mb: Interval,
    pub cpu: Interval,
    pub mem: Interval,
    pub disk_io: Interval,
    pub occupancy_s: Interval,
    pub connections: Interval,
    pub transport: TransportProtocol,
    pub app_protocol: AppProtocol,
}

impl SrProfile {
    fn intervals(&self) -> [(&'static str, Interval); 7] {
        [
            ("duration_s", self.duration_s),
            ("workload_mb", self.workload_mb),
            ("cpu", self.cpu),
            ("mem", self.mem),
            ("disk_io", self.disk_io),
            ("occupancy_s", self.occupancy_s),
            ("connections", self.connections),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppClass {
    pub kind: AppKind,
    pub priority: f64,
    /// Per-type demand ranges in raw units (vCPU, GB, Mbps).
    pub demand_ranges: [Interval; 3],
    /// Mean requests per second before the diurnal multiplier.
    pub arrival_rate: f64,
    /// Per-hour rate multipliers, hour 0 = midnight.
    pub diurnal: [f64; 24],
    pub sr: SrProfile,
}

fn normalized(raw: [f64; 24]) -> [f64; 24] {
    let mean = raw.iter().sum::<f64>() / 24.0;
    raw.map(|v| v / mean)
}

fn day_peaked() -> [f64; 24] {
    let mut p = [0.0; 24];
    for (h, v) in p.iter_mut().enumerate() {
        *v = match h {
            0..=5 => 0.15,
            6 | 20 => 0.8,
            7..=19 => 1.8,
            _ => 0.4,
        };
    }
    normalized(p)
}

fn evening_peaked() -> [f64; 24] {
    let mut p = [0.0; 24];
    for (h, v) in p.iter_mut().enumerate() {
        *v = match h {
            0..=6 => 0.2,
            7..=16 => 0.7,
            17..=22 => 2.0,
            _ => 0.8,
        };
    }
    normalized(p)
}

impl AppClass {
    pub fn default_for(kind: AppKind) -> Self {
        let iv = Interval::new;
        match kind {
            AppKind::EmergencyResponse => AppClass {
                kind,
                priority: 1.0,
                demand_ranges: [iv(0.3, 0.8), iv(1.5, 4.0), iv(20.0, 60.0)],
                arrival_rate: 0.5,
                diurnal: [1.0; 24],
                sr: SrProfile {
                    duration_s: iv(0.1, 0.5),
                    workload_mb: iv(1.0, 4.0),
                    cpu: iv(0.2, 0.6),
                    mem: iv(0.2, 0.5),
                    disk_io: iv(0.05, 0.25),
                    occupancy_s: iv(0.6, 3.0),
                    connections: iv(1.0, 6.0),
                    transport: TransportProtocol::Tcp,
                    app_protocol: AppProtocol::Https,
                },
            },
            AppKind::HomeVoiceAssistant => AppClass {
                kind,
                priority: 0.4,
                demand_ranges: [iv(0.2, 0.5), iv(0.8, 2.5), iv(10.0, 30.0)],
                arrival_rate: 0.5,
                diurnal: evening_peaked(),
                sr: SrProfile {
                    duration_s: iv(0.3, 1.5),
                    workload_mb: iv(0.1, 0.4),
                    cpu: iv(0.1, 0.4),
                    mem: iv(0.1, 0.3),
                    disk_io: iv(0.02, 0.1),
                    occupancy_s: iv(1.0, 5.0),
                    connections: iv(1.0, 3.0),
                    transport: TransportProtocol::Tcp,
                    app_protocol: AppProtocol::Https,
                },
            },
            AppKind::BuildingAccessFaceDetection => AppClass {
                kind,
                priority: 0.6,
                demand_ranges: [iv(0.4, 0.8), iv(2.0, 4.0), iv(30.0, 60.0)],
                arrival_rate: 0.5,
                diurnal: day_peaked(),
                sr: SrProfile {
                    duration_s: iv(0.2, 0.8),
                    workload_mb: iv(1.5, 6.0),
                    cpu: iv(0.3, 0.8),
                    mem: iv(0.2, 0.6),
                    disk_io: iv(0.1, 0.4),
                    occupancy_s: iv(0.5, 2.5),
                    connections: iv(1.0, 4.0),
                    transport: TransportProtocol::Tcp,
                    app_protocol: AppProtocol::Http,
                },
            },
            AppKind::HealthMonitoring => AppClass {
                kind,
                priority: 0.8,
                demand_ranges: [iv(0.1, 0.3), iv(0.8, 1.5), iv(10.0, 20.0)],
                arrival_rate: 0.5,
                diurnal: [1.0; 24],
                sr: SrProfile {
                    duration_s: iv(0.02, 0.1),
                    workload_mb: iv(0.02, 0.08),
                    cpu: iv(0.02, 0.1),
                    mem: iv(0.02, 0.08),
                    disk_io: iv(0.01, 0.05),
                    occupancy_s: iv(0.2, 1.0),
                    connections: iv(1.0, 2.0),
                    transport: TransportProtocol::Udp,
                    app_protocol: AppProtocol::Coap,
                },
            },
        }
    }

    pub fn validate(&self) -> Result<(), BehaviorError> {
        let bad = |m: String| Err(BehaviorError::InvalidAppClass(format!("{}: {m}", self.kind.name())));
        if !(self.priority > 0.0 && self.priority <= 1.0) {
            return bad(format!("priority must be in (0,1], got {}", self.priority));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival rate must be >= 0, got {}", self.arrival_rate));
        }
        for (k, iv) in self.demand_ranges.iter().enumerate() {
            if !iv.is_valid() {
                return bad(format!("demand range for {} is invalid", RESOURCE_TYPES[k]));
            }
        }
        for (name, iv) in self.sr.intervals() {
            if !iv.is_valid() {
                return bad(format!("SR range {name} is invalid"));
            }
        }
        for name in ["cpu", "mem", "disk_io"] {
            let iv = match name {
                "cpu" => self.sr.cpu,
                "mem" => self.sr.mem,
                _ => self.sr.disk_io,
            };
            if iv.hi > 1.0 {
                return bad(format!("usage fraction {name} must stay within [0,1]"));
            }
        }
        if self.diurnal.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("diurnal multipliers must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn rate_at(&self, t_seconds: f64) -> f64 {
        let hour = ((t_seconds / 3600.0).floor() as i64).rem_euclid(24) as usize;
        self.arrival_rate * self.diurnal[hour]
    }

    pub fn max_rate(&self) -> f64 {
        self.arrival_rate * self.diurnal.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_profiles_average_one() {
        for k in AppKind::ALL {
            let a = AppClass::default_for(k);
            a.validate().unwrap();
            let mean: f64 = a.diurnal.iter().sum::<f64>() / 24.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_priorities() {
        let p = |k| AppClass::default_for(k).priority;
        assert_eq!(p(AppKind::EmergencyResponse), 1.0);
        assert_eq!(p(AppKind::HealthMonitoring), 0.8);
        assert_eq!(p(AppKind::BuildingAccessFaceDetection), 0.6);
        assert_eq!(p(AppKind::HomeVoiceAssistant), 0.4);
    }

    #[test]
    fn invalid_classes_rejected() {
        let mut a = AppClass::default_for(AppKind::HealthMonitoring);
        a.priority = 0.0;
        assert!(a.validate().is_err());
        let mut b = AppClass::default_for(AppKind::HealthMonitoring);
        b.demand_ranges[1] = Interval::new(2.0, 1.0);
        assert!(b.validate().is_err());
    }

    #[test]
    fn night_is_quiet_for_face_detection() {
        let a = AppClass::default_for(AppKind::BuildingAccessFaceDetection);
        assert!(a.rate_at(2.0 * 3600.0) < 0.2 * a.rate_at(12.0 * 3600.0));
    }
}
