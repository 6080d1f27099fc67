//! Synthetic labeled corpora and the train/score/F1 loop for both detectors.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ocnn_score, train_gan_ed, train_ocnn, train_tr_detector, Confusion, DetectionError, GanEdConfig, OcnnConfig, OcnnModel,
    Orientation, TrDetector, UnlabeledFeatures, UnlabeledSeries,
};
use crate::behavior::{
    generate_sr_record, generate_tr_series, inject_sr_anomaly, inject_tr_anomaly, AppClass, AppKind, DeviceProfile, SrAnomalyMode,
    SrRecord, TrSeries,
};
use crate::neural::ParamFile;
use crate::par::{map_slice, ExecMode};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrExperimentConfig {
    pub train_records: usize,
    pub test_records: usize,
    pub contamination: f64,
    pub intensity: f64,
    pub ocnn_hidden: usize,
    pub ocnn_epochs: usize,
    pub ocnn_lr: f64,
    pub nu: f64,
    pub headroom: f64,
}

impl Default for SrExperimentConfig {
    fn default() -> Self {
        let p = OcnnConfig::sr_preset();
        Self {
            train_records: 2000,
            test_records: 1000,
            contamination: 0.04,
            intensity: 5.0,
            ocnn_hidden: p.hidden,
            ocnn_epochs: p.epochs,
            ocnn_lr: p.lr,
            nu: p.nu,
            headroom: 3.0,
        }
    }
}

impl SrExperimentConfig {
    pub fn ocnn(&self, seed: u64) -> OcnnConfig {
        OcnnConfig {
            nu: self.nu,
            hidden: self.ocnn_hidden,
            epochs: self.ocnn_epochs,
            lr: self.ocnn_lr,
            orientation: Orientation::Headroom { offset: self.headroom },
            seed,
            ..OcnnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::InvalidConfig(m.to_string()));
        if self.train_records == 0 || self.test_records == 0 {
            return bad("detection.sr record counts must be positive");
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return bad("detection.sr.contamination must lie in [0, 1)");
        }
        if !(self.intensity > 1.0) {
            return bad("detection.sr.intensity must exceed 1");
        }
        self.ocnn(0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrExperimentConfig {
    pub app: AppKind,
    pub interval_minutes: u32,
    pub train_days: u32,
    pub test_days: u32,
    pub contamination: f64,
    pub intensity: f64,
    /// Anomalous window length in slots.
    pub window_slots: usize,
    /// Windows start on an hour boundary in `0..night_hours`.
    pub night_hours: usize,
    pub n_o: usize,
    pub lstm_hidden: usize,
    pub disc_hidden: usize,
    pub gan_epochs: usize,
    pub gan_lr: f64,
    pub ocnn_hidden: usize,
    pub ocnn_lr: f64,
    pub nu: f64,
    pub magnitude: f64,
}

impl Default for TrExperimentConfig {
    fn default() -> Self {
        let g = GanEdConfig::default();
        let p = OcnnConfig::tr_preset();
        Self {
            app: AppKind::BuildingAccessFaceDetection,
            interval_minutes: 10,
            train_days: 200,
            test_days: 500,
            contamination: 0.04,
            intensity: 8.0,
            window_slots: 6,
            night_hours: 5,
            n_o: g.n_o,
            lstm_hidden: 16,
            disc_hidden: g.disc_hidden,
            gan_epochs: g.epochs,
            gan_lr: g.lr,
            ocnn_hidden: p.hidden,
            ocnn_lr: p.lr,
            nu: p.nu,
            magnitude: 3.0,
        }
    }
}

impl TrExperimentConfig {
    pub fn gan(&self, seed: u64) -> GanEdConfig {
        GanEdConfig {
            n_o: self.n_o,
            lstm_hidden: self.lstm_hidden,
            disc_hidden: self.disc_hidden,
            epochs: self.gan_epochs,
            lr: self.gan_lr,
            seed,
            ..GanEdConfig::default()
        }
    }

    pub fn ocnn(&self, seed: u64) -> OcnnConfig {
        OcnnConfig {
            nu: self.nu,
            hidden: self.ocnn_hidden,
            lr: self.ocnn_lr,
            orientation: Orientation::Magnitude { offset: self.magnitude },
            seed,
            ..OcnnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::InvalidConfig(m.to_string()));
        let slots = TrSeries::slots_per_day(self.interval_minutes).map_err(|e| DetectionError::InvalidConfig(e.to_string()))?;
        let per_hour = 60 / self.interval_minutes.max(1) as usize;
        if self.train_days == 0 || self.test_days == 0 {
            return bad("detection.tr day counts must be positive");
        }
        if (self.train_days as usize) < GanEdConfig::default().batch {
            return bad("detection.tr.train_days must cover at least one mini-batch");
        }
        if !(0.0..1.0).contains(&self.contamination) || !(self.intensity > 1.0) {
            return bad("detection.tr contamination must lie in [0, 1) and intensity exceed 1");
        }
        if self.window_slots == 0 || self.night_hours == 0 || (self.night_hours - 1) * per_hour + self.window_slots > slots {
            return bad("detection.tr anomaly window does not fit in a day");
        }
        if self.lstm_hidden == 0 || self.n_o == 0 || self.disc_hidden == 0 || self.gan_epochs == 0 {
            return bad("detection.tr network sizes and epochs must be positive");
        }
        self.ocnn(0).validate()
    }
}

/// `n` records from one device. The first `contamination * n` records each
/// carry a workload or occupancy anomaly, chosen at random.
pub fn sr_corpus(kind: AppKind, n: usize, contamination: f64, intensity: f64, seed: u64, tag: &str) -> Result<Vec<SrRecord>, DetectionError> {
    let d = DeviceProfile::new(0, AppClass::default_for(kind)).map_err(|e| DetectionError::InvalidInput(e.to_string()))?;
    let mut rng = substream(seed, tag, kind.index() as u64);
    let n_anom = (contamination * n as f64).round() as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = generate_sr_record(&d, i as f64, &mut rng);
        if i < n_anom {
            let mode = if rng.gen_bool(0.5) { SrAnomalyMode::Workload } else { SrAnomalyMode::Occupancy };
            out.push(inject_sr_anomaly(&r, intensity, mode).map_err(|e| DetectionError::InvalidInput(e.to_string()))?);
        } else {
            out.push(r);
        }
    }
    Ok(out)
}

/// Clean days followed by test days, where each test day carries one night
/// burst with probability `contamination`.
pub fn tr_corpus(cfg: &TrExperimentConfig, seed: u64) -> Result<(Vec<TrSeries>, Vec<TrSeries>), DetectionError> {
    let to_err = |e: crate::behavior::BehaviorError| DetectionError::InvalidInput(e.to_string());
    let d = DeviceProfile::new(0, AppClass::default_for(cfg.app)).map_err(to_err)?;
    let per_hour = 60 / cfg.interval_minutes as usize;
    let mut rng = substream(seed, "tr-train", 0);
    let train = (0..cfg.train_days)
        .map(|day| generate_tr_series(&d, day, cfg.interval_minutes, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_err)?;
    let mut rng = substream(seed, "tr-test", 0);
    let mut test = Vec::with_capacity(cfg.test_days as usize);
    for day in 0..cfg.test_days {
        let s = generate_tr_series(&d, cfg.train_days + day, cfg.interval_minutes, &mut rng).map_err(to_err)?;
        if rng.gen_bool(cfg.contamination) {
            let start = rng.gen_range(0..cfg.night_hours) * per_hour;
            test.push(inject_tr_anomaly(&s, start, start + cfg.window_slots, cfg.intensity).map_err(to_err)?);
        } else {
            test.push(s);
        }
    }
    Ok((train, test))
}

/// Outcome of one detector evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub confusion: Confusion,
    pub train_time: Duration,
    pub score_time: Duration,
    pub scored: usize,
    /// Trained parameters, labeled by model.
    pub models: Vec<(String, ParamFile)>,
}

impl DetectionOutcome {
    pub fn f1(&self) -> f64 {
        self.confusion.f1().f1
    }
}

/// Trains one SR detector on clean records of `kind`.
pub fn train_sr_detector(kind: AppKind, cfg: &SrExperimentConfig, seed: u64) -> Result<OcnnModel, DetectionError> {
    let train = sr_corpus(kind, cfg.train_records, 0.0, cfg.intensity, seed, "sr-train")?;
    Ok(train_ocnn(&UnlabeledFeatures::from_records(&train)?, &cfg.ocnn(seed))?.0)
}

/// One detector per application class, pooled confusion over all classes.
pub fn run_sr_experiment(cfg: &SrExperimentConfig, seed: u64) -> Result<DetectionOutcome, DetectionError> {
    cfg.validate()?;
    let mut out = DetectionOutcome {
        confusion: Confusion::default(),
        train_time: Duration::ZERO,
        score_time: Duration::ZERO,
        scored: 0,
        models: Vec::new(),
    };
    for kind in AppKind::ALL {
        let t = Instant::now();
        let model = train_sr_detector(kind, cfg, seed)?;
        out.train_time += t.elapsed();
        let test = sr_corpus(kind, cfg.test_records, cfg.contamination, cfg.intensity, seed, "sr-test")?;
        let t = Instant::now();
        let decisions = test
            .iter()
            .map(|r| Ok(ocnn_score(&model, &r.features(), r.timestamp)?.is_anomalous()))
            .collect::<Result<Vec<bool>, DetectionError>>()?;
        out.score_time += t.elapsed();
        let labels: Vec<bool> = test.iter().map(|r| r.label.is_anomalous()).collect();
        out.confusion.merge(Confusion::tally(&decisions, &labels));
        out.scored += test.len();
        out.models.push((format!("ocnn-sr-{}", kind.name()), model.to_param_file()));
    }
    Ok(out)
}

/// Trains the encoder and the one-class head on the clean days.
pub fn train_tr_pipeline(train: &[TrSeries], cfg: &TrExperimentConfig, seed: u64) -> Result<TrDetector, DetectionError> {
    let corpus = UnlabeledSeries::from_series(train)?;
    let (ganed, _) = train_gan_ed(&corpus, &cfg.gan(seed))?;
    Ok(train_tr_detector(ganed, &corpus, &cfg.ocnn(seed))?.0)
}

pub fn run_tr_experiment(cfg: &TrExperimentConfig, seed: u64) -> Result<DetectionOutcome, DetectionError> {
    cfg.validate()?;
    let (train, test) = tr_corpus(cfg, seed)?;
    let t = Instant::now();
    let det = train_tr_pipeline(&train, cfg, seed)?;
    let train_time = t.elapsed();
    let t = Instant::now();
    let decisions = test
        .iter()
        .map(|s| Ok(det.score(&s.matrix(), f64::from(s.day_index) * 86_400.0)?.is_anomalous()))
        .collect::<Result<Vec<bool>, DetectionError>>()?;
    let score_time = t.elapsed();
    let labels: Vec<bool> = test.iter().map(TrSeries::is_anomalous).collect();
    let models = vec![("ganed-tr".to_string(), det.ganed.to_param_file()), ("ocnn-tr".to_string(), det.ocnn.to_param_file())];
    Ok(DetectionOutcome { confusion: Confusion::tally(&decisions, &labels), train_time, score_time, scored: test.len(), models })
}

/// Independent SR experiments, one per seed, in seed order.
pub fn run_sr_repeats(cfg: &SrExperimentConfig, seeds: &[u64], mode: ExecMode) -> Result<Vec<DetectionOutcome>, DetectionError> {
    map_slice(mode, seeds, |&s| run_sr_experiment(cfg, s)).into_iter().collect()
}

/// Independent TR experiments, one per seed, in seed order.
pub fn run_tr_repeats(cfg: &TrExperimentConfig, seeds: &[u64], mode: ExecMode) -> Result<Vec<DetectionOutcome>, DetectionError> {
    map_slice(mode, seeds, |&s| run_tr_experiment(cfg, s)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sr_corpus_contamination_is_exact() {
        let c = sr_corpus(AppKind::HealthMonitoring, 500, 0.04, 5.0, 1, "t").unwrap();
        assert_eq!(c.iter().filter(|r| r.label.is_anomalous()).count(), 20);
        assert_eq!(c, sr_corpus(AppKind::HealthMonitoring, 500, 0.04, 5.0, 1, "t").unwrap());
    }

    #[test]
    fn tr_corpus_bursts_are_at_night() {
        let cfg = TrExperimentConfig { train_days: 32, test_days: 60, contamination: 0.3, ..TrExperimentConfig::default() };
        let (train, test) = tr_corpus(&cfg, 2).unwrap();
        assert!(train.iter().all(|s| !s.is_anomalous()));
        let anomalous: Vec<&TrSeries> = test.iter().filter(|s| s.is_anomalous()).collect();
        assert!(!anomalous.is_empty());
        for s in anomalous {
            let first = s.labels.iter().position(|l| l.is_anomalous()).unwrap();
            assert!(first < 5 * 6 && first % 6 == 0);
        }
    }

    #[test]
    fn small_sr_experiment_runs() {
        let cfg = SrExperimentConfig { test_records: 200, ..SrExperimentConfig::default() };
        let out = run_sr_experiment(&cfg, 0).unwrap();
        assert_eq!(out.scored, 800);
        assert!(out.f1() > 0.8, "f1 {}", out.f1());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SrExperimentConfig { intensity: 1.0, ..SrExperimentConfig::default() }.validate().is_err());
        assert!(TrExperimentConfig { interval_minutes: 7, ..TrExperimentConfig::default() }.validate().is_err());
        assert!(TrExperimentConfig { window_slots: 500, ..TrExperimentConfig::default() }.validate().is_err());
    }
}
