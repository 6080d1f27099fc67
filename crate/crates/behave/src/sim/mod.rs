//! Discrete-event engine: request arrivals are scored by the per-request
//! detector, folded into each device's behavior index, turned into a budget
//! and handed to an allocator; allocations are held until their access time
//! elapses. Metrics are collected every fixed number of requests.

mod events;
mod metrics;

pub use events::{Event, EventQueue};
pub use metrics::{
    server_load_stats, server_loads, write_csv, AllocationRow, BrdiRow, DeviceRow, FairnessRow, LearningRow, MetricsRow,
    ALLOCATION_HEADER, BRDI_HEADER, DEVICES_HEADER, FAIRNESS_HEADER, LEARNING_HEADER, METRICS_HEADER,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::behavior::{
    generate_sr_record, generate_tr_series, inject_sr_anomaly, inject_tr_anomaly, truncated_normal, AppClass, AppKind, ArrivalProcess,
    DeviceProfile, SrAnomalyMode, TrSeries, DEMAND_UNIT_SCALE,
};
use crate::brdi::{BrdHistory, BrdiError};
use crate::config::{AllocatorKind, CostModel, RunConfig};
use crate::par::{map_slice, ExecMode};
use crate::detection::{
    ocnn_score, train_sr_detector, train_tr_pipeline, tr_corpus, Confusion, DetectionError, OcnnModel, TrDetector,
};
use crate::edrl::{access_time, ComprehensiveState, EdrlAgent, EdrlError, RateContext};
use crate::neural::ParamFile;
use crate::rfta::{
    envy_freeness_index, gain, greedy_request, normalized_budget, oracle_request, random_request, reference_cost, request_search_size,
    AllocationMatrix, CostMatrix, GainMode, ResourceVector, RftaError, ORACLE_NODE_CAP,
};
use crate::rng::{substream, StreamRng};

const TYPES: usize = 3;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Rfta(#[from] RftaError),
    #[error(transparent)]
    Edrl(#[from] EdrlError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Brdi(#[from] BrdiError),
    #[error("conservation violated at t={time}: server {server} type {rtype} off by {error}")]
    Conservation { time: f64, server: usize, rtype: usize, error: f64 },
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error("output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDevice {
    pub profile: DeviceProfile,
    /// Normalized demand per resource type.
    pub demand: Vec<f64>,
    pub xi: f64,
    pub data_size: f64,
    pub anomalous: bool,
    pub pinned_brdi: Option<f64>,
    /// Server that receives the unserved part of the device's requests.
    pub attach: usize,
    pub reference_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimServer {
    pub capacity: Vec<f64>,
    /// Processing rate per resource type.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub devices: Vec<SimDevice>,
    pub servers: Vec<SimServer>,
    pub costs: CostMatrix,
}

/// Application per device: each next device takes the class furthest below
/// its target share, so any prefix of the roster follows the ratio.
fn roster(ratio: &[f64], count: usize) -> Vec<AppKind> {
    let total: f64 = ratio.iter().sum();
    let mut assigned = [0usize; 4];
    (0..count)
        .map(|i| {
            let deficit = |a: usize| ratio[a] / total * (i + 1) as f64 - assigned[a] as f64;
            let best = (0..4).fold(0, |b, a| if deficit(a) > deficit(b) + 1e-12 { a } else { b });
            assigned[best] += 1;
            AppKind::ALL[best]
        })
        .collect()
}

impl Scenario {
    pub fn build(cfg: &RunConfig) -> Result<Self, SimError> {
        cfg.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
        let seed = cfg.seed;
        let j_count = cfg.servers.count;
        let servers: Vec<SimServer> = (0..j_count)
            .map(|j| {
                let mut rng = substream(seed, "server", j as u64);
                let [lo, hi] = cfg.servers.rate_range;
                SimServer {
                    capacity: vec![cfg.servers.capacity; TYPES],
                    rates: (0..TYPES).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect(),
                }
            })
            .collect();
        let [clo, chi] = cfg.servers.cost_range;
        let draw = |rng: &mut StreamRng| -> Vec<f64> { (0..TYPES).map(|_| if chi > clo { rng.gen_range(clo..chi) } else { clo }).collect() };
        let rows = match cfg.servers.cost_model {
            CostModel::PerType => vec![draw(&mut substream(seed, "costs", 0)); j_count],
            CostModel::PerServer => (0..j_count).map(|j| draw(&mut substream(seed, "costs-server", j as u64))).collect(),
        };
        let costs = CostMatrix::new(rows)?;
        let apps = cfg.devices.apps.clone().unwrap_or_else(|| roster(&cfg.devices.ratio, cfg.devices.count));
        let n = apps.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, "anomalous", 0));
        let n_anom = (cfg.devices.anomalous_fraction * n as f64).round() as usize;
        let mut anomalous = vec![false; n];
        for &i in &order[..n_anom] {
            anomalous[i] = true;
        }
        let mut devices = Vec::with_capacity(n);
        for (i, kind) in apps.into_iter().enumerate() {
            let mut rng = substream(seed, "device", i as u64);
            let mut app = AppClass::default_for(kind);
            app.arrival_rate *= cfg.devices.arrival_scale;
            let demand: Vec<f64> = app.demand_ranges.iter().zip(DEMAND_UNIT_SCALE).map(|(iv, s)| truncated_normal(&mut rng, *iv) / s).collect();
            let [dlo, dhi] = cfg.rfta.data_size_range;
            let data_size = if dhi > dlo { rng.gen_range(dlo..dhi) } else { dlo };
            let pin = cfg.devices.pin.iter().rev().find(|p| p.device == i);
            let mut profile = DeviceProfile::new(i, app).map_err(|e| SimError::Scenario(e.to_string()))?;
            profile.xi_override = pin.and_then(|p| p.xi);
            let reference_cost = reference_cost(&demand, &costs).unwrap_or(0.0);
            devices.push(SimDevice {
                xi: profile.priority(),
                profile,
                demand,
                data_size,
                anomalous: pin.and_then(|p| p.anomalous).unwrap_or(anomalous[i]),
                pinned_brdi: pin.and_then(|p| p.brdi),
                attach: i % j_count,
                reference_cost,
            });
        }
        Ok(Self { devices, servers, costs })
    }

    pub fn capacities(&self) -> Vec<Vec<f64>> {
        self.servers.iter().map(|s| s.capacity.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timings {
    pub detector_training: Duration,
    pub simulation: Duration,
    pub decisions: Duration,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub allocator: AllocatorKind,
    pub seed: u64,
    pub metrics: Vec<MetricsRow>,
    pub devices: Vec<DeviceRow>,
    pub brdi: Vec<BrdiRow>,
    pub allocation: Vec<AllocationRow>,
    pub fairness: Vec<FairnessRow>,
    pub learning: Vec<LearningRow>,
    /// Hash of the arrival sequence (device and time of every request).
    pub trace_hash: u64,
    pub events: u64,
    pub requests: u64,
    pub max_conservation_error: f64,
    /// Gain per device summed over measured epochs.
    pub device_gains: Vec<f64>,
    pub total_gain: f64,
    pub decisions: u64,
    pub timings: Timings,
    pub policy: Option<ParamFile>,
}

impl RunResult {
    /// Mean over measured epochs of the per-epoch value.
    pub fn mean_of(&self, f: impl Fn(&MetricsRow) -> f64) -> f64 {
        self.metrics.iter().map(f).sum::<f64>() / self.metrics.len().max(1) as f64
    }

    /// Writes every CSV, the policy parameters and a timing summary to `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::Output(format!("{}: {e}", dir.display())))?;
        write_csv(&dir.join("metrics.csv"), &self.metrics, &METRICS_HEADER)?;
        write_csv(&dir.join("devices.csv"), &self.devices, &DEVICES_HEADER)?;
        write_csv(&dir.join("brdi.csv"), &self.brdi, &BRDI_HEADER)?;
        write_csv(&dir.join("allocation.csv"), &self.allocation, &ALLOCATION_HEADER)?;
        write_csv(&dir.join("fairness.csv"), &self.fairness, &FAIRNESS_HEADER)?;
        write_csv(&dir.join("learning_curve.csv"), &self.learning, &LEARNING_HEADER)?;
        let t = &self.timings;
        let rows = [
            ("detector_training", t.detector_training.as_secs_f64()),
            ("simulation", t.simulation.as_secs_f64()),
            ("decisions", t.decisions.as_secs_f64()),
        ];
        write_csv(&dir.join("timings.csv"), &rows, &["phase", "seconds"])?;
        if let Some(p) = &self.policy {
            p.save(&dir.join("edrl_policy.params")).map_err(|e| SimError::Output(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Holding {
    server: usize,
    amounts: Vec<f64>,
    release_rate: f64,
}

enum Allocator {
    Edrl(Box<EdrlAgent>),
    Greedy,
    Random,
    Oracle(f64),
}

struct EpochAccumulator {
    gain: f64,
    device_gain: Vec<f64>,
    requests: usize,
    assigned: Vec<Vec<f64>>,
    served: Vec<Vec<f64>>,
    sr: Confusion,
    sr_scored: bool,
}

impl EpochAccumulator {
    fn new(devices: usize, servers: usize) -> Self {
        Self {
            gain: 0.0,
            device_gain: vec![0.0; devices],
            requests: 0,
            assigned: vec![vec![0.0; TYPES]; servers],
            served: vec![vec![0.0; TYPES]; servers],
            sr: Confusion::default(),
            sr_scored: false,
        }
    }
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    sc: Scenario,
    allocator: Allocator,
    queue: EventQueue,
    available: Vec<Vec<f64>>,
    capacity: Vec<Vec<f64>>,
    holdings: BTreeMap<u64, Holding>,
    next_holding: u64,
    arrivals: Vec<ArrivalProcess>,
    arrival_rngs: Vec<StreamRng>,
    sr_rngs: Vec<StreamRng>,
    tr_rngs: Vec<StreamRng>,
    alloc_rng: StreamRng,
    histories: Vec<BrdHistory>,
    gamma: Vec<f64>,
    sr_detectors: Vec<Option<OcnnModel>>,
    tr_detectors: Vec<Option<TrDetector>>,
    tr_confusion: Confusion,
    tr_scored: bool,
    epoch: usize,
    acc: EpochAccumulator,
    cum_alloc: AllocationMatrix,
    cum_budget: Vec<f64>,
    result: RunResult,
}

fn mix(h: u64, v: u64) -> u64 {
    v.to_le_bytes().iter().fold(h, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig, kind: AllocatorKind) -> Result<Self, SimError> {
        let sc = Scenario::build(cfg)?;
        let seed = cfg.seed;
        let (n, j) = (sc.devices.len(), sc.servers.len());
        let allocator = match kind {
            AllocatorKind::Edrl => {
                let agent = EdrlAgent::new(j, TYPES, cfg.edrl.clone(), false, &mut substream(seed, "edrl-init", 0))?;
                Allocator::Edrl(Box::new(agent))
            }
            AllocatorKind::Greedy => Allocator::Greedy,
            AllocatorKind::Random => Allocator::Random,
            AllocatorKind::Oracle => {
                let size = request_search_size(j, cfg.rfta.oracle_grid_step);
                if size > ORACLE_NODE_CAP {
                    return Err(RftaError::SearchCapExceeded { size, cap: ORACLE_NODE_CAP }.into());
                }
                Allocator::Oracle(cfg.rfta.oracle_grid_step)
            }
        };
        let start = cfg.sim.start_time_s;
        let t0 = Instant::now();
        let present = |k: AppKind| sc.devices.iter().any(|d| d.profile.app.kind == k);
        let mut sr_detectors = vec![None, None, None, None];
        let mut tr_detectors = vec![None, None, None, None];
        for kind in AppKind::ALL.into_iter().filter(|k| present(*k)) {
            if cfg.detection.sim_sr {
                sr_detectors[kind.index()] = Some(train_sr_detector(kind, &cfg.detection.sr, seed)?);
            }
            if cfg.detection.sim_tr {
                let tcfg = crate::detection::TrExperimentConfig { app: kind, test_days: 1, ..cfg.detection.tr.clone() };
                let (train, _) = tr_corpus(&tcfg, seed)?;
                tr_detectors[kind.index()] = Some(train_tr_pipeline(&train, &tcfg, seed)?);
            }
        }
        let detector_training = t0.elapsed();
        let histories = (0..n).map(|_| BrdHistory::new(cfg.brdi.capacity)).collect::<Result<Vec<_>, _>>()?;
        let capacity = sc.capacities();
        let result = RunResult {
            allocator: kind,
            seed,
            metrics: Vec::new(),
            devices: Vec::new(),
            brdi: Vec::new(),
            allocation: Vec::new(),
            fairness: Vec::new(),
            learning: Vec::new(),
            trace_hash: 0xcbf2_9ce4_8422_2325,
            events: 0,
            requests: 0,
            max_conservation_error: 0.0,
            device_gains: vec![0.0; n],
            total_gain: 0.0,
            decisions: 0,
            timings: Timings { detector_training, ..Timings::default() },
            policy: None,
        };
        Ok(Self {
            cfg,
            allocator,
            queue: EventQueue::new(start),
            available: capacity.clone(),
            capacity,
            holdings: BTreeMap::new(),
            next_holding: 0,
            arrivals: sc.devices.iter().map(|d| ArrivalProcess::new(&d.profile, start)).collect(),
            arrival_rngs: (0..n).map(|i| substream(seed, "arrivals", i as u64)).collect(),
            sr_rngs: (0..n).map(|i| substream(seed, "sr-records", i as u64)).collect(),
            tr_rngs: (0..n).map(|i| substream(seed, "tr-days", i as u64)).collect(),
            alloc_rng: substream(seed, "allocator", 0),
            histories,
            gamma: sc.devices.iter().map(|d| d.pinned_brdi.unwrap_or(cfg.brdi.prior)).collect(),
            sr_detectors,
            tr_detectors,
            tr_confusion: Confusion::default(),
            tr_scored: false,
            epoch: 0,
            acc: EpochAccumulator::new(n, j),
            cum_alloc: AllocationMatrix::zeros(n, j, TYPES),
            cum_budget: vec![0.0; n],
            result,
            sc,
        })
    }

    fn total_epochs(&self) -> usize {
        self.cfg.sim.warmup_epochs + self.cfg.sim.epochs
    }

    fn measuring(&self) -> bool {
        self.epoch >= self.cfg.sim.warmup_epochs
    }

    fn epsilon(&self) -> f64 {
        let e = &self.cfg.edrl;
        if self.measuring() {
            0.0
        } else {
            e.epsilon_at(self.epoch, self.cfg.sim.warmup_epochs)
        }
    }

    fn run(mut self) -> Result<RunResult, SimError> {
        let t0 = Instant::now();
        for i in 0..self.sc.devices.len() {
            if let Some(t) = self.arrivals[i].next(&self.sc.devices[i].profile, &mut self.arrival_rngs[i]) {
                self.queue.push(t, Event::Arrival { device: i });
            }
        }
        if self.queue.is_empty() {
            return Err(SimError::Scenario("no device ever sends a request".into()));
        }
        if self.cfg.detection.sim_tr {
            self.queue.push(self.cfg.sim.start_time_s + self.cfg.brdi.tr_period_s, Event::Detection { day: 0 });
        }
        while let Some((now, ev)) = self.queue.pop() {
            self.result.events += 1;
            let done = match ev {
                Event::Expiry { holding } => {
                    self.release(holding);
                    false
                }
                Event::Arrival { device } => {
                    self.on_arrival(now, device)?;
                    false
                }
                Event::Detection { day } => {
                    self.on_detection(now, day)?;
                    false
                }
                Event::Epoch { index } => self.on_epoch(index)?,
            };
            if self.cfg.sim.check_conservation {
                self.check_conservation(now)?;
            }
            if done {
                break;
            }
        }
        if let Allocator::Edrl(agent) = &self.allocator {
            self.result.policy = Some(agent.model.to_param_file());
        }
        self.result.timings.simulation = t0.elapsed();
        Ok(self.result)
    }

    fn release(&mut self, id: u64) {
        if let Some(h) = self.holdings.remove(&id) {
            for (a, v) in self.available[h.server].iter_mut().zip(&h.amounts) {
                *a += v;
            }
        }
    }

    fn check_conservation(&mut self, now: f64) -> Result<(), SimError> {
        let mut held = vec![vec![0.0; TYPES]; self.capacity.len()];
        for h in self.holdings.values() {
            for (s, v) in held[h.server].iter_mut().zip(&h.amounts) {
                *s += v;
            }
        }
        for (j, cap) in self.capacity.iter().enumerate() {
            for k in 0..TYPES {
                let err = (self.available[j][k] + held[j][k] - cap[k]).abs();
                self.result.max_conservation_error = self.result.max_conservation_error.max(err);
                if err > 1e-9 || self.available[j][k] < -1e-9 {
                    return Err(SimError::Conservation { time: now, server: j, rtype: k, error: err });
                }
            }
        }
        Ok(())
    }

    fn on_arrival(&mut self, now: f64, i: usize) -> Result<(), SimError> {
        if let Some(t) = self.arrivals[i].next(&self.sc.devices[i].profile, &mut self.arrival_rngs[i]) {
            self.queue.push(t, Event::Arrival { device: i });
        }
        self.result.trace_hash = mix(mix(self.result.trace_hash, i as u64), now.to_bits());
        self.result.requests += 1;
        let dev = &self.sc.devices[i];

        let mut rec = generate_sr_record(&dev.profile, now, &mut self.sr_rngs[i]);
        if dev.anomalous && self.sr_rngs[i].gen_bool(self.cfg.devices.sr_anomaly_probability) {
            let mode = if self.sr_rngs[i].gen_bool(0.5) { SrAnomalyMode::Workload } else { SrAnomalyMode::Occupancy };
            rec = inject_sr_anomaly(&rec, self.cfg.devices.sr_intensity, mode).map_err(|e| SimError::Scenario(e.to_string()))?;
        }
        if let Some(det) = &self.sr_detectors[dev.profile.app.kind.index()] {
            let flagged = ocnn_score(det, &rec.features(), now)?.is_anomalous();
            self.histories[i].push_sr(now, if flagged { 0.0 } else { 1.0 })?;
            self.acc.sr.merge(Confusion::tally(&[flagged], &[rec.label.is_anomalous()]));
            self.acc.sr_scored = true;
        }

        let gamma = match dev.pinned_brdi {
            Some(g) => g,
            None => self.histories[i].state(&self.cfg.brdi)?.gamma_total,
        };
        self.gamma[i] = gamma;
        let b = normalized_budget(gamma, dev.xi, dev.data_size, &self.cfg.rfta.tau, &self.cfg.rfta.units)?;
        let budget = b * dev.reference_cost;

        let t = Instant::now();
        let fractions = self.decide(now, i, budget)?;
        self.result.timings.decisions += t.elapsed();
        self.result.decisions += 1;
        self.apply(now, i, budget, &fractions)
    }

    fn decide(&mut self, now: f64, i: usize, budget: f64) -> Result<Vec<f64>, SimError> {
        let dev = &self.sc.devices[i];
        let costs = &self.sc.costs;
        let eps = self.epsilon();
        Ok(match &mut self.allocator {
            Allocator::Greedy => greedy_request(&dev.demand, budget, &self.available, costs, 1.0),
            Allocator::Random => random_request(&dev.demand, budget, &self.available, costs, &self.cfg.edrl.grid, 1.0, &mut self.alloc_rng),
            Allocator::Oracle(step) => oracle_request(&dev.demand, budget, &self.available, costs, *step, 1.0)?,
            Allocator::Edrl(agent) => {
                let state = ComprehensiveState {
                    available: self.available.clone(),
                    capacity: self.capacity.clone(),
                    demand: dev.demand.clone(),
                    budget,
                    reference_cost: dev.reference_cost,
                    progress: 0.0,
                    epoch: self.epoch,
                };
                let w = self.cfg.sim.service_work;
                let ctx = RateContext {
                    arrival_rate: self.sc.devices.iter().map(|d| d.profile.app.rate_at(now)).sum(),
                    release_rate: self.holdings.values().map(|h| h.release_rate).sum(),
                    rates: Some(self.sc.servers.iter().map(|s| s.rates.iter().map(|r| r / w).collect()).collect()),
                };
                agent.act(&state, costs, &ctx, eps, true, &mut self.alloc_rng)?.action.fractions
            }
        })
    }

    fn apply(&mut self, now: f64, i: usize, budget: f64, fractions: &[f64]) -> Result<(), SimError> {
        let dev = &self.sc.devices[i];
        let cost: f64 = fractions.iter().enumerate().map(|(j, f)| f * self.sc.costs.bundle_cost(j, &dev.demand)).sum();
        if cost > budget + 1e-9 * budget.abs().max(1.0) {
            return Err(SimError::Infeasible(format!("device {i} spent {cost} of budget {budget}")));
        }
        let mut rows = vec![0.0; fractions.len() * TYPES];
        let mut served = 0.0;
        let w = self.cfg.sim.service_work;
        for (j, &f) in fractions.iter().enumerate() {
            if f <= 0.0 {
                continue;
            }
            let amounts: Vec<f64> = dev.demand.iter().map(|x| f * x).collect();
            for (k, (a, v)) in self.available[j].iter_mut().zip(&amounts).enumerate() {
                if *v > *a + 1e-9 {
                    return Err(SimError::Infeasible(format!("device {i} needs {v} of type {k} at server {j}, {a} free")));
                }
                *a -= v;
            }
            let rates: Vec<f64> = self.sc.servers[j].rates.iter().map(|r| r / w).collect();
            let hold = access_time(&dev.demand, &rates, &amounts)?;
            let id = self.next_holding;
            self.next_holding += 1;
            self.queue.push(now + hold, Event::Expiry { holding: id });
            rows[j * TYPES..(j + 1) * TYPES].copy_from_slice(&amounts);
            for (s, v) in self.acc.served[j].iter_mut().zip(&amounts) {
                *s += v;
            }
            for (s, v) in self.acc.assigned[j].iter_mut().zip(&amounts) {
                *s += v;
            }
            if self.epoch >= self.cfg.sim.warmup_epochs {
                self.cum_alloc.add(i, j, &amounts);
            }
            self.holdings.insert(id, Holding { server: j, amounts, release_rate: 1.0 / hold });
            served += f;
        }
        let unserved = (1.0 - served).max(0.0);
        for (s, x) in self.acc.assigned[dev.attach].iter_mut().zip(&dev.demand) {
            *s += unserved * x;
        }
        let g = gain(&rows, &dev.demand, GainMode::Continuous)?;
        self.acc.gain += g;
        self.acc.device_gain[i] += g;
        self.acc.requests += 1;
        if self.measuring() {
            self.cum_budget[i] += budget;
            self.result.device_gains[i] += g;
            self.result.total_gain += g;
        }
        if self.acc.requests == self.cfg.sim.epoch_requests {
            self.queue.push(now, Event::Epoch { index: self.epoch });
        }
        Ok(())
    }

    fn on_detection(&mut self, now: f64, day: u32) -> Result<(), SimError> {
        let tcfg = &self.cfg.detection.tr;
        let per_hour = (60 / tcfg.interval_minutes) as usize;
        let cal_day = (now / 86_400.0).floor() as u32;
        for i in 0..self.sc.devices.len() {
            let dev = &self.sc.devices[i];
            let Some(det) = &self.tr_detectors[dev.profile.app.kind.index()] else { continue };
            let rng = &mut self.tr_rngs[i];
            let err = |e: crate::behavior::BehaviorError| SimError::Scenario(e.to_string());
            let mut s: TrSeries = generate_tr_series(&dev.profile, cal_day, tcfg.interval_minutes, rng).map_err(err)?;
            if dev.anomalous {
                let start = rng.gen_range(0..tcfg.night_hours) * per_hour;
                s = inject_tr_anomaly(&s, start, start + tcfg.window_slots, self.cfg.devices.tr_intensity).map_err(err)?;
            }
            let flagged = det.score(&s.matrix(), now)?.is_anomalous();
            self.histories[i].push_tr(day, if flagged { 0.0 } else { 1.0 })?;
            self.tr_confusion.merge(Confusion::tally(&[flagged], &[s.is_anomalous()]));
            self.tr_scored = true;
        }
        self.queue.push(now + self.cfg.brdi.tr_period_s, Event::Detection { day: day + 1 });
        Ok(())
    }

    /// Closes an epoch; returns whether the run is over.
    fn on_epoch(&mut self, index: usize) -> Result<bool, SimError> {
        let (n, j) = (self.sc.devices.len(), self.sc.servers.len());
        let acc = std::mem::replace(&mut self.acc, EpochAccumulator::new(n, j));
        let eps = self.epsilon();
        let (epsilon, theta, loss) = match &mut self.allocator {
            Allocator::Edrl(agent) => {
                let l = agent.stats.mean_loss();
                agent.reset_stats();
                (eps, agent.theta(), l)
            }
            _ => (0.0, 0.0, 0.0),
        };
        self.result.learning.push(LearningRow { epoch: index, total_gain: acc.gain, epsilon, theta, loss_mean: loss });
        if self.measuring() {
            let m = index - self.cfg.sim.warmup_epochs;
            let demands: Vec<ResourceVector> = self.sc.devices.iter().map(|d| ResourceVector::new(d.demand.clone())).collect::<Result<_, _>>()?;
            let ef = match envy_freeness_index(&self.cum_alloc, &self.cum_budget, &demands) {
                Ok(v) => Some(v),
                Err(RftaError::NoValidPairs) => None,
                Err(e) => return Err(e.into()),
            };
            let loads = server_loads(&acc.assigned, &self.capacity, acc.requests);
            let (load_mean, load_var) = server_load_stats(&loads);
            self.result.metrics.push(MetricsRow {
                epoch: m,
                total_gain: acc.gain,
                ef_index: ef,
                load_mean,
                load_var,
                detector_f1_sr: acc.sr_scored.then(|| acc.sr.f1().f1),
                detector_f1_tr: self.tr_scored.then(|| self.tr_confusion.f1().f1),
            });
            let budgeted = self.cum_budget.iter().filter(|b| **b > 0.0).count();
            self.result.fairness.push(FairnessRow { epoch: m, ef_index: ef, budgeted_devices: budgeted, zero_budget_devices: n - budgeted });
            for (i, dev) in self.sc.devices.iter().enumerate() {
                let st = self.histories[i].state(&self.cfg.brdi)?;
                self.result.devices.push(DeviceRow {
                    epoch: m,
                    device_id: i,
                    brdi: self.gamma[i],
                    budget: self.gamma[i] * dev.xi,
                    gain: acc.device_gain[i],
                });
                self.result.brdi.push(BrdiRow { epoch: m, device_id: i, gamma_sr: st.gamma_sr, gamma_tr: st.gamma_tr, gamma: self.gamma[i] });
            }
            for (s, (amounts, load)) in acc.served.iter().zip(&loads).enumerate() {
                self.result.allocation.push(AllocationRow { epoch: m, server_id: s, cpu: amounts[0], mem: amounts[1], bw: amounts[2], load: *load });
            }
        }
        self.epoch = index + 1;
        Ok(self.epoch >= self.total_epochs())
    }
}

/// Runs the configured scenario with the configured allocator.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunResult, SimError> {
    run_with(cfg, cfg.allocator)
}

pub fn run_with(cfg: &RunConfig, allocator: AllocatorKind) -> Result<RunResult, SimError> {
    Engine::new(cfg, allocator)?.run()
}

/// Independent runs, one engine each, results in input order.
pub fn run_many(points: &[(RunConfig, AllocatorKind)], mode: ExecMode) -> Vec<Result<RunResult, SimError>> {
    map_slice(mode, points, |(cfg, kind)| run_with(cfg, *kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DevicePin;

    fn small(allocator: AllocatorKind) -> RunConfig {
        let mut c = RunConfig { seed: 3, allocator, ..RunConfig::default() };
        c.devices.count = 8;
        c.servers.count = 3;
        c.sim.epochs = 6;
        c.sim.warmup_epochs = 2;
        c.sim.epoch_requests = 20;
        c.edrl.hidden = vec![16];
        c
    }

    #[test]
    fn roster_follows_ratio() {
        let r = roster(&[0.25; 4], 8);
        for k in AppKind::ALL {
            assert_eq!(r.iter().filter(|a| **a == k).count(), 2);
        }
        let r = roster(&[1.0, 0.0, 0.0, 1.0], 4);
        assert_eq!(r, vec![AppKind::EmergencyResponse, AppKind::HealthMonitoring, AppKind::EmergencyResponse, AppKind::HealthMonitoring]);
    }

    #[test]
    fn every_allocator_runs_and_conserves() {
        for kind in AllocatorKind::ALL {
            let r = run_with(&small(kind), kind).unwrap();
            assert_eq!(r.metrics.len(), 6);
            assert_eq!(r.learning.len(), 8);
            assert!(r.max_conservation_error <= 1e-9);
            assert!(r.metrics.windows(2).all(|w| w[0].epoch < w[1].epoch));
            assert!(r.metrics.iter().all(|m| (0.0..=1.0).contains(&m.load_mean)));
        }
    }

    #[test]
    fn same_seed_same_result() {
        let c = small(AllocatorKind::Edrl);
        let a = run_scenario(&c).unwrap();
        let b = run_scenario(&c).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.devices, b.devices);
        assert_eq!(a.trace_hash, b.trace_hash);
    }

    #[test]
    fn arrival_trace_independent_of_allocator() {
        let hashes: Vec<u64> = [AllocatorKind::Greedy, AllocatorKind::Random, AllocatorKind::Edrl]
            .into_iter()
            .map(|k| run_with(&small(k), k).unwrap().trace_hash)
            .collect();
        assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_brdi_device_gets_nothing() {
        let mut c = small(AllocatorKind::Greedy);
        c.devices.pin.push(DevicePin { device: 2, brdi: Some(0.0), xi: None, anomalous: None });
        for kind in AllocatorKind::ALL {
            let r = run_with(&c, kind).unwrap();
            assert_eq!(r.device_gains[2], 0.0);
            assert!(r.devices.iter().filter(|d| d.device_id == 2).all(|d| d.gain == 0.0));
            assert!(r.device_gains.iter().enumerate().any(|(i, g)| i != 2 && *g > 0.0));
        }
    }

    #[test]
    fn ample_capacity_saturates_unit_budgets() {
        let mut c = small(AllocatorKind::Greedy);
        c.servers.capacity = 1000.0;
        c.detection.sim_sr = false;
        for i in 0..8 {
            c.devices.pin.push(DevicePin { device: i, brdi: None, xi: Some(1.0), anomalous: None });
        }
        let r = run_scenario(&c).unwrap();
        for row in &r.devices {
            assert!(row.brdi == 1.0);
        }
        let requests = (c.sim.epochs * c.sim.epoch_requests) as f64;
        assert!((r.total_gain - requests).abs() < 1e-9, "{} vs {requests}", r.total_gain);
    }

    #[test]
    fn oracle_refused_when_oversized() {
        let mut c = small(AllocatorKind::Oracle);
        c.servers.count = 20;
        assert!(matches!(run_scenario(&c), Err(SimError::Rfta(RftaError::SearchCapExceeded { .. }))));
    }

    #[test]
    fn mean_load_matches_across_allocators() {
        let means: Vec<Vec<f64>> = [AllocatorKind::Greedy, AllocatorKind::Random, AllocatorKind::Oracle]
            .into_iter()
            .map(|k| run_with(&small(k), k).unwrap().metrics.iter().map(|m| m.load_mean).collect())
            .collect();
        for w in means.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
