//! Decomposed-value reinforcement learning for per-request allocation.
//!
//! A decision happens whenever a device requests resources. The agent sees
//! every server's remaining capacity plus the requester's demand and budget,
//! enumerates feasible balanced bundles, and scores each by the immediate
//! reward plus the value of the resulting after-action state. That value is a
//! sum over servers of a learned per-server table entry, weighted by a feature
//! network evaluated on the whole after-action state.

mod agent;
mod tiny;
mod value;

pub use agent::{Choice, EdrlAgent, TdStats};
pub use tiny::{evaluate_tiny, tiny_instance, train_tiny, TinyEnv, TinyReport};
pub use value::{partial_index, ValueModel, ValueParts};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::NeuralError;
use crate::rfta::{fitting_fraction, CostMatrix, RftaError};

const EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdrlError {
    #[error("empty action grid")]
    EmptyGrid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible action: {0}")]
    Infeasible(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("no device has a positive arrival rate")]
    NoArrivals,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Rfta(#[from] RftaError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdrlConfig {
    /// Discretization levels per resource type.
    pub levels: usize,
    /// Demand fractions offered per server; must contain 0.
    pub grid: Vec<f64>,
    /// Also offer, per server, the largest affordable fraction that fits.
    pub fill_action: bool,
    /// Offer bundles split across several servers.
    pub split: bool,
    /// Upper bound on enumerated split actions.
    pub combo_cap: usize,
    pub hidden: Vec<usize>,
    /// Fix every feature weight to 1 instead of learning it.
    pub indicator: bool,
    pub value_lr: f64,
    pub feature_lr: f64,
    pub theta_decay: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of training epochs over which exploration anneals.
    pub anneal_fraction: f64,
    pub replay: bool,
    pub replay_size: usize,
    /// Updates between refreshes of the frozen copy that scores TD targets;
    /// 0 scores targets with the live model.
    pub target_sync: usize,
}

impl Default for EdrlConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            fill_action: true,
            split: false,
            combo_cap: 4096,
            hidden: vec![64, 64],
            indicator: false,
            value_lr: 0.2,
            feature_lr: 1e-3,
            theta_decay: 0.99,
            epsilon_start: 0.5,
            epsilon_end: 0.01,
            anneal_fraction: 0.6,
            replay: false,
            replay_size: 256,
            target_sync: 1000,
        }
    }
}

impl EdrlConfig {
    pub fn validate(&self) -> Result<(), EdrlError> {
        let bad = |m: &str| Err(EdrlError::InvalidConfig(m.to_string()));
        if self.grid.is_empty() {
            return Err(EdrlError::EmptyGrid);
        }
        if self.grid.iter().any(|f| !(0.0..=1.0).contains(f)) || !self.grid.contains(&0.0) {
            return bad("grid fractions must lie in [0, 1] and include 0");
        }
        if self.levels < 1 || self.levels > 64 {
            return bad("levels must lie in 1..=64");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.value_lr > 0.0 && self.feature_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.theta_decay) {
            return bad("theta_decay must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.anneal_fraction) {
            return bad("anneal_fraction must lie in [0, 1]");
        }
        if self.combo_cap == 0 || (self.replay && self.replay_size == 0) {
            return bad("combo_cap and replay_size must be positive");
        }
        Ok(())
    }

    /// Linear exploration schedule over `total` training epochs.
    pub fn epsilon_at(&self, epoch: usize, total: usize) -> f64 {
        let span = (self.anneal_fraction * total as f64).max(1.0);
        let t = epoch as f64 / span;
        if t >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// One server's remaining capacity and its discretized level per type.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialState {
    pub server: usize,
    pub available: Vec<f64>,
    pub levels: Vec<usize>,
}

impl PartialState {
    pub fn new(server: usize, available: &[f64], capacity: &[f64], levels: usize) -> Self {
        let lv = available.iter().zip(capacity).map(|(a, c)| level_of(*a, *c, levels)).collect();
        Self { server, available: available.to_vec(), levels: lv }
    }
}

/// `floor(L * available / capacity)` clamped to `0..L`.
pub fn level_of(available: f64, capacity: f64, levels: usize) -> usize {
    if !(capacity > 0.0) {
        return 0;
    }
    let l = (levels as f64 * available / capacity).floor();
    (l.max(0.0) as usize).min(levels - 1)
}

/// What the agent observes at a decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ComprehensiveState {
    pub available: Vec<Vec<f64>>,
    pub capacity: Vec<Vec<f64>>,
    pub demand: Vec<f64>,
    pub budget: f64,
    /// Budget that would buy one full demand bundle at the cheapest server.
    pub reference_cost: f64,
    /// Position within an episode in `[0, 1]`, or 0 when not episodic.
    pub progress: f64,
    pub epoch: usize,
}

impl ComprehensiveState {
    pub fn servers(&self) -> usize {
        self.available.len()
    }

    pub fn partial_states(&self, levels: usize) -> Vec<PartialState> {
        (0..self.servers()).map(|j| PartialState::new(j, &self.available[j], &self.capacity[j], levels)).collect()
    }
}

/// Demand fraction taken from each server.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub fractions: Vec<f64>,
}

impl Action {
    pub fn null(servers: usize) -> Self {
        Self { fractions: vec![0.0; servers] }
    }

    pub fn is_null(&self) -> bool {
        self.fractions.iter().all(|&f| f == 0.0)
    }

    pub fn served(&self) -> f64 {
        self.fractions.iter().sum()
    }

    pub fn cost(&self, demand: &[f64], costs: &CostMatrix) -> f64 {
        self.fractions.iter().enumerate().map(|(j, f)| f * costs.bundle_cost(j, demand)).sum()
    }
}

/// State right after an action, before the next request arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct AfterActionState {
    pub available: Vec<Vec<f64>>,
    pub capacity: Vec<Vec<f64>>,
    pub budget: f64,
    pub demand: Vec<f64>,
    pub reference_cost: f64,
    pub progress: f64,
}

fn affordable(cost: f64, budget: f64) -> bool {
    cost <= budget + 1e-9 * budget.abs().max(1.0)
}

fn fits(demand: &[f64], available: &[f64], f: f64) -> bool {
    demand.iter().zip(available).all(|(x, a)| f * x <= a + 1e-9 * a.abs().max(1.0))
}

/// Feasible actions in a fixed order: the null action, then per server the
/// grid fractions in ascending order followed by the fill fraction, then
/// split combinations when enabled.
pub fn enumerate_actions(state: &ComprehensiveState, costs: &CostMatrix, cfg: &EdrlConfig) -> Result<Vec<Action>, EdrlError> {
    if cfg.grid.is_empty() {
        return Err(EdrlError::EmptyGrid);
    }
    let j_count = state.servers();
    if costs.servers() != j_count {
        return Err(EdrlError::Shape(format!("{} cost rows for {j_count} servers", costs.servers())));
    }
    let mut grid: Vec<f64> = cfg.grid.iter().copied().filter(|&f| f > 0.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut out = vec![Action::null(j_count)];
    if !(state.budget > 0.0) {
        return Ok(out);
    }
    let unit: Vec<f64> = (0..j_count).map(|j| costs.bundle_cost(j, &state.demand)).collect();
    let sells: Vec<bool> = (0..j_count).map(|j| costs.sells(j, &state.demand)).collect();
    for j in 0..j_count {
        if !sells[j] {
            continue;
        }
        for &f in &grid {
            if fits(&state.demand, &state.available[j], f) && affordable(f * unit[j], state.budget) {
                let mut a = Action::null(j_count);
                a.fractions[j] = f;
                out.push(a);
            }
        }
        if cfg.fill_action {
            let f = fitting_fraction(&state.demand, &state.available[j]).min(state.budget / unit[j]).min(1.0);
            if f > EPS && !grid.iter().any(|g| (g - f).abs() <= 1e-9) {
                let mut a = Action::null(j_count);
                a.fractions[j] = f;
                out.push(a);
            }
        }
    }
    if cfg.split && j_count > 1 {
        let mut idx = vec![0usize; j_count];
        let levels = grid.len();
        'outer: loop {
            let mut pos = j_count;
            loop {
                if pos == 0 {
                    break 'outer;
                }
                pos -= 1;
                if idx[pos] < levels {
                    idx[pos] += 1;
                    for later in idx.iter_mut().skip(pos + 1) {
                        *later = 0;
                    }
                    break;
                }
            }
            if idx.iter().filter(|&&m| m > 0).count() < 2 {
                continue;
            }
            let fr: Vec<f64> = idx.iter().map(|&m| if m == 0 { 0.0 } else { grid[m - 1] }).collect();
            let total: f64 = fr.iter().sum();
            let cost: f64 = fr.iter().zip(&unit).map(|(f, u)| f * u).sum();
            let ok = total <= 1.0 + 1e-9
                && affordable(cost, state.budget)
                && fr.iter().enumerate().all(|(j, &f)| f == 0.0 || (sells[j] && fits(&state.demand, &state.available[j], f)));
            if ok {
                out.push(Action { fractions: fr });
                if out.len() >= cfg.combo_cap {
                    break;
                }
            }
        }
    }
    Ok(out)
}

pub fn apply_action(state: &ComprehensiveState, action: &Action, costs: &CostMatrix) -> Result<AfterActionState, EdrlError> {
    if action.fractions.len() != state.servers() {
        return Err(EdrlError::Shape("action width differs from server count".into()));
    }
    let cost = action.cost(&state.demand, costs);
    if !affordable(cost, state.budget) {
        return Err(EdrlError::Infeasible(format!("cost {cost} exceeds budget {}", state.budget)));
    }
    let mut available = state.available.clone();
    for (j, &f) in action.fractions.iter().enumerate() {
        if f < 0.0 {
            return Err(EdrlError::Infeasible("negative fraction".into()));
        }
        if f == 0.0 {
            continue;
        }
        if !fits(&state.demand, &available[j], f) {
            return Err(EdrlError::Infeasible(format!("server {j} lacks capacity for fraction {f}")));
        }
        for (a, x) in available[j].iter_mut().zip(&state.demand) {
            *a = (*a - f * x).max(0.0);
        }
    }
    Ok(AfterActionState {
        available,
        capacity: state.capacity.clone(),
        budget: (state.budget - cost).max(0.0),
        demand: state.demand.clone(),
        reference_cost: state.reference_cost,
        progress: state.progress,
    })
}

/// Holding time `max_k x_k / (ER_k * y_k)` of a bundle.
pub fn access_time(demand: &[f64], rates: &[f64], allocated: &[f64]) -> Result<f64, EdrlError> {
    let mut t: f64 = 0.0;
    let mut any = false;
    for ((&x, &er), &y) in demand.iter().zip(rates).zip(allocated) {
        if x <= 0.0 {
            continue;
        }
        if !(er > 0.0) || !(y > 0.0) {
            return Err(EdrlError::Infeasible("access time needs positive rate and allocation".into()));
        }
        t = t.max(x / (er * y));
        any = true;
    }
    if any {
        Ok(t)
    } else {
        Err(EdrlError::Infeasible("bundle has no demanded type".into()))
    }
}

/// Event-rate context for turning gains into rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RateContext {
    /// Sum of arrival rates over the population.
    pub arrival_rate: f64,
    /// Sum of `1 / T_s` over allocations currently held.
    pub release_rate: f64,
    /// Processing rates per server and type; `None` ignores new releases.
    pub rates: Option<Vec<Vec<f64>>>,
}

impl RateContext {
    pub fn constant(arrival_rate: f64) -> Self {
        Self { arrival_rate, release_rate: 0.0, rates: None }
    }

    /// `beta` before acting: arrivals plus releases of current holdings.
    pub fn beta_before(&self) -> f64 {
        self.arrival_rate + self.release_rate
    }

    /// `beta` after `action`: arrivals plus releases, including the new ones.
    pub fn beta_after(&self, demand: &[f64], action: &Action) -> f64 {
        let mut beta = self.beta_before();
        if let Some(rates) = &self.rates {
            for (j, &f) in action.fractions.iter().enumerate() {
                if f > 0.0 {
                    let y: Vec<f64> = demand.iter().map(|x| f * x).collect();
                    if let Ok(t) = access_time(demand, &rates[j], &y) {
                        beta += 1.0 / t;
                    }
                }
            }
        }
        beta
    }
}

/// Gain delivered by `action` divided by the event rate.
pub fn reward(action: &Action, beta: f64) -> f64 {
    if action.is_null() || !(beta > 0.0) {
        0.0
    } else {
        action.served() / beta
    }
}

/// An allocation held until it is released.
#[derive(Debug, Clone, PartialEq)]
pub struct Holding {
    pub server: usize,
    pub amounts: Vec<f64>,
    pub release_rate: f64,
}

/// Samples the next requester (proportional to arrival rate) and the sojourn
/// until it arrives, releasing each holding that expires in between.
pub fn sample_transition<R: Rng + ?Sized>(
    after: &AfterActionState,
    holdings: &[Holding],
    lambdas: &[f64],
    rng: &mut R,
) -> Result<(usize, f64, Vec<Vec<f64>>, Vec<usize>), EdrlError> {
    let total: f64 = lambdas.iter().filter(|l| **l > 0.0).sum();
    if !(total > 0.0) {
        return Err(EdrlError::NoArrivals);
    }
    let beta = total + holdings.iter().map(|h| h.release_rate).sum::<f64>();
    let u: f64 = rng.gen::<f64>();
    let sojourn = -(1.0 - u).ln() / beta;
    let mut pick = rng.gen::<f64>() * total;
    let mut device = lambdas.iter().rposition(|l| *l > 0.0).unwrap_or(0);
    for (i, &l) in lambdas.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        if pick < l {
            device = i;
            break;
        }
        pick -= l;
    }
    let mut available = after.available.clone();
    let mut released = Vec::new();
    for (h_idx, h) in holdings.iter().enumerate() {
        if rng.gen::<f64>() < 1.0 - (-h.release_rate * sojourn).exp() {
            for ((a, v), c) in available[h.server].iter_mut().zip(&h.amounts).zip(&after.capacity[h.server]) {
                *a = (*a + v).min(*c);
            }
            released.push(h_idx);
        }
    }
    Ok((device, sojourn, available, released))
}
