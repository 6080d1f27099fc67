use std::collections::VecDeque;

use rand::Rng;

use super::{apply_action, enumerate_actions, reward, Action, AfterActionState, ComprehensiveState, EdrlConfig, EdrlError, RateContext, ValueModel, ValueParts};
use crate::neural::{Optimizer, Parameterized};
use crate::rfta::CostMatrix;

/// Outcome of one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub action: Action,
    pub after: AfterActionState,
    pub reward: f64,
    pub beta: f64,
    pub objective: f64,
    pub explored: bool,
    pub candidates: usize,
}

/// Running summary of temporal-difference errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TdStats {
    pub updates: u64,
    pub sum_sq: f64,
    pub last_delta: f64,
}

impl TdStats {
    /// Mean of `0.5 * delta^2` since the last reset.
    pub fn mean_loss(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            0.5 * self.sum_sq / self.updates as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    parts: ValueParts,
    reward: f64,
    sojourn: f64,
}

/// Post-decision-state learner with a reward-rate baseline.
#[derive(Debug, Clone)]
pub struct EdrlAgent {
    pub cfg: EdrlConfig,
    pub model: ValueModel,
    optimizer: Optimizer,
    theta: f64,
    reward_avg: f64,
    sojourn_avg: f64,
    /// Episodic problems keep the baseline at zero.
    pub episodic: bool,
    pending: Option<Pending>,
    pub stats: TdStats,
    replay: VecDeque<(ValueParts, f64)>,
    target: Option<ValueModel>,
    since_sync: usize,
}

impl EdrlAgent {
    pub fn new<R: Rng + ?Sized>(servers: usize, types: usize, cfg: EdrlConfig, episodic: bool, rng: &mut R) -> Result<Self, EdrlError> {
        let model = ValueModel::new(servers, types, &cfg, rng)?;
        let optimizer = Optimizer::adam(cfg.feature_lr)?;
        Ok(Self {
            cfg,
            model,
            optimizer,
            theta: 0.0,
            reward_avg: 0.0,
            sojourn_avg: 0.0,
            episodic,
            pending: None,
            stats: TdStats::default(),
            replay: VecDeque::new(),
            target: None,
            since_sync: 0,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn reset_stats(&mut self) {
        self.stats = TdStats::default();
    }

    /// Folds one observed reward and the time it took into the reward rate.
    pub fn record_transition(&mut self, reward: f64, sojourn: f64) {
        if self.episodic || !(sojourn.is_finite() && sojourn >= 0.0) {
            return;
        }
        let d = self.cfg.theta_decay;
        self.reward_avg = d * self.reward_avg + (1.0 - d) * reward;
        self.sojourn_avg = d * self.sojourn_avg + (1.0 - d) * sojourn;
        if self.sojourn_avg > 0.0 {
            self.theta = self.reward_avg / self.sojourn_avg;
        }
    }

    /// Scores every feasible action and picks one, ε-greedily when
    /// `epsilon > 0`. With `learn`, the previous decision's after-state is
    /// updated toward the best objective found here.
    #[allow(clippy::too_many_arguments)]
    pub fn act<R: Rng + ?Sized>(
        &mut self,
        state: &ComprehensiveState,
        costs: &CostMatrix,
        ctx: &RateContext,
        epsilon: f64,
        learn: bool,
        rng: &mut R,
    ) -> Result<Choice, EdrlError> {
        let actions = enumerate_actions(state, costs, &self.cfg)?;
        let base = apply_action(state, &Action::null(state.servers()), costs)?;
        let base_parts = self.model.evaluate(&base)?;
        let anchor = self.model.anchor(&base)?;
        let mut scored: Vec<(ValueParts, f64, f64, f64)> = Vec::with_capacity(actions.len());
        let mut best = 0;
        for (idx, action) in actions.iter().enumerate() {
            let changed: Vec<(usize, Vec<f64>)> = action
                .fractions
                .iter()
                .enumerate()
                .filter(|(_, &f)| f > 0.0)
                .map(|(j, &f)| (j, state.available[j].iter().zip(&state.demand).map(|(a, x)| (a - f * x).max(0.0)).collect()))
                .collect();
            let budget = (state.budget - action.cost(&state.demand, costs)).max(0.0);
            let parts = self.model.evaluate_patched(anchor.as_ref(), &base, &base_parts, &changed, budget)?;
            let beta = ctx.beta_after(&state.demand, action);
            let r = reward(action, beta);
            let penalty = if beta > 0.0 { self.theta / beta } else { 0.0 };
            let objective = r + parts.value - penalty;
            if !objective.is_finite() {
                return Err(EdrlError::Diverged(format!("non-finite objective for action {idx}")));
            }
            if objective > scored.get(best).map_or(f64::NEG_INFINITY, |s| s.3) {
                best = idx;
            }
            scored.push((parts, r, beta, objective));
        }
        let best_objective = match &self.target {
            Some(t) => {
                let (_, r, beta, _) = &scored[best];
                let after = apply_action(state, &actions[best], costs)?;
                r + t.approximate_value(&after)? - if *beta > 0.0 { self.theta / beta } else { 0.0 }
            }
            None => scored[best].3,
        };
        if learn {
            if let Some(p) = self.pending.take() {
                self.record_transition(p.reward, p.sojourn);
                self.td_update(&p.parts, best_objective)?;
            }
        }
        let explored = epsilon > 0.0 && rng.gen::<f64>() < epsilon;
        let index = if explored { rng.gen_range(0..actions.len()) } else { best };
        let (parts, r, beta, objective) = scored.swap_remove(index);
        let after = apply_action(state, &actions[index], costs)?;
        if learn {
            self.pending = Some(Pending { parts, reward: r, sojourn: if beta > 0.0 { 1.0 / beta } else { 0.0 } });
        }
        Ok(Choice {
            index,
            action: actions[index].clone(),
            after,
            reward: r,
            beta,
            objective,
            explored,
            candidates: actions.len(),
        })
    }

    /// Closes an episode: the last after-state is pulled toward zero.
    pub fn finish_episode(&mut self) -> Result<(), EdrlError> {
        if let Some(p) = self.pending.take() {
            self.td_update(&p.parts, 0.0)?;
        }
        Ok(())
    }

    /// Drops the pending after-state without learning from it.
    pub fn forget_pending(&mut self) {
        self.pending = None;
    }

    /// Semi-gradient step on `0.5 * (target - prediction)^2`; returns the
    /// TD error measured before the step.
    pub fn td_update(&mut self, parts: &ValueParts, target: f64) -> Result<f64, EdrlError> {
        let delta = self.apply_update(parts, target)?;
        if self.cfg.replay {
            if self.replay.len() >= self.cfg.replay_size {
                self.replay.pop_front();
            }
            self.replay.push_back((parts.clone(), target));
            let n = self.replay.len();
            if n > 1 {
                let (p, t) = self.replay[(self.stats.updates as usize * 7919) % (n - 1)].clone();
                self.apply_update(&p, t)?;
            }
        }
        Ok(delta)
    }

    fn apply_update(&mut self, parts: &ValueParts, target: f64) -> Result<f64, EdrlError> {
        let phi = if self.model.indicator { vec![1.0; self.model.servers] } else { self.model.net.infer(&parts.features)? };
        let pred: f64 = phi.iter().zip(&parts.indices).map(|(p, &i)| p * self.model.values[i]).sum();
        let delta = target - pred;
        if !delta.is_finite() {
            return Err(EdrlError::Diverged(format!("TD error is {delta}")));
        }
        self.stats.updates += 1;
        self.stats.sum_sq += delta * delta;
        self.stats.last_delta = delta;
        if delta == 0.0 {
            return Ok(0.0);
        }
        if !self.model.indicator {
            let grads = self.model.feature_gradient(parts, target)?;
            let mut p = self.model.net.params();
            self.optimizer.step(&mut p, &grads)?;
            self.model.net.set_params(&p)?;
        }
        let norm = phi.iter().map(|p| p * p).sum::<f64>().max(1.0);
        for (p, &i) in phi.iter().zip(&parts.indices) {
            self.model.values[i] += self.cfg.value_lr * delta * p / norm;
        }
        if self.model.values.iter().any(|v| !v.is_finite()) {
            return Err(EdrlError::Diverged("value table became non-finite".into()));
        }
        if self.cfg.target_sync > 0 {
            self.since_sync += 1;
            if self.target.is_none() || self.since_sync >= self.cfg.target_sync {
                self.target = Some(self.model.clone());
                self.since_sync = 0;
            }
        }
        Ok(delta)
    }
}
