//! Behavior-of-Resource-Demand Index: recency-weighted fusion of per-request
//! and per-day normality scores.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrdiError {
    #[error("decay rate alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("weights must be nonnegative and sum to 1, got beta1={0}, beta2={1}")]
    InvalidWeights(f64, f64),
    #[error("score {0} lies outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("history capacity must be positive")]
    ZeroCapacity,
    #[error("record at {got} precedes the latest record at {latest}")]
    OutOfOrder { got: f64, latest: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrdiConfig {
    pub alpha: f64,
    /// Maximum retained per-request records.
    pub capacity: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Index reported for an empty history.
    pub prior: f64,
    /// Divide the cooling sum by its weight total so the index stays in `[0, 1]`.
    pub normalized: bool,
    /// Seconds between series-level detections.
    pub tr_period_s: f64,
}

impl Default for BrdiConfig {
    fn default() -> Self {
        Self { alpha: 0.1, capacity: 50, beta1: 0.5, beta2: 0.5, prior: 1.0, normalized: true, tr_period_s: 86_400.0 }
    }
}

impl BrdiConfig {
    pub fn validate(&self) -> Result<(), BrdiError> {
        check_alpha(self.alpha)?;
        check_weights(self.beta1, self.beta2)?;
        check_score(self.prior)?;
        if self.capacity == 0 {
            return Err(BrdiError::ZeroCapacity);
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<(), BrdiError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(BrdiError::InvalidAlpha(alpha))
    }
}

fn check_weights(beta1: f64, beta2: f64) -> Result<(), BrdiError> {
    if beta1 >= 0.0 && beta2 >= 0.0 && (beta1 + beta2 - 1.0).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(BrdiError::InvalidWeights(beta1, beta2))
    }
}

fn check_score(p: f64) -> Result<(), BrdiError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(BrdiError::ScoreOutOfRange(p))
    }
}

/// Cooling-weighted average of `scores` given newest first, so the newest
/// score carries weight `e^{-alpha}`. Returns `prior` when `scores` is empty.
pub fn cooled_average<I>(scores: I, alpha: f64, normalized: bool, prior: f64) -> Result<f64, BrdiError>
where
    I: IntoIterator<Item = f64>,
{
    check_alpha(alpha)?;
    let decay = (-alpha).exp();
    let (mut num, mut den, mut w, mut n) = (0.0, 0.0, 1.0, 0usize);
    for p in scores {
        check_score(p)?;
        w *= decay;
        num += p * w;
        den += w;
        n += 1;
    }
    if n == 0 {
        return Ok(prior);
    }
    Ok(if normalized { num / den } else { num })
}

/// Per-request index over scores ordered newest first.
pub fn gamma_sr(scores_newest_first: &[f64], alpha: f64) -> Result<f64, BrdiError> {
    cooled_average(scores_newest_first.iter().copied(), alpha, true, 1.0)
}

/// Daily index over per-day scores ordered newest first.
pub fn gamma_tr(daily_newest_first: &[f64], alpha: f64) -> Result<f64, BrdiError> {
    cooled_average(daily_newest_first.iter().copied(), alpha, true, 1.0)
}

pub fn brdi_total(gamma_sr: f64, gamma_tr: f64, beta1: f64, beta2: f64) -> Result<f64, BrdiError> {
    check_weights(beta1, beta2)?;
    check_score(gamma_sr)?;
    check_score(gamma_tr)?;
    Ok((beta1 * gamma_sr + beta2 * gamma_tr).clamp(0.0, 1.0))
}

/// Snapshot of a device's index components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdiState {
    pub gamma_sr: f64,
    pub gamma_tr: f64,
    pub gamma_total: f64,
}

/// Detection records for one device, oldest first, capped at the configured
/// capacity for both granularities.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdHistory {
    sr: VecDeque<(f64, f64)>,
    tr: VecDeque<(u32, f64)>,
    capacity: usize,
}

impl BrdHistory {
    pub fn new(capacity: usize) -> Result<Self, BrdiError> {
        if capacity == 0 {
            return Err(BrdiError::ZeroCapacity);
        }
        Ok(Self { sr: VecDeque::with_capacity(capacity), tr: VecDeque::new(), capacity })
    }

    pub fn push_sr(&mut self, timestamp: f64, score: f64) -> Result<(), BrdiError> {
        check_score(score)?;
        if let Some(&(latest, _)) = self.sr.back() {
            if timestamp < latest {
                return Err(BrdiError::OutOfOrder { got: timestamp, latest });
            }
        }
        if self.sr.len() == self.capacity {
            self.sr.pop_front();
        }
        self.sr.push_back((timestamp, score));
        Ok(())
    }

    pub fn push_tr(&mut self, day: u32, score: f64) -> Result<(), BrdiError> {
        check_score(score)?;
        if let Some(&(latest, _)) = self.tr.back() {
            if day < latest {
                return Err(BrdiError::OutOfOrder { got: f64::from(day), latest: f64::from(latest) });
            }
        }
        if self.tr.len() == self.capacity {
            self.tr.pop_front();
        }
        self.tr.push_back((day, score));
        Ok(())
    }

    pub fn sr_records(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.sr.iter()
    }

    pub fn tr_records(&self) -> impl Iterator<Item = &(u32, f64)> {
        self.tr.iter()
    }

    pub fn sr_len(&self) -> usize {
        self.sr.len()
    }

    pub fn tr_len(&self) -> usize {
        self.tr.len()
    }

    pub fn state(&self, cfg: &BrdiConfig) -> Result<BrdiState, BrdiError> {
        let sr = cooled_average(self.sr.iter().rev().map(|r| r.1), cfg.alpha, cfg.normalized, cfg.prior)?;
        let tr = cooled_average(self.tr.iter().rev().map(|r| r.1), cfg.alpha, cfg.normalized, cfg.prior)?;
        // The unnormalized sum can leave the unit interval; clamp before fusing.
        let (sr, tr) = (sr.clamp(0.0, 1.0), tr.clamp(0.0, 1.0));
        Ok(BrdiState { gamma_sr: sr, gamma_tr: tr, gamma_total: brdi_total(sr, tr, cfg.beta1, cfg.beta2)? })
    }
}
