//! Budgeted certainty-based sample selection.
//!
//! A sample is admitted for training when either the output conflict
//! (`y1 / (y1 + y2)` over the two largest class scores) or the input conflict
//! (class purity of the winning rule) falls below a randomized threshold, and
//! the admitted fraction is still under the budget. By default the threshold
//! falls after every admission and rises after every discard, which settles
//! the admission rate near the budget; the opposite direction is available
//! through [`AlConfig::raise_on_admit`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const THETA_MIN: f64 = 0.01;
pub const THETA_MAX: f64 = 0.99;

/// `1/m + B (1 - 1/m)`: the chance level for `m` uniformly distributed
/// classes, raised toward one by the budget.
pub fn init_threshold(num_classes: usize, budget: f64) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::TooFewClasses(num_classes));
    }
    if !(0.0..=1.0).contains(&budget) {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} outside [0, 1]"
        )));
    }
    let chance = 1.0 / num_classes as f64;
    Ok(chance + budget * (1.0 - chance))
}

/// Truncated ratio of the two largest scores. An all-zero top pair reads as
/// maximal uncertainty (0.5).
pub fn output_conflict(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::TooFewClasses(scores.len()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &s in scores {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    let denom = first + second;
    if denom == 0.0 {
        return Ok(0.5);
    }
    let conf = first / denom;
    if conf.is_nan() {
        return Ok(0.5);
    }
    Ok(conf.clamp(0.0, 1.0))
}

/// Fraction of the majority class among the samples a rule has absorbed.
pub fn class_purity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 1.0;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlConfig {
    /// Maximum admitted fraction `B`.
    pub budget: f64,
    /// Multiplicative threshold step.
    pub step: f64,
    pub seed: u64,
    /// Multiply the threshold by `r ~ U[0, 2)` for every sample.
    pub randomize: bool,
    /// Pin the threshold to a fixed value; disables adaptation and clamping.
    pub theta_override: Option<f64>,
    /// Raise the threshold after an admission and lower it after a discard.
    /// On confident streams this drives the threshold to its floor and
    /// almost nothing is admitted.
    pub raise_on_admit: bool,
}

impl Default for AlConfig {
    fn default() -> Self {
        AlConfig {
            budget: 0.4,
            step: 0.01,
            seed: 0,
            randomize: true,
            theta_override: None,
            raise_on_admit: false,
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.budget) {
            return Err(Error::InvalidConfig(format!(
                "al budget {} outside [0, 1]",
                self.budget
            )));
        }
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "al step {} outside (0, 1)",
                self.step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlState {
    pub budget: f64,
    pub theta: f64,
    pub step: f64,
    pub seen: u64,
    pub admitted: u64,
    pub rng_seed: u64,
    randomize: bool,
    frozen: bool,
    raise_on_admit: bool,
    rng: ChaCha8Rng,
}

impl AlState {
    pub fn new(cfg: &AlConfig, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        let (theta, frozen) = match cfg.theta_override {
            Some(t) => (t, true),
            None => (
                init_threshold(num_classes, cfg.budget)?.clamp(THETA_MIN, THETA_MAX),
                false,
            ),
        };
        Ok(AlState {
            budget: cfg.budget,
            theta,
            step: cfg.step,
            seen: 0,
            admitted: 0,
            rng_seed: cfg.seed,
            randomize: cfg.randomize,
            frozen,
            raise_on_admit: cfg.raise_on_admit,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    /// Counts one arriving sample; call before [`AlState::admit`].
    pub fn record_seen(&mut self) {
        self.seen += 1;
    }

    pub fn admitted_fraction(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.admitted as f64 / self.seen as f64
        }
    }

    pub fn budget_exhausted(&self) -> bool {
        self.admitted as f64 >= self.budget * self.seen as f64
    }

    /// Decides whether the current sample is trained on and adapts the
    /// threshold. One random draw is consumed per call regardless of outcome.
    pub fn admit(&mut self, out_conf: f64, in_conf: f64) -> bool {
        let r = if self.randomize {
            self.rng.random_range(0.0..2.0)
        } else {
            1.0
        };
        let theta_r = self.theta * r;
        let conflicted = out_conf <= theta_r || in_conf <= theta_r;
        let admitted = conflicted && !self.budget_exhausted();
        if admitted {
            self.admitted += 1;
        }
        if !self.frozen {
            let up = admitted == self.raise_on_admit;
            self.theta = if up {
                (self.theta * (1.0 + self.step)).min(THETA_MAX)
            } else {
                (self.theta * (1.0 - self.step)).max(THETA_MIN)
            };
        }
        admitted
    }
}
