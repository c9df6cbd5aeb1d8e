//! Single-pass evolving learner.
//!
//! Every admitted sample does exactly one of two things to the rule base: it
//! spawns a new rule at its own position, or it adapts the winning rule
//! (incremental mean, rank-one precision update, population count). The
//! affected rule's consequent is then refined by locally weighted recursive
//! least squares, and rules whose time-averaged contribution has faded are
//! pruned.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::active::{class_purity, output_conflict, AlConfig, AlState};
use crate::error::{Error, Result};
use crate::model::{
    argmax, blend, check_finite, normalize_from_distances, symmetrize, Model, Prediction, Rule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// A new rule is spawned when `d * V` exceeds this, where `d` is the
    /// Mahalanobis distance to the nearest rule and `V` the volume of a
    /// freshly spawned rule.
    pub growth_threshold: f64,
    /// Rules whose average contribution drops below this fraction of the
    /// mean contribution are pruned.
    pub prune_fraction: f64,
    /// Isotropic precision `scale * I` given to spawned rules.
    pub init_dispersion_scale: f64,
    /// Initial RLS covariance magnitude.
    pub rls_omega: f64,
    pub rls_forgetting: f64,
    /// Samples a rule must witness before it can be pruned.
    pub min_age_for_prune: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            growth_threshold: 3.0,
            prune_fraction: 0.1,
            init_dispersion_scale: 1.0,
            rls_omega: 1e5,
            rls_forgetting: 0.98,
            min_age_for_prune: 50,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.growth_threshold > 0.0) {
            return bad(format!(
                "growth_threshold {} must be > 0",
                self.growth_threshold
            ));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return bad(format!(
                "prune_fraction {} outside (0, 1)",
                self.prune_fraction
            ));
        }
        if !(self.init_dispersion_scale > 0.0) {
            return bad(format!(
                "init_dispersion_scale {} must be > 0",
                self.init_dispersion_scale
            ));
        }
        if !(self.rls_omega > 0.0) {
            return bad(format!("rls_omega {} must be > 0", self.rls_omega));
        }
        if !(self.rls_forgetting > 0.9 && self.rls_forgetting <= 1.0) {
            return bad(format!(
                "rls_forgetting {} outside (0.9, 1]",
                self.rls_forgetting
            ));
        }
        if self.min_age_for_prune < 1 {
            return bad("min_age_for_prune must be >= 1".into());
        }
        Ok(())
    }

    /// Volume of a rule spawned with precision `init_dispersion_scale * I`.
    pub fn spawn_volume(&self, input_dim: usize) -> f64 {
        (-0.5 * input_dim as f64 * self.init_dispersion_scale.ln()).exp()
    }
}

/// Whether the winning-rule update was kept or undone by the degeneracy guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinnerUpdate {
    Applied,
    RolledBack,
}

/// Adapts the winning rule toward `x`.
///
/// With `N` the current population and `a = 1/(N+1)`:
/// the center moves by `(x - C)/(N+1)`, the precision takes the rank-one
/// form `S/(1-a) - a/(1-a) * (S v')(S v')^T / (1 + a v^T S v)` with
/// `v = x - C_old`, `v' = x - C_new`, and `N` grows by one. If the new
/// precision is not positive definite the center and precision are left
/// as they were and only `N` is incremented.
pub fn update_winning_rule(rule: &mut Rule, x: &[f64]) -> Result<WinnerUpdate> {
    let u = rule.input_dim();
    if x.len() != u {
        return Err(Error::DimensionMismatch {
            expected: u,
            actual: x.len(),
        });
    }
    let n = rule.population;
    let alpha = 1.0 / (n + 1.0);

    let mut new_center = rule.center.clone();
    for i in 0..u {
        new_center[i] += (x[i] - rule.center[i]) / (n + 1.0);
    }

    let s = &rule.inv_dispersion;
    let mut s_v_new = vec![0.0; u];
    let mut q_prev = 0.0;
    for i in 0..u {
        let mut acc_new = 0.0;
        let mut acc_prev = 0.0;
        for j in 0..u {
            acc_new += s[(i, j)] * (x[j] - new_center[j]);
            acc_prev += s[(i, j)] * (x[j] - rule.center[j]);
        }
        s_v_new[i] = acc_new;
        q_prev += (x[i] - rule.center[i]) * acc_prev;
    }

    let scale = 1.0 / (1.0 - alpha);
    let rank_one = alpha * scale / (1.0 + alpha * q_prev);
    let mut updated = DMatrix::zeros(u, u);
    for i in 0..u {
        for j in 0..u {
            updated[(i, j)] = s[(i, j)] * scale - rank_one * s_v_new[i] * s_v_new[j];
        }
    }
    symmetrize(&mut updated);

    rule.population = n + 1.0;
    let finite = updated.iter().all(|v| v.is_finite());
    if finite && Cholesky::new(updated.clone()).is_some() {
        rule.center = new_center;
        rule.inv_dispersion = updated;
        Ok(WinnerUpdate::Applied)
    } else {
        Ok(WinnerUpdate::RolledBack)
    }
}

/// True when the model is empty or `x` is far enough from every rule that
/// `d * V` exceeds the growth threshold.
pub fn should_grow(model: &Model, x: &[f64], cfg: &LearnerConfig) -> Result<bool> {
    if model.is_empty() {
        return Ok(true);
    }
    let d2 = model.distances_sq(x)?;
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(growth_statistic(min, model.input_dim, cfg) > cfg.growth_threshold)
}

fn growth_statistic(min_dist_sq: f64, input_dim: usize, cfg: &LearnerConfig) -> f64 {
    min_dist_sq.sqrt() * cfg.spawn_volume(input_dim)
}

/// One step of locally weighted recursive least squares on the extended
/// input `(1, x)` toward `target`. Returns `false` (and leaves both
/// matrices untouched) when the gain denominator is degenerate.
///
/// While the covariance diagonal exceeds `omega` the forgetting factor is
/// suspended, which keeps unexcited directions from winding up.
pub fn rls_update(
    consequent: &mut DMatrix<f64>,
    cov: &mut DMatrix<f64>,
    x: &[f64],
    target: &[f64],
    lambda_weight: f64,
    forgetting: f64,
    omega: f64,
) -> Result<bool> {
    if !(lambda_weight > 0.0 && lambda_weight <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda_weight {lambda_weight} outside (0, 1]"
        )));
    }
    let p = x.len() + 1;
    if consequent.nrows() != p || cov.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: consequent.nrows(),
            actual: p,
        });
    }
    if target.len() != consequent.ncols() {
        return Err(Error::DimensionMismatch {
            expected: consequent.ncols(),
            actual: target.len(),
        });
    }

    let xe = |i: usize| if i == 0 { 1.0 } else { x[i - 1] };
    let mut px = vec![0.0; p];
    let mut xpx = 0.0;
    for i in 0..p {
        let mut acc = 0.0;
        for j in 0..p {
            acc += cov[(i, j)] * xe(j);
        }
        px[i] = acc;
        xpx += xe(i) * acc;
    }
    let max_diag = (0..p).map(|i| cov[(i, i)]).fold(0.0f64, f64::max);
    let forgetting = if max_diag > omega { 1.0 } else { forgetting };
    let denom = forgetting + lambda_weight * xpx;
    if !(denom.is_finite() && denom > f64::EPSILON) {
        return Ok(false);
    }
    let gain: Vec<f64> = px.iter().map(|v| lambda_weight * v / denom).collect();

    for c in 0..consequent.ncols() {
        let mut predicted = 0.0;
        for i in 0..p {
            predicted += xe(i) * consequent[(i, c)];
        }
        let err = target[c] - predicted;
        for i in 0..p {
            consequent[(i, c)] += gain[i] * err;
        }
    }
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] = (cov[(i, j)] - gain[i] * px[j]) / forgetting;
        }
    }
    symmetrize(cov);
    Ok(true)
}

/// Per-rule bookkeeping kept beside the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleStats {
    /// Stable identity; survives pruning of other rules.
    pub id: u64,
    pub rls_cov: DMatrix<f64>,
    pub class_counts: Vec<u64>,
    /// Samples witnessed since the rule was spawned.
    pub age: u64,
    /// Running sum of normalized firing strength.
    pub contribution: f64,
}

impl RuleStats {
    pub fn average_contribution(&self) -> f64 {
        if self.age == 0 {
            0.0
        } else {
            self.contribution / self.age as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnerStats {
    pub samples_learned: u64,
    pub rejected_nonfinite: u64,
    pub rls_skipped: u64,
    pub rollbacks: u64,
    pub rules_spawned: u64,
    pub rules_pruned: u64,
    pub pruned_population: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnOutcome {
    Spawned { rule_id: u64 },
    Updated { rule_id: u64, rolled_back: bool },
    Rejected,
}

/// Everything the filter and the learner need to know about one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub d2: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub prediction: Prediction,
    /// Index of the nearest rule.
    pub winner: usize,
    /// Class purity of the nearest rule.
    pub input_conflict: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnStep {
    pub outcome: LearnOutcome,
    pub pruned: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    model: Model,
    aux: Vec<RuleStats>,
    next_id: u64,
    stats: LearnerStats,
}

impl Learner {
    pub fn new(input_dim: usize, num_classes: usize, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        if num_classes == 0 {
            return Err(Error::TooFewClasses(0));
        }
        Ok(Learner {
            cfg,
            model: Model::new(input_dim, num_classes),
            aux: Vec::new(),
            next_id: 0,
            stats: LearnerStats::default(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn rule_stats(&self) -> &[RuleStats] {
        &self.aux
    }

    pub fn stats(&self) -> &LearnerStats {
        &self.stats
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.model.infer(x)
    }

    /// Class purity of the rule that `x` would activate most.
    pub fn input_conflict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.assess(x)?.input_conflict)
    }

    /// Distances, activations, prediction and winner for `x`, computed once
    /// so that filtering and learning can share them.
    pub fn assess(&self, x: &[f64]) -> Result<Assessment> {
        if self.model.is_empty() {
            return Err(Error::EmptyModel);
        }
        check_finite(x)?;
        let d2 = self.model.distances_sq(x)?;
        let lambdas = normalize_from_distances(&d2);
        let prediction = blend(&self.model, x, &lambdas);
        let winner = argmin(&d2);
        Ok(Assessment {
            input_conflict: class_purity(&self.aux[winner].class_counts),
            d2,
            lambdas,
            prediction,
            winner,
        })
    }

    fn spawn(&mut self, x: &[f64], label: usize) -> u64 {
        let m = self.model.num_classes;
        let u = self.model.input_dim;
        self.model
            .rules
            .push(Rule::spawn(x, label, m, self.cfg.init_dispersion_scale));
        let mut counts = vec![0; m];
        counts[label] = 1;
        let id = self.next_id;
        self.next_id += 1;
        self.aux.push(RuleStats {
            id,
            rls_cov: DMatrix::identity(u + 1, u + 1) * self.cfg.rls_omega,
            class_counts: counts,
            age: 0,
            contribution: 0.0,
        });
        self.stats.rules_spawned += 1;
        id
    }

    /// Learns one labeled sample. Non-finite samples are counted and skipped
    /// without touching the model.
    pub fn learn_one(&mut self, x: &[f64], label: usize) -> Result<LearnStep> {
        self.learn_inner(x, label, None)
    }

    /// [`Learner::learn_one`] reusing an assessment of `x` made against the
    /// current model.
    pub fn learn_assessed(&mut self, x: &[f64], label: usize, a: Assessment) -> Result<LearnStep> {
        if a.d2.len() != self.model.rules.len() {
            return Err(Error::DimensionMismatch {
                expected: self.model.rules.len(),
                actual: a.d2.len(),
            });
        }
        self.learn_inner(x, label, Some((a.d2, a.lambdas)))
    }

    fn learn_inner(
        &mut self,
        x: &[f64],
        label: usize,
        pre: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<LearnStep> {
        let u = self.model.input_dim;
        let m = self.model.num_classes;
        if x.len() != u {
            return Err(Error::DimensionMismatch {
                expected: u,
                actual: x.len(),
            });
        }
        if label >= m {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: m,
            });
        }
        if check_finite(x).is_err() {
            self.stats.rejected_nonfinite += 1;
            return Ok(LearnStep {
                outcome: LearnOutcome::Rejected,
                pruned: Vec::new(),
            });
        }

        let (mut d2, mut lambdas) = match pre {
            Some(p) => p,
            None => {
                let d2 = self.model.distances_sq(x)?;
                let l = normalize_from_distances(&d2);
                (d2, l)
            }
        };
        let grow = match d2.iter().copied().reduce(f64::min) {
            None => true,
            Some(min) => growth_statistic(min, u, &self.cfg) > self.cfg.growth_threshold,
        };

        let (target_idx, outcome) = if grow {
            let id = self.spawn(x, label);
            d2.push(0.0);
            lambdas = normalize_from_distances(&d2);
            (d2.len() - 1, LearnOutcome::Spawned { rule_id: id })
        } else {
            let w = argmin(&d2);
            let applied = update_winning_rule(&mut self.model.rules[w], x)?;
            let rolled_back = applied == WinnerUpdate::RolledBack;
            if rolled_back {
                self.stats.rollbacks += 1;
            }
            self.aux[w].class_counts[label] += 1;
            (
                w,
                LearnOutcome::Updated {
                    rule_id: self.aux[w].id,
                    rolled_back,
                },
            )
        };

        let mut target = vec![0.0; m];
        target[label] = 1.0;
        let updated = rls_update(
            &mut self.model.rules[target_idx].consequent,
            &mut self.aux[target_idx].rls_cov,
            x,
            &target,
            lambdas[target_idx],
            self.cfg.rls_forgetting,
            self.cfg.rls_omega,
        )?;
        if !updated {
            self.stats.rls_skipped += 1;
        }

        for (st, l) in self.aux.iter_mut().zip(&lambdas) {
            st.age += 1;
            st.contribution += l;
        }
        self.stats.samples_learned += 1;
        let pruned = self.prune_rules();
        Ok(LearnStep { outcome, pruned })
    }

    /// Removes mature rules whose average normalized firing strength is
    /// below `prune_fraction` of the mean over all rules. The last rule is
    /// never removed. Returns the ids of pruned rules.
    pub fn prune_rules(&mut self) -> Vec<u64> {
        if self.aux.len() < 2 {
            return Vec::new();
        }
        let avgs: Vec<f64> = self
            .aux
            .iter()
            .map(RuleStats::average_contribution)
            .collect();
        let mean = avgs.iter().sum::<f64>() / avgs.len() as f64;
        let cutoff = self.cfg.prune_fraction * mean;
        let min_age = self.cfg.min_age_for_prune;
        let doomed: Vec<bool> = self
            .aux
            .iter()
            .zip(&avgs)
            .map(|(st, avg)| st.age >= min_age && *avg < cutoff)
            .collect();
        if !doomed.iter().any(|d| *d) {
            return Vec::new();
        }
        let mut keep_anyway = None;
        if doomed.iter().all(|d| *d) {
            keep_anyway = Some(argmax(&avgs));
        }

        let mut pruned = Vec::new();
        let mut i = 0;
        let mut idx = 0;
        while i < self.aux.len() {
            if doomed[idx] && keep_anyway != Some(idx) {
                let rule = self.model.rules.remove(i);
                let st = self.aux.remove(i);
                self.stats.rules_pruned += 1;
                self.stats.pruned_population += rule.population;
                pruned.push(st.id);
            } else {
                i += 1;
            }
            idx += 1;
        }
        pruned
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Prequential training outcome for one stream.
#[derive(Debug, Clone)]
pub struct TrainedPartition {
    pub model: Model,
    pub stats: LearnerStats,
    pub al_theta: Option<f64>,
}

/// Trains one model over a labeled stream in a single pass.
///
/// Each sample is first predicted by the current model (when it has rules).
/// With active learning enabled, that prediction and the winning rule's
/// class purity feed the admission filter; rejected samples are not learned.
/// `training_accuracy` is the prequential accuracy over admitted samples that
/// arrived after the first rule existed, and every rule inherits it as its
/// weight.
pub fn train_partition<'a, I>(
    stream: I,
    input_dim: usize,
    num_classes: usize,
    cfg: &LearnerConfig,
    al: Option<&AlConfig>,
    partition_id: usize,
) -> Result<TrainedPartition>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut learner = Learner::new(input_dim, num_classes, cfg.clone())?;
    let mut al_state = match al {
        Some(c) => Some(AlState::new(c, num_classes.max(2))?),
        None => None,
    };

    let mut seen = 0u64;
    let mut evaluated = 0u64;
    let mut correct = 0u64;
    for (x, label) in stream {
        seen += 1;
        if x.len() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                actual: x.len(),
            });
        }
        if check_finite(x).is_err() {
            learner.learn_one(x, label)?;
            continue;
        }
        let exhausted = al_state.as_mut().is_some_and(|st| {
            st.record_seen();
            st.budget_exhausted()
        });
        if exhausted {
            // Rejected whatever the conflict; the filter still advances.
            if let Some(st) = al_state.as_mut() {
                st.admit(0.0, 0.0);
            }
            continue;
        }
        let assessment = if learner.model.is_empty() {
            None
        } else {
            Some(learner.assess(x)?)
        };
        if let Some(st) = al_state.as_mut() {
            let (out_conf, in_conf) = match &assessment {
                Some(a) => (output_conflict(&a.prediction.scores)?, a.input_conflict),
                None => (0.0, 0.0),
            };
            if !st.admit(out_conf, in_conf) {
                continue;
            }
        }
        match assessment {
            Some(a) => {
                evaluated += 1;
                if a.prediction.class_label == label {
                    correct += 1;
                }
                learner.learn_assessed(x, label, a)?;
            }
            None => {
                learner.learn_one(x, label)?;
            }
        }
    }

    if seen == 0 {
        return Err(Error::EmptyStream);
    }
    if learner.stats.samples_learned == 0 {
        return Err(Error::NothingTrained { seen });
    }

    let accuracy = if evaluated == 0 {
        0.0
    } else {
        correct as f64 / evaluated as f64
    };
    let stats = learner.stats.clone();
    let mut model = learner.into_model();
    model.training_accuracy = accuracy;
    model.partition_id = partition_id;
    model.samples_seen = seen;
    model.samples_trained = stats.samples_learned;
    for rule in &mut model.rules {
        rule.weight = accuracy;
    }
    Ok(TrainedPartition {
        model,
        stats,
        al_theta: al_state.map(|s| s.theta),
    })
}
