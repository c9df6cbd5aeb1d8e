//! Rule-merging aggregation of partition models into one compact model.
//!
//! The pipeline is: pool every rule (weighted by its model's training
//! accuracy), drop rules with too little support inside their own model,
//! keep the `k` highest-weight rules as *dominant* and treat the rest as
//! *weaker*. Each weaker rule is assigned to the dominant rule whose
//! consequent hyperplane is most similar, provided the similarity reaches
//! the threshold; assigned rules are then folded into their dominant rule by
//! population-weighted averaging unless the union would blow up in volume.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{volume_of, Model, Rule};

#[derive(Debug, Clone, PartialEq)]
pub struct PooledRule {
    pub rule: Rule,
    pub partition_id: usize,
    /// Position of the rule inside its source model.
    pub rule_index: usize,
    /// Total rule population of the source model.
    pub source_population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRulePool {
    pub rules: Vec<PooledRule>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl WeightedRulePool {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Concatenates all rules, stamping each with its model's training accuracy.
pub fn extract_rules(models: &[Model]) -> Result<WeightedRulePool> {
    let first = models.first().ok_or(Error::EmptyModel)?;
    let (u, m) = (first.input_dim, first.num_classes);
    let mut rules = Vec::new();
    for model in models {
        if model.input_dim != u {
            return Err(Error::DimensionMismatch {
                expected: u,
                actual: model.input_dim,
            });
        }
        if model.num_classes != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: model.num_classes,
            });
        }
        let total = model.total_population();
        for (i, r) in model.rules.iter().enumerate() {
            let mut rule = r.clone();
            rule.weight = model.training_accuracy;
            rules.push(PooledRule {
                rule,
                partition_id: model.partition_id,
                rule_index: i,
                source_population: total,
            });
        }
    }
    Ok(WeightedRulePool {
        rules,
        input_dim: u,
        num_classes: m,
    })
}

/// Drops rules holding less than `pop_fraction` of their source model's
/// population. The largest rule of every model is always kept.
/// Returns the surviving pool and the removed rules.
pub fn remove_low_support(
    pool: &WeightedRulePool,
    pop_fraction: f64,
) -> (WeightedRulePool, Vec<PooledRule>) {
    let mut keep = vec![false; pool.rules.len()];
    let mut best: std::collections::BTreeMap<usize, usize> = Default::default();
    for (i, p) in pool.rules.iter().enumerate() {
        keep[i] = p.rule.population >= pop_fraction * p.source_population;
        let entry = best.entry(p.partition_id).or_insert(i);
        if p.rule.population > pool.rules[*entry].rule.population {
            *entry = i;
        }
    }
    for i in best.into_values() {
        keep[i] = true;
    }
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for (p, k) in pool.rules.iter().zip(keep) {
        if k {
            kept.push(p.clone());
        } else {
            removed.push(p.clone());
        }
    }
    (
        WeightedRulePool {
            rules: kept,
            input_dim: pool.input_dim,
            num_classes: pool.num_classes,
        },
        removed,
    )
}

/// Splits the pool into the `k` best rules (weight, then population, then
/// lower partition id) and the remaining weaker rules, both in rank order.
pub fn select_dominant(
    pool: &WeightedRulePool,
    k: usize,
) -> Result<(Vec<PooledRule>, Vec<PooledRule>)> {
    if k > pool.len() {
        return Err(Error::KTooLarge {
            k,
            available: pool.len(),
        });
    }
    let mut ranked: Vec<&PooledRule> = pool.rules.iter().collect();
    ranked.sort_by(|a, b| {
        b.rule
            .weight
            .total_cmp(&a.rule.weight)
            .then(b.rule.population.total_cmp(&a.rule.population))
            .then(a.partition_id.cmp(&b.partition_id))
    });
    let weaker = ranked.split_off(k);
    Ok((
        ranked.into_iter().cloned().collect(),
        weaker.into_iter().cloned().collect(),
    ))
}

/// Dihedral-angle similarity of one class column.
///
/// Normals are `a = (d_1..d_u, -1)` and `b = (w_1..w_u, +1)` built from the
/// non-intercept coefficients; the result is `arccos(cos(a, b)) / pi`.
/// Returns `None` when a normal has zero or non-finite length.
pub fn column_similarity(d: &Rule, w: &Rule, class: usize) -> Option<f64> {
    let u = d.input_dim();
    let mut dot = -1.0;
    let mut na = 1.0;
    let mut nb = 1.0;
    for j in 1..=u {
        let (a, b) = (d.consequent[(j, class)], w.consequent[(j, class)]);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    let denom = (na * nb).sqrt();
    if !(denom.is_finite() && denom > 0.0) || !dot.is_finite() {
        return None;
    }
    let cos = (dot / denom).clamp(-1.0, 1.0);
    Some(cos.acos() / std::f64::consts::PI)
}

/// Mean column similarity over all classes; degenerate columns count as 0.
pub fn hyperplane_similarity(d: &Rule, w: &Rule) -> f64 {
    let m = d.num_classes();
    let total: f64 = (0..m)
        .map(|c| column_similarity(d, w, c).unwrap_or(0.0))
        .sum();
    total / m as f64
}

/// `V_merged <= u * (V_d + V_w)`. False if any matrix is not positive
/// definite.
pub fn blowup_ok(d: &Rule, w: &Rule, merged_inv_dispersion: &DMatrix<f64>) -> bool {
    let (Ok(vd), Ok(vw), Ok(vm)) = (
        volume_of(&d.inv_dispersion),
        volume_of(&w.inv_dispersion),
        volume_of(merged_inv_dispersion),
    ) else {
        return false;
    };
    vm <= d.input_dim() as f64 * (vd + vw)
}

/// Precision of the moment-matched ellipsoid covering both rules: the
/// population-weighted covariance plus the spread between the two centers.
pub fn union_inv_dispersion(d: &Rule, w: &Rule) -> Option<DMatrix<f64>> {
    let cov_d = Cholesky::new(d.inv_dispersion.clone())?.inverse();
    let cov_w = Cholesky::new(w.inv_dispersion.clone())?.inverse();
    let n = d.population + w.population;
    if !(n > 0.0) {
        return None;
    }
    let (pd, pw) = (d.population / n, w.population / n);
    let delta = &d.center - &w.center;
    let cov = cov_d * pd + cov_w * pw + (&delta * delta.transpose()) * (pd * pw);
    Cholesky::new(cov).map(|c| c.inverse())
}

/// Population-weighted average of center, precision, consequent and weight;
/// populations add. Written as `a + (b - a) * N_w / N` so merging two copies
/// of a rule reproduces it exactly.
pub fn merge_pair(d: &Rule, w: &Rule) -> Result<Rule> {
    let n = d.population + w.population;
    if !(n > 0.0) {
        return Err(Error::ZeroPopulation);
    }
    let t = w.population / n;
    let blend = |a: f64, b: f64| a + (b - a) * t;
    Ok(Rule {
        center: d.center.zip_map(&w.center, blend),
        inv_dispersion: d.inv_dispersion.zip_map(&w.inv_dispersion, blend),
        population: n,
        consequent: d.consequent.zip_map(&w.consequent, blend),
        weight: blend(d.weight, w.weight),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub k: usize,
    pub sim_threshold: f64,
    pub pop_fraction: f64,
    /// Apply the low-support removal before selecting dominant rules.
    pub remove_low_support: bool,
    /// Dominant rules whose similarity is within this margin of the best
    /// one tie; a tie goes to the nearest center, then the lowest slot.
    pub sim_tie_tolerance: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            k: 5,
            sim_threshold: 0.9,
            pop_fraction: 0.05,
            remove_low_support: true,
            sim_tie_tolerance: 0.01,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.sim_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sim_threshold {} must be > 0",
                self.sim_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.pop_fraction) {
            return Err(Error::InvalidConfig(format!(
                "pop_fraction {} outside [0, 1)",
                self.pop_fraction
            )));
        }
        if !(self.sim_tie_tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sim_tie_tolerance {} must be >= 0",
                self.sim_tie_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fate", rename_all = "snake_case")]
pub enum Fate {
    RemovedLowSupport,
    Dominant { slot: usize },
    Merged { into: usize, similarity: f64 },
    DiscardedSimilarity { best_similarity: f64 },
    DiscardedBlowup { into: usize, similarity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFate {
    pub partition: usize,
    pub rule_index: usize,
    pub population: f64,
    pub weight: f64,
    #[serde(flatten)]
    pub fate: Fate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub rules_before: usize,
    pub removed_low_support: usize,
    pub pool_size: usize,
    pub k: usize,
    pub assigned: usize,
    pub merged: usize,
    pub discarded_similarity: usize,
    pub discarded_blowup: usize,
    pub degenerate_similarity: usize,
    pub rules_after: usize,
    pub fates: Vec<RuleFate>,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub model: Model,
    pub report: MergeReport,
}

fn fate_of(p: &PooledRule, fate: Fate) -> RuleFate {
    RuleFate {
        partition: p.partition_id,
        rule_index: p.rule_index,
        population: p.rule.population,
        weight: p.rule.weight,
        fate,
    }
}

/// Runs the two-phase merge on an already filtered pool and returns a model
/// with exactly `k` rules.
pub fn run_merge(pool: &WeightedRulePool, cfg: &MergeConfig) -> Result<MergeOutcome> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyModel);
    }
    let (dominant, weaker) = select_dominant(pool, cfg.k)?;
    let mut report = MergeReport {
        rules_before: pool.len(),
        pool_size: pool.len(),
        k: cfg.k,
        ..MergeReport::default()
    };
    for (slot, p) in dominant.iter().enumerate() {
        report.fates.push(fate_of(p, Fate::Dominant { slot }));
    }

    // Phase 1: assignment by maximum similarity. Flat hyperplanes of
    // different classes look alike, so near-ties go to the nearest center.
    let mut assigned: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dominant.len()];
    let mut sims = vec![0.0; dominant.len()];
    for (wi, w) in weaker.iter().enumerate() {
        for (di, d) in dominant.iter().enumerate() {
            let mut sim = 0.0;
            for c in 0..pool.num_classes {
                match column_similarity(&d.rule, &w.rule, c) {
                    Some(s) => sim += s,
                    None => report.degenerate_similarity += 1,
                }
            }
            sims[di] = sim / pool.num_classes as f64;
        }
        let best_sim = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut best = (0usize, f64::INFINITY);
        for (di, d) in dominant.iter().enumerate() {
            if sims[di] >= best_sim - cfg.sim_tie_tolerance {
                let dist = (&d.rule.center - &w.rule.center).norm_squared();
                if dist < best.1 {
                    best = (di, dist);
                }
            }
        }
        if best_sim >= cfg.sim_threshold {
            assigned[best.0].push((wi, sims[best.0]));
            report.assigned += 1;
        } else {
            report.discarded_similarity += 1;
            report.fates.push(fate_of(
                w,
                Fate::DiscardedSimilarity {
                    best_similarity: best_sim,
                },
            ));
        }
    }

    // Phase 2: sequential merging with the blow-up guard.
    let mut rules = Vec::with_capacity(dominant.len());
    for (di, d) in dominant.iter().enumerate() {
        let mut current = d.rule.clone();
        for &(wi, sim) in &assigned[di] {
            let w = &weaker[wi];
            let ok = union_inv_dispersion(&current, &w.rule)
                .is_some_and(|u| blowup_ok(&current, &w.rule, &u));
            if ok {
                current = merge_pair(&current, &w.rule)?;
                report.merged += 1;
                report.fates.push(fate_of(
                    w,
                    Fate::Merged {
                        into: di,
                        similarity: sim,
                    },
                ));
            } else {
                report.discarded_blowup += 1;
                report.fates.push(fate_of(
                    w,
                    Fate::DiscardedBlowup {
                        into: di,
                        similarity: sim,
                    },
                ));
            }
        }
        rules.push(current);
    }

    let total_pop: f64 = rules.iter().map(|r| r.population).sum();
    let accuracy = if total_pop > 0.0 {
        rules.iter().map(|r| r.weight * r.population).sum::<f64>() / total_pop
    } else {
        0.0
    };
    report.rules_after = rules.len();
    let mut model = Model::new(pool.input_dim, pool.num_classes);
    model.rules = rules;
    model.training_accuracy = accuracy.clamp(0.0, 1.0);
    Ok(MergeOutcome { model, report })
}

/// Full aggregation from partition models: extraction, optional low-support
/// removal, then [`run_merge`].
pub fn merge_models(models: &[Model], cfg: &MergeConfig) -> Result<MergeOutcome> {
    let pool = extract_rules(models)?;
    let r = pool.len();
    let (pool, removed) = if cfg.remove_low_support {
        remove_low_support(&pool, cfg.pop_fraction)
    } else {
        (pool, Vec::new())
    };
    let mut out = run_merge(&pool, cfg)?;
    out.report.rules_before = r;
    out.report.removed_low_support = removed.len();
    out.report.fates.splice(
        0..0,
        removed.iter().map(|p| fate_of(p, Fate::RemovedLowSupport)),
    );
    out.model.samples_seen = models.iter().map(|m| m.samples_seen).sum();
    out.model.samples_trained = models.iter().map(|m| m.samples_trained).sum();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn rule(center: &[f64], pop: f64, weight: f64) -> Rule {
        let mut r = Rule::spawn(center, 0, 2, 1.0);
        r.population = pop;
        r.weight = weight;
        r
    }

    fn model_with(pops: &[f64], acc: f64, partition: usize) -> Model {
        let mut m = Model::new(1, 2);
        m.training_accuracy = acc;
        m.partition_id = partition;
        for (i, p) in pops.iter().enumerate() {
            m.rules.push(rule(&[i as f64], *p, acc));
        }
        m
    }

    #[test]
    fn extraction_concatenates_and_weights() {
        let a = model_with(&[1.0, 2.0, 3.0], 0.84, 0);
        let b = model_with(&[1.0; 4], 0.5, 1);
        let pool = extract_rules(&[a, b]).unwrap();
        assert_eq!(pool.len(), 7);
        assert!(pool.rules[..3].iter().all(|p| p.rule.weight == 0.84));
        assert!(pool.rules[3..].iter().all(|p| p.rule.weight == 0.5));
    }

    #[test]
    fn extraction_rejects_mixed_dimensions() {
        let a = model_with(&[1.0], 0.8, 0);
        let mut b = Model::new(2, 2);
        b.rules.push(rule(&[0.0, 0.0], 1.0, 0.5));
        assert!(matches!(
            extract_rules(&[a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn low_support_examples() {
        let pool = extract_rules(&[model_with(&[96.0, 4.0], 0.9, 0)]).unwrap();
        let (kept, removed) = remove_low_support(&pool, 0.05);
        assert_eq!(kept.len(), 1);
        assert_eq!(removed[0].rule.population, 4.0);

        let pool = extract_rules(&[model_with(&[5.0; 20], 0.9, 0)]).unwrap();
        assert_eq!(remove_low_support(&pool, 0.05).0.len(), 20);

        let pool = extract_rules(&[model_with(&[1.0], 0.9, 0)]).unwrap();
        assert_eq!(remove_low_support(&pool, 0.99).0.len(), 1);
    }

    #[test]
    fn dominant_selection_order() {
        let models = [
            model_with(&[3.0, 9.0], 0.7, 0),
            model_with(&[5.0, 1.0, 2.0], 0.9, 1),
            model_with(&[9.0, 4.0], 0.7, 2),
        ];
        let pool = extract_rules(&models).unwrap();
        let (d, w) = select_dominant(&pool, 5).unwrap();
        assert_eq!((d.len(), w.len()), (5, 2));
        let order: Vec<(usize, f64)> = d
            .iter()
            .map(|p| (p.partition_id, p.rule.population))
            .collect();
        assert_eq!(
            order,
            vec![(1, 5.0), (1, 2.0), (1, 1.0), (0, 9.0), (2, 9.0)]
        );
        assert!(matches!(
            select_dominant(&pool, 8),
            Err(Error::KTooLarge { k: 8, available: 7 })
        ));
    }

    fn with_slopes(slopes: &[f64]) -> Rule {
        let mut r = Rule::spawn(&vec![0.0; slopes.len()], 0, 1, 1.0);
        for (j, s) in slopes.iter().enumerate() {
            r.consequent[(j + 1, 0)] = *s;
        }
        r
    }

    #[test]
    fn similarity_examples() {
        let flat = with_slopes(&[0.0, 0.0, 0.0]);
        assert_eq!(hyperplane_similarity(&flat, &flat), 1.0);
        // Opposite slopes read as identical under this normal construction.
        assert_relative_eq!(
            hyperplane_similarity(&with_slopes(&[1.0]), &with_slopes(&[-1.0])),
            1.0
        );
        assert_relative_eq!(
            hyperplane_similarity(&with_slopes(&[1.0]), &with_slopes(&[1.0])),
            0.5
        );
    }

    #[test]
    fn similarity_averages_columns() {
        let mut a = Rule::spawn(&[0.0], 0, 2, 1.0);
        let b = a.clone();
        a.consequent[(1, 1)] = 1.0;
        // Column 0: flat vs flat = 1. Column 1: slope 1 vs flat -> acos(-1/sqrt 2)/pi = 0.75.
        assert_relative_eq!(hyperplane_similarity(&a, &b), (1.0 + 0.75) / 2.0);
    }

    #[test]
    fn blowup_examples() {
        let d = rule(&[0.0, 0.0], 1.0, 1.0);
        assert!(blowup_ok(&d, &d, &d.inv_dispersion));
        let merged = DMatrix::identity(2, 2);
        assert!(blowup_ok(&d, &d, &merged));
        let not_pd = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(!blowup_ok(&d, &d, &not_pd));
    }

    #[test]
    fn far_apart_thin_rules_blow_up() {
        // Brute-force search over the spread of two thin, parallel ellipsoids
        // and their separation until the covering ellipsoid is too large.
        let mut found = None;
        'search: for exp in 0..8 {
            let sharp = 10f64.powi(exp);
            for sep in [1.0, 10.0, 100.0, 1000.0] {
                let mut d = rule(&[0.0, 0.0], 10.0, 1.0);
                let mut w = rule(&[0.0, sep], 10.0, 1.0);
                let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, sharp]));
                d.inv_dispersion = s.clone();
                w.inv_dispersion = s;
                let u = union_inv_dispersion(&d, &w).unwrap();
                if !blowup_ok(&d, &w, &u) {
                    found = Some((sharp, sep));
                    break 'search;
                }
            }
        }
        let (sharp, sep) = found.expect("no blow-up configuration found");
        // Independent check: union variance along y is 1/sharp + sep^2/4.
        let v_single = 1.0 / sharp.sqrt();
        let v_union = (1.0 / sharp + sep * sep / 4.0).sqrt();
        assert!(v_union > 2.0 * 2.0 * v_single);
    }

    #[test]
    fn merge_pair_examples() {
        let m = merge_pair(&rule(&[0.0], 2.0, 1.0), &rule(&[2.0], 2.0, 1.0)).unwrap();
        assert_eq!(m.center[0], 1.0);
        let m = merge_pair(&rule(&[0.0], 3.0, 0.9), &rule(&[4.0], 1.0, 0.5)).unwrap();
        assert_eq!(m.center[0], 1.0);
        assert_eq!(m.population, 4.0);
        assert_relative_eq!(m.weight, 0.8);
        assert!(matches!(
            merge_pair(&rule(&[0.0], 0.0, 1.0), &rule(&[0.0], 0.0, 1.0)),
            Err(Error::ZeroPopulation)
        ));
    }

    #[test]
    fn merge_with_nothing_similar_keeps_dominant() {
        let mut models = Vec::new();
        for p in 0..4 {
            let mut m = model_with(&[10.0, 10.0], 0.5 + p as f64 * 0.1, p);
            for r in &mut m.rules {
                r.consequent[(1, 0)] = 3.0;
            }
            models.push(m);
        }
        let pool = extract_rules(&models).unwrap();
        let cfg = MergeConfig {
            k: 3,
            ..MergeConfig::default()
        };
        let out = run_merge(&pool, &cfg).unwrap();
        let (dominant, _) = select_dominant(&pool, 3).unwrap();
        assert_eq!(out.model.rules.len(), 3);
        for (got, want) in out.model.rules.iter().zip(&dominant) {
            assert_eq!(got, &want.rule);
        }
        assert_eq!(out.report.discarded_similarity, 5);
    }

    #[test]
    fn k_equal_to_pool_is_identity() {
        let models = [model_with(&[1.0, 2.0], 0.7, 0), model_with(&[3.0], 0.6, 1)];
        let pool = extract_rules(&models).unwrap();
        let out = run_merge(
            &pool,
            &MergeConfig {
                k: 3,
                ..MergeConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.model.rules.len(), 3);
        assert_eq!(out.report.assigned, 0);
    }

    #[test]
    fn duplicates_merge_idempotently() {
        let mut m = Model::new(2, 2);
        m.training_accuracy = 0.8;
        let mut r = Rule::spawn(&[0.3, -1.2], 1, 2, 2.0);
        r.population = 7.0;
        r.consequent[(1, 0)] = 0.4;
        r.consequent[(2, 1)] = -2.5;
        r.inv_dispersion[(0, 1)] = 0.3;
        r.inv_dispersion[(1, 0)] = 0.3;
        m.rules.push(r.clone());
        let models: Vec<Model> = (0..3)
            .map(|p| Model {
                partition_id: p,
                ..m.clone()
            })
            .collect();
        let cfg = MergeConfig {
            k: 1,
            sim_threshold: 1e-9,
            ..MergeConfig::default()
        };
        let out = merge_models(&models, &cfg).unwrap();
        assert_eq!(out.report.merged, 2);
        let got = &out.model.rules[0];
        assert_eq!(got.center, r.center);
        assert_eq!(got.inv_dispersion, r.inv_dispersion);
        assert_eq!(got.consequent, r.consequent);
        assert_eq!(got.population, 21.0);
    }

    #[test]
    fn flat_ties_go_to_nearest_center() {
        // Flat rules all score exactly 1 against each other.
        let mut m = Model::new(1, 2);
        m.training_accuracy = 0.9;
        m.rules = vec![rule(&[-3.0], 50.0, 0.9), rule(&[3.0], 40.0, 0.9)];
        let mut weak = Model::new(1, 2);
        weak.training_accuracy = 0.6;
        weak.partition_id = 1;
        weak.rules = vec![rule(&[2.5], 10.0, 0.6), rule(&[-2.0], 10.0, 0.6)];
        let out = merge_models(
            &[m, weak],
            &MergeConfig {
                k: 2,
                remove_low_support: false,
                ..MergeConfig::default()
            },
        )
        .unwrap();
        let into: Vec<usize> = out
            .report
            .fates
            .iter()
            .filter_map(|f| match f.fate {
                Fate::Merged { into, .. } => Some(into),
                _ => None,
            })
            .collect();
        assert_eq!(into, vec![0, 1]);
        assert_eq!(out.model.rules[0].population, 60.0);
        assert_eq!(out.model.rules[1].population, 50.0);
    }
}
