//! Model-level majority voting over the partition models.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_with, Evaluation};
use crate::model::{Model, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    models: Vec<Model>,
    input_dim: usize,
    num_classes: usize,
}

impl Ensemble {
    pub fn new(models: Vec<Model>) -> Result<Self> {
        let first = models.first().ok_or(Error::EmptyModel)?;
        let (u, m) = (first.input_dim, first.num_classes);
        for model in &models {
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
            if model.is_empty() {
                return Err(Error::EmptyModel);
            }
        }
        Ok(Ensemble {
            models,
            input_dim: u,
            num_classes: m,
        })
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn total_rules(&self) -> usize {
        self.models.iter().map(|m| m.rules.len()).sum()
    }

    pub fn vote(&self, x: &[f64]) -> Result<Prediction> {
        vote(self, x)
    }
}

/// Every model casts its argmax class; the plurality wins. A tie goes to the
/// tied class with the largest summed raw score, then to the lowest index.
/// Scores are vote counts divided by the number of models.
pub fn vote(ensemble: &Ensemble, x: &[f64]) -> Result<Prediction> {
    let m = ensemble.num_classes;
    let mut counts = vec![0usize; m];
    let mut raw: Vec<Vec<f64>> = vec![Vec::with_capacity(ensemble.len()); m];
    for model in &ensemble.models {
        let p = model.infer(x)?;
        counts[p.class_label] += 1;
        for (c, s) in p.scores.into_iter().enumerate() {
            raw[c].push(s);
        }
    }
    let top = *counts.iter().max().unwrap_or(&0);
    let tied: Vec<usize> = (0..m).filter(|&c| counts[c] == top).collect();
    let class_label = if tied.len() == 1 {
        tied[0]
    } else {
        // Sorting before summing keeps the sum independent of model order.
        let sum = |c: usize| {
            let mut v = raw[c].clone();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>()
        };
        let mut best = tied[0];
        let mut best_sum = sum(best);
        for &c in &tied[1..] {
            let s = sum(c);
            if s > best_sum {
                best = c;
                best_sum = s;
            }
        }
        best
    };
    let l = ensemble.len() as f64;
    Ok(Prediction {
        class_label,
        scores: counts.into_iter().map(|c| c as f64 / l).collect(),
    })
}

pub fn vote_batch(ensemble: &Ensemble, ds: &Dataset) -> Result<Evaluation> {
    evaluate_with(ds, ensemble.num_classes, |x| vote(ensemble, x))
}
