//! Test-set evaluation: accuracy and confusion counts.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub n: usize,
    pub correct: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    fn empty(m: usize) -> Self {
        Evaluation {
            accuracy: 0.0,
            n: 0,
            correct: 0,
            confusion: vec![vec![0; m]; m],
        }
    }

    fn absorb(mut self, other: Evaluation) -> Self {
        self.n += other.n;
        self.correct += other.correct;
        for (a, b) in self.confusion.iter_mut().zip(other.confusion) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }

    /// Plain-text confusion table with one row per true class.
    pub fn confusion_table(&self, class_names: &[String]) -> String {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("true\\pred");
        for j in 0..self.confusion.len() {
            out.push('\t');
            out.push_str(&name(j));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&name(i));
            for c in row {
                out.push('\t');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates `predict` on every row in parallel. Counts are summed, so the
/// result does not depend on scheduling.
pub fn evaluate_with<F>(ds: &Dataset, num_classes: usize, predict: F) -> Result<Evaluation>
where
    F: Fn(&[f64]) -> Result<Prediction> + Sync,
{
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = num_classes.max(ds.num_classes);
    let ev = (0..ds.len())
        .into_par_iter()
        .map(|i| -> Result<Evaluation> {
            let pred = predict(ds.row(i))?;
            let mut e = Evaluation::empty(m);
            let truth = ds.label(i);
            e.n = 1;
            e.correct = usize::from(pred.class_label == truth);
            e.confusion[truth][pred.class_label] = 1;
            Ok(e)
        })
        .try_reduce(|| Evaluation::empty(m), |a, b| Ok(a.absorb(b)))?;
    Ok(Evaluation {
        accuracy: ev.correct as f64 / ev.n as f64,
        ..ev
    })
}

pub fn evaluate_model(model: &Model, ds: &Dataset) -> Result<Evaluation> {
    evaluate_with(ds, model.num_classes, |x| model.infer(x))
}
