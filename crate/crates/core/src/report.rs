//! Run reports as flat `key=value` text, one metric per line.
//!
//! Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `structure` | free-form run name |
//! | `al_enabled`, `aggregation`, `normalization` | run settings |
//! | `partitions`, `parallelism`, `n_train`, `n_test` | sizes |
//! | `samples_seen`, `samples_trained` | stream counters over all partitions |
//! | `compression_rate` | `samples_trained / samples_seen`, exactly 1 without active learning |
//! | `accuracy` | test accuracy of the aggregated classifier |
//! | `rules_before`, `rules_after` | rule counts before and after aggregation |
//! | `merge.*` | merge counters (merge runs only) |
//! | `partition.<i>.*` | per-partition rules, counters and training accuracy |
//! | `time.*` | wall-clock seconds; excluded from [`RunReport::deterministic_text`] |

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::merge::MergeReport;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub rules: usize,
    pub samples_seen: u64,
    pub samples_trained: u64,
    pub training_accuracy: f64,
    pub time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub structure: String,
    pub al_enabled: bool,
    pub aggregation: String,
    pub normalization: String,
    pub partitions: usize,
    pub parallelism: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub samples_seen: u64,
    pub samples_trained: u64,
    pub accuracy: f64,
    pub rules_before: usize,
    pub rules_after: usize,
    pub merge: Option<MergeReport>,
    pub per_partition: Vec<PartitionSummary>,
    pub train_time: Duration,
    pub aggregate_time: Duration,
    pub eval_time: Duration,
}

impl RunReport {
    pub fn compression_rate(&self) -> f64 {
        if !self.al_enabled || self.samples_seen == 0 {
            1.0
        } else {
            self.samples_trained as f64 / self.samples_seen as f64
        }
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| e.push((k.to_string(), v));
        put("structure", self.structure.clone());
        put("al_enabled", self.al_enabled.to_string());
        put("aggregation", self.aggregation.clone());
        put("normalization", self.normalization.clone());
        put("partitions", self.partitions.to_string());
        put("parallelism", self.parallelism.to_string());
        put("n_train", self.n_train.to_string());
        put("n_test", self.n_test.to_string());
        put("samples_seen", self.samples_seen.to_string());
        put("samples_trained", self.samples_trained.to_string());
        put(
            "compression_rate",
            format!("{:.6}", self.compression_rate()),
        );
        put("accuracy", format!("{:.6}", self.accuracy));
        put("rules_before", self.rules_before.to_string());
        put("rules_after", self.rules_after.to_string());
        if let Some(m) = &self.merge {
            put("merge.k", m.k.to_string());
            put(
                "merge.removed_low_support",
                m.removed_low_support.to_string(),
            );
            put("merge.pool_size", m.pool_size.to_string());
            put("merge.assigned", m.assigned.to_string());
            put("merge.merged", m.merged.to_string());
            put(
                "merge.discarded_similarity",
                m.discarded_similarity.to_string(),
            );
            put("merge.discarded_blowup", m.discarded_blowup.to_string());
            put(
                "merge.degenerate_similarity",
                m.degenerate_similarity.to_string(),
            );
        }
        for (i, p) in self.per_partition.iter().enumerate() {
            put(&format!("partition.{i}.rules"), p.rules.to_string());
            put(
                &format!("partition.{i}.samples_seen"),
                p.samples_seen.to_string(),
            );
            put(
                &format!("partition.{i}.samples_trained"),
                p.samples_trained.to_string(),
            );
            put(
                &format!("partition.{i}.training_accuracy"),
                format!("{:.6}", p.training_accuracy),
            );
        }
        put("time.train_s", secs(self.train_time));
        put("time.aggregate_s", secs(self.aggregate_time));
        put("time.eval_s", secs(self.eval_time));
        for (i, p) in self.per_partition.iter().enumerate() {
            put(&format!("time.partition.{i}_s"), secs(p.time));
        }
        e
    }

    pub fn to_text(&self) -> String {
        render(self.entries().into_iter())
    }

    /// The report without timing lines; equal across reruns with the same
    /// inputs and seeds.
    pub fn deterministic_text(&self) -> String {
        render(
            self.entries()
                .into_iter()
                .filter(|(k, _)| !k.starts_with("time.")),
        )
    }

    pub fn human_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("structure", self.structure.clone()),
            ("active learning", on_off(self.al_enabled).into()),
            ("aggregation", self.aggregation.clone()),
            ("partitions", self.partitions.to_string()),
            ("accuracy", format!("{:.2}%", 100.0 * self.accuracy)),
            (
                "compression rate",
                format!("{:.3}", self.compression_rate()),
            ),
            ("rules before", self.rules_before.to_string()),
            ("rules after", self.rules_after.to_string()),
            ("train time", format!("{} s", secs(self.train_time))),
            ("aggregate time", format!("{} s", secs(self.aggregate_time))),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<18} {v}");
        }
        out
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn secs(d: Duration) -> String {
    format!("{:.6}", d.as_secs_f64())
}

fn render(entries: impl Iterator<Item = (String, String)>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// Writes the key-value report to `path` and prints the human table.
pub fn emit_report(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.to_text()).map_err(|e| Error::io(path, e))?;
    print!("{}", report.human_table());
    Ok(())
}

/// Parses `key=value` report text back into pairs.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
