//! End-to-end runs of the four framework structures (merge or vote, with or
//! without active learning) and the `k` sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::active::AlConfig;
use crate::data::{load_csv, normalize, synth_stream, CsvOptions, Dataset, NormMethod, SynthSpec};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::merge::{extract_rules, merge_models, remove_low_support, run_merge, MergeConfig};
use crate::metrics::evaluate_model;
use crate::partition::{make_plan, train_all, InitialModel};
use crate::report::{PartitionSummary, RunReport};
use crate::vote::{vote_batch, Ensemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Merge,
    Vote,
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregation::Merge => "merge",
            Aggregation::Vote => "vote",
        })
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merge" => Ok(Aggregation::Merge),
            "vote" => Ok(Aggregation::Vote),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation `{other}` (merge|vote)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureSpec {
    pub name: String,
    pub al_enabled: bool,
    pub aggregation: Aggregation,
    pub partitions: usize,
    pub parallelism: usize,
    pub learner: LearnerConfig,
    pub merge: MergeConfig,
    pub al: AlConfig,
}

impl Default for StructureSpec {
    fn default() -> Self {
        StructureSpec {
            name: "merge".into(),
            al_enabled: false,
            aggregation: Aggregation::Merge,
            partitions: 8,
            parallelism: 1,
            learner: LearnerConfig::default(),
            merge: MergeConfig::default(),
            al: AlConfig::default(),
        }
    }
}

impl StructureSpec {
    pub fn new(name: &str, al_enabled: bool, aggregation: Aggregation) -> Self {
        StructureSpec {
            name: name.into(),
            al_enabled,
            aggregation,
            ..StructureSpec::default()
        }
    }

    /// The four standard structures.
    pub fn four() -> Vec<StructureSpec> {
        vec![
            Self::new("merge", false, Aggregation::Merge),
            Self::new("merge-al", true, Aggregation::Merge),
            Self::new("vote", false, Aggregation::Vote),
            Self::new("vote-al", true, Aggregation::Vote),
        ]
    }

    fn al_config(&self) -> Option<&AlConfig> {
        self.al_enabled.then_some(&self.al)
    }
}

/// Partition training only, for the given structure.
pub fn train_structure(spec: &StructureSpec, train: &Dataset) -> Result<InitialModel> {
    let plan = make_plan(train.len(), spec.partitions)?;
    train_all(
        train,
        &plan,
        &spec.learner,
        spec.al_config(),
        spec.parallelism,
    )
}

/// Everything produced by one structure run.
#[derive(Debug, Clone)]
pub struct StructureRun {
    pub report: RunReport,
    pub initial: InitialModel,
    /// The merged model for merge runs.
    pub merged: Option<crate::model::Model>,
}

pub fn run_structure_full(
    spec: &StructureSpec,
    train: &Dataset,
    test: &Dataset,
) -> Result<StructureRun> {
    if train.input_dim() != test.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.input_dim(),
            actual: test.input_dim(),
        });
    }
    let initial = train_structure(spec, train)?;
    let rules_before = initial.total_rules();

    let t0 = Instant::now();
    let (merged, ensemble, merge_report) = match spec.aggregation {
        Aggregation::Merge => {
            let out = merge_models(&initial.models, &spec.merge)?;
            (Some(out.model), None, Some(out.report))
        }
        Aggregation::Vote => (None, Some(Ensemble::new(initial.models.clone())?), None),
    };
    let aggregate_time = t0.elapsed();

    let t0 = Instant::now();
    let eval = match (&merged, &ensemble) {
        (Some(m), _) => evaluate_model(m, test)?,
        (_, Some(e)) => vote_batch(e, test)?,
        _ => unreachable!(),
    };
    let eval_time = t0.elapsed();

    let rules_after = match &merged {
        Some(m) => m.rules.len(),
        None => rules_before,
    };
    let per_partition = initial
        .models
        .iter()
        .zip(&initial.partition_times)
        .map(|(m, t)| PartitionSummary {
            rules: m.rules.len(),
            samples_seen: m.samples_seen,
            samples_trained: m.samples_trained,
            training_accuracy: m.training_accuracy,
            time: *t,
        })
        .collect();
    let report = RunReport {
        structure: spec.name.clone(),
        al_enabled: spec.al_enabled,
        aggregation: spec.aggregation.to_string(),
        normalization: train
            .normalization
            .as_ref()
            .map_or_else(|| NormMethod::None.to_string(), |n| n.method.to_string()),
        partitions: spec.partitions,
        parallelism: spec.parallelism,
        n_train: train.len(),
        n_test: test.len(),
        samples_seen: initial.samples_seen(),
        samples_trained: initial.samples_trained(),
        accuracy: eval.accuracy,
        rules_before,
        rules_after,
        merge: merge_report,
        per_partition,
        train_time: initial.wall_time,
        aggregate_time,
        eval_time,
    };
    Ok(StructureRun {
        report,
        initial,
        merged,
    })
}

/// Partition training, aggregation and test evaluation.
pub fn run_structure(spec: &StructureSpec, train: &Dataset, test: &Dataset) -> Result<RunReport> {
    run_structure_full(spec, train, test).map(|r| r.report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// `None` when `k` exceeds the pool left after removal.
    pub accuracy: Option<f64>,
    /// `None` when `k` exceeds the full pool.
    pub accuracy_without_removal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub pool_size: usize,
    pub pool_size_after_removal: usize,
    pub rows: Vec<SweepRow>,
    pub train_time: Duration,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "skipped".to_string(), |a| format!("{a:.6}"));
        let mut out = String::from("k\taccuracy\taccuracy_without_removal\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                r.k,
                cell(r.accuracy),
                cell(r.accuracy_without_removal)
            );
        }
        out
    }
}

/// Trains once, then merges at every `k` with and without low-support
/// removal and evaluates on `test`.
pub fn run_k_sweep(
    spec: &StructureSpec,
    train: &Dataset,
    test: &Dataset,
    k_values: &[usize],
) -> Result<SweepResult> {
    let initial = train_structure(spec, train)?;
    sweep_initial(&initial, &spec.merge, test, k_values)
}

pub fn sweep_initial(
    initial: &InitialModel,
    merge: &MergeConfig,
    test: &Dataset,
    k_values: &[usize],
) -> Result<SweepResult> {
    let full = extract_rules(&initial.models)?;
    let (reduced, _) = remove_low_support(&full, merge.pop_fraction);
    let accuracy_at = |pool, k| -> Result<Option<f64>> {
        let cfg = MergeConfig { k, ..merge.clone() };
        if k == 0 || k > crate::merge::WeightedRulePool::len(pool) {
            return Ok(None);
        }
        let out = run_merge(pool, &cfg)?;
        Ok(Some(evaluate_model(&out.model, test)?.accuracy))
    };
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        rows.push(SweepRow {
            k,
            accuracy: accuracy_at(&reduced, k)?,
            accuracy_without_removal: accuracy_at(&full, k)?,
        });
    }
    Ok(SweepResult {
        pool_size: full.len(),
        pool_size_after_removal: reduced.len(),
        rows,
        train_time: initial.wall_time,
    })
}

/// Where the experiment data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    TwoBlobs {
        n: usize,
        seed: u64,
        #[serde(default)]
        outliers: f64,
    },
    Overlapping {
        n: usize,
        seed: u64,
        #[serde(default)]
        outliers: f64,
    },
    Drifting {
        n: usize,
        seed: u64,
        start: f64,
        end: f64,
    },
    Csv {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default)]
    pub norm: NormMethod,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

/// TOML experiment file: one `[data]` table, any number of `[[structure]]`
/// tables, and an optional `k_sweep` list run with the first structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub k_sweep: Vec<usize>,
    #[serde(default, rename = "structure")]
    pub structures: Vec<StructureSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if cfg.structures.is_empty() {
            return Err(Error::parse(origin, "no [[structure]] tables"));
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

/// Loads or generates the data, splits it in stream order and normalizes
/// with training statistics.
pub fn prepare_data(cfg: &DataConfig) -> Result<(Dataset, Dataset)> {
    let raw = match &cfg.source {
        DataSource::TwoBlobs { n, seed, outliers } => {
            synth_stream(&SynthSpec::two_blobs(*n, *seed).with_outliers(*outliers))?
        }
        DataSource::Overlapping { n, seed, outliers } => {
            synth_stream(&SynthSpec::overlapping(*n, *seed).with_outliers(*outliers))?
        }
        DataSource::Drifting {
            n,
            seed,
            start,
            end,
        } => synth_stream(&SynthSpec::drifting(*n, *seed, *start, *end))?,
        DataSource::Csv { path } => load_csv(path, &CsvOptions::default())?,
    };
    let (train, test) = raw.split(cfg.train_fraction)?;
    let (train, stats) = normalize(&train, cfg.norm)?;
    let test = stats.apply(&test)?;
    Ok((train, test))
}

/// Runs every structure of `cfg`, writing `<name>.report.txt`,
/// `summary.tsv` and, when requested, `k_sweep.tsv` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<Vec<RunReport>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (train, test) = prepare_data(&cfg.data)?;
    let mut reports = Vec::new();
    let mut summary = String::from(
        "structure\tal\taggregation\taccuracy\tcompression_rate\trules_before\trules_after\ttrain_s\n",
    );
    for spec in &cfg.structures {
        let report = run_structure(spec, &train, &test)?;
        let path = out_dir.join(format!("{}.report.txt", spec.name));
        std::fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{:.6}",
            report.structure,
            report.al_enabled,
            report.aggregation,
            report.accuracy,
            report.compression_rate(),
            report.rules_before,
            report.rules_after,
            report.train_time.as_secs_f64()
        );
        reports.push(report);
    }
    let path = out_dir.join("summary.tsv");
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    if !cfg.k_sweep.is_empty() {
        let sweep = run_k_sweep(&cfg.structures[0], &train, &test, &cfg.k_sweep)?;
        let path = out_dir.join("k_sweep.tsv");
        std::fs::write(&path, sweep.to_tsv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(reports)
}
