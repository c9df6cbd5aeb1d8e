use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use streamfuse::data::{LabelColumn, NormStats, Preprocess};
use streamfuse::experiment::{run_experiment, ExperimentConfig};
use streamfuse::merge::merge_models;
use streamfuse::metrics::{evaluate_model, Evaluation};
use streamfuse::{
    load_csv, make_plan, read_model, synth_stream, train_all, vote_batch, write_model, AlConfig,
    CsvOptions, Dataset, Ensemble, LearnerConfig, MergeConfig, Model, NormMethod, SynthSpec,
};

const ENSEMBLE_HEADER: &str = "STREAMFUSE-ENSEMBLE v1";

#[derive(Parser)]
#[command(
    name = "streamfuse",
    version,
    about = "Partition-parallel evolving fuzzy-rule classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per contiguous partition of a CSV stream.
    Train(TrainArgs),
    /// Fuse partition models by rule merging or majority voting.
    Aggregate(AggregateArgs),
    /// Score a merged model or a voting ensemble on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Write a synthetic labeled stream as CSV.
    Synth(SynthArgs),
    /// Split a CSV into train and test files.
    Split(SplitArgs),
    /// Run the structures declared in a TOML experiment file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct LearnerFlags {
    #[arg(long)]
    growth_threshold: Option<f64>,
    #[arg(long)]
    prune_fraction: Option<f64>,
    #[arg(long)]
    init_dispersion_scale: Option<f64>,
    #[arg(long)]
    rls_omega: Option<f64>,
    #[arg(long)]
    rls_forgetting: Option<f64>,
    #[arg(long)]
    min_age_for_prune: Option<u64>,
}

impl LearnerFlags {
    fn config(&self) -> LearnerConfig {
        let mut c = LearnerConfig::default();
        if let Some(v) = self.growth_threshold {
            c.growth_threshold = v;
        }
        if let Some(v) = self.prune_fraction {
            c.prune_fraction = v;
        }
        if let Some(v) = self.init_dispersion_scale {
            c.init_dispersion_scale = v;
        }
        if let Some(v) = self.rls_omega {
            c.rls_omega = v;
        }
        if let Some(v) = self.rls_forgetting {
            c.rls_forgetting = v;
        }
        if let Some(v) = self.min_age_for_prune {
            c.min_age_for_prune = v;
        }
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 8)]
    partitions: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long)]
    out: PathBuf,
    /// Label column: `last`, a zero-based index, or a header name.
    #[arg(long, default_value = "last")]
    label: String,
    #[arg(long, default_value = "zscore")]
    norm: NormMethod,
    /// Shuffle rows with this seed before partitioning.
    #[arg(long)]
    shuffle: Option<u64>,
    /// Enable the active-learning filter.
    #[arg(long)]
    al: bool,
    #[arg(long, default_value_t = 0.4)]
    al_budget: f64,
    #[arg(long, default_value_t = 0.01)]
    al_step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    learner: LearnerFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Merge,
    Vote,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Directory written by `train`.
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.9)]
    sim_threshold: f64,
    #[arg(long, default_value_t = 0.05)]
    pop_fraction: f64,
    /// Skip removal of low-support rules before merging.
    #[arg(long)]
    keep_low_support: bool,
    /// Merged model file, or ensemble manifest for voting.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON merge report with the fate of every pooled rule.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Preprocessing written by `train`; required to evaluate raw CSV
    /// against a model trained on normalized data.
    #[arg(long)]
    preprocess: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    TwoBlobs,
    Overlapping,
    Drifting,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "two-blobs")]
    kind: SynthKind,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fraction of rows replaced by uniform outliers with random labels.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    #[arg(long, default_value_t = 0.25)]
    drift_start: f64,
    #[arg(long, default_value_t = 0.75)]
    drift_end: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Shuffle with this seed before splitting; stream order otherwise.
    #[arg(long)]
    shuffle: Option<u64>,
    #[arg(long, default_value = "last")]
    label: String,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_label(s: &str) -> LabelColumn {
    if s == "last" {
        LabelColumn::Last
    } else if let Ok(i) = s.parse() {
        LabelColumn::Index(i)
    } else {
        LabelColumn::Name(s.to_string())
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let label = parse_label(&a.label);
    let opts = CsvOptions {
        label: label.clone(),
        ..CsvOptions::default()
    };
    let raw = load_csv(&a.input, &opts)?;
    if raw.dropped_rows > 0 {
        eprintln!("dropped {} malformed rows", raw.dropped_rows);
    }
    let raw = match a.shuffle {
        Some(seed) => raw.shuffled(seed),
        None => raw,
    };
    let norm = NormStats::fit(&raw, a.norm)?;
    let ds = norm.apply(&raw)?;
    let cfg = a.learner.config();
    let al = a.al.then(|| AlConfig {
        budget: a.al_budget,
        step: a.al_step,
        seed: a.seed,
        ..AlConfig::default()
    });

    let plan = make_plan(ds.len(), a.partitions)?;
    let initial = train_all(&ds, &plan, &cfg, al.as_ref(), a.parallelism)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut manifest = String::new();
    for (model, t) in initial.models.iter().zip(&initial.partition_times) {
        let file = format!("model_{}.sfm", model.partition_id);
        write_model(model, a.out.join(&file))?;
        let line = json!({
            "partition": model.partition_id,
            "file": file,
            "training_accuracy": model.training_accuracy,
            "rules": model.rules.len(),
            "samples_seen": model.samples_seen,
            "samples_trained": model.samples_trained,
            "time_s": t.as_secs_f64(),
        });
        manifest.push_str(&line.to_string());
        manifest.push('\n');
    }
    fs::write(a.out.join("manifest.jsonl"), manifest)?;
    Preprocess {
        label,
        class_names: ds.class_names.clone(),
        norm,
    }
    .write(a.out.join("preprocess.txt"))?;

    let seen = initial.samples_seen();
    let trained = initial.samples_trained();
    println!("partitions        {}", initial.models.len());
    println!("rules             {}", initial.total_rules());
    println!("samples seen      {seen}");
    println!("samples trained   {trained}");
    if al.is_some() {
        println!("compression rate  {:.4}", trained as f64 / seen as f64);
    }
    println!("train time        {:.3} s", initial.wall_time.as_secs_f64());
    Ok(())
}

/// Partition models of a `train` output directory in partition order.
fn load_models(dir: &Path) -> Result<Vec<Model>> {
    let manifest = dir.join("manifest.jsonl");
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    if manifest.exists() {
        let text = fs::read_to_string(&manifest)?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let v: serde_json::Value = serde_json::from_str(line)
                .with_context(|| format!("{} line {}", manifest.display(), i + 1))?;
            let (Some(id), Some(file)) = (v["partition"].as_u64(), v["file"].as_str()) else {
                bail!(
                    "{} line {}: missing partition or file",
                    manifest.display(),
                    i + 1
                );
            };
            files.push((id as usize, dir.join(file)));
        }
    } else {
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if let Some(id) = name
                .strip_prefix("model_")
                .and_then(|s| s.strip_suffix(".sfm"))
                .and_then(|s| s.parse().ok())
            {
                files.push((id, path));
            }
        }
    }
    if files.is_empty() {
        bail!("no partition models found in {}", dir.display());
    }
    files.sort();
    files
        .iter()
        .map(|(_, p)| read_model(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let rules_before: usize = models.iter().map(|m| m.rules.len()).sum();
    match a.mode {
        Mode::Merge => {
            let cfg = MergeConfig {
                k: a.k,
                sim_threshold: a.sim_threshold,
                pop_fraction: a.pop_fraction,
                remove_low_support: !a.keep_low_support,
                ..MergeConfig::default()
            };
            let t0 = Instant::now();
            let out = merge_models(&models, &cfg)?;
            let elapsed = t0.elapsed();
            let path = a.out.unwrap_or_else(|| a.models.join("merged.sfm"));
            write_model(&out.model, &path)?;
            if let Some(rp) = &a.report {
                fs::write(rp, serde_json::to_string_pretty(&out.report)?)?;
            }
            let r = &out.report;
            println!("rules before      {rules_before}");
            println!("removed (support) {}", r.removed_low_support);
            println!("merged            {}", r.merged);
            println!("discarded (sim)   {}", r.discarded_similarity);
            println!("discarded (size)  {}", r.discarded_blowup);
            println!("rules after       {}", out.model.rules.len());
            println!("aggregate time    {:.3} s", elapsed.as_secs_f64());
            println!("wrote {}", path.display());
        }
        Mode::Vote => {
            let ens = Ensemble::new(models)?;
            let path = a.out.unwrap_or_else(|| a.models.join("ensemble.txt"));
            let mut text = format!("{ENSEMBLE_HEADER}\n");
            let pre = a.models.join("preprocess.txt");
            if pre.exists() {
                text.push_str(&format!("preprocess {}\n", absolute(&pre)?.display()));
            }
            for m in ens.models() {
                let f = a.models.join(format!("model_{}.sfm", m.partition_id));
                text.push_str(&format!("model {}\n", absolute(&f)?.display()));
            }
            fs::write(&path, text)?;
            println!("models            {}", ens.len());
            println!("rules             {}", ens.total_rules());
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn absolute(p: &Path) -> Result<PathBuf> {
    p.canonicalize()
        .with_context(|| format!("resolving {}", p.display()))
}

struct EnsembleFile {
    preprocess: Option<PathBuf>,
    models: Vec<PathBuf>,
}

fn read_ensemble(path: &Path) -> Result<EnsembleFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ENSEMBLE_HEADER) {
        bail!("{}: not an ensemble manifest", path.display());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut out = EnsembleFile {
        preprocess: None,
        models: Vec::new(),
    };
    for line in lines.map(str::trim).filter(|l| !l.is_empty()) {
        match line.split_once(' ') {
            Some(("preprocess", p)) => out.preprocess = Some(resolve(p.trim())),
            Some(("model", p)) => out.models.push(resolve(p.trim())),
            _ => bail!("{}: bad line `{line}`", path.display()),
        }
    }
    Ok(out)
}

fn load_eval_data(preprocess: Option<&Path>, input: &Path) -> Result<Dataset> {
    Ok(match preprocess {
        Some(p) => Preprocess::read(p)?.load(input)?,
        None => load_csv(input, &CsvOptions::default())?,
    })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let t0 = Instant::now();
    let (ev, names): (Evaluation, Vec<String>) = if let Some(path) = &a.ensemble {
        let file = read_ensemble(path)?;
        let pre = a.preprocess.clone().or(file.preprocess);
        let ds = load_eval_data(pre.as_deref(), &a.input)?;
        let models = file
            .models
            .iter()
            .map(|p| read_model(p).with_context(|| format!("loading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        (vote_batch(&Ensemble::new(models)?, &ds)?, ds.class_names)
    } else {
        let path = a
            .model
            .as_ref()
            .expect("clap requires --model or --ensemble");
        let model = read_model(path)?;
        let ds = load_eval_data(a.preprocess.as_deref(), &a.input)?;
        (evaluate_model(&model, &ds)?, ds.class_names)
    };
    println!("accuracy   {:.6}", ev.accuracy);
    println!("correct    {} / {}", ev.correct, ev.n);
    println!("eval time  {:.3} s", t0.elapsed().as_secs_f64());
    print!("{}", ev.confusion_table(&names));
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match a.kind {
        SynthKind::TwoBlobs => SynthSpec::two_blobs(a.n, a.seed),
        SynthKind::Overlapping => SynthSpec::overlapping(a.n, a.seed),
        SynthKind::Drifting => SynthSpec::drifting(a.n, a.seed, a.drift_start, a.drift_end),
    }
    .with_outliers(a.outliers);
    let ds = synth_stream(&spec)?;
    ds.write_csv(&a.out)?;
    println!("wrote {} rows to {}", ds.len(), a.out.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let ds = load_csv(
        &a.input,
        &CsvOptions {
            label: parse_label(&a.label),
            ..CsvOptions::default()
        },
    )?;
    let ds = match a.shuffle {
        Some(seed) => ds.shuffled(seed),
        None => ds,
    };
    let (train, test) = ds.split(a.train_fraction)?;
    train.write_csv(&a.train_out)?;
    test.write_csv(&a.test_out)?;
    println!("train {}  test {}", train.len(), test.len());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::read(&a.config)?;
    let reports = run_experiment(&cfg, &a.out)?;
    for r in &reports {
        println!(
            "{:<12} acc {:.4}  compression {:.3}  rules {} -> {}  train {:.3} s",
            r.structure,
            r.accuracy,
            r.compression_rate(),
            r.rules_before,
            r.rules_after,
            r.train_time.as_secs_f64()
        );
    }
    println!("reports in {}", a.out.display());
    Ok(())
}
