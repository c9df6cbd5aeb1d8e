//! Datasets: CSV ingestion, normalization, splitting and synthetic streams.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    pub num_classes: usize,
    pub feature_names: Vec<String>,
    /// Original label text for each class index.
    pub class_names: Vec<String>,
    /// Rows discarded at ingestion.
    pub dropped_rows: usize,
    pub normalization: Option<NormStats>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * input_dim,
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(Dataset {
            features,
            labels,
            input_dim,
            num_classes,
            feature_names: (0..input_dim).map(|i| format!("x{i}")).collect(),
            class_names: (0..num_classes).map(|c| c.to_string()).collect(),
            dropped_rows: 0,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.input_dim)
            .zip(self.labels.iter().copied())
    }

    /// Rows `range` as a stream, in order.
    pub fn slice_iter(
        &self,
        range: std::ops::Range<usize>,
    ) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        let u = self.input_dim;
        self.features[range.start * u..range.end * u]
            .chunks_exact(u)
            .zip(self.labels[range].iter().copied())
    }

    fn with_rows(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            features: Vec::new(),
            labels: Vec::new(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            dropped_rows: self.dropped_rows,
            normalization: self.normalization.clone(),
        }
    }

    /// First `fraction` of the rows (stream order) versus the rest.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split fraction {fraction} outside (0, 1)"
            )));
        }
        let cut = ((self.len() as f64) * fraction).round() as usize;
        if cut == 0 || cut == self.len() {
            return Err(Error::EmptyDataset);
        }
        Ok((self.with_rows(0..cut), self.with_rows(cut..self.len())))
    }

    pub fn shuffled(&self, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.with_rows(idx)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.input_dim + 1);
        for (x, y) in self.iter() {
            record.clear();
            record.extend(x.iter().map(|v| format!("{v:?}")));
            record.push(self.class_names[y].clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label: LabelColumn,
    /// Fail on the first bad row instead of dropping it.
    pub strict: bool,
    /// Reuse an existing label mapping (test data must share the training
    /// class indices).
    pub class_names: Option<Vec<String>>,
}

/// Sorted label mapping: numerically when every label parses as a number,
/// lexicographically otherwise.
fn sorted_labels(mut labels: Vec<String>) -> Vec<String> {
    labels.sort();
    labels.dedup();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(labels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        paired.into_iter().map(|(_, l)| l).collect()
    } else {
        labels
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        return Err(Error::parse(
            path,
            "need at least one feature and a label column",
        ));
    }
    let label_col = match &opts.label {
        LabelColumn::Last => headers.len() - 1,
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => {
            return Err(Error::parse(path, format!("label column {i} out of range")))
        }
        LabelColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::parse(path, format!("no column named `{n}`")))?,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, h)| h.clone())
        .collect();
    let u = feature_names.len();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let parsed = record.map_err(Error::from).and_then(|rec| {
            if rec.len() != headers.len() {
                return Err(Error::BadRow {
                    row,
                    message: format!("{} fields, expected {}", rec.len(), headers.len()),
                });
            }
            let mut xs = Vec::with_capacity(u);
            for (j, field) in rec.iter().enumerate() {
                if j == label_col {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| Error::BadRow {
                    row,
                    message: format!("cannot parse `{field}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::BadRow {
                        row,
                        message: format!("non-finite value `{field}`"),
                    });
                }
                xs.push(v);
            }
            let label = rec[label_col].to_string();
            if label.is_empty() {
                return Err(Error::BadRow {
                    row,
                    message: "empty label".into(),
                });
            }
            Ok((xs, label))
        });
        match parsed {
            Ok((xs, label)) => {
                features.extend(xs);
                raw_labels.push(label);
            }
            Err(e) if opts.strict => return Err(e),
            Err(_) => dropped += 1,
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let class_names = match &opts.class_names {
        Some(names) => names.clone(),
        None => sorted_labels(raw_labels.clone()),
    };
    let mut labels = Vec::with_capacity(raw_labels.len());
    let mut kept_features = Vec::with_capacity(features.len());
    for (i, l) in raw_labels.iter().enumerate() {
        match class_names.iter().position(|c| c == l) {
            Some(idx) => {
                labels.push(idx);
                kept_features.extend_from_slice(&features[i * u..(i + 1) * u]);
            }
            None if opts.strict => {
                return Err(Error::BadRow {
                    row: i + 2,
                    message: format!("unknown label `{l}`"),
                })
            }
            None => dropped += 1,
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ds = Dataset::new(kept_features, labels, u, class_names.len())?;
    ds.feature_names = feature_names;
    ds.class_names = class_names;
    ds.dropped_rows = dropped;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    None,
    MinMax,
    #[default]
    ZScore,
}

impl std::str::FromStr for NormMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormMethod::None),
            "minmax" => Ok(NormMethod::MinMax),
            "zscore" => Ok(NormMethod::ZScore),
            other => Err(Error::InvalidConfig(format!(
                "unknown normalization `{other}` (none|minmax|zscore)"
            ))),
        }
    }
}

impl std::fmt::Display for NormMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMethod::None => "none",
            NormMethod::MinMax => "minmax",
            NormMethod::ZScore => "zscore",
        })
    }
}

/// Per-feature affine map `(x - offset) / scale`, fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub method: NormMethod,
    pub offset: Vec<f64>,
    /// Zero marks a constant feature, mapped to a fixed value.
    pub scale: Vec<f64>,
    /// Number of rows the statistics were fitted on.
    pub fitted_rows: usize,
}

impl NormStats {
    pub fn fit(ds: &Dataset, method: NormMethod) -> Result<Self> {
        let n = ds.len();
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "normalization needs at least 2 rows, got {n}"
            )));
        }
        let u = ds.input_dim();
        let mut offset = vec![0.0; u];
        let mut scale = vec![1.0; u];
        match method {
            NormMethod::None => {}
            NormMethod::MinMax => {
                for j in 0..u {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for (x, _) in ds.iter() {
                        lo = lo.min(x[j]);
                        hi = hi.max(x[j]);
                    }
                    offset[j] = lo;
                    scale[j] = hi - lo;
                }
            }
            NormMethod::ZScore => {
                for j in 0..u {
                    let mean = ds.iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64;
                    let var =
                        ds.iter().map(|(x, _)| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    offset[j] = mean;
                    scale[j] = var.sqrt();
                }
            }
        }
        Ok(NormStats {
            method,
            offset,
            scale,
            fitted_rows: n,
        })
    }

    pub fn apply_row(&self, x: &mut [f64]) {
        let constant = match self.method {
            NormMethod::None => return,
            NormMethod::MinMax => 0.5,
            NormMethod::ZScore => 0.0,
        };
        for ((v, o), s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *v = if *s > 0.0 { (*v - o) / s } else { constant };
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.input_dim() != self.offset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.offset.len(),
                actual: ds.input_dim(),
            });
        }
        let mut out = ds.clone();
        for row in out.features.chunks_exact_mut(out.input_dim) {
            self.apply_row(row);
        }
        out.normalization = Some(self.clone());
        Ok(out)
    }
}

/// Fits statistics on `ds` and applies them to it.
pub fn normalize(ds: &Dataset, method: NormMethod) -> Result<(Dataset, NormStats)> {
    let stats = NormStats::fit(ds, method)?;
    Ok((stats.apply(ds)?, stats))
}

/// Preprocessing that must be replayed on evaluation data: the label mapping
/// and the training-set normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocess {
    pub label: LabelColumn,
    pub class_names: Vec<String>,
    pub norm: NormStats,
}

impl Preprocess {
    pub fn to_text(&self) -> String {
        let mut out = String::from("STREAMFUSE-PREPROCESS v1\n");
        let label = match &self.label {
            LabelColumn::Last => "last".to_string(),
            LabelColumn::Index(i) => format!("index:{i}"),
            LabelColumn::Name(n) => format!("name:{n}"),
        };
        let _ = writeln!(out, "label {label}");
        let _ = writeln!(out, "classes {}", self.class_names.join("\t"));
        let _ = writeln!(out, "method {}", self.norm.method);
        let _ = writeln!(out, "fitted_rows {}", self.norm.fitted_rows);
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "offset {}", join(&self.norm.offset));
        let _ = writeln!(out, "scale {}", join(&self.norm.scale));
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("STREAMFUSE-PREPROCESS v1") {
            return Err(Error::parse(origin, "bad preprocess header"));
        }
        let mut label = None;
        let mut classes = None;
        let mut method = None;
        let mut fitted_rows = None;
        let mut offset = None;
        let mut scale = None;
        let floats = |s: &str| -> Result<Vec<f64>> {
            s.split_ascii_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::parse(origin, format!("bad float `{t}`")))
                })
                .collect()
        };
        for line in lines {
            let Some((key, rest)) = line.split_once(' ') else {
                if line.trim().is_empty() {
                    continue;
                }
                // Empty lists serialize as a bare key.
                match line.trim() {
                    "offset" => offset = Some(Vec::new()),
                    "scale" => scale = Some(Vec::new()),
                    other => return Err(Error::parse(origin, format!("bad line `{other}`"))),
                }
                continue;
            };
            match key {
                "label" => {
                    label = Some(if rest == "last" {
                        LabelColumn::Last
                    } else if let Some(i) = rest.strip_prefix("index:") {
                        LabelColumn::Index(
                            i.parse()
                                .map_err(|_| Error::parse(origin, "bad label index"))?,
                        )
                    } else if let Some(n) = rest.strip_prefix("name:") {
                        LabelColumn::Name(n.to_string())
                    } else {
                        return Err(Error::parse(origin, "bad label spec"));
                    })
                }
                "classes" => classes = Some(rest.split('\t').map(str::to_string).collect()),
                "method" => method = Some(rest.trim().parse()?),
                "fitted_rows" => {
                    fitted_rows = Some(
                        rest.trim()
                            .parse()
                            .map_err(|_| Error::parse(origin, "bad fitted_rows"))?,
                    )
                }
                "offset" => offset = Some(floats(rest)?),
                "scale" => scale = Some(floats(rest)?),
                other => return Err(Error::parse(origin, format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::parse(origin, format!("missing `{k}`"));
        Ok(Preprocess {
            label: label.ok_or_else(|| missing("label"))?,
            class_names: classes.ok_or_else(|| missing("classes"))?,
            norm: NormStats {
                method: method.ok_or_else(|| missing("method"))?,
                offset: offset.ok_or_else(|| missing("offset"))?,
                scale: scale.ok_or_else(|| missing("scale"))?,
                fitted_rows: fitted_rows.ok_or_else(|| missing("fitted_rows"))?,
            },
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    /// Loads an evaluation CSV with the stored label mapping and
    /// normalization.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let ds = load_csv(
            path,
            &CsvOptions {
                label: self.label.clone(),
                strict: false,
                class_names: Some(self.class_names.clone()),
            },
        )?;
        self.norm.apply(&ds)
    }
}

/// Linear mean shift of one blob between two points of the stream,
/// expressed as fractions of its length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub to: Vec<f64>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub mean: Vec<f64>,
    pub std: f64,
    pub class: usize,
    #[serde(default)]
    pub drift: Option<Drift>,
}

/// Gaussian-mixture stream description. Each sample picks a blob uniformly
/// at random; `outlier_fraction` of the samples are instead drawn uniformly
/// from the box `[-outlier_range, outlier_range]^u` with a uniform random
/// label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub blobs: Vec<Blob>,
    pub num_classes: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default = "default_outlier_range")]
    pub outlier_range: f64,
}

fn default_outlier_range() -> f64 {
    8.0
}

impl SynthSpec {
    /// Two unit-variance blobs at `(-3, 0)` and `(3, 0)`.
    pub fn two_blobs(n: usize, seed: u64) -> Self {
        SynthSpec {
            blobs: vec![
                Blob {
                    mean: vec![-3.0, 0.0],
                    std: 1.0,
                    class: 0,
                    drift: None,
                },
                Blob {
                    mean: vec![3.0, 0.0],
                    std: 1.0,
                    class: 1,
                    drift: None,
                },
            ],
            num_classes: 2,
            n,
            seed,
            outlier_fraction: 0.0,
            outlier_range: default_outlier_range(),
        }
    }

    /// Four blobs in two classes, placed close enough to overlap.
    pub fn overlapping(n: usize, seed: u64) -> Self {
        let blob = |x: f64, y: f64, class| Blob {
            mean: vec![x, y],
            std: 1.0,
            class,
            drift: None,
        };
        SynthSpec {
            blobs: vec![
                blob(-1.0, -1.0, 0),
                blob(1.0, 1.0, 1),
                blob(-1.0, 2.0, 0),
                blob(1.5, -1.5, 1),
            ],
            num_classes: 2,
            n,
            seed,
            outlier_fraction: 0.0,
            outlier_range: default_outlier_range(),
        }
    }

    /// Two blobs where class 1 moves from `(3, 0)` to `(-3, 6)` across the
    /// initial decision boundary during `[start, end]` of the stream.
    pub fn drifting(n: usize, seed: u64, start: f64, end: f64) -> Self {
        let mut spec = Self::two_blobs(n, seed);
        spec.blobs[1].drift = Some(Drift {
            to: vec![-3.0, 6.0],
            start,
            end,
        });
        spec
    }

    pub fn with_outliers(mut self, fraction: f64) -> Self {
        self.outlier_fraction = fraction;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.blobs.first().map_or(0, |b| b.mean.len())
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        let u = self.input_dim();
        if u == 0 {
            return Err(Error::InvalidConfig(
                "synth spec needs at least one blob".into(),
            ));
        }
        for b in &self.blobs {
            if b.mean.len() != u {
                return Err(Error::DimensionMismatch {
                    expected: u,
                    actual: b.mean.len(),
                });
            }
            if b.class >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: b.class,
                    num_classes: self.num_classes,
                });
            }
            if let Some(d) = &b.drift {
                if d.to.len() != u || !(0.0..=1.0).contains(&d.start) || d.end < d.start {
                    return Err(Error::InvalidConfig("malformed drift".into()));
                }
            }
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig(
                "outlier_fraction outside [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn blob_mean_at(blob: &Blob, t: f64, out: &mut [f64]) {
    out.copy_from_slice(&blob.mean);
    if let Some(d) = &blob.drift {
        let frac = if t <= d.start {
            0.0
        } else if t >= d.end || d.end == d.start {
            1.0
        } else {
            (t - d.start) / (d.end - d.start)
        };
        for (o, (a, b)) in out.iter_mut().zip(blob.mean.iter().zip(&d.to)) {
            *o = a + frac * (b - a);
        }
    }
}

/// Generates a reproducible stream with ChaCha8 seeded from `spec.seed`;
/// Gaussian draws use the standard-normal ziggurat of `rand_distr`.
pub fn synth_stream(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let u = spec.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.n * u);
    let mut labels = Vec::with_capacity(spec.n);
    let mut mean = vec![0.0; u];
    for i in 0..spec.n {
        let t = if spec.n > 1 {
            i as f64 / (spec.n - 1) as f64
        } else {
            0.0
        };
        let outlier = spec.outlier_fraction > 0.0 && rng.random::<f64>() < spec.outlier_fraction;
        if outlier {
            for _ in 0..u {
                features.push(rng.random_range(-spec.outlier_range..spec.outlier_range));
            }
            labels.push(rng.random_range(0..spec.num_classes));
            continue;
        }
        let blob = &spec.blobs[rng.random_range(0..spec.blobs.len())];
        blob_mean_at(blob, t, &mut mean);
        for m in &mean {
            let z: f64 = rng.sample(StandardNormal);
            features.push(m + blob.std * z);
        }
        labels.push(blob.class);
    }
    Dataset::new(features, labels, u, spec.num_classes)
}
