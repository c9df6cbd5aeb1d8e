//! Line-oriented text format for models (`.sfm`).
//!
//! ```text
//! STREAMFUSE-MODEL v1 u=2 M=2 acc=<float> partition=0
//! STATS seen=100 trained=100
//! RULE pop=<float> weight=<float>
//! C <u floats>
//! SINV <u floats>        (u lines, one matrix row each)
//! W <M floats>           (u + 1 lines, intercept row first)
//! ```
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-identical. The `STATS` line is optional on input.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Model, Rule};

const MAGIC: &str = "STREAMFUSE-MODEL";
const VERSION: &str = "v1";

fn push_float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn push_row<'a>(out: &mut String, tag: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(tag);
    for v in values {
        out.push(' ');
        push_float(out, *v);
    }
    out.push('\n');
}

pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{MAGIC} {VERSION} u={} M={} acc=",
        model.input_dim, model.num_classes
    );
    push_float(&mut out, model.training_accuracy);
    let _ = writeln!(out, " partition={}", model.partition_id);
    let _ = writeln!(
        out,
        "STATS seen={} trained={}",
        model.samples_seen, model.samples_trained
    );
    for rule in &model.rules {
        out.push_str("RULE pop=");
        push_float(&mut out, rule.population);
        out.push_str(" weight=");
        push_float(&mut out, rule.weight);
        out.push('\n');
        push_row(&mut out, "C", rule.center.iter());
        for i in 0..model.input_dim {
            push_row(&mut out, "SINV", rule.inv_dispersion.row(i).iter());
        }
        for i in 0..=model.input_dim {
            push_row(&mut out, "W", rule.consequent.row(i).iter());
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a str,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn err(&self, line: usize, msg: impl std::fmt::Display) -> Error {
        Error::parse(self.origin, format!("line {line}: {msg}"))
    }

    fn tagged_floats(&mut self, tag: &str, count: usize) -> Result<Vec<f64>> {
        let (n, line) = self
            .next_line()
            .ok_or_else(|| self.err(0, format!("unexpected end of input, wanted {tag}")))?;
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some(tag) {
            return Err(self.err(n, format!("expected `{tag}` row")));
        }
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|e| self.err(n, e)))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(self.err(
                n,
                format!("`{tag}` row has {} values, expected {count}", values.len()),
            ));
        }
        Ok(values)
    }
}

fn key_value<'a>(token: &'a str, key: &str) -> Option<&'a str> {
    token.strip_prefix(key)?.strip_prefix('=')
}

pub fn model_from_str(text: &str, origin: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        origin,
    };
    let (n, header) = lines
        .next_line()
        .ok_or_else(|| lines.err(0, "empty model file"))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != MAGIC || tokens[1] != VERSION {
        return Err(lines.err(n, "bad header"));
    }
    let field = |i: usize, key: &str| {
        key_value(tokens[i], key).ok_or_else(|| lines.err(n, format!("expected {key}=")))
    };
    let u: usize = field(2, "u")?.parse().map_err(|e| lines.err(n, e))?;
    let m: usize = field(3, "M")?.parse().map_err(|e| lines.err(n, e))?;
    let acc: f64 = field(4, "acc")?.parse().map_err(|e| lines.err(n, e))?;
    let partition: usize = field(5, "partition")?
        .parse()
        .map_err(|e| lines.err(n, e))?;
    if u == 0 || m == 0 {
        return Err(lines.err(n, "u and M must be positive"));
    }

    let mut model = Model::new(u, m);
    model.training_accuracy = acc;
    model.partition_id = partition;

    let mut pending = lines.next_line();
    if let Some((n, line)) = pending {
        if let Some(rest) = line.strip_prefix("STATS") {
            for tok in rest.split_ascii_whitespace() {
                if let Some(v) = key_value(tok, "seen") {
                    model.samples_seen = v.parse().map_err(|e| lines.err(n, e))?;
                } else if let Some(v) = key_value(tok, "trained") {
                    model.samples_trained = v.parse().map_err(|e| lines.err(n, e))?;
                } else {
                    return Err(lines.err(n, format!("unknown STATS field `{tok}`")));
                }
            }
            pending = lines.next_line();
        }
    }

    while let Some((n, line)) = pending {
        let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
        if tokens.len() != 3 || tokens[0] != "RULE" {
            return Err(lines.err(n, "expected RULE line"));
        }
        let pop: f64 = key_value(tokens[1], "pop")
            .ok_or_else(|| lines.err(n, "expected pop="))?
            .parse()
            .map_err(|e| lines.err(n, e))?;
        let weight: f64 = key_value(tokens[2], "weight")
            .ok_or_else(|| lines.err(n, "expected weight="))?
            .parse()
            .map_err(|e| lines.err(n, e))?;
        let center = lines.tagged_floats("C", u)?;
        let mut sinv = Vec::with_capacity(u * u);
        for _ in 0..u {
            sinv.extend(lines.tagged_floats("SINV", u)?);
        }
        let mut w = Vec::with_capacity((u + 1) * m);
        for _ in 0..=u {
            w.extend(lines.tagged_floats("W", m)?);
        }
        model.rules.push(Rule {
            center: DVector::from_vec(center),
            inv_dispersion: DMatrix::from_row_slice(u, u, &sinv),
            population: pop,
            consequent: DMatrix::from_row_slice(u + 1, m, &w),
            weight,
        });
        pending = lines.next_line();
    }
    Ok(model)
}

pub fn write_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, &path.display().to_string())
}
