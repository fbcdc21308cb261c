//! Sweep rows, the affine-in-ε fit of `ε ln p̂`, and their files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::prediction::Prediction;

/// One ε of a Monte Carlo sweep. `eps_log_p` is `-inf` for zero hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub hits: u64,
    pub replicas: u64,
    pub p_hat: f64,
    pub stderr: f64,
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub eps_log_p: f64,
    pub predicted_rate: Option<f64>,
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) => match t.trim() {
            "-inf" => Ok(f64::NEG_INFINITY),
            other => other.parse().map_err(serde::de::Error::custom),
        },
    }
}

/// Wilson score interval at `z = 1`: half its width, used as the standard
/// error of `p̂`. Stays positive at zero hits.
pub fn wilson_stderr(hits: u64, n: u64) -> f64 {
    let n = n as f64;
    let p = hits as f64 / n;
    (p * (1.0 - p) / n + 0.25 / (n * n)).sqrt() / (1.0 + 1.0 / n)
}

impl SweepRow {
    pub fn new(epsilon: f64, hits: u64, replicas: u64, predicted_rate: Option<f64>) -> Self {
        let p_hat = hits as f64 / replicas as f64;
        let eps_log_p = if hits == 0 {
            f64::NEG_INFINITY
        } else {
            (epsilon * p_hat.ln()).min(0.0)
        };
        Self {
            epsilon,
            hits,
            replicas,
            p_hat,
            stderr: wilson_stderr(hits, replicas),
            eps_log_p,
            predicted_rate,
        }
    }

    /// Delta-method standard error of `ε ln p̂`.
    pub fn eps_log_p_stderr(&self) -> f64 {
        self.epsilon * self.stderr / self.p_hat
    }

    fn usable(&self) -> bool {
        self.hits > 0 && self.eps_log_p.is_finite() && self.stderr > 0.0
    }
}

/// Weighted least-squares line `ε ln p̂ ≈ -rate + slope ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub rate: f64,
    pub slope: f64,
    pub rate_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub name: String,
    pub rows: Vec<SweepRow>,
    pub usable_rows: usize,
    pub fit: AffineFit,
    pub extrapolated_rate: f64,
    pub predicted_rate: Option<f64>,
    pub prediction_source: String,
    /// `|extrapolated - predicted| / predicted`.
    pub relative_gap: Option<f64>,
}

/// Weights are `1/stderr²` on the `p̂` scale. `rate_stderr` propagates the
/// delta-method variance of each `ε ln p̂` through those weights.
pub fn fit_rows(rows: &[SweepRow]) -> Result<AffineFit> {
    let usable: Vec<&SweepRow> = rows.iter().filter(|r| r.usable()).collect();
    if usable.len() < 3 {
        bail!(
            "only {} of {} rows have nonzero hits; the fit needs at least 3, increase replicas",
            usable.len(),
            rows.len()
        );
    }
    let weight = |r: &SweepRow| r.stderr.powi(-2);
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &usable {
        let w = weight(r);
        let (x, y) = (r.epsilon, r.eps_log_p);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        bail!("degenerate fit: the usable rows share one epsilon");
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (sw * sxy - sx * sy) / det;
    let var: f64 = usable
        .iter()
        .map(|r| (weight(r) * (sxx - sx * r.epsilon) / det * r.eps_log_p_stderr()).powi(2))
        .sum();
    Ok(AffineFit {
        rate: -intercept,
        slope,
        rate_stderr: var.sqrt(),
    })
}

pub fn ldp_report(name: &str, rows: &[SweepRow], prediction: &Prediction) -> Result<LdpReport> {
    let fit = fit_rows(rows)?;
    let usable_rows = rows.iter().filter(|r| r.usable()).count();
    let relative_gap = prediction
        .rate
        .filter(|p| p.is_finite() && *p > 0.0)
        .map(|p| (fit.rate - p).abs() / p);
    Ok(LdpReport {
        name: name.to_string(),
        rows: rows.to_vec(),
        usable_rows,
        fit,
        extrapolated_rate: fit.rate,
        predicted_rate: prediction.rate,
        prediction_source: prediction.source.clone(),
        relative_gap,
    })
}

pub fn write_rows_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `<dir>/<name>_<suffix>`.
pub fn output_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}"))
}
