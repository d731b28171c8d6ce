//! Regression metrics, per-sample error distributions and comparison tables.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest |ground truth| accepted by the percentage metrics.
pub const METRIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<S> {
    pub mse: S,
    pub mape_percent: S,
    pub r_squared: S,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<S> {
    /// `counts.len() + 1` edges.
    pub edges: Vec<S>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary<S> {
    pub mean: S,
    pub sd: S,
    /// min, q1, median, q3, max
    pub quartiles: [S; 5],
    pub histogram: Histogram<S>,
    pub tail_prob_at_5pct: S,
}

fn same_len<S>(gt: &[S], pred: &[S]) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::domain(format!(
            "shape mismatch: {} ground-truth values, {} predictions",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::domain("metrics need at least one value"));
    }
    Ok(())
}

pub fn mse<S: Scalar>(gt: &[S], pred: &[S]) -> Result<S> {
    same_len(gt, pred)?;
    let sum: S = gt.iter().zip(pred).map(|(y, p)| (*y - *p).powi(2)).sum();
    Ok(sum / S::lit(gt.len() as f64))
}

/// 100/n * sum |gt - pred| / |gt|, without any epsilon guard.
pub fn mape<S: Scalar>(gt: &[S], pred: &[S]) -> Result<S> {
    same_len(gt, pred)?;
    let floor = S::lit(METRIC_FLOOR);
    let mut sum = S::zero();
    for (y, p) in gt.iter().zip(pred) {
        if !(y.abs() >= floor) {
            return Err(Error::domain(format!(
                "ground truth {y} is below the percentage-error floor"
            )));
        }
        sum += ((*y - *p) / *y).abs();
    }
    Ok(S::lit(100.0) * sum / S::lit(gt.len() as f64))
}

/// Pooled 1 - SSres/SStot; 1 for an exact fit of constant data, 0 otherwise.
pub fn r_squared<S: Scalar>(gt: &[S], pred: &[S]) -> Result<S> {
    same_len(gt, pred)?;
    if gt.len() < 2 {
        return Err(Error::domain("r_squared needs at least 2 values"));
    }
    Ok(crate::calibrate::r_squared_about_mean(gt, pred))
}

pub fn report<S: Scalar>(gt: &[S], pred: &[S]) -> Result<MetricsReport<S>> {
    Ok(MetricsReport {
        mse: mse(gt, pred)?,
        mape_percent: mape(gt, pred)?,
        r_squared: r_squared(gt, pred)?,
        n: gt.len(),
    })
}

/// MAPE of every row.
pub fn per_sample_mape<S: Scalar>(gt: ArrayView2<'_, S>, pred: ArrayView2<'_, S>) -> Result<Vec<S>> {
    if gt.shape() != pred.shape() {
        return Err(Error::domain(format!(
            "shape mismatch: {:?} vs {:?}",
            gt.shape(),
            pred.shape()
        )));
    }
    gt.rows()
        .into_iter()
        .zip(pred.rows())
        .map(|(g, p)| {
            let g: Vec<S> = g.iter().copied().collect();
            let p: Vec<S> = p.iter().copied().collect();
            mape(&g, &p)
        })
        .collect()
}

/// Linear interpolation between order statistics of sorted data.
fn quantile<S: Scalar>(sorted: &[S], p: f64) -> S {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = S::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// P(X > threshold) for X ~ N(mean, sd^2), via erfc.
pub fn normal_upper_tail<S: Scalar>(mean: S, sd: S, threshold: S) -> Result<S> {
    if !(sd > S::zero()) {
        return Err(Error::domain(format!("standard deviation must be positive, got {sd}")));
    }
    let z = ((threshold - mean) / sd).to_f64_lossy();
    Ok(S::lit(0.5 * libm::erfc(z / std::f64::consts::SQRT_2)))
}

pub fn summarize_distribution<S: Scalar>(values: &[S], bins: usize) -> Result<DistributionSummary<S>> {
    summarize_distribution_at(values, bins, S::lit(5.0))
}

/// Like [`summarize_distribution`] with a custom tail threshold (percent).
pub fn summarize_distribution_at<S: Scalar>(
    values: &[S],
    bins: usize,
    threshold: S,
) -> Result<DistributionSummary<S>> {
    if values.is_empty() {
        return Err(Error::domain("cannot summarize an empty distribution"));
    }
    if bins == 0 {
        return Err(Error::domain("histogram needs at least one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("distribution contains non-finite values"));
    }
    let n = values.len();
    let mean = values.iter().copied().sum::<S>() / S::lit(n as f64);
    let sd = if n > 1 {
        let ss: S = values.iter().map(|v| (*v - mean).powi(2)).sum();
        (ss / S::lit((n - 1) as f64)).sqrt()
    } else {
        S::zero()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let quartiles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&sorted, p));

    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let width = (hi - lo) / S::lit(bins as f64);
    let edges: Vec<S> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * S::lit(i as f64) })
        .collect();
    let mut counts = vec![0usize; bins];
    for v in &sorted {
        let idx = if width > S::zero() {
            ((*v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }

    let tail_prob_at_5pct = if sd > S::zero() {
        normal_upper_tail(mean, sd, threshold)?
    } else if mean > threshold {
        S::one()
    } else if mean == threshold {
        S::lit(0.5)
    } else {
        S::zero()
    };

    Ok(DistributionSummary {
        mean,
        sd,
        quartiles,
        histogram: Histogram { edges, counts },
        tail_prob_at_5pct,
    })
}

impl<S: Scalar> Histogram<S> {
    /// `bin_lo,bin_hi,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[i].to_text(), self.edges[i + 1].to_text(), c);
        }
        out
    }
}

/// Metrics plus error distribution for one method, as stored in a report file.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<S> {
    pub method: String,
    pub metrics: MetricsReport<S>,
    pub mape_mean: S,
    pub mape_sd: S,
    pub tail_prob_5pct: S,
}

impl<S: Scalar> EvalReport<S> {
    pub fn new(method: impl Into<String>, metrics: MetricsReport<S>, dist: &DistributionSummary<S>) -> Self {
        EvalReport {
            method: method.into(),
            metrics,
            mape_mean: dist.mean,
            mape_sd: dist.sd,
            tail_prob_5pct: dist.tail_prob_at_5pct,
        }
    }

    /// `key value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method {}", self.method);
        let _ = writeln!(out, "mse {}", self.metrics.mse.to_text());
        let _ = writeln!(out, "r2 {}", self.metrics.r_squared.to_text());
        let _ = writeln!(out, "mape_percent {}", self.metrics.mape_percent.to_text());
        let _ = writeln!(out, "n {}", self.metrics.n);
        let _ = writeln!(out, "mape_mean {}", self.mape_mean.to_text());
        let _ = writeln!(out, "mape_sd {}", self.mape_sd.to_text());
        let _ = writeln!(out, "tail_prob_5pct {}", self.tail_prob_5pct.to_text());
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut method = None;
        let mut fields: [Option<S>; 6] = [None; 6];
        let mut n = None;
        const KEYS: [&str; 6] = ["mse", "r2", "mape_percent", "mape_mean", "mape_sd", "tail_prob_5pct"];
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(line_no, "expected `key value`"))?;
            match key {
                "method" => method = Some(value.trim().to_owned()),
                "n" => {
                    n = Some(value.trim().parse().map_err(|_| Error::parse(line_no, "n is not an integer"))?)
                }
                _ => {
                    let slot = KEYS
                        .iter()
                        .position(|k| *k == key)
                        .ok_or_else(|| Error::parse(line_no, format!("unknown report key {key:?}")))?;
                    fields[slot] = Some(
                        S::parse_text(value)
                            .ok_or_else(|| Error::parse(line_no, format!("{key} is not a number")))?,
                    );
                }
            }
        }
        let get = |i: usize| fields[i].ok_or_else(|| Error::parse(0, format!("missing report key {}", KEYS[i])));
        Ok(EvalReport {
            method: method.unwrap_or_else(|| "unnamed".to_owned()),
            metrics: MetricsReport {
                mse: get(0)?,
                r_squared: get(1)?,
                mape_percent: get(2)?,
                n: n.ok_or_else(|| Error::parse(0, "missing report key n"))?,
            },
            mape_mean: get(3)?,
            mape_sd: get(4)?,
            tail_prob_5pct: get(5)?,
        })
    }
}

/// Method-by-metric summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable<S> {
    pub rows: Vec<(String, MetricsReport<S>)>,
}

pub fn comparison_table<S: Scalar>(reports: &[(String, MetricsReport<S>)]) -> Result<ComparisonTable<S>> {
    if reports.is_empty() {
        return Err(Error::domain("comparison table needs at least one report"));
    }
    Ok(ComparisonTable {
        rows: reports.to_vec(),
    })
}

impl<S: Scalar> ComparisonTable<S> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mse,r2,mape_percent\n");
        for (name, r) in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                name,
                r.mse.to_text(),
                r.r_squared.to_text(),
                r.mape_percent.to_text()
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}  {:>12}  {:>10}  {:>12}\n", "Method", "MSE", "R^2", "MAPE (%)");
        for (name, r) in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.3e}  {:>10.4}  {:>12.3}",
                name,
                r.mse.to_f64_lossy(),
                r.r_squared.to_f64_lossy(),
                r.mape_percent.to_f64_lossy()
            );
        }
        out
    }
}
