use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{prepare_dataset, train, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Metric};
use crate::rng::SeedTree;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub group_size: usize,
    /// One value per trial, in trial order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Half-width of the two-sided 95% Student-t interval; 0 for a single trial.
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub metric: Metric,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("m\t{}\tci_low\tci_high\ttrials\n", self.metric);
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.group_size,
                r.mean,
                r.mean - r.ci_half_width,
                r.mean + r.ci_half_width,
                r.values.len()
            ));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "m": r.group_size,
                    "mean": r.mean,
                    "ci_low": r.mean - r.ci_half_width,
                    "ci_high": r.mean + r.ci_half_width,
                    "values": r.values,
                })
            })
            .collect();
        json!({ "metric": self.metric.to_string(), "rows": rows })
    }
}

/// Mean and 95% half-width of `values`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, t * (var / k as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t: f64,
    pub degrees_of_freedom: usize,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired Student-t test of `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired samples",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("a paired t-test needs at least two pairs"));
    }
    let k = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let df = k - 1;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
        return Ok(PairedTest {
            mean_difference: mean,
            t,
            degrees_of_freedom: df,
            p_value: p,
        });
    }
    let t = mean / (var / k as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    Ok(PairedTest {
        mean_difference: mean,
        t,
        degrees_of_freedom: df,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    })
}

/// Trains `trials` models for every group size and scores each final model on `eval_ds`.
///
/// Trial `t` uses the same derived seed for every group size, so rows are paired.
pub fn run_group_size_sweep<T: Scalar>(
    base: &TrainConfig,
    group_sizes: &[usize],
    trials: usize,
    metric: Metric,
    train_ds: &Dataset<T>,
    eval_ds: &Dataset<T>,
) -> Result<SweepTable> {
    if group_sizes.is_empty() || trials == 0 {
        return Err(Error::invalid("a sweep needs at least one group size and one trial"));
    }
    let root = SeedTree::new(base.seed).child("sweep");
    let mut rows = Vec::with_capacity(group_sizes.len());
    for &m in group_sizes {
        let mut values = Vec::with_capacity(trials);
        for t in 0..trials {
            let seed = root.child_indexed("trial", t as u64).seed();
            let config = TrainConfig {
                group_size: m,
                seed,
                eval_every: 0,
                ..base.clone()
            };
            let (model, _) = train(&config, train_ds, None)?;
            let prepared = prepare_dataset(&model, eval_ds)?;
            let report = evaluate(&model.scorer(config.eval_mode), &prepared, &[metric], seed)?;
            values.push(report.metrics[0].1);
        }
        let (mean, ci_half_width) = mean_ci95(&values);
        rows.push(SweepRow {
            group_size: m,
            values,
            mean,
            ci_half_width,
        });
    }
    Ok(SweepTable { metric, rows })
}
