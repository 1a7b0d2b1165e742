//! NDCG@k, MRR, and propensity-weighted MRR.
//!
//! Gains are `2^y − 1` with a `log₂(r + 1)` discount; ranks are 1-based. Queries without any
//! relevant document are discarded from every metric.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gsf::{rank, ListScorer};
use crate::rng::SeedTree;
use crate::Scalar;

/// `Σ_{r ≤ k} (2^{y_r} − 1) / log₂(r + 1)` over labels already in ranked order.
pub fn dcg_at_k<T: Scalar>(ranked_labels: &[T], k: usize) -> T {
    let two = T::lit(2.0);
    ranked_labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &y)| (two.powf(y) - T::one()) / T::from_usize_lossy(i + 2).log2())
        .sum()
}

/// NDCG@k of `ranking` (slot indices, best first) against slot-aligned `labels`.
/// Returns `None` when no ranked document is relevant.
pub fn ndcg_at_k<T: Scalar>(labels: &[T], ranking: &[usize], k: usize) -> Result<Option<T>> {
    if k == 0 {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    let mut seen = vec![false; labels.len()];
    for &slot in ranking {
        if slot >= labels.len() || std::mem::replace(&mut seen[slot], true) {
            return Err(Error::invalid(format!("ranking is not a permutation (slot {slot})")));
        }
    }
    let ranked: Vec<T> = ranking.iter().map(|&i| labels[i]).collect();
    if ranked.iter().all(|&y| y <= T::zero()) {
        return Ok(None);
    }
    let mut ideal = ranked.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idcg = dcg_at_k(&ideal, k);
    Ok(Some(dcg_at_k(&ranked, k) / idcg))
}

/// Mean of `1/rank`.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("mrr of no ranks"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks are 1-based"));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    pub session: String,
    /// 1-based rank of the clicked document.
    pub rank: usize,
    pub weight: f64,
}

/// `Σ wᵢ/rankᵢ / Σ wᵢ`.
pub fn wmrr(records: &[ClickRecord]) -> Result<f64> {
    if records.iter().any(|r| r.rank == 0) {
        return Err(Error::invalid("ranks are 1-based"));
    }
    let total: f64 = records.iter().map(|r| r.weight).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weighted MRR needs a positive total weight"));
    }
    Ok(records.iter().map(|r| r.weight / r.rank as f64).sum::<f64>() / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Ndcg(usize),
    Mrr,
    Wmrr,
}

impl Metric {
    /// NDCG@1, @5, @10, MRR, WMRR.
    pub fn standard() -> Vec<Metric> {
        vec![Metric::Ndcg(1), Metric::Ndcg(5), Metric::Ndcg(10), Metric::Mrr, Metric::Wmrr]
    }

    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrr" => Ok(Metric::Mrr),
            "wmrr" => Ok(Metric::Wmrr),
            other => other
                .strip_prefix("ndcg@")
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k >= 1)
                .map(Metric::Ndcg)
                .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Mrr => f.write_str("mrr"),
            Metric::Wmrr => f.write_str("wmrr"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// In request order.
    pub metrics: Vec<(Metric, f64)>,
    pub used: usize,
    pub discarded: usize,
}

impl EvalReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|&(_, v)| v)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (m, v) in &self.metrics {
            out.push_str(&format!("{m}\t{v}\n"));
        }
        out.push_str(&format!("used\t{}\ndiscarded\t{}\n", self.used, self.discarded));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let metrics: serde_json::Map<String, serde_json::Value> = self
            .metrics
            .iter()
            .map(|(m, v)| (m.to_string(), serde_json::json!(v)))
            .collect();
        serde_json::json!({ "metrics": metrics, "used": self.used, "discarded": self.discarded })
    }
}

/// Scores and ranks every query, then averages each metric over the non-discarded queries.
/// Each query draws its groups from its own stream under `seed`, so results do not depend on
/// evaluation order.
pub fn evaluate<T: Scalar, S: ListScorer<T> + ?Sized>(
    scorer: &S,
    ds: &Dataset<T>,
    metrics: &[Metric],
    seed: u64,
) -> Result<EvalReport> {
    let tree = SeedTree::new(seed).child("eval");
    let mut sums = vec![0.0f64; metrics.len()];
    let mut clicks = Vec::new();
    let mut used = 0;
    let mut discarded = 0;
    for (qi, q) in ds.queries.iter().enumerate() {
        let mut rng = tree.child_indexed("query", qi as u64).stream("groups");
        let scores = scorer.score(q, &mut rng)?;
        let ranking = rank(&scores);
        let labels = q.labels();
        let Some(first_rel) = ranking.iter().position(|&s| labels[s] > T::zero()) else {
            discarded += 1;
            continue;
        };
        used += 1;
        let clicked = ranking[first_rel];
        clicks.push(ClickRecord {
            session: q.query_id.clone(),
            rank: first_rel + 1,
            weight: q.docs[clicked].weight.map_or(1.0, Scalar::as_f64),
        });
        for (acc, m) in sums.iter_mut().zip(metrics) {
            *acc += match m {
                Metric::Ndcg(k) => ndcg_at_k(&labels, &ranking, *k)?.map_or(0.0, Scalar::as_f64),
                Metric::Mrr | Metric::Wmrr => 1.0 / (first_rel + 1) as f64,
            };
        }
    }
    let values = metrics
        .iter()
        .zip(&sums)
        .map(|(&m, &s)| {
            let v = match m {
                _ if used == 0 => 0.0,
                Metric::Wmrr => wmrr(&clicks).unwrap_or(0.0),
                Metric::Mrr => {
                    let ranks: Vec<usize> = clicks.iter().map(|c| c.rank).collect();
                    mrr(&ranks).unwrap_or(0.0)
                }
                Metric::Ndcg(_) => s / used as f64,
            };
            (m, v)
        })
        .collect();
    Ok(EvalReport {
        metrics: values,
        used,
        discarded,
    })
}
