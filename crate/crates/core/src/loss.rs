//! Ranking losses over per-document scores, each returning its value and `∂ℓ/∂score`.
//!
//! Slice arguments are slot-aligned with the query list; slots whose mask is `false` are
//! ignored and receive zero gradient.

use crate::data::QueryList;
use crate::error::{Error, Result};
use crate::gsf::ScoreVector;
use crate::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Cross-entropy between label-normalized targets and the softmax of scores.
    SoftmaxXent,
    /// Softmax cross-entropy on clicks, each click weighted by its inverse propensity.
    IpwSoftmax,
    /// Cross-entropy between the softmax of labels and the softmax of scores.
    ListNet,
    /// RankNet-style logistic loss over preference pairs.
    PairwiseLogistic,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::SoftmaxXent,
        LossKind::IpwSoftmax,
        LossKind::ListNet,
        LossKind::PairwiseLogistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SoftmaxXent => "softmax_xent",
            LossKind::IpwSoftmax => "ipw_softmax",
            LossKind::ListNet => "listnet",
            LossKind::PairwiseLogistic => "pairwise_logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss {s:?}")))
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub value: T,
    pub score_grad: Vec<T>,
    /// Sum of the query's labels; used for query weighting.
    pub query_weight: T,
}

impl<T: Scalar> LossOutput<T> {
    fn zero(n: usize, query_weight: T) -> Self {
        Self {
            value: T::zero(),
            score_grad: vec![T::zero(); n],
            query_weight,
        }
    }
}

fn check_lengths<T>(labels: &[T], scores: &[T], mask: &[bool]) -> Result<()> {
    if labels.len() != scores.len() || mask.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "loss inputs",
            expected: scores.len(),
            actual: labels.len().min(mask.len()),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("loss needs at least one valid slot"));
    }
    Ok(())
}

/// `(log-probabilities, probabilities)` over valid slots; masked slots get `-∞` and 0.
fn log_softmax<T: Scalar>(scores: &[T], mask: &[bool]) -> (Vec<T>, Vec<T>) {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(T::neg_infinity(), T::max);
    let sum: T = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| (s - max).exp())
        .sum();
    let log_z = max + sum.ln();
    let logp: Vec<T> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { s - log_z } else { T::neg_infinity() })
        .collect();
    let p = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() / sum } else { T::zero() })
        .collect();
    (logp, p)
}

/// Max-shifted softmax over valid slots; masked slots get probability 0.
pub fn softmax<T: Scalar>(scores: &[T], mask: &[bool]) -> Vec<T> {
    log_softmax(scores, mask).1
}

/// Sum of valid labels.
pub fn query_weight<T: Scalar>(labels: &[T], mask: &[bool]) -> T {
    labels.iter().zip(mask).filter(|(_, &m)| m).map(|(&y, _)| y).sum()
}

/// `−Σ (yᵢ/Y)·log pᵢ` with `Y = Σ yᵢ`. Queries with `Y = 0` contribute nothing.
pub fn softmax_xent<T: Scalar>(labels: &[T], scores: &[T], mask: &[bool]) -> Result<LossOutput<T>> {
    check_lengths(labels, scores, mask)?;
    for (slot, (&y, &m)) in labels.iter().zip(mask).enumerate() {
        if m && !(y >= T::zero() && y.is_finite()) {
            return Err(Error::InvalidLabel {
                slot,
                value: y.as_f64(),
                reason: "labels must be finite and non-negative",
            });
        }
    }
    let total = query_weight(labels, mask);
    if total == T::zero() {
        return Ok(LossOutput::zero(scores.len(), total));
    }
    let (logp, p) = log_softmax(scores, mask);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); scores.len()];
    for i in 0..scores.len() {
        if !mask[i] {
            continue;
        }
        let target = labels[i] / total;
        if target > T::zero() {
            value -= target * logp[i];
        }
        grad[i] = p[i] - target;
    }
    Ok(LossOutput {
        value,
        score_grad: grad,
        query_weight: total,
    })
}

/// `−Σ_{clicked} wᵢ·log pᵢ`. Every clicked slot must carry a weight.
pub fn ipw_softmax<T: Scalar>(
    clicks: &[T],
    weights: &[Option<T>],
    scores: &[T],
    mask: &[bool],
) -> Result<LossOutput<T>> {
    check_lengths(clicks, scores, mask)?;
    if weights.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "propensity weights",
            expected: scores.len(),
            actual: weights.len(),
        });
    }
    let mut clicked = Vec::new();
    for (slot, (&c, &m)) in clicks.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if c == T::one() {
            let w = weights[slot].ok_or(Error::MissingWeight { slot })?;
            if !(w >= T::zero() && w.is_finite()) {
                return Err(Error::invalid(format!("invalid propensity weight at slot {slot}")));
            }
            clicked.push((slot, w));
        } else if c != T::zero() {
            return Err(Error::InvalidLabel {
                slot,
                value: c.as_f64(),
                reason: "clicks must be 0 or 1",
            });
        }
    }
    let total = query_weight(clicks, mask);
    if clicked.is_empty() {
        return Ok(LossOutput::zero(scores.len(), total));
    }
    let (logp, p) = log_softmax(scores, mask);
    let w_sum: T = clicked.iter().map(|&(_, w)| w).sum();
    let mut value = T::zero();
    let mut grad: Vec<T> = p
        .iter()
        .zip(mask)
        .map(|(&pi, &m)| if m { w_sum * pi } else { T::zero() })
        .collect();
    for &(slot, w) in &clicked {
        value -= w * logp[slot];
        grad[slot] -= w;
    }
    Ok(LossOutput {
        value,
        score_grad: grad,
        query_weight: total,
    })
}

/// `−Σ softmax(y)ᵢ·log softmax(s)ᵢ`.
pub fn listnet<T: Scalar>(labels: &[T], scores: &[T], mask: &[bool]) -> Result<LossOutput<T>> {
    check_lengths(labels, scores, mask)?;
    if let Some(slot) = (0..labels.len()).find(|&i| mask[i] && !labels[i].is_finite()) {
        return Err(Error::InvalidLabel {
            slot,
            value: labels[slot].as_f64(),
            reason: "labels must be finite",
        });
    }
    let target = softmax(labels, mask);
    let (logp, p) = log_softmax(scores, mask);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); scores.len()];
    for i in 0..scores.len() {
        if mask[i] {
            value -= target[i] * logp[i];
            grad[i] = p[i] - target[i];
        }
    }
    Ok(LossOutput {
        value,
        score_grad: grad,
        query_weight: query_weight(labels, mask),
    })
}

/// `Σ_{yᵢ > yⱼ} log(1 + exp(−(sᵢ − sⱼ)))` over valid pairs.
pub fn pairwise_logistic<T: Scalar>(labels: &[T], scores: &[T], mask: &[bool]) -> Result<LossOutput<T>> {
    check_lengths(labels, scores, mask)?;
    if let Some(slot) = (0..labels.len()).find(|&i| mask[i] && !labels[i].is_finite()) {
        return Err(Error::InvalidLabel {
            slot,
            value: labels[slot].as_f64(),
            reason: "labels must be finite",
        });
    }
    let valid: Vec<usize> = (0..labels.len()).filter(|&i| mask[i]).collect();
    let mut value = T::zero();
    let mut grad = vec![T::zero(); scores.len()];
    for &i in &valid {
        for &j in &valid {
            if labels[i] > labels[j] {
                let margin = scores[i] - scores[j];
                value += softplus(-margin);
                // d/dmargin softplus(−margin) = −σ(−margin)
                let g = sigmoid(-margin);
                grad[i] -= g;
                grad[j] += g;
            }
        }
    }
    Ok(LossOutput {
        value,
        score_grad: grad,
        query_weight: query_weight(labels, mask),
    })
}

/// Dispatches on `kind` using the list's labels, weights, and mask.
pub fn compute<T: Scalar>(kind: LossKind, q: &QueryList<T>, scores: &ScoreVector<T>) -> Result<LossOutput<T>> {
    if scores.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "scores per list",
            expected: q.len(),
            actual: scores.len(),
        });
    }
    let labels = q.labels();
    // Padded slots hold −∞; replace so arithmetic on masked entries stays finite.
    let s: Vec<T> = scores
        .scores
        .iter()
        .zip(&q.mask)
        .map(|(&v, &m)| if m { v } else { T::zero() })
        .collect();
    match kind {
        LossKind::SoftmaxXent => softmax_xent(&labels, &s, &q.mask),
        LossKind::IpwSoftmax => ipw_softmax(&labels, &q.weights(), &s, &q.mask),
        LossKind::ListNet => listnet(&labels, &s, &q.mask),
        LossKind::PairwiseLogistic => pairwise_logistic(&labels, &s, &q.mask),
    }
}

/// Combines per-query losses as `Σ w_q·ℓ_q / Σ w_q` and scales each query's score
/// gradient by `w_q / Σ w`. With `query_weighting` off every `w_q` is 1.
pub fn combine<T: Scalar>(outputs: &mut [LossOutput<T>], query_weighting: bool) -> T {
    let weight = |o: &LossOutput<T>| if query_weighting { o.query_weight } else { T::one() };
    let total: T = outputs.iter().map(weight).sum();
    if total <= T::zero() {
        for o in outputs.iter_mut() {
            o.score_grad.iter_mut().for_each(|g| *g = T::zero());
        }
        return T::zero();
    }
    let mut value = T::zero();
    for o in outputs.iter_mut() {
        let k = weight(o) / total;
        value += k * o.value;
        o.score_grad.iter_mut().for_each(|g| *g *= k);
    }
    value
}
