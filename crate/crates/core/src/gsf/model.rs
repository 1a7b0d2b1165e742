use rand::Rng;

use super::groups::{enumerate_groups, sample_groups_wrapping, circular_windows, GroupSet};
use crate::data::{FeatureTransform, QueryList};
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, Gradients, Matrix, Mode, ScoringNet};
use crate::rng;
use crate::Scalar;

/// How group outputs are folded into per-document scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Sum over every group containing the document.
    Sum,
    /// Sum divided by the number of groups containing the document.
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            _ => Err(Error::invalid(format!("unknown aggregation {s:?} (sum|mean)"))),
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    /// Every ordered group of distinct documents.
    Full,
    /// One shuffle, `n` circular windows.
    Sampled,
}

impl std::str::FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScoringMode::Full),
            "sampled" => Ok(ScoringMode::Sampled),
            _ => Err(Error::invalid(format!("unknown scoring mode {s:?} (full|sampled)"))),
        }
    }
}

impl std::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoringMode::Full => "full",
            ScoringMode::Sampled => "sampled",
        })
    }
}

/// Per-slot scores. Padded slots hold `-∞` and are skipped by ranking and losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    pub scores: Vec<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn valid_scores(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.scores
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter_map(|(i, (&s, &m))| m.then_some((i, s)))
    }
}

/// Valid slots by descending score; ties keep ascending slot order.
pub fn rank<T: Scalar>(scores: &ScoreVector<T>) -> Vec<usize> {
    let mut order: Vec<usize> = scores.valid_scores().map(|(i, _)| i).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Folds one `m`-vector per group into per-slot scores.
pub fn aggregate<T: Scalar>(
    group_scores: &Matrix<T>,
    groups: &GroupSet,
    mask: &[bool],
    aggregation: Aggregation,
) -> Result<ScoreVector<T>> {
    if group_scores.rows() != groups.len() {
        return Err(Error::DimensionMismatch {
            context: "group scores",
            expected: groups.len(),
            actual: group_scores.rows(),
        });
    }
    let n = mask.len();
    let mut sums = vec![T::zero(); n];
    let mut counts = vec![0usize; n];
    for (r, g) in groups.groups.iter().enumerate() {
        if g.len() != group_scores.cols() {
            return Err(Error::DimensionMismatch {
                context: "group width",
                expected: group_scores.cols(),
                actual: g.len(),
            });
        }
        for (p, &slot) in g.indices.iter().enumerate() {
            if slot >= n || !mask[slot] {
                return Err(Error::invalid(format!("group references masked or missing slot {slot}")));
            }
            sums[slot] += group_scores[(r, p)];
            counts[slot] += 1;
        }
    }
    let mut scores = vec![T::neg_infinity(); n];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        if counts[i] == 0 {
            return Err(Error::invalid(format!("slot {i} is in no group")));
        }
        scores[i] = match aggregation {
            Aggregation::Sum => sums[i],
            Aggregation::Mean => sums[i] / T::from_usize_lossy(counts[i]),
        };
    }
    Ok(ScoreVector {
        scores,
        mask: mask.to_vec(),
    })
}

/// Maps per-slot score gradients onto group output cells: each cell receives its slot's
/// gradient (divided by the slot's occurrence count under mean aggregation).
pub fn route_gradients<T: Scalar>(
    score_grad: &[T],
    groups: &GroupSet,
    aggregation: Aggregation,
) -> Matrix<T> {
    let m = groups.group_size();
    let counts = groups.occurrence_counts(score_grad.len());
    let mut out = Matrix::zeros(groups.len(), m);
    for (r, g) in groups.groups.iter().enumerate() {
        for (p, &slot) in g.indices.iter().enumerate() {
            out[(r, p)] = match aggregation {
                Aggregation::Sum => score_grad[slot],
                Aggregation::Mean => score_grad[slot] / T::from_usize_lossy(counts[slot]),
            };
        }
    }
    out
}

/// A groupwise scoring model: a shared network scoring `m` concatenated documents at once.
#[derive(Debug, Clone, PartialEq)]
pub struct GsfModel<T> {
    pub group_size: usize,
    pub feature_dim: usize,
    /// Width of the optional query-level prefix; 0 disables it.
    pub context_dim: usize,
    pub net: ScoringNet<T>,
    pub aggregation: Aggregation,
    /// Preprocessing fitted at training time, applied by callers before scoring.
    pub transform: Option<FeatureTransform<T>>,
}

/// Scores for a batch of lists plus what the reverse pass needs.
#[derive(Debug, Clone)]
pub struct BatchScores<T> {
    pub scores: Vec<ScoreVector<T>>,
    pub groups: Vec<GroupSet>,
    /// Network rows evaluated (one per group).
    pub evaluations: usize,
    cache: ForwardCache<T>,
}

impl<T: Scalar> GsfModel<T> {
    /// A freshly initialized model; hidden layers use ReLU and, optionally, batch norm.
    pub fn new<R: Rng + ?Sized>(
        group_size: usize,
        feature_dim: usize,
        hidden_dims: &[usize],
        batch_norm: bool,
        aggregation: Aggregation,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_context(group_size, feature_dim, 0, hidden_dims, batch_norm, aggregation, rng)
    }

    pub fn with_context<R: Rng + ?Sized>(
        group_size: usize,
        feature_dim: usize,
        context_dim: usize,
        hidden_dims: &[usize],
        batch_norm: bool,
        aggregation: Aggregation,
        rng: &mut R,
    ) -> Result<Self> {
        if group_size == 0 || feature_dim == 0 {
            return Err(Error::invalid("group size and feature dimension must be positive"));
        }
        let net = ScoringNet::new(
            context_dim + group_size * feature_dim,
            hidden_dims,
            group_size,
            batch_norm,
            rng,
        )?;
        Ok(Self {
            group_size,
            feature_dim,
            context_dim,
            net,
            aggregation,
            transform: None,
        })
    }

    pub fn from_net(
        group_size: usize,
        feature_dim: usize,
        context_dim: usize,
        net: ScoringNet<T>,
        aggregation: Aggregation,
    ) -> Result<Self> {
        let expected = context_dim + group_size * feature_dim;
        if net.input_dim() != expected {
            return Err(Error::DimensionMismatch {
                context: "network input width",
                expected,
                actual: net.input_dim(),
            });
        }
        if net.output_dim() != group_size {
            return Err(Error::DimensionMismatch {
                context: "network output width",
                expected: group_size,
                actual: net.output_dim(),
            });
        }
        Ok(Self {
            group_size,
            feature_dim,
            context_dim,
            net,
            aggregation,
            transform: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check_list(&self, q: &QueryList<T>) -> Result<()> {
        if q.feature_dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                context: "document features",
                expected: self.feature_dim,
                actual: q.feature_dim(),
            });
        }
        let ctx = q.context.as_ref().map_or(0, Vec::len);
        if ctx != self.context_dim {
            return Err(Error::DimensionMismatch {
                context: "query context",
                expected: self.context_dim,
                actual: ctx,
            });
        }
        Ok(())
    }

    /// Context prefix followed by the group's feature vectors in group order.
    pub fn build_group_input(&self, q: &QueryList<T>, group: &super::Group) -> Result<Vec<T>> {
        self.check_list(q)?;
        let mut input = Vec::with_capacity(self.input_dim());
        if let Some(ctx) = &q.context {
            input.extend_from_slice(ctx);
        }
        for &i in &group.indices {
            match q.mask.get(i) {
                Some(true) => input.extend_from_slice(&q.docs[i].features),
                _ => return Err(Error::invalid(format!("group uses masked or missing slot {i}"))),
            }
        }
        Ok(input)
    }

    /// Slot-indexed groups for `q`. Lists shorter than `m` fall back to wrapped windows.
    pub fn groups_for<R: Rng + ?Sized>(&self, q: &QueryList<T>, mode: ScoringMode, rng: &mut R) -> Result<GroupSet> {
        let slots = q.valid_slots();
        let m = self.group_size;
        let local = if slots.len() < m {
            match mode {
                ScoringMode::Sampled => sample_groups_wrapping(slots.len(), m, rng),
                // Deterministic: wrapped windows over the original order.
                ScoringMode::Full => circular_windows(&(0..slots.len()).collect::<Vec<_>>(), m),
            }
        } else {
            match mode {
                ScoringMode::Full => enumerate_groups(slots.len(), m)?,
                ScoringMode::Sampled => sample_groups_wrapping(slots.len(), m, rng),
            }
        };
        Ok(local.map_slots(&slots))
    }

    /// Scores several lists with one network pass over all of their groups.
    pub fn forward_lists(&self, lists: &[&QueryList<T>], groups: Vec<GroupSet>, mode: Mode) -> Result<BatchScores<T>> {
        if lists.len() != groups.len() {
            return Err(Error::DimensionMismatch {
                context: "group sets per list",
                expected: lists.len(),
                actual: groups.len(),
            });
        }
        let rows: usize = groups.iter().map(GroupSet::len).sum();
        let mut data = Vec::with_capacity(rows * self.input_dim());
        for (q, gs) in lists.iter().zip(&groups) {
            if gs.group_size() != self.group_size {
                return Err(Error::DimensionMismatch {
                    context: "group size",
                    expected: self.group_size,
                    actual: gs.group_size(),
                });
            }
            for g in &gs.groups {
                data.extend(self.build_group_input(q, g)?);
            }
        }
        let input = Matrix::from_vec(rows, self.input_dim(), data)?;
        let (out, cache) = self.net.forward(&input, mode)?;
        let mut scores = Vec::with_capacity(lists.len());
        let mut offset = 0;
        for (q, gs) in lists.iter().zip(&groups) {
            let block = Matrix::from_vec(
                gs.len(),
                self.group_size,
                out.as_slice()[offset * self.group_size..(offset + gs.len()) * self.group_size].to_vec(),
            )?;
            scores.push(aggregate(&block, gs, &q.mask, self.aggregation)?);
            offset += gs.len();
        }
        Ok(BatchScores {
            scores,
            groups,
            evaluations: rows,
            cache,
        })
    }

    /// Parameter gradients given `∂loss/∂score` for each list of a [`BatchScores`].
    pub fn backward_lists(&self, batch: &BatchScores<T>, score_grads: &[Vec<T>]) -> Result<Gradients<T>> {
        if score_grads.len() != batch.groups.len() {
            return Err(Error::DimensionMismatch {
                context: "score gradients",
                expected: batch.groups.len(),
                actual: score_grads.len(),
            });
        }
        let mut data = Vec::with_capacity(batch.evaluations * self.group_size);
        for (grad, gs) in score_grads.iter().zip(&batch.groups) {
            data.extend(route_gradients(grad, gs, self.aggregation).into_vec());
        }
        let output_grad = Matrix::from_vec(batch.evaluations, self.group_size, data)?;
        Ok(self.net.backward(&batch.cache, &output_grad)?.0)
    }

    /// Folds a train-mode batch's normalization statistics into the network.
    pub fn absorb_batch_statistics(&mut self, batch: &BatchScores<T>) -> Result<()> {
        self.net.absorb_batch_statistics(&batch.cache)
    }

    /// Inference-mode scores for one list.
    pub fn score_list<R: Rng + ?Sized>(&self, q: &QueryList<T>, mode: ScoringMode, rng: &mut R) -> Result<ScoreVector<T>> {
        self.check_list(q)?;
        let groups = self.groups_for(q, mode, rng)?;
        let mut batch = self.forward_lists(&[q], vec![groups], Mode::Infer)?;
        Ok(batch.scores.pop().expect("one list in, one score vector out"))
    }

    pub fn scorer(&self, mode: ScoringMode) -> ModelScorer<'_, T> {
        ModelScorer { model: self, mode }
    }
}

/// Anything that turns a list into scores; evaluation and click simulation take these.
pub trait ListScorer<T> {
    fn score(&self, q: &QueryList<T>, rng: &mut rng::Rng) -> Result<ScoreVector<T>>;
}

impl<T, F> ListScorer<T> for F
where
    F: Fn(&QueryList<T>, &mut rng::Rng) -> Result<ScoreVector<T>>,
{
    fn score(&self, q: &QueryList<T>, rng: &mut rng::Rng) -> Result<ScoreVector<T>> {
        self(q, rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelScorer<'a, T> {
    pub model: &'a GsfModel<T>,
    pub mode: ScoringMode,
}

impl<T: Scalar> ListScorer<T> for ModelScorer<'_, T> {
    fn score(&self, q: &QueryList<T>, rng: &mut rng::Rng) -> Result<ScoreVector<T>> {
        self.model.score_list(q, self.mode, rng)
    }
}

/// Scores equal to one feature's value; handy as a fixed logging ranker.
pub fn feature_scorer<T: Scalar>(feature: usize) -> impl Fn(&QueryList<T>, &mut rng::Rng) -> Result<ScoreVector<T>> {
    move |q: &QueryList<T>, _: &mut rng::Rng| {
        if feature >= q.feature_dim() {
            return Err(Error::DimensionMismatch {
                context: "ranking feature",
                expected: q.feature_dim(),
                actual: feature + 1,
            });
        }
        Ok(ScoreVector {
            scores: q
                .docs
                .iter()
                .zip(&q.mask)
                .map(|(d, &m)| if m { d.features[feature] } else { T::neg_infinity() })
                .collect(),
            mask: q.mask.clone(),
        })
    }
}
