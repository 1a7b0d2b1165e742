use std::time::Instant;

use serde_json::{json, Map, Value};

use super::TrainConfig;
use crate::data::{normalize_list, BatchIter, Dataset, FeatureTransform, QueryList};
use crate::error::{Error, Result};
use crate::gsf::{GsfModel, ScoringMode};
use crate::loss::{self, LossOutput};
use crate::metrics::{evaluate, Metric};
use crate::nn::{AdagradState, Mode};
use crate::rng::SeedTree;
use crate::Scalar;

/// One validation checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// Number of updates applied so far.
    pub step: usize,
    /// Mean batch loss over the updates since the previous point.
    pub train_loss: f64,
    /// Empty when there is no validation set.
    pub metrics: Vec<(Metric, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub points: Vec<EvalPoint>,
    /// Batch loss of every update, in order.
    pub step_losses: Vec<f64>,
    /// Wall-clock seconds per update, validation excluded.
    pub seconds_per_step: f64,
    /// Lists were fitted to this many slots.
    pub list_size: usize,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.step_losses.first().copied()
    }

    pub fn final_metric(&self, metric: Metric) -> Option<f64> {
        let point = self.points.last()?;
        point.metrics.iter().find(|(m, _)| *m == metric).map(|&(_, v)| v)
    }

    /// One JSON object per checkpoint.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let metrics: Map<String, Value> = p.metrics.iter().map(|(m, v)| (m.to_string(), json!(v))).collect();
            let line = json!({
                "step": p.step,
                "train_loss": p.train_loss,
                "metrics": metrics,
                "seconds_per_step": self.seconds_per_step,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Applies the model's stored feature transform, if any.
pub fn prepare_dataset<T: Scalar>(model: &GsfModel<T>, ds: &Dataset<T>) -> Result<Dataset<T>> {
    match &model.transform {
        Some(t) => t.apply(ds),
        None => Ok(ds.clone()),
    }
}

fn check_dims<T>(expected: usize, ds: &Dataset<T>) -> Result<()> {
    if ds.feature_dim != expected {
        return Err(Error::DimensionMismatch {
            context: "validation features",
            expected,
            actual: ds.feature_dim,
        });
    }
    Ok(())
}

fn diverged(step: usize, loss: f64) -> Error {
    Error::Divergence { step, loss }
}

/// Trains a GSF model with sampled-mode group scoring, the configured loss, and Adagrad.
///
/// Each step draws a batch, refits every list to `list_size` slots (fresh subsample), scores
/// it with freshly sampled groups, and applies one update. Validation runs every
/// `eval_every` steps and after the last one; it never influences training. The run is a
/// pure function of the config, the data and `config.seed`.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    train_ds: &Dataset<T>,
    valid_ds: Option<&Dataset<T>>,
) -> Result<(GsfModel<T>, TrainReport)> {
    config.validate_for(train_ds)?;
    if let Some(v) = valid_ds {
        check_dims(train_ds.feature_dim, v)?;
    }
    let tree = SeedTree::new(config.seed).child("train");
    let transform = if config.standardize {
        Some(FeatureTransform::fit(train_ds)?)
    } else {
        None
    };
    let apply = |ds: &Dataset<T>| match &transform {
        Some(t) => t.apply(ds),
        None => Ok(ds.clone()),
    };
    let train_t = apply(train_ds)?;
    let valid_t = valid_ds.map(apply).transpose()?;

    let mut model = GsfModel::new(
        config.group_size,
        train_ds.feature_dim,
        &config.hidden_dims,
        config.use_batch_norm,
        config.aggregation,
        &mut tree.stream("init"),
    )?;
    model.transform = transform;

    let list_size = config
        .list_size
        .unwrap_or_else(|| train_t.queries.iter().map(QueryList::n_valid).max().unwrap_or(1));
    if config.group_size > list_size {
        return Err(Error::GroupTooLarge {
            m: config.group_size,
            n: list_size,
        });
    }
    let mut report = TrainReport {
        list_size,
        ..TrainReport::default()
    };
    if config.steps == 0 {
        return Ok((model, report));
    }

    let mut batches = BatchIter::new(&train_t, config.batch_size, tree.stream("batches"));
    let mut list_rng = tree.stream("lists");
    let mut group_rng = tree.stream("groups");
    let mut optimizer = AdagradState::new(&model.net, T::lit(config.initial_accumulator))?;
    let lr = T::lit(config.learning_rate);
    let mut train_seconds = 0.0;
    let mut window = 0.0;
    let mut window_len = 0usize;

    for step in 0..config.steps {
        let started = Instant::now();
        let lists: Vec<QueryList<T>> = batches
            .next_indices()
            .into_iter()
            .map(|i| normalize_list(&train_t.queries[i], list_size, &mut list_rng))
            .collect();
        let refs: Vec<&QueryList<T>> = lists.iter().collect();
        let groups = refs
            .iter()
            .map(|q| model.groups_for(q, ScoringMode::Sampled, &mut group_rng))
            .collect::<Result<Vec<_>>>()?;
        let batch = match model.forward_lists(&refs, groups, Mode::Train) {
            Err(Error::NonFinite { .. }) => return Err(diverged(step, f64::NAN)),
            other => other?,
        };
        let mut outputs = refs
            .iter()
            .zip(&batch.scores)
            .map(|(q, s)| loss::compute(config.loss, q, s))
            .collect::<Result<Vec<LossOutput<T>>>>()?;
        let value = loss::combine(&mut outputs, config.query_weighting).as_f64();
        if !value.is_finite() {
            return Err(diverged(step, value));
        }
        let score_grads: Vec<Vec<T>> = outputs.into_iter().map(|o| o.score_grad).collect();
        let mut grads = model.backward_lists(&batch, &score_grads)?;
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(diverged(step, value));
        }
        if let Some(clip) = config.clip_norm.map(T::lit) {
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        optimizer.step(&mut model.net, &grads, lr)?;
        model.absorb_batch_statistics(&batch)?;
        train_seconds += started.elapsed().as_secs_f64();

        report.step_losses.push(value);
        window += value;
        window_len += 1;
        let done = step + 1;
        let checkpoint = done == config.steps || (config.eval_every > 0 && done % config.eval_every == 0);
        if checkpoint {
            let metrics = match &valid_t {
                Some(v) => evaluate(&model.scorer(config.eval_mode), v, &config.eval_metrics, config.seed)?.metrics,
                None => Vec::new(),
            };
            report.points.push(EvalPoint {
                step: done,
                train_loss: window / window_len as f64,
                metrics,
            });
            window = 0.0;
            window_len = 0;
        }
    }
    report.seconds_per_step = train_seconds / config.steps as f64;
    Ok((model, report))
}
