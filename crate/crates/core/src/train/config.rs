use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::gsf::{Aggregation, ScoringMode};
use crate::loss::LossKind;
use crate::metrics::Metric;
use crate::nn::DEFAULT_INITIAL_ACCUMULATOR;

/// Hyperparameters of one training run. Defaults follow the Web30K setup.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub group_size: usize,
    pub hidden_dims: Vec<usize>,
    pub use_batch_norm: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Lists are subsampled or padded to this size; `None` uses the longest training list.
    pub list_size: Option<usize>,
    pub loss: LossKind,
    pub seed: u64,
    /// Weight each query's loss by the sum of its labels.
    pub query_weighting: bool,
    /// Validation interval in steps; 0 evaluates only the final model.
    pub eval_every: usize,
    pub aggregation: Aggregation,
    /// Global-norm gradient clip; off when `None`.
    pub clip_norm: Option<f64>,
    pub initial_accumulator: f64,
    /// Fit a log-standardization on the training data and store it in the model.
    pub standardize: bool,
    pub eval_metrics: Vec<Metric>,
    pub eval_mode: ScoringMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 1,
            hidden_dims: vec![64, 32, 16],
            use_batch_norm: true,
            learning_rate: 0.005,
            batch_size: 128,
            steps: 30_000,
            list_size: None,
            loss: LossKind::SoftmaxXent,
            seed: 0,
            query_weighting: true,
            eval_every: 1000,
            aggregation: Aggregation::Mean,
            clip_norm: None,
            initial_accumulator: DEFAULT_INITIAL_ACCUMULATOR,
            standardize: true,
            eval_metrics: Metric::standard(),
            eval_mode: ScoringMode::Sampled,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_optional<V: FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_value(key, t))
        .collect()
}

impl TrainConfig {
    /// Sets one field from its textual form. Keys match the field names; `batch_norm` is
    /// accepted for `use_batch_norm`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "group_size" | "m" => self.group_size = parse_value(key, value)?,
            "hidden_dims" => self.hidden_dims = parse_usize_list(key, value)?,
            "use_batch_norm" | "batch_norm" => self.use_batch_norm = parse_bool(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "steps" => self.steps = parse_value(key, value)?,
            "list_size" => self.list_size = parse_optional(key, value)?,
            "loss" => self.loss = value.trim().parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "query_weighting" => self.query_weighting = parse_bool(key, value)?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "aggregation" => self.aggregation = value.trim().parse()?,
            "clip_norm" => self.clip_norm = parse_optional(key, value)?,
            "initial_accumulator" => self.initial_accumulator = parse_value(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "eval_metrics" => self.eval_metrics = Metric::parse_list(value)?,
            "eval_mode" => self.eval_mode = value.trim().parse()?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_kv(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    /// The flat `key=value` form read by [`TrainConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let metrics: Vec<String> = self.eval_metrics.iter().map(ToString::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(s, "group_size={}", self.group_size);
        let _ = writeln!(s, "hidden_dims={}", join(&self.hidden_dims));
        let _ = writeln!(s, "use_batch_norm={}", self.use_batch_norm);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "list_size={}", opt(self.list_size.map(|n| n.to_string())));
        let _ = writeln!(s, "loss={}", self.loss);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "query_weighting={}", self.query_weighting);
        let _ = writeln!(s, "eval_every={}", self.eval_every);
        let _ = writeln!(s, "aggregation={}", self.aggregation);
        let _ = writeln!(s, "clip_norm={}", opt(self.clip_norm.map(|c| c.to_string())));
        let _ = writeln!(s, "initial_accumulator={}", self.initial_accumulator);
        let _ = writeln!(s, "standardize={}", self.standardize);
        let _ = writeln!(s, "eval_metrics={}", metrics.join(","));
        let _ = writeln!(s, "eval_mode={}", self.eval_mode);
        s
    }

    /// Checks the dataset-independent invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::invalid(format!("{what} must be positive"))) };
        positive(self.group_size > 0, "group_size")?;
        positive(self.hidden_dims.iter().all(|&d| d > 0), "every hidden dimension")?;
        positive(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate")?;
        positive(self.batch_size > 0, "batch_size")?;
        positive(self.list_size.is_none_or(|n| n > 0), "list_size")?;
        positive(self.clip_norm.is_none_or(|c| c > 0.0), "clip_norm")?;
        if !(self.initial_accumulator >= 0.0 && self.initial_accumulator.is_finite()) {
            return Err(Error::invalid("initial_accumulator must be finite and non-negative"));
        }
        if let Some(n) = self.list_size {
            if self.group_size > n {
                return Err(Error::GroupTooLarge { m: self.group_size, n });
            }
        }
        Ok(())
    }

    /// Checks that the loss suits the dataset's labels.
    pub fn validate_for<T>(&self, ds: &Dataset<T>) -> Result<()> {
        self.validate()?;
        if self.loss == LossKind::IpwSoftmax && ds.label_kind != LabelKind::Binary {
            return Err(Error::invalid("ipw_softmax needs binary click labels"));
        }
        Ok(())
    }
}
