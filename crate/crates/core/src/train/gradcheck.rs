use rand::Rng;

use super::TrainConfig;
use crate::data::QueryList;
use crate::error::Result;
use crate::gsf::{GroupSet, GsfModel, ScoringMode};
use crate::loss;
use crate::nn::Mode;
use crate::rng::SeedTree;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error. Rounding in the loss limits central differences
/// at `FD_STEP` to roughly 1e-9 absolute, so smaller components are compared in absolute
/// terms (tolerance 1e-8 at a 1e-4 threshold).
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// Largest `|a − n| / max(|a|, |n|, 1e-4)` over all parameters.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index (canonical parameter order) of the worst parameter.
    pub worst_param: usize,
    /// Analytic and numeric values at `worst_param`.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub param_count: usize,
    pub loss: f64,
    /// Every analytic gradient entry is exactly zero.
    pub all_zero: bool,
}

fn objective(model: &GsfModel<f64>, q: &QueryList<f64>, groups: &GroupSet, mode: Mode, config: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    let batch = model.forward_lists(&[q], vec![groups.clone()], mode)?;
    let mut out = vec![loss::compute(config.loss, q, &batch.scores[0])?];
    let value = loss::combine(&mut out, config.query_weighting);
    let grads = model.backward_lists(&batch, &[out.remove(0).score_grad])?;
    Ok((value, grads.slices().concat()))
}

/// Replaces the zero initial biases with `U(−0.5, 0.5)` draws. With zero biases, a hidden
/// layer whose units are all inactive for some row feeds exact zeros into the next ReLU,
/// where the loss is not differentiable.
fn randomize_biases(model: &mut GsfModel<f64>, batch_norm: bool, rng: &mut impl Rng) {
    let per_hidden = if batch_norm { 4 } else { 2 };
    let hidden = model.net.hidden().len();
    let mut blocks = model.net.param_slices_mut();
    let mut bias_blocks: Vec<usize> = (0..hidden).map(|l| l * per_hidden + 1).collect();
    bias_blocks.push(hidden * per_hidden + 1);
    for b in bias_blocks {
        blocks[b].iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}

/// Compares the end-to-end analytic gradient (loss, aggregation, network) with central
/// finite differences on one list. Meant for small models: n ≤ 5, m ≤ 3, hidden ≤ 8.
///
/// The probe point is a fresh initialization with random biases (see `randomize_biases`).
/// Groups are drawn once (full enumeration when it fits) and held fixed. With batch norm the
/// network runs in training mode, so batch statistics are part of the differentiated
/// function.
pub fn gradcheck(config: &TrainConfig, q: &QueryList<f64>) -> Result<GradcheckReport> {
    config.validate()?;
    let tree = SeedTree::new(config.seed).child("gradcheck");
    let mut model = GsfModel::new(
        config.group_size,
        q.feature_dim(),
        &config.hidden_dims,
        config.use_batch_norm,
        config.aggregation,
        &mut tree.stream("init"),
    )?;
    randomize_biases(&mut model, config.use_batch_norm, &mut tree.stream("biases"));
    let groups = model.groups_for(q, ScoringMode::Full, &mut tree.stream("groups"))?;
    let mode = if config.use_batch_norm && groups.len() >= 2 { Mode::Train } else { Mode::Infer };
    let (value, analytic) = objective(&model, q, &groups, mode, config)?;

    let mut probe = model.clone();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        param_count: analytic.len(),
        loss: value,
        all_zero: analytic.iter().all(|&g| g == 0.0),
    };
    let mut flat = 0;
    let shapes: Vec<usize> = model.net.param_slices().iter().map(|s| s.len()).collect();
    for (block, len) in shapes.into_iter().enumerate() {
        for j in 0..len {
            let original = model.net.param_slices()[block][j];
            probe.net.param_slices_mut()[block][j] = original + FD_STEP;
            let plus = objective(&probe, q, &groups, mode, config)?.0;
            probe.net.param_slices_mut()[block][j] = original - FD_STEP;
            let minus = objective(&probe, q, &groups, mode, config)?.0;
            probe.net.param_slices_mut()[block][j] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[flat];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = flat;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            flat += 1;
        }
    }
    Ok(report)
}
