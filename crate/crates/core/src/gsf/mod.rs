//! Groupwise scoring: group formation, joint scoring of concatenated groups, and
//! aggregation back to per-document scores.

mod groups;
mod model;
mod persist;

pub use groups::{
    circular_windows, enumerate_groups, permutation_count, sample_groups, sample_groups_wrapping, Group,
    GroupOrigin, GroupSet, MAX_ENUMERATED_GROUPS,
};
pub use model::{
    aggregate, feature_scorer, rank, route_gradients, Aggregation, BatchScores, GsfModel, ListScorer,
    ModelScorer, ScoreVector, ScoringMode,
};
pub use persist::FORMAT_VERSION;

#[cfg(test)]
mod tests;
