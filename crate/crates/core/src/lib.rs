//! Groupwise scoring functions for learning to rank.
//!
//! A shared feed-forward network scores fixed-size groups of documents jointly; per-document
//! scores come from aggregating group outputs over every ordered group (exact) or over a
//! linear number of shuffled circular windows (Monte Carlo). Listwise, pairwise, and
//! propensity-weighted losses train it; NDCG, MRR, and weighted MRR evaluate it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The `*64` aliases below name
//! the `f64` instantiations used by the CLI and the tests.

pub mod clicksim;
pub mod data;
pub mod error;
pub mod gsf;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod rng;
mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{sigmoid, softplus, Scalar};

pub type Matrix64 = nn::Matrix<f64>;
pub type ScoringNet64 = nn::ScoringNet<f64>;
pub type Document64 = data::Document<f64>;
pub type QueryList64 = data::QueryList<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type GsfModel64 = gsf::GsfModel<f64>;
pub type ScoreVector64 = gsf::ScoreVector<f64>;
pub type LossOutput64 = loss::LossOutput<f64>;

pub type Matrix32 = nn::Matrix<f32>;
pub type ScoringNet32 = nn::ScoringNet<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type GsfModel32 = gsf::GsfModel<f32>;
