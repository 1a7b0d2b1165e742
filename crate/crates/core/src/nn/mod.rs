//! A small dense network core: affine layers, batch normalization, ReLU, hand-written
//! reverse pass, and Adagrad.

mod adagrad;
mod layers;
mod matrix;
mod net;

pub use adagrad::{AdagradState, DEFAULT_INITIAL_ACCUMULATOR};
pub use layers::{
    relu, AffineLayer, BatchNormCache, BatchNormLayer, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM,
};
pub use matrix::Matrix;
pub use net::{ForwardCache, Gradients, HiddenLayer, LayerGrads, Mode, ScoringNet};
