use super::{Gradients, ScoringNet};
use crate::error::{Error, Result};
use crate::Scalar;

pub const DEFAULT_INITIAL_ACCUMULATOR: f64 = 0.1;

/// Per-parameter squared-gradient accumulators, laid out like
/// [`ScoringNet::param_slices`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState<T> {
    accumulators: Vec<Vec<T>>,
    initial_accumulator: T,
}

impl<T: Scalar> AdagradState<T> {
    pub fn new(net: &ScoringNet<T>, initial_accumulator: T) -> Result<Self> {
        if initial_accumulator < T::zero() {
            return Err(Error::invalid("initial accumulator must be non-negative"));
        }
        Ok(Self {
            accumulators: net
                .param_slices()
                .iter()
                .map(|s| vec![initial_accumulator; s.len()])
                .collect(),
            initial_accumulator,
        })
    }

    pub fn initial_accumulator(&self) -> T {
        self.initial_accumulator
    }

    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.accumulators
    }

    /// `acc ← acc + g²; p ← p − lr·g/√acc`, elementwise.
    pub fn step(&mut self, net: &mut ScoringNet<T>, grads: &Gradients<T>, learning_rate: T) -> Result<()> {
        if learning_rate <= T::zero() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        let grad_slices = grads.slices();
        let mut params = net.param_slices_mut();
        if grad_slices.len() != params.len() || self.accumulators.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "adagrad parameter groups",
                expected: params.len(),
                actual: grad_slices.len(),
            });
        }
        for ((p, g), acc) in params.iter_mut().zip(&grad_slices).zip(&mut self.accumulators) {
            if p.len() != g.len() || p.len() != acc.len() {
                return Err(Error::DimensionMismatch {
                    context: "adagrad parameter",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            for ((pi, &gi), ai) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                if gi == T::zero() {
                    continue;
                }
                *ai += gi * gi;
                *pi -= learning_rate * gi / ai.sqrt();
            }
        }
        Ok(())
    }
}
