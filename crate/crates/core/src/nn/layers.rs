use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};
use crate::Scalar;

/// `max(t, 0)`, with the subgradient at zero taken as zero.
pub fn relu<T: Scalar>(t: T) -> T {
    if t > T::zero() {
        t
    } else {
        T::zero()
    }
}

/// `y = x·W + b` for a row batch `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> AffineLayer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::DimensionMismatch {
                context: "affine bias",
                expected: weights.cols(),
                actual: bias.len(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!(
                "layer dimensions must be positive, got {in_dim}x{out_dim}"
            )));
        }
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| T::lit(rng.gen_range(-bound..=bound)))
            .collect();
        Ok(Self {
            weights: Matrix::from_vec(in_dim, out_dim, data)?,
            bias: vec![T::zero(); out_dim],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut y = x.matmul(&self.weights)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }

    /// Returns `(dW, db, dx)`.
    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>, Matrix<T>)> {
        let dw = x.t_matmul(dy)?;
        let db = dy.column_sums();
        let dx = dy.matmul_t(&self.weights)?;
        Ok((dw, db, dx))
    }
}

/// Per-feature batch normalization with learned scale and shift.
///
/// Running statistics follow `running ← (1 − momentum)·running + momentum·batch`, so a
/// momentum of 1 copies the last batch's statistics exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

pub const DEFAULT_BN_MOMENTUM: f64 = 0.01;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Matrix<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
    pub train: bool,
}

impl<T: Scalar> BatchNormLayer<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![T::one(); dim],
            beta: vec![T::zero(); dim],
            running_mean: vec![T::zero(); dim],
            running_var: vec![T::one(); dim],
            momentum: T::lit(DEFAULT_BN_MOMENTUM),
            epsilon: T::lit(DEFAULT_BN_EPSILON),
        }
    }

    pub fn with_momentum(mut self, momentum: T) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&self, x: &Matrix<T>) -> Result<(Matrix<T>, BatchNormCache<T>)> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::invalid(
                "batch normalization in train mode needs at least 2 rows",
            ));
        }
        let nt = T::from_usize_lossy(n);
        let mean: Vec<T> = x.column_sums().into_iter().map(|s| s / nt).collect();
        let mut var = vec![T::zero(); x.cols()];
        for r in 0..n {
            for ((v, &xi), &mu) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let d = xi - mu;
                *v += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= nt);
        let (y, cache) = self.normalize(x, &mean, &var, true);
        Ok((y, cache))
    }

    pub fn forward_infer(&self, x: &Matrix<T>) -> (Matrix<T>, BatchNormCache<T>) {
        self.normalize(x, &self.running_mean, &self.running_var, false)
    }

    fn normalize(&self, x: &Matrix<T>, mean: &[T], var: &[T], train: bool) -> (Matrix<T>, BatchNormCache<T>) {
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.epsilon).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let xr = xhat.row_mut(r);
            for (j, v) in xr.iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
            let xr = xhat.row(r).to_vec();
            for (j, out) in y.row_mut(r).iter_mut().enumerate() {
                *out = self.gamma[j] * xr[j] + self.beta[j];
            }
        }
        let cache = BatchNormCache {
            xhat,
            inv_std,
            batch_mean: mean.to_vec(),
            batch_var: var.to_vec(),
            train,
        };
        (y, cache)
    }

    /// Returns `(dgamma, dbeta, dx)`.
    pub fn backward(&self, cache: &BatchNormCache<T>, dy: &Matrix<T>) -> (Vec<T>, Vec<T>, Matrix<T>) {
        let d = self.dim();
        let n = dy.rows();
        let mut dgamma = vec![T::zero(); d];
        let mut dbeta = vec![T::zero(); d];
        for r in 0..n {
            for j in 0..d {
                dgamma[j] += dy[(r, j)] * cache.xhat[(r, j)];
                dbeta[j] += dy[(r, j)];
            }
        }
        let mut dx = Matrix::zeros(n, d);
        if cache.train {
            // dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
            let nt = T::from_usize_lossy(n);
            for j in 0..d {
                let sum_dxhat = dbeta[j] * self.gamma[j];
                let sum_dxhat_xhat = dgamma[j] * self.gamma[j];
                let k = cache.inv_std[j] / nt;
                for r in 0..n {
                    let dxhat = dy[(r, j)] * self.gamma[j];
                    dx[(r, j)] = k * (nt * dxhat - sum_dxhat - cache.xhat[(r, j)] * sum_dxhat_xhat);
                }
            }
        } else {
            for r in 0..n {
                for j in 0..d {
                    dx[(r, j)] = dy[(r, j)] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        (dgamma, dbeta, dx)
    }

    /// Folds one batch's statistics into the running estimates.
    pub fn absorb(&mut self, batch_mean: &[T], batch_var: &[T]) {
        let keep = T::one() - self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = keep * *r + self.momentum * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var) {
            *r = keep * *r + self.momentum * b;
        }
    }
}
