use super::Dataset;
use crate::error::{Error, Result};
use crate::Scalar;

/// Signed log compression followed by per-feature standardization:
/// `v' = (sign(v)·ln(1+|v|) − shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform<T> {
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

fn compress<T: Scalar>(v: T) -> T {
    v.signum() * v.abs().ln_1p()
}

fn decompress<T: Scalar>(c: T) -> T {
    c.signum() * c.abs().exp_m1()
}

impl<T: Scalar> FeatureTransform<T> {
    /// Fits on the real (mask-true) documents of `train`.
    pub fn fit(train: &Dataset<T>) -> Result<Self> {
        let dim = train.feature_dim;
        let mut sum = vec![T::zero(); dim];
        let mut count = 0usize;
        let docs = || {
            train
                .queries
                .iter()
                .flat_map(|q| q.docs.iter().zip(&q.mask).filter(|(_, &m)| m).map(|(d, _)| d))
        };
        for d in docs() {
            for (s, &v) in sum.iter_mut().zip(&d.features) {
                *s += compress(v);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = T::from_usize_lossy(count);
        let shift: Vec<T> = sum.into_iter().map(|s| s / n).collect();
        let mut sq = vec![T::zero(); dim];
        for d in docs() {
            for ((s, &v), &mu) in sq.iter_mut().zip(&d.features).zip(&shift) {
                let c = compress(v) - mu;
                *s += c * c;
            }
        }
        let tiny = T::lit(1e-12);
        let scale = sq
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > tiny {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Ok(Self { shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply_vec(&self, features: &mut [T]) {
        for ((v, &mu), &sd) in features.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (compress(*v) - mu) / sd;
        }
    }

    /// Transforms real documents; padded slots keep their zero features.
    pub fn apply(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        if ds.feature_dim != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "feature transform",
                expected: self.dim(),
                actual: ds.feature_dim,
            });
        }
        let mut out = ds.clone();
        for q in &mut out.queries {
            for (d, &m) in q.docs.iter_mut().zip(&q.mask) {
                if m {
                    self.apply_vec(&mut d.features);
                }
            }
        }
        Ok(out)
    }

    /// Undoes the standardization step only, returning log-compressed values.
    pub fn invert_affine(&self, transformed: &[T]) -> Vec<T> {
        transformed
            .iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(&z, (&mu, &sd))| z * sd + mu)
            .collect()
    }

    /// Full inverse back to raw feature values.
    pub fn invert(&self, transformed: &[T]) -> Vec<T> {
        self.invert_affine(transformed).into_iter().map(decompress).collect()
    }
}
