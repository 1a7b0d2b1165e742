use rand::Rng;

use super::layers::{relu, AffineLayer, BatchNormCache, BatchNormLayer};
use super::Matrix;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization; the cache supports `backward`.
    Train,
    /// Running statistics; each row's output is independent of the rest of the batch.
    Infer,
}

/// Affine transform, optional batch norm, optional ReLU, applied in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer<T> {
    pub affine: AffineLayer<T>,
    pub norm: Option<BatchNormLayer<T>>,
    pub relu: bool,
}

impl<T: Scalar> HiddenLayer<T> {
    pub fn out_dim(&self) -> usize {
        self.affine.out_dim()
    }
}

/// The shared scoring network: a stack of hidden layers and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringNet<T> {
    hidden: Vec<HiddenLayer<T>>,
    head: AffineLayer<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Matrix<T>,
    norm: Option<BatchNormCache<T>>,
    /// Value fed to the ReLU (after normalization when present).
    pre_activation: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    layers: Vec<LayerCache<T>>,
    head_input: Matrix<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Batch `(mean, var)` per normalized layer, in layer order; `None` for layers without
    /// batch norm.
    pub fn batch_statistics(&self) -> Vec<Option<(&[T], &[T])>> {
        self.layers
            .iter()
            .map(|l| {
                l.norm
                    .as_ref()
                    .map(|c| (c.batch_mean.as_slice(), c.batch_var.as_slice()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub gamma: Option<Vec<T>>,
    pub beta: Option<Vec<T>>,
}

impl<T: Scalar> LayerGrads<T> {
    fn slices(&self) -> Vec<&[T]> {
        let mut v = vec![self.weights.as_slice(), self.bias.as_slice()];
        if let (Some(g), Some(b)) = (&self.gamma, &self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = vec![self.weights.as_mut_slice(), self.bias.as_mut_slice()];
        if let (Some(g), Some(b)) = (&mut self.gamma, &mut self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }
}

/// Parameter gradients, shaped like the owning [`ScoringNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub hidden: Vec<LayerGrads<T>>,
    pub head: LayerGrads<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`ScoringNet::param_slices`].
    pub fn slices(&self) -> Vec<&[T]> {
        self.hidden
            .iter()
            .flat_map(LayerGrads::slices)
            .chain(self.head.slices())
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = self.hidden.iter_mut().flat_map(LayerGrads::slices_mut).collect();
        v.extend(self.head.slices_mut());
        v
    }

    pub fn global_norm(&self) -> T {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }

    pub fn scale(&mut self, k: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&g| g == T::zero()))
    }
}

impl<T: Scalar> ScoringNet<T> {
    /// Glorot-initialized net. Every hidden layer gets a ReLU, and batch norm when
    /// `batch_norm` is set.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        batch_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut hidden = Vec::with_capacity(hidden_dims.len());
        let mut prev = input_dim;
        for &d in hidden_dims {
            hidden.push(HiddenLayer {
                affine: AffineLayer::glorot(prev, d, rng)?,
                norm: batch_norm.then(|| BatchNormLayer::new(d)),
                relu: true,
            });
            prev = d;
        }
        let head = AffineLayer::glorot(prev, output_dim, rng)?;
        Ok(Self { hidden, head })
    }

    pub fn from_layers(hidden: Vec<HiddenLayer<T>>, head: AffineLayer<T>) -> Result<Self> {
        let mut prev = hidden.first().map_or(head.in_dim(), |h| h.affine.in_dim());
        for layer in hidden.iter().map(|h| &h.affine).chain(std::iter::once(&head)) {
            if layer.in_dim() != prev {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: prev,
                    actual: layer.in_dim(),
                });
            }
            prev = layer.out_dim();
        }
        for h in &hidden {
            if let Some(n) = &h.norm {
                if n.dim() != h.out_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "batch norm width",
                        expected: h.out_dim(),
                        actual: n.dim(),
                    });
                }
            }
        }
        Ok(Self { hidden, head })
    }

    pub fn hidden(&self) -> &[HiddenLayer<T>] {
        &self.hidden
    }

    pub fn head(&self) -> &AffineLayer<T> {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.head.in_dim(), |h| h.affine.in_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.hidden.iter().any(|h| h.norm.is_some())
    }

    pub fn forward(&self, input: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if input.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.cols(),
            });
        }
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut h = input.clone();
        for (i, layer) in self.hidden.iter().enumerate() {
            let z = layer.affine.forward(&h)?;
            let (pre, norm) = match (&layer.norm, mode) {
                (Some(bn), Mode::Train) => {
                    let (y, c) = bn.forward_train(&z)?;
                    (y, Some(c))
                }
                (Some(bn), Mode::Infer) => {
                    let (y, c) = bn.forward_infer(&z);
                    (y, Some(c))
                }
                (None, _) => (z, None),
            };
            let out = if layer.relu { pre.map(relu) } else { pre.clone() };
            if !out.is_finite() {
                return Err(Error::NonFinite { layer: i });
            }
            layers.push(LayerCache {
                input: std::mem::replace(&mut h, out),
                norm,
                pre_activation: pre,
            });
        }
        let out = self.head.forward(&h)?;
        if !out.is_finite() {
            return Err(Error::NonFinite {
                layer: self.hidden.len(),
            });
        }
        Ok((
            out,
            ForwardCache {
                mode,
                layers,
                head_input: h,
            },
        ))
    }

    /// Convenience for inference: outputs only.
    pub fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(input, Mode::Infer)?.0)
    }

    /// Reverse pass for a scalar loss whose gradient with respect to the outputs is
    /// `output_grad`.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: &Matrix<T>) -> Result<(Gradients<T>, Matrix<T>)> {
        if cache.layers.len() != self.hidden.len()
            || cache.head_input.cols() != self.head.in_dim()
            || output_grad.cols() != self.output_dim()
            || output_grad.rows() != cache.head_input.rows()
        {
            return Err(Error::CacheMismatch);
        }
        let (dw, db, mut dh) = self.head.backward(&cache.head_input, output_grad)?;
        let head = LayerGrads {
            weights: dw,
            bias: db,
            gamma: None,
            beta: None,
        };
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (layer, lc) in self.hidden.iter().zip(&cache.layers).rev() {
            if lc.norm.is_some() != layer.norm.is_some() || lc.input.cols() != layer.affine.in_dim() {
                return Err(Error::CacheMismatch);
            }
            if layer.relu {
                for (g, &p) in dh.as_mut_slice().iter_mut().zip(lc.pre_activation.as_slice()) {
                    if p <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let (gamma, beta, dz) = match (&layer.norm, &lc.norm) {
                (Some(bn), Some(c)) => {
                    let (dg, dbeta, dz) = bn.backward(c, &dh);
                    (Some(dg), Some(dbeta), dz)
                }
                _ => (None, None, dh),
            };
            let (dw, db, dx) = layer.affine.backward(&lc.input, &dz)?;
            hidden.push(LayerGrads {
                weights: dw,
                bias: db,
                gamma,
                beta,
            });
            dh = dx;
        }
        hidden.reverse();
        Ok((Gradients { hidden, head }, dh))
    }

    /// Folds a train-mode batch's normalization statistics into the running estimates.
    pub fn absorb_batch_statistics(&mut self, cache: &ForwardCache<T>) -> Result<()> {
        if cache.mode != Mode::Train || cache.layers.len() != self.hidden.len() {
            return Err(Error::CacheMismatch);
        }
        for (layer, lc) in self.hidden.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(c)) = (&mut layer.norm, &lc.norm) {
                bn.absorb(&c.batch_mean, &c.batch_var);
            }
        }
        Ok(())
    }

    /// Trainable parameters as flat slices: per hidden layer weights, bias, then gamma and
    /// beta when normalized; the head's weights and bias last.
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        for h in &self.hidden {
            v.push(h.affine.weights.as_slice());
            v.push(&h.affine.bias);
            if let Some(bn) = &h.norm {
                v.push(&bn.gamma);
                v.push(&bn.beta);
            }
        }
        v.push(self.head.weights.as_slice());
        v.push(&self.head.bias);
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = Vec::new();
        for h in &mut self.hidden {
            v.push(h.affine.weights.as_mut_slice());
            v.push(&mut h.affine.bias);
            if let Some(bn) = &mut h.norm {
                v.push(&mut bn.gamma);
                v.push(&mut bn.beta);
            }
        }
        v.push(self.head.weights.as_mut_slice());
        v.push(&mut self.head.bias);
        v
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// All-zero gradients shaped like this net.
    pub fn zero_gradients(&self) -> Gradients<T> {
        let layer = |a: &AffineLayer<T>, bn: Option<&BatchNormLayer<T>>| LayerGrads {
            weights: Matrix::zeros(a.in_dim(), a.out_dim()),
            bias: vec![T::zero(); a.out_dim()],
            gamma: bn.map(|b| vec![T::zero(); b.dim()]),
            beta: bn.map(|b| vec![T::zero(); b.dim()]),
        };
        Gradients {
            hidden: self
                .hidden
                .iter()
                .map(|h| layer(&h.affine, h.norm.as_ref()))
                .collect(),
            head: layer(&self.head, None),
        }
    }
}
