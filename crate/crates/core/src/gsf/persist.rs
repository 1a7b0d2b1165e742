//! Versioned JSON model documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aggregation, GsfModel};
use crate::data::FeatureTransform;
use crate::error::{Error, Result};
use crate::nn::{AffineLayer, BatchNormLayer, HiddenLayer, Matrix, ScoringNet};
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    group_size: usize,
    input_dim: usize,
    feature_dim: usize,
    #[serde(default)]
    context_dim: usize,
    aggregation: String,
    layers: Vec<LayerDoc>,
    #[serde(default)]
    feature_transform: Option<TransformDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LayerDoc {
    Affine {
        dims: [usize; 2],
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    BatchNorm {
        dims: [usize; 1],
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        momentum: f64,
        epsilon: f64,
    },
    Relu {
        dims: [usize; 1],
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformDoc {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::lit).collect()
}

fn affine_doc<T: Scalar>(a: &AffineLayer<T>) -> LayerDoc {
    LayerDoc::Affine {
        dims: [a.in_dim(), a.out_dim()],
        weights: to_f64(a.weights.as_slice()),
        bias: to_f64(&a.bias),
    }
}

fn affine_from_doc<T: Scalar>(dims: [usize; 2], weights: Vec<f64>, bias: Vec<f64>) -> Result<AffineLayer<T>> {
    AffineLayer::new(Matrix::from_vec(dims[0], dims[1], from_f64(weights))?, from_f64(bias))
}

impl<T: Scalar> GsfModel<T> {
    pub fn to_json(&self) -> Result<String> {
        let mut layers = Vec::new();
        for h in self.net.hidden() {
            layers.push(affine_doc(&h.affine));
            if let Some(bn) = &h.norm {
                layers.push(LayerDoc::BatchNorm {
                    dims: [bn.dim()],
                    gamma: to_f64(&bn.gamma),
                    beta: to_f64(&bn.beta),
                    running_mean: to_f64(&bn.running_mean),
                    running_var: to_f64(&bn.running_var),
                    momentum: bn.momentum.as_f64(),
                    epsilon: bn.epsilon.as_f64(),
                });
            }
            if h.relu {
                layers.push(LayerDoc::Relu { dims: [h.out_dim()] });
            }
        }
        layers.push(affine_doc(self.net.head()));
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            group_size: self.group_size,
            input_dim: self.input_dim(),
            feature_dim: self.feature_dim,
            context_dim: self.context_dim,
            aggregation: self.aggregation.to_string(),
            layers,
            feature_transform: self.transform.as_ref().map(|t| TransformDoc {
                shift: to_f64(&t.shift),
                scale: to_f64(&t.scale),
            }),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let version = probe
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::invalid("model document lacks format_version"))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::UnsupportedFormat(version as u32));
        }
        let doc: ModelDoc = serde_json::from_value(probe)?;

        let mut layers = doc.layers.into_iter().peekable();
        let mut hidden = Vec::new();
        let mut head = None;
        while let Some(layer) = layers.next() {
            let LayerDoc::Affine { dims, weights, bias } = layer else {
                return Err(Error::invalid("expected an affine layer"));
            };
            let affine = affine_from_doc(dims, weights, bias)?;
            if layers.peek().is_none() {
                head = Some(affine);
                break;
            }
            let mut norm = None;
            if let Some(LayerDoc::BatchNorm { .. }) = layers.peek() {
                if let Some(LayerDoc::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum,
                    epsilon,
                    ..
                }) = layers.next()
                {
                    norm = Some(BatchNormLayer {
                        gamma: from_f64(gamma),
                        beta: from_f64(beta),
                        running_mean: from_f64(running_mean),
                        running_var: from_f64(running_var),
                        momentum: T::lit(momentum),
                        epsilon: T::lit(epsilon),
                    });
                }
            }
            let relu = matches!(layers.peek(), Some(LayerDoc::Relu { .. }));
            if relu {
                layers.next();
            }
            hidden.push(HiddenLayer { affine, norm, relu });
        }
        let head = head.ok_or_else(|| Error::invalid("model has no output layer"))?;
        let net = ScoringNet::from_layers(hidden, head)?;
        if net.input_dim() != doc.input_dim {
            return Err(Error::DimensionMismatch {
                context: "declared input_dim",
                expected: doc.input_dim,
                actual: net.input_dim(),
            });
        }
        let mut model = GsfModel::from_net(
            doc.group_size,
            doc.feature_dim,
            doc.context_dim,
            net,
            doc.aggregation.parse::<Aggregation>()?,
        )?;
        model.transform = doc.feature_transform.map(|t| FeatureTransform {
            shift: from_f64(t.shift),
            scale: from_f64(t.scale),
        });
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
