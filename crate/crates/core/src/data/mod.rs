//! Query lists, LETOR ingestion, feature standardization, and batching.

mod batch;
mod letor;
mod transform;

pub use batch::{normalize_list, BatchIter};
pub use letor::{load_dataset, parse_letor_line, read_dataset, write_letor, ParsedLine};
pub use transform::FeatureTransform;

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Document<T> {
    pub features: Vec<T>,
    /// Graded relevance (0–4) or a binary click.
    pub label: T,
    /// Inverse propensity weight carried by click logs.
    pub weight: Option<T>,
}

impl<T: Scalar> Document<T> {
    pub fn new(features: Vec<T>, label: T) -> Self {
        Self {
            features,
            label,
            weight: None,
        }
    }

    pub fn padding(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim], T::zero())
    }
}

/// One query's documents. Slots with `mask[i] == false` are padding and are never scored.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryList<T> {
    pub query_id: String,
    pub docs: Vec<Document<T>>,
    pub mask: Vec<bool>,
    /// Optional query-level features prepended to every group input.
    pub context: Option<Vec<T>>,
}

impl<T: Scalar> QueryList<T> {
    /// A list with every slot real.
    pub fn new(query_id: impl Into<String>, docs: Vec<Document<T>>) -> Result<Self> {
        let mask = vec![true; docs.len()];
        Self::with_mask(query_id, docs, mask)
    }

    pub fn with_mask(query_id: impl Into<String>, docs: Vec<Document<T>>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != docs.len() {
            return Err(Error::DimensionMismatch {
                context: "query mask",
                expected: docs.len(),
                actual: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("query list has no real documents"));
        }
        if let Some(dim) = docs.first().map(|d| d.features.len()) {
            if let Some(bad) = docs.iter().find(|d| d.features.len() != dim) {
                return Err(Error::DimensionMismatch {
                    context: "document features",
                    expected: dim,
                    actual: bad.features.len(),
                });
            }
        }
        Ok(Self {
            query_id: query_id.into(),
            docs,
            mask,
            context: None,
        })
    }

    /// Convenience constructor from feature rows and labels.
    pub fn from_rows(query_id: impl Into<String>, rows: Vec<Vec<T>>, labels: Vec<T>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "labels",
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let docs = rows
            .into_iter()
            .zip(labels)
            .map(|(f, y)| Document::new(f, y))
            .collect();
        Self::new(query_id, docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.docs.first().map_or(0, |d| d.features.len())
    }

    pub fn valid_slots(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Labels for every slot; padded slots read as zero.
    pub fn labels(&self) -> Vec<T> {
        self.docs
            .iter()
            .zip(&self.mask)
            .map(|(d, &m)| if m { d.label } else { T::zero() })
            .collect()
    }

    pub fn weights(&self) -> Vec<Option<T>> {
        self.docs
            .iter()
            .zip(&self.mask)
            .map(|(d, &m)| if m { d.weight } else { None })
            .collect()
    }

    pub fn with_context(mut self, context: Vec<T>) -> Self {
        self.context = Some(context);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Graded,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub queries: Vec<QueryList<T>>,
    pub feature_dim: usize,
    pub label_kind: LabelKind,
}

impl<T: Scalar> Dataset<T> {
    /// Validates uniform feature width and unique query ids; infers the label kind.
    pub fn new(queries: Vec<QueryList<T>>) -> Result<Self> {
        let feature_dim = queries.first().map(QueryList::feature_dim).ok_or(Error::EmptyDataset)?;
        let mut seen = std::collections::HashSet::new();
        for q in &queries {
            if q.feature_dim() != feature_dim {
                return Err(Error::DimensionMismatch {
                    context: "dataset feature width",
                    expected: feature_dim,
                    actual: q.feature_dim(),
                });
            }
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::invalid(format!("duplicate query id {}", q.query_id)));
            }
        }
        let binary = queries.iter().all(|q| {
            q.docs
                .iter()
                .zip(&q.mask)
                .all(|(d, &m)| !m || d.label == T::zero() || d.label == T::one())
        });
        Ok(Self {
            queries,
            feature_dim,
            label_kind: if binary { LabelKind::Binary } else { LabelKind::Graded },
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn document_count(&self) -> usize {
        self.queries.iter().map(QueryList::n_valid).sum()
    }
}
