use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{Dataset, Document, QueryList};
use crate::Scalar;

/// Fits a list to exactly `target_n` slots.
///
/// Longer lists are uniformly subsampled without replacement (fresh on every call, original
/// relative order kept); shorter ones are zero-padded with `mask = false`.
pub fn normalize_list<T: Scalar, R: Rng + ?Sized>(q: &QueryList<T>, target_n: usize, rng: &mut R) -> QueryList<T> {
    assert!(target_n >= 1, "target list size must be positive");
    let valid = q.valid_slots();
    let dim = q.feature_dim();
    let chosen: Vec<usize> = if valid.len() > target_n {
        let mut picked = index::sample(rng, valid.len(), target_n).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| valid[i]).collect()
    } else {
        valid
    };
    let mut docs: Vec<Document<T>> = chosen.iter().map(|&i| q.docs[i].clone()).collect();
    let mut mask = vec![true; docs.len()];
    while docs.len() < target_n {
        docs.push(Document::padding(dim));
        mask.push(false);
    }
    QueryList {
        query_id: q.query_id.clone(),
        docs,
        mask,
        context: q.context.clone(),
    }
}

/// Endless mini-batch stream; the query order is reshuffled at the start of every epoch.
/// The last batch of an epoch may be short.
pub struct BatchIter<'a, T, R> {
    ds: &'a Dataset<T>,
    batch_size: usize,
    rng: R,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
}

impl<'a, T: Scalar, R: Rng> BatchIter<'a, T, R> {
    pub fn new(ds: &'a Dataset<T>, batch_size: usize, rng: R) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        Self {
            ds,
            batch_size,
            rng,
            order: Vec::new(),
            pos: 0,
            epoch: 0,
        }
    }

    /// Number of epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Index form of the next batch.
    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order = (0..self.ds.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

impl<'a, T: Scalar, R: Rng> Iterator for BatchIter<'a, T, R> {
    type Item = Vec<&'a QueryList<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.ds.is_empty() {
            return None;
        }
        let ds = self.ds;
        Some(self.next_indices().into_iter().map(|i| &ds.queries[i]).collect())
    }
}
