//! Position-biased click simulation with known propensities.
//!
//! A document at rank `r` is examined with probability `(1/r)^eta`; an examined document is
//! clicked with probability `1 − noise` if relevant and `noise` otherwise. Only the first
//! click of a session is kept, and it carries the weight `r^eta`.

use std::io::Write;

use rand::Rng;

use crate::data::{write_letor, Dataset, Document, LabelKind, QueryList};
use crate::error::{Error, Result};
use crate::gsf::{rank, ListScorer};
use crate::rng::SeedTree;
use crate::Scalar;

/// Results shown per session.
pub const MAX_PRESENTED: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    pub eta: f64,
    pub click_noise: f64,
}

impl BiasModel {
    pub fn new(eta: f64, click_noise: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid("eta must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&click_noise) {
            return Err(Error::invalid("click noise must lie in [0, 1)"));
        }
        Ok(Self { eta, click_noise })
    }

    /// Examination probability at 1-based `rank`.
    pub fn examination(&self, rank: usize) -> f64 {
        (1.0 / rank as f64).powf(self.eta)
    }

    /// Inverse propensity of a click at `rank`.
    pub fn weight(&self, rank: usize) -> f64 {
        (rank as f64).powf(self.eta)
    }

    pub fn perception(&self, relevant: bool) -> f64 {
        if relevant {
            1.0 - self.click_noise
        } else {
            self.click_noise
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    /// Per presented rank.
    pub examined: Vec<bool>,
    /// Per presented rank, before keeping only the first.
    pub raw_clicks: Vec<bool>,
    /// `(1-based rank, slot)` of the kept click.
    pub click: Option<(usize, usize)>,
}

/// Simulates one session over the top [`MAX_PRESENTED`] entries of `presented`.
pub fn simulate_session<T: Scalar, R: Rng + ?Sized>(
    q: &QueryList<T>,
    presented: &[usize],
    bias: &BiasModel,
    rng: &mut R,
) -> SessionOutcome {
    let shown = &presented[..presented.len().min(MAX_PRESENTED)];
    let mut examined = Vec::with_capacity(shown.len());
    let mut raw_clicks = Vec::with_capacity(shown.len());
    let mut click = None;
    for (i, &slot) in shown.iter().enumerate() {
        let r = i + 1;
        let e = rng.gen::<f64>() < bias.examination(r);
        let relevant = q.docs[slot].label > T::zero();
        let p = rng.gen::<f64>() < bias.perception(relevant);
        examined.push(e);
        raw_clicks.push(e && p);
        if e && p && click.is_none() {
            click = Some((r, slot));
        }
    }
    SessionOutcome {
        examined,
        raw_clicks,
        click,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session<T> {
    pub query_id: String,
    /// Documents in presented order.
    pub presented: Vec<Document<T>>,
    /// 1-based rank of the click.
    pub click_rank: Option<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog<T> {
    pub sessions: Vec<Session<T>>,
    pub feature_dim: usize,
}

/// Presents each query's top results by `ranker` and simulates `sessions_per_query` sessions.
pub fn build_click_dataset<T: Scalar, S: ListScorer<T> + ?Sized>(
    ds: &Dataset<T>,
    ranker: &S,
    bias: &BiasModel,
    seed: SeedTree,
    sessions_per_query: usize,
) -> Result<ClickLog<T>> {
    if ds.label_kind != LabelKind::Binary {
        return Err(Error::invalid("click simulation needs binary relevance labels"));
    }
    let mut sessions = Vec::new();
    for (qi, q) in ds.queries.iter().enumerate() {
        let tree = seed.child_indexed("query", qi as u64);
        let scores = ranker.score(q, &mut tree.stream("ranker"))?;
        let presented: Vec<usize> = rank(&scores).into_iter().take(MAX_PRESENTED).collect();
        let mut rng = tree.stream("clicks");
        for s in 0..sessions_per_query {
            let outcome = simulate_session(q, &presented, bias, &mut rng);
            let docs = presented
                .iter()
                .map(|&slot| Document::new(q.docs[slot].features.clone(), T::zero()))
                .collect();
            sessions.push(Session {
                query_id: format!("{}_s{s}", q.query_id),
                presented: docs,
                click_rank: outcome.click.map(|(r, _)| r),
                weight: outcome.click.map_or(0.0, |(r, _)| bias.weight(r)),
            });
        }
    }
    Ok(ClickLog {
        sessions,
        feature_dim: ds.feature_dim,
    })
}

impl<T: Scalar> ClickLog<T> {
    pub fn clicked_sessions(&self) -> usize {
        self.sessions.iter().filter(|s| s.click_rank.is_some()).count()
    }

    /// Sessions with a click, one query each: the clicked document has label 1 and its
    /// weight; the rest are 0 without weights. Click-free sessions are dropped.
    pub fn to_dataset(&self) -> Result<Dataset<T>> {
        let queries = self
            .sessions
            .iter()
            .filter_map(|s| s.click_rank.map(|r| (s, r)))
            .map(|(s, r)| {
                let mut docs = s.presented.clone();
                docs[r - 1].label = T::one();
                docs[r - 1].weight = Some(T::lit(s.weight));
                QueryList::new(s.query_id.clone(), docs)
            })
            .collect::<Result<Vec<_>>>()?;
        if queries.is_empty() {
            return Err(Error::invalid("no session produced a click"));
        }
        Dataset::new(queries)
    }

    pub fn write_letor<W: Write>(&self, out: W) -> Result<()> {
        let ds = self.to_dataset()?;
        write_letor(&ds, out).map_err(|e| Error::io("<click log>", e))
    }
}
