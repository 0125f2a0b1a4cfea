//! Ranked candidate lists.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderingKind {
    /// Retrieval output: smaller descriptor distance first.
    AscendingDistance,
    /// Re-ranker output: larger fitness first.
    DescendingFitness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T> {
    pub candidate_id: String,
    pub score: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("candidate id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("entries {0} and {1} violate the list ordering")]
    OutOfOrder(usize, usize),
    #[error("ordered prefix {prefix} exceeds list length {len}")]
    PrefixTooLong { prefix: usize, len: usize },
    #[error("non-finite score for `{0}`")]
    NonFiniteScore(String),
}

/// Ordered candidate list.
///
/// `kind` governs the first `ordered_len` entries. A partially re-ranked list
/// keeps its untouched tail in the original retrieval order with the original
/// distance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<T> {
    entries: Vec<RankedEntry<T>>,
    kind: OrderingKind,
    ordered_len: usize,
}

impl<T: Real> RankedList<T> {
    /// Validates ordering and uniqueness of an already-ordered list.
    pub fn new(entries: Vec<RankedEntry<T>>, kind: OrderingKind) -> Result<Self, RankingError> {
        let len = entries.len();
        Self::with_ordered_prefix(entries, kind, len)
    }

    pub fn with_ordered_prefix(
        entries: Vec<RankedEntry<T>>,
        kind: OrderingKind,
        ordered_len: usize,
    ) -> Result<Self, RankingError> {
        if ordered_len > entries.len() {
            return Err(RankingError::PrefixTooLong { prefix: ordered_len, len: entries.len() });
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !e.score.is_finite() {
                return Err(RankingError::NonFiniteScore(e.candidate_id.clone()));
            }
            if !seen.insert(e.candidate_id.as_str()) {
                return Err(RankingError::DuplicateId(e.candidate_id.clone()));
            }
        }
        for i in 1..ordered_len {
            let (a, b) = (entries[i - 1].score, entries[i].score);
            let ok = match kind {
                OrderingKind::AscendingDistance => a <= b,
                OrderingKind::DescendingFitness => a >= b,
            };
            if !ok {
                return Err(RankingError::OutOfOrder(i - 1, i));
            }
        }
        Ok(Self { entries, kind, ordered_len })
    }

    /// Stable sort by `kind`; equal scores keep their input order.
    pub fn from_unsorted(mut entries: Vec<RankedEntry<T>>, kind: OrderingKind) -> Result<Self, RankingError> {
        sort_stable(&mut entries, kind);
        Self::new(entries, kind)
    }

    pub fn empty(kind: OrderingKind) -> Self {
        Self { entries: Vec::new(), kind, ordered_len: 0 }
    }

    pub fn entries(&self) -> &[RankedEntry<T>] {
        &self.entries
    }

    pub fn kind(&self) -> OrderingKind {
        self.kind
    }

    pub fn ordered_len(&self) -> usize {
        self.ordered_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.candidate_id.as_str())
    }

    pub fn top(&self) -> Option<&RankedEntry<T>> {
        self.entries.first()
    }
}

pub(crate) fn sort_stable<T: Real>(entries: &mut [RankedEntry<T>], kind: OrderingKind) {
    match kind {
        OrderingKind::AscendingDistance => entries.sort_by(|a, b| a.score.partial_cmp(&b.score).expect("finite")),
        OrderingKind::DescendingFitness => entries.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite")),
    }
}
