//! Exact global-descriptor retrieval.

use std::collections::HashSet;

use thiserror::Error;

use crate::ranking::{OrderingKind, RankedEntry, RankedList};
use crate::scalar::{dot, norm, squared_distance, Real};
use crate::scan::ScanRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("database is empty")]
    EmptyDatabase,
    #[error("descriptor dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate database id `{0}`")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DescriptorMetric {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`; zero vectors are treated as maximally distant.
    Cosine,
}

/// Brute-force descriptor index. Rows stay in database order.
#[derive(Debug, Clone)]
pub struct DescriptorIndex<T> {
    ids: Vec<String>,
    dim: usize,
    data: Vec<T>,
    metric: DescriptorMetric,
}

impl<T: Real> DescriptorIndex<T> {
    pub fn build(database: &[ScanRecord<T>]) -> Result<Self, RetrievalError> {
        Self::build_with_metric(database, DescriptorMetric::Euclidean)
    }

    pub fn build_with_metric(database: &[ScanRecord<T>], metric: DescriptorMetric) -> Result<Self, RetrievalError> {
        let first = database.first().ok_or(RetrievalError::EmptyDatabase)?;
        let dim = first.descriptor_dim();
        let mut seen = HashSet::with_capacity(database.len());
        let mut ids = Vec::with_capacity(database.len());
        let mut data = Vec::with_capacity(database.len() * dim);
        for scan in database {
            if scan.descriptor_dim() != dim {
                return Err(RetrievalError::DimMismatch { expected: dim, got: scan.descriptor_dim() });
            }
            if !seen.insert(scan.id()) {
                return Err(RetrievalError::DuplicateId(scan.id().to_string()));
            }
            ids.push(scan.id().to_string());
            data.extend_from_slice(scan.global_descriptor());
        }
        Ok(Self { ids, dim, data, metric })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn metric(&self) -> DescriptorMetric {
        self.metric
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn descriptor(&self, row: usize) -> &[T] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn descriptor_of(&self, id: &str) -> Option<&[T]> {
        self.position(id).map(|r| self.descriptor(r))
    }

    fn distance(&self, row: usize, g: &[T]) -> T {
        let d = self.descriptor(row);
        match self.metric {
            DescriptorMetric::Euclidean => squared_distance(d, g).sqrt(),
            DescriptorMetric::Cosine => {
                let denom = norm(d) * norm(g);
                if denom == T::zero() {
                    T::lit(2.0)
                } else {
                    T::one() - dot(d, g) / denom
                }
            }
        }
    }

    /// The `k` nearest rows (all rows when `k > len`), nearest first, ties by row order.
    pub fn query_topk(&self, g: &[T], k: usize) -> Result<RankedList<T>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if g.len() != self.dim {
            return Err(RetrievalError::DimMismatch { expected: self.dim, got: g.len() });
        }
        let mut scored: Vec<(T, usize)> = (0..self.len()).map(|r| (self.distance(r, g), r)).collect();
        let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        let entries =
            scored.into_iter().map(|(score, r)| RankedEntry { candidate_id: self.ids[r].clone(), score }).collect();
        Ok(RankedList::new(entries, OrderingKind::AscendingDistance).expect("sorted unique ids"))
    }
}
