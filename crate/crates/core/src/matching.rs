//! Putative point correspondences from local-feature nearest neighbours.

use thiserror::Error;

use crate::geometry::Point3;
use crate::kdtree::KdTree;
use crate::scalar::Real;
use crate::scan::ScanRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("scan has no points")]
    EmptyScan,
    #[error("feature dimension mismatch: query {query}, candidate {candidate}")]
    DimMismatch { query: usize, candidate: usize },
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T> {
    pub query_point: Point3<T>,
    pub candidate_point: Point3<T>,
    pub query_index: usize,
    pub candidate_index: usize,
    pub feature_distance: T,
}

/// Correspondences ordered by query index; each query index appears once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet<T> {
    pairs: Vec<Correspondence<T>>,
}

impl<T: Real> CorrespondenceSet<T> {
    /// Sorts by query index and drops repeated query indices (first kept).
    pub fn new(mut pairs: Vec<Correspondence<T>>) -> Self {
        pairs.sort_by_key(|c| c.query_index);
        pairs.dedup_by_key(|c| c.query_index);
        Self { pairs }
    }

    /// Builds a set from raw point pairs, indexing both sides by position.
    pub fn from_point_pairs(pairs: &[(Point3<T>, Point3<T>)]) -> Self {
        Self {
            pairs: pairs
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Correspondence {
                    query_point: x,
                    candidate_point: y,
                    query_index: i,
                    candidate_index: i,
                    feature_distance: T::zero(),
                })
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[Correspondence<T>] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn point_pairs(&self) -> Vec<(Point3<T>, Point3<T>)> {
        self.pairs.iter().map(|c| (c.query_point, c.candidate_point)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchParams {
    /// Upper bound on sampled query points (the `n` of the compatibility matrix).
    pub n_max: usize,
    /// Keep only reciprocal nearest neighbours.
    pub mutual: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { n_max: 1000, mutual: false }
    }
}

/// `min(n_max, n_points)` indices spread by a uniform stride over `0..n_points`.
pub fn stride_sample(n_points: usize, n_max: usize) -> Result<Vec<usize>, MatchError> {
    if n_max == 0 {
        return Err(MatchError::ZeroSampleSize);
    }
    if n_points == 0 {
        return Err(MatchError::EmptyScan);
    }
    if n_points <= n_max {
        return Ok((0..n_points).collect());
    }
    Ok((0..n_max).map(|k| k * n_points / n_max).collect())
}

pub fn sample_query_points<T: Real>(scan: &ScanRecord<T>, n_max: usize) -> Result<Vec<usize>, MatchError> {
    stride_sample(scan.len(), n_max)
}

/// Query-side state shared by every candidate of one query: the sampled
/// indices and, when mutual checking is on, a search tree over them.
pub struct QueryMatcher<'q, T> {
    query: &'q ScanRecord<T>,
    sampled: Vec<usize>,
    reverse: Option<KdTree<'q, T>>,
}

impl<'q, T: Real> QueryMatcher<'q, T> {
    pub fn new(query: &'q ScanRecord<T>, params: MatchParams) -> Result<Self, MatchError> {
        let sampled = sample_query_points(query, params.n_max)?;
        let reverse = params.mutual.then(|| {
            let feats = query.local_features();
            KdTree::build(feats.as_slice(), feats.dim(), sampled.clone())
        });
        Ok(Self { query, sampled, reverse })
    }

    pub fn sampled_indices(&self) -> &[usize] {
        &self.sampled
    }

    /// Number of sampled query points, shared by every candidate.
    pub fn n(&self) -> usize {
        self.sampled.len()
    }

    pub fn match_candidate(&self, candidate: &ScanRecord<T>) -> Result<CorrespondenceSet<T>, MatchError> {
        let qf = self.query.local_features();
        let cf = candidate.local_features();
        if qf.dim() != cf.dim() {
            return Err(MatchError::DimMismatch { query: qf.dim(), candidate: cf.dim() });
        }
        if candidate.is_empty() {
            return Err(MatchError::EmptyScan);
        }
        let tree = KdTree::build(cf.as_slice(), cf.dim(), (0..candidate.len()).collect());
        let mut pairs = Vec::with_capacity(self.sampled.len());
        for &qi in &self.sampled {
            let nn = tree.nearest(qf.row(qi)).expect("candidate is non-empty");
            if let Some(reverse) = &self.reverse {
                let back = reverse.nearest(cf.row(nn.index)).expect("sample is non-empty");
                if back.index != qi {
                    continue;
                }
            }
            pairs.push(Correspondence {
                query_point: self.query.cloud()[qi],
                candidate_point: candidate.cloud()[nn.index],
                query_index: qi,
                candidate_index: nn.index,
                feature_distance: nn.dist2.sqrt(),
            });
        }
        // sampled indices are increasing, so pairs are already ordered
        Ok(CorrespondenceSet { pairs })
    }
}

/// Nearest-neighbour correspondences from sampled query points into `candidate`.
pub fn match_features<T: Real>(
    query: &ScanRecord<T>,
    candidate: &ScanRecord<T>,
    params: MatchParams,
) -> Result<CorrespondenceSet<T>, MatchError> {
    QueryMatcher::new(query, params)?.match_candidate(candidate)
}
