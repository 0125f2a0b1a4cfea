//! Re-ranking strategies over an initial retrieval list.
//!
//! Geometric strategies (spectral, RANSAC inlier ratio) permute the first
//! `n_topk` entries by a per-candidate fitness. Query-expansion strategies
//! build a new descriptor and re-retrieve from the full index, so they may
//! bring in ids that were not in the input list.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::matching::QueryMatcher;
use crate::ranking::{sort_stable, OrderingKind, RankedEntry, RankedList};
use crate::registration::{ransac_register, registered_inlier_ratio, RansacParams, MIN_SAMPLE};
use crate::retrieval::{DescriptorIndex, RetrievalError};
use crate::scalar::{dot, norm, Real};
use crate::scan::ScanRecord;
use crate::spectral::{QueryScorer, SpectralError, SpectralParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("candidate `{0}` is not in the candidate store")]
    UnresolvedCandidate(String),
    #[error("ranked list is empty")]
    EmptyList,
    #[error("n_qe = {n_qe} exceeds list length {len}")]
    TooManyExpansionTerms { n_qe: usize, len: usize },
    #[error("expanded query collapsed to the zero vector")]
    ZeroVector,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Keep the retrieval order.
    None,
    #[default]
    SpectralGv,
    RansacRir,
    AverageQe,
    AlphaQe,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::None, Strategy::SpectralGv, Strategy::RansacRir, Strategy::AverageQe, Strategy::AlphaQe];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::SpectralGv => "spectral_gv",
            Strategy::RansacRir => "ransac_rir",
            Strategy::AverageQe => "average_qe",
            Strategy::AlphaQe => "alpha_qe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "none" | "baseline" => Some(Strategy::None),
            "spectral_gv" | "spectralgv" | "sgv" => Some(Strategy::SpectralGv),
            "ransac_rir" | "ransacrir" | "rir" => Some(Strategy::RansacRir),
            "average_qe" | "averageqe" | "aqe" => Some(Strategy::AverageQe),
            "alpha_qe" | "alphaqe" => Some(Strategy::AlphaQe),
            _ => None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankParams {
    pub n_topk: usize,
    pub strategy: Strategy,
    pub spectral: SpectralParams,
    pub ransac: RansacParams,
    /// τ used to score the registered inlier ratio.
    pub rir_tau: f64,
    pub alpha: f64,
    /// Expansion terms for QE; `None` means `n_topk`.
    pub n_qe: Option<usize>,
}

impl Default for RerankParams {
    fn default() -> Self {
        Self {
            n_topk: 20,
            strategy: Strategy::SpectralGv,
            spectral: SpectralParams::default(),
            ransac: RansacParams::default(),
            rir_tau: 0.5,
            alpha: 3.0,
            n_qe: None,
        }
    }
}

impl RerankParams {
    pub fn validate(&self) -> Result<(), RerankError> {
        if self.n_topk == 0 {
            return Err(RerankError::InvalidParams("n_topk must be at least 1"));
        }
        if self.strategy == Strategy::AlphaQe && !(self.alpha > 0.0) {
            return Err(RerankError::InvalidParams("alpha must be positive"));
        }
        if !(self.rir_tau > 0.0) {
            return Err(RerankError::InvalidParams("rir_tau must be positive"));
        }
        Ok(())
    }

    pub fn effective_n_qe(&self) -> usize {
        self.n_qe.unwrap_or(self.n_topk)
    }
}

/// Lookup of candidate scans by id.
pub trait CandidateSource<T> {
    fn get(&self, id: &str) -> Option<&ScanRecord<T>>;
}

impl<T> CandidateSource<T> for [ScanRecord<T>]
where
    T: Real,
{
    fn get(&self, id: &str) -> Option<&ScanRecord<T>> {
        self.iter().find(|s| s.id() == id)
    }
}

impl<T> CandidateSource<T> for Vec<ScanRecord<T>>
where
    T: Real,
{
    fn get(&self, id: &str) -> Option<&ScanRecord<T>> {
        CandidateSource::get(self.as_slice(), id)
    }
}

/// Hashed view over a scan slice.
pub struct ScanLookup<'a, T> {
    by_id: HashMap<&'a str, &'a ScanRecord<T>>,
}

impl<'a, T: Real> ScanLookup<'a, T> {
    pub fn new(scans: &'a [ScanRecord<T>]) -> Self {
        Self { by_id: scans.iter().map(|s| (s.id(), s)).collect() }
    }
}

impl<T: Real> CandidateSource<T> for ScanLookup<'_, T> {
    fn get(&self, id: &str) -> Option<&ScanRecord<T>> {
        self.by_id.get(id).copied()
    }
}

fn resolve_prefix<'c, T: Real, C: CandidateSource<T> + ?Sized>(
    candidates: &'c C,
    lr: &RankedList<T>,
    n_topk: usize,
) -> Result<Vec<&'c ScanRecord<T>>, RerankError> {
    lr.entries()[..n_topk.min(lr.len())]
        .iter()
        .map(|e| {
            candidates.get(&e.candidate_id).ok_or_else(|| RerankError::UnresolvedCandidate(e.candidate_id.clone()))
        })
        .collect()
}

/// Re-orders the first `k` entries by descending fitness and keeps the tail.
fn reorder_prefix<T: Real>(lr: &RankedList<T>, fitness: Vec<T>) -> RankedList<T> {
    let k = fitness.len();
    let mut head: Vec<RankedEntry<T>> = lr.entries()[..k]
        .iter()
        .zip(fitness)
        .map(|(e, score)| RankedEntry { candidate_id: e.candidate_id.clone(), score })
        .collect();
    sort_stable(&mut head, OrderingKind::DescendingFitness);
    head.extend_from_slice(&lr.entries()[k..]);
    RankedList::with_ordered_prefix(head, OrderingKind::DescendingFitness, k).expect("permutation of a valid list")
}

/// Re-ranks the top `n_topk` candidates by descending spectral fitness `s*`.
/// Candidates that cannot be scored get fitness 0.
pub fn rerank_spectral<T: Real, C: CandidateSource<T> + Sync + ?Sized>(
    query: &ScanRecord<T>,
    candidates: &C,
    lr: &RankedList<T>,
    params: &RerankParams,
) -> Result<RankedList<T>, RerankError> {
    params.validate()?;
    if lr.is_empty() {
        return Err(RerankError::EmptyList);
    }
    let resolved = resolve_prefix(candidates, lr, params.n_topk)?;
    if resolved.len() <= 1 {
        return Ok(lr.clone());
    }
    let scorer = QueryScorer::new(query, params.spectral)?;
    let fitness: Vec<T> =
        resolved.par_iter().map(|cand| scorer.score(cand).map(|s| s.s_star).unwrap_or(T::zero())).collect();
    Ok(reorder_prefix(lr, fitness))
}

/// Registers the query against each of the top `n_topk` candidates and
/// re-ranks by registered inlier ratio. Candidate `i` uses RANSAC seed
/// `seed ^ i`, so results do not depend on scheduling.
pub fn rerank_rir<T: Real, C: CandidateSource<T> + Sync + ?Sized>(
    query: &ScanRecord<T>,
    candidates: &C,
    lr: &RankedList<T>,
    params: &RerankParams,
) -> Result<RankedList<T>, RerankError> {
    params.validate()?;
    if lr.is_empty() {
        return Err(RerankError::EmptyList);
    }
    let resolved = resolve_prefix(candidates, lr, params.n_topk)?;
    if resolved.len() <= 1 {
        return Ok(lr.clone());
    }
    let matcher = QueryMatcher::new(query, params.spectral.matching).map_err(SpectralError::from)?;
    let fitness: Vec<T> = resolved
        .par_iter()
        .enumerate()
        .map(|(ordinal, cand)| {
            let Ok(corrs) = matcher.match_candidate(cand) else {
                return T::zero();
            };
            if corrs.len() < MIN_SAMPLE {
                return T::zero();
            }
            let ransac = params.ransac.with_seed(params.ransac.seed ^ ordinal as u64);
            ransac_register(&corrs, ransac)
                .ok()
                .and_then(|r| registered_inlier_ratio(&corrs, &r.transform, params.rir_tau).ok())
                .map_or(T::zero(), T::lit)
        })
        .collect();
    Ok(reorder_prefix(lr, fitness))
}

fn check_n_qe<T: Real>(lr: &RankedList<T>, n_qe: usize) -> Result<(), RerankError> {
    if n_qe > lr.len() {
        return Err(RerankError::TooManyExpansionTerms { n_qe, len: lr.len() });
    }
    Ok(())
}

fn expansion_descriptors<'i, T: Real>(
    index: &'i DescriptorIndex<T>,
    lr: &RankedList<T>,
    n_qe: usize,
) -> Result<Vec<&'i [T]>, RerankError> {
    lr.entries()[..n_qe]
        .iter()
        .map(|e| {
            index.descriptor_of(&e.candidate_id).ok_or_else(|| RerankError::UnresolvedCandidate(e.candidate_id.clone()))
        })
        .collect()
}

/// Average query expansion: re-retrieves with the mean of `g` and the
/// descriptors of the first `n_qe` entries.
pub fn rerank_average_qe<T: Real>(
    index: &DescriptorIndex<T>,
    g: &[T],
    lr: &RankedList<T>,
    n_qe: usize,
    k: usize,
) -> Result<RankedList<T>, RerankError> {
    check_n_qe(lr, n_qe)?;
    if g.len() != index.dim() {
        return Err(RetrievalError::DimMismatch { expected: index.dim(), got: g.len() }.into());
    }
    let mut sum = g.to_vec();
    for d in expansion_descriptors(index, lr, n_qe)? {
        for (s, &v) in sum.iter_mut().zip(d) {
            *s = *s + v;
        }
    }
    let inv = T::one() / T::lit((n_qe + 1) as f64);
    let g_hat: Vec<T> = sum.into_iter().map(|v| v * inv).collect();
    Ok(index.query_topk(&g_hat, k)?)
}

/// Alpha query expansion: `ĝ ∝ ĝ₀ + Σ max(0, cos(g, gᵢ))^α ĝᵢ` over unit-normalized
/// descriptors of the first `n_qe` entries, then re-retrieval.
pub fn rerank_alpha_qe<T: Real>(
    index: &DescriptorIndex<T>,
    g: &[T],
    lr: &RankedList<T>,
    n_qe: usize,
    alpha: f64,
    k: usize,
) -> Result<RankedList<T>, RerankError> {
    if !(alpha > 0.0) {
        return Err(RerankError::InvalidParams("alpha must be positive"));
    }
    check_n_qe(lr, n_qe)?;
    if g.len() != index.dim() {
        return Err(RetrievalError::DimMismatch { expected: index.dim(), got: g.len() }.into());
    }
    let unit = |v: &[T]| -> Option<Vec<T>> {
        let n = norm(v);
        (n > T::zero()).then(|| v.iter().map(|&x| x / n).collect())
    };
    let g0 = unit(g).ok_or(RerankError::ZeroVector)?;
    let mut acc = g0.clone();
    let alpha = T::lit(alpha);
    for d in expansion_descriptors(index, lr, n_qe)? {
        let Some(di) = unit(d) else { continue };
        let w = dot(&g0, &di).max(T::zero()).powf(alpha);
        if w == T::zero() {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(&di) {
            *a = *a + w * v;
        }
    }
    let g_hat = unit(&acc).ok_or(RerankError::ZeroVector)?;
    Ok(index.query_topk(&g_hat, k)?)
}

/// Applies `params.strategy`. QE strategies re-retrieve `lr.len()` entries.
pub fn rerank<T: Real, C: CandidateSource<T> + Sync + ?Sized>(
    query: &ScanRecord<T>,
    candidates: &C,
    index: &DescriptorIndex<T>,
    lr: &RankedList<T>,
    params: &RerankParams,
) -> Result<RankedList<T>, RerankError> {
    params.validate()?;
    match params.strategy {
        Strategy::None => Ok(lr.clone()),
        Strategy::SpectralGv => rerank_spectral(query, candidates, lr, params),
        Strategy::RansacRir => rerank_rir(query, candidates, lr, params),
        Strategy::AverageQe => {
            let n_qe = params.effective_n_qe().min(lr.len());
            rerank_average_qe(index, query.global_descriptor(), lr, n_qe, lr.len().max(1))
        }
        Strategy::AlphaQe => {
            let n_qe = params.effective_n_qe().min(lr.len());
            rerank_alpha_qe(index, query.global_descriptor(), lr, n_qe, params.alpha, lr.len().max(1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, RigidTransform};
    use crate::scan::Features;

    fn desc_scan(id: &str, g: Vec<f64>) -> ScanRecord<f64> {
        ScanRecord::new(
            id,
            vec![Point3::origin()],
            Features::new(1, vec![0.0]).unwrap(),
            g,
            RigidTransform::identity(),
            Point3::origin(),
        )
        .unwrap()
    }

    #[test]
    fn average_qe_examples() {
        let db = vec![desc_scan("a", vec![0.0]), desc_scan("b", vec![10.0])];
        let idx = DescriptorIndex::build(&db).unwrap();
        let g = [1.0];
        let lr = idx.query_topk(&g, 2).unwrap();
        assert_eq!(rerank_average_qe(&idx, &g, &lr, 0, 2).unwrap(), lr);
        // ĝ = (1 + 0) / 2 = 0.5
        let out = rerank_average_qe(&idx, &g, &lr, 1, 2).unwrap();
        assert_eq!(out.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert!((out.entries()[0].score - 0.5).abs() < 1e-12);

        let g = [10.0];
        let lr = idx.query_topk(&g, 2).unwrap();
        let out = rerank_average_qe(&idx, &g, &lr, 1, 2).unwrap();
        assert_eq!(out.top().unwrap().candidate_id, "b");
        assert_eq!(out.top().unwrap().score, 0.0);

        assert!(matches!(
            rerank_average_qe(&idx, &g, &lr, 3, 2),
            Err(RerankError::TooManyExpansionTerms { n_qe: 3, len: 2 })
        ));
    }

    #[test]
    fn alpha_qe_examples() {
        let db = vec![
            desc_scan("par", vec![1.0, 0.05]),
            desc_scan("orth", vec![0.0, 1.0]),
            desc_scan("mid", vec![0.7, 0.7]),
        ];
        let idx = DescriptorIndex::build(&db).unwrap();
        let g = [1.0, 0.0];
        let lr = idx.query_topk(&g, 3).unwrap();
        let base = idx.query_topk(&g, 3).unwrap();
        assert_eq!(
            rerank_alpha_qe(&idx, &g, &lr, 0, 3.0, 3).unwrap().ids().collect::<Vec<_>>(),
            base.ids().collect::<Vec<_>>()
        );

        // orthogonal candidate alone: weight 0, ĝ stays g
        let lr_orth = RankedList::new(
            vec![RankedEntry { candidate_id: "orth".into(), score: 0.0 }],
            OrderingKind::AscendingDistance,
        )
        .unwrap();
        let out = rerank_alpha_qe(&idx, &g, &lr_orth, 1, 3.0, 3).unwrap();
        assert_eq!(out, base);

        // large alpha: parallel candidate keeps weight ≈ 1, the 45° one vanishes
        // w_par = (1/√1.0025)^50 ≈ 0.94, w_mid = (0.707)^50 ≈ 3e-8
        let out = rerank_alpha_qe(&idx, &g, &lr, 3, 50.0, 1).unwrap();
        assert_eq!(out.top().unwrap().candidate_id, "par");
        let wp = (1.0f64 / 1.0025f64.sqrt()).powf(50.0);
        let gp = [1.0 / 1.0025f64.sqrt(), 0.05 / 1.0025f64.sqrt()];
        let hat = [1.0 + wp * gp[0], wp * gp[1]];
        let n = (hat[0] * hat[0] + hat[1] * hat[1]).sqrt();
        let expected = ((hat[0] / n - 1.0).powi(2) + (hat[1] / n - 0.05).powi(2)).sqrt();
        assert!((out.top().unwrap().score - expected).abs() < 1e-6);

        assert_eq!(rerank_alpha_qe(&idx, &[0.0, 0.0], &lr, 1, 3.0, 3), Err(RerankError::ZeroVector));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.name()), Some(s));
        }
        assert_eq!(Strategy::parse("SpectralGV"), Some(Strategy::SpectralGv));
        assert_eq!(Strategy::parse("bogus"), None);
    }
}
