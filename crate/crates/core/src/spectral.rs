//! Spectral geometric verification.
//!
//! Correspondences become vertices of a compatibility graph whose edge weight
//! measures how well a pair of correspondences preserves point-to-point length
//! across the two clouds. The principal eigenvector of that graph's adjacency
//! matrix is a relaxed indicator of the largest mutually consistent cluster,
//! and the quadratic form `s* = v*ᵀ M v*` summarises how geometrically
//! consistent the two clouds are. No registration is performed.

use thiserror::Error;

use crate::matching::{CorrespondenceSet, MatchError, MatchParams, QueryMatcher};
use crate::scalar::Real;
use crate::scan::ScanRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("distance threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("compatibility matrix is empty")]
    EmptyMatrix,
    #[error("solver needs tol > 0 and max_iters >= 1")]
    InvalidSolverParams,
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Dense symmetric compatibility matrix, entries in `[0, 1]`, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix<T> {
    n: usize,
    values: Vec<T>,
    d_thr: T,
}

impl<T: Real> CompatibilityMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_thr(&self) -> T {
        self.d_thr
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    /// Row-major values.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `M·v`
    pub fn mul_vec(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::scalar::dot(self.row(i), v);
        }
    }

    /// `vᵀ M v`
    pub fn quadratic_form(&self, v: &[T]) -> T {
        (0..self.n).map(|i| v[i] * crate::scalar::dot(self.row(i), v)).sum()
    }

    /// Builds a matrix from explicit row-major values. Used by tests and
    /// tooling that need matrices not derived from correspondences.
    pub fn from_values(n: usize, values: Vec<T>, d_thr: T) -> Option<Self> {
        if values.len() != n * n {
            return None;
        }
        for i in 0..n {
            if values[i * n + i] != T::zero() {
                return None;
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= T::zero() && v <= T::one()) || v != values[j * n + i] {
                    return None;
                }
            }
        }
        Some(Self { n, values, d_thr })
    }
}

/// Pairwise length-preservation scores:
/// `m_ij = max(0, 1 − d_ij² / d_thr²)` with `d_ij = |‖x_i − x_j‖ − ‖y_i − y_j‖|`.
pub fn build_compatibility_matrix<T: Real>(
    corrs: &CorrespondenceSet<T>,
    d_thr: T,
) -> Result<CompatibilityMatrix<T>, SpectralError> {
    if !(d_thr > T::zero()) || !d_thr.is_finite() {
        return Err(SpectralError::NonPositiveThreshold(d_thr.as_f64()));
    }
    let pairs = corrs.pairs();
    let n = pairs.len();
    let inv_thr2 = T::one() / (d_thr * d_thr);
    let mut values = vec![T::zero(); n * n];
    for i in 0..n {
        let (xi, yi) = (pairs[i].query_point, pairs[i].candidate_point);
        for j in (i + 1)..n {
            let len_x = (xi - pairs[j].query_point).norm();
            let len_y = (yi - pairs[j].candidate_point).norm();
            let d = len_x - len_y;
            let m = (T::one() - d * d * inv_thr2).max(T::zero());
            values[i * n + j] = m;
            values[j * n + i] = m;
        }
    }
    Ok(CompatibilityMatrix { n, values, d_thr })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Convergence threshold on `‖v⁽ᵏ⁾ − v⁽ᵏ⁻¹⁾‖₂`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult<T> {
    /// Unit-norm principal eigenvector estimate.
    pub v_star: Vec<T>,
    /// Rayleigh quotient at `v_star`.
    pub lambda: T,
    /// `v_starᵀ M v_star`.
    pub s_star: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Principal eigenvector of `M` by power iteration from the uniform vector.
///
/// Iterates on `M + σI` with `σ = max_ij m_ij`. The shift leaves the
/// eigenvectors alone but breaks the `±ρ` eigenvalue pair of bipartite
/// compatibility graphs, on which plain power iteration oscillates forever.
/// Running out of iterations is reported through `converged`, not as an error.
pub fn power_iterate<T: Real>(
    m: &CompatibilityMatrix<T>,
    params: SolverParams,
) -> Result<SpectralResult<T>, SpectralError> {
    if !(params.tol > 0.0) || params.max_iters == 0 {
        return Err(SpectralError::InvalidSolverParams);
    }
    let n = m.n();
    if n == 0 {
        return Err(SpectralError::EmptyMatrix);
    }
    let uniform = T::one() / T::lit(n as f64).sqrt();
    let mut v = vec![uniform; n];
    let shift = m.values().iter().fold(T::zero(), |a, &b| a.max(b));
    if shift == T::zero() {
        return Ok(SpectralResult { v_star: v, lambda: T::zero(), s_star: T::zero(), iterations: 1, converged: true });
    }

    let tol = T::lit(params.tol);
    let mut w = vec![T::zero(); n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        m.mul_vec(&v, &mut w);
        for (wi, &vi) in w.iter_mut().zip(&v) {
            *wi = *wi + shift * vi;
        }
        let norm = crate::scalar::norm(&w);
        let mut diff2 = T::zero();
        for (vi, &wi) in v.iter_mut().zip(&w) {
            let next = wi / norm;
            let d = next - *vi;
            diff2 = diff2 + d * d;
            *vi = next;
        }
        if diff2.sqrt() < tol {
            converged = true;
            break;
        }
    }

    let s_star = m.quadratic_form(&v).max(T::zero());
    let vtv = crate::scalar::dot(&v, &v);
    Ok(SpectralResult { lambda: s_star / vtv, s_star, v_star: v, iterations, converged })
}

/// `s*` for a compatibility matrix. At exact convergence this is `λ_max(M)`.
pub fn spectral_fitness<T: Real>(
    m: &CompatibilityMatrix<T>,
    params: SolverParams,
) -> Result<SpectralResult<T>, SpectralError> {
    power_iterate(m, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    /// Length-difference sensitivity in metres.
    pub d_thr: f64,
    pub matching: MatchParams,
    pub solver: SolverParams,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self { d_thr: 0.5, matching: MatchParams::default(), solver: SolverParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore<T> {
    pub s_star: T,
    /// Size of the compatibility matrix.
    pub n: usize,
    pub converged: bool,
}

/// Scores every candidate of one query against the same sampled query points.
pub struct QueryScorer<'q, T> {
    matcher: QueryMatcher<'q, T>,
    params: SpectralParams,
}

impl<'q, T: Real> QueryScorer<'q, T> {
    pub fn new(query: &'q ScanRecord<T>, params: SpectralParams) -> Result<Self, SpectralError> {
        if !(params.d_thr > 0.0) {
            return Err(SpectralError::NonPositiveThreshold(params.d_thr));
        }
        Ok(Self { matcher: QueryMatcher::new(query, params.matching)?, params })
    }

    pub fn score(&self, candidate: &ScanRecord<T>) -> Result<CandidateScore<T>, SpectralError> {
        let corrs = self.matcher.match_candidate(candidate)?;
        let m = build_compatibility_matrix(&corrs, T::lit(self.params.d_thr))?;
        let res = spectral_fitness(&m, self.params.solver)?;
        Ok(CandidateScore { s_star: res.s_star, n: m.n(), converged: res.converged })
    }
}

/// Match → compatibility matrix → `s*` for one query/candidate pair.
pub fn score_candidate<T: Real>(
    query: &ScanRecord<T>,
    candidate: &ScanRecord<T>,
    params: SpectralParams,
) -> Result<(T, usize), SpectralError> {
    let s = QueryScorer::new(query, params)?.score(candidate)?;
    Ok((s.s_star, s.n))
}
