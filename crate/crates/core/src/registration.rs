//! Correspondence-based rigid registration: Kabsch fitting inside seeded RANSAC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Point3, RigidTransform};
use crate::linalg::{self, Mat3};
use crate::matching::CorrespondenceSet;
use crate::scalar::Real;

pub const MIN_SAMPLE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistrationError {
    #[error("need at least {MIN_SAMPLE} correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate configuration: points are collinear or coincident")]
    DegenerateConfiguration,
    #[error("correspondence set is empty")]
    EmptySet,
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(&'static str),
}

/// Least-squares rigid transform taking each `x` onto its `y`.
///
/// Centroids are removed, the cross-covariance `H = Σ x̃ ỹᵀ` is decomposed
/// as `U Σ Vᵀ` and `R = V diag(1, 1, det V) Uᵀ` with `U` completed to a
/// proper rotation, so reflections never come out.
pub fn kabsch_fit<T: Real>(pairs: &[(Point3<T>, Point3<T>)]) -> Result<RigidTransform<T>, RegistrationError> {
    if pairs.len() < MIN_SAMPLE {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let inv_n = T::one() / T::lit(pairs.len() as f64);
    let (mut cx, mut cy) = (Point3::origin(), Point3::origin());
    for &(x, y) in pairs {
        cx = cx + x;
        cy = cy + y;
    }
    let cx = cx.scale(inv_n);
    let cy = cy.scale(inv_n);

    let mut h: Mat3<T> = [[T::zero(); 3]; 3];
    let mut sxx: Mat3<T> = [[T::zero(); 3]; 3];
    let mut syy: Mat3<T> = [[T::zero(); 3]; 3];
    for &(x, y) in pairs {
        let a = (x - cx).to_array();
        let b = (y - cy).to_array();
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = h[i][j] + a[i] * b[j];
                sxx[i][j] = sxx[i][j] + a[i] * a[j];
                syy[i][j] = syy[i][j] + b[i] * b[j];
            }
        }
    }
    if is_collinear(&sxx) || is_collinear(&syy) {
        return Err(RegistrationError::DegenerateConfiguration);
    }

    let hth = linalg::mat_mul(&linalg::transpose(&h), &h);
    let (sig2, v) = linalg::symmetric_eigen3(&hth);
    let col = |m: &Mat3<T>, c: usize| [m[0][c], m[1][c], m[2][c]];
    let s1 = sig2[0].max(T::zero()).sqrt();
    let s2 = sig2[1].max(T::zero()).sqrt();
    if s1 == T::zero() || s2 <= s1 * T::epsilon() * T::lit(16.0) {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let u1 = scale3(linalg::mat_vec(&h, col(&v, 0)), T::one() / s1);
    let mut u2 = scale3(linalg::mat_vec(&h, col(&v, 1)), T::one() / s2);
    // re-orthogonalize against rounding
    let d = dot3(u1, u2);
    u2 = [u2[0] - d * u1[0], u2[1] - d * u1[1], u2[2] - d * u1[2]];
    let u2 = scale3(u2, T::one() / dot3(u2, u2).sqrt());
    let u1 = scale3(u1, T::one() / dot3(u1, u1).sqrt());
    let u3 = linalg::cross(u1, u2);
    let u_t: Mat3<T> = [u1, u2, u3];

    let mut vd = v;
    let det_v = linalg::det(&v);
    if det_v < T::zero() {
        for row in vd.iter_mut() {
            row[2] = -row[2];
        }
    }
    let rotation = linalg::mat_mul(&vd, &u_t);
    let rc = linalg::mat_vec(&rotation, cx.to_array());
    let cy = cy.to_array();
    let translation = [cy[0] - rc[0], cy[1] - rc[1], cy[2] - rc[2]];
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

/// Second principal variance negligible next to the first.
fn is_collinear<T: Real>(scatter: &Mat3<T>) -> bool {
    let (vals, _) = linalg::symmetric_eigen3(scatter);
    vals[0] <= T::zero() || vals[1] <= vals[0] * T::epsilon() * T::lit(100.0)
}

fn scale3<T: Real>(a: [T; 3], s: T) -> [T; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier distance threshold τ in metres.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Early exit once an all-inlier sample has been drawn with this probability.
    pub confidence: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { inlier_threshold: 0.5, max_iterations: 1000, seed: 0, confidence: 0.999 }
    }
}

impl RansacParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.inlier_threshold > 0.0) {
            return Err(RegistrationError::InvalidParams("inlier_threshold must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RegistrationError::InvalidParams("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult<T> {
    pub transform: RigidTransform<T>,
    pub inlier_mask: Vec<bool>,
    pub inlier_ratio: f64,
    /// Hypotheses drawn before stopping.
    pub iterations: usize,
}

fn inlier_mask<T: Real>(corrs: &CorrespondenceSet<T>, t: &RigidTransform<T>, tau: T) -> Vec<bool> {
    let tau2 = tau * tau;
    corrs.pairs().iter().map(|c| (t.apply(c.query_point) - c.candidate_point).norm_squared() < tau2).collect()
}

/// Hypotheses needed to see one all-inlier triple with probability `confidence`.
fn required_iterations(inlier_fraction: f64, confidence: f64) -> f64 {
    let w3 = inlier_fraction.powi(MIN_SAMPLE as i32);
    if w3 <= 0.0 {
        return f64::INFINITY;
    }
    if w3 >= 1.0 {
        return 0.0;
    }
    (1.0 - confidence).ln() / (1.0 - w3).ln()
}

/// Seeded RANSAC over minimal triples, then a Kabsch re-fit on the best
/// consensus set. Identical input and seed give bitwise identical output.
pub fn ransac_register<T: Real>(
    corrs: &CorrespondenceSet<T>,
    params: RansacParams,
) -> Result<RegistrationResult<T>, RegistrationError> {
    params.validate()?;
    let n = corrs.len();
    if n < MIN_SAMPLE {
        return Err(RegistrationError::TooFewCorrespondences(n));
    }
    let tau = T::lit(params.inlier_threshold);
    let pairs = corrs.point_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<(usize, RigidTransform<T>, Vec<bool>)> = None;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let idx = rand::seq::index::sample(&mut rng, n, MIN_SAMPLE);
        let sample = [pairs[idx.index(0)], pairs[idx.index(1)], pairs[idx.index(2)]];
        let Ok(hypothesis) = kabsch_fit(&sample) else {
            continue;
        };
        let mask = inlier_mask(corrs, &hypothesis, tau);
        let count = mask.iter().filter(|&&m| m).count();
        if best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, hypothesis, mask));
        }
        let best_count = best.as_ref().map_or(0, |(c, _, _)| *c);
        if iterations as f64 >= required_iterations(best_count as f64 / n as f64, params.confidence) {
            break;
        }
    }

    let Some((_, hypothesis, mask)) = best else {
        return Err(RegistrationError::DegenerateConfiguration);
    };
    let consensus: Vec<_> = pairs.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
    let transform = kabsch_fit(&consensus).unwrap_or(hypothesis);
    let inlier_mask = inlier_mask(corrs, &transform, tau);
    let inliers = inlier_mask.iter().filter(|&&m| m).count();
    Ok(RegistrationResult { transform, inlier_ratio: inliers as f64 / n as f64, inlier_mask, iterations })
}

/// Fraction of correspondences with `‖T·x − y‖ < τ`.
pub fn registered_inlier_ratio<T: Real>(
    corrs: &CorrespondenceSet<T>,
    transform: &RigidTransform<T>,
    tau: f64,
) -> Result<f64, RegistrationError> {
    if corrs.is_empty() {
        return Err(RegistrationError::EmptySet);
    }
    if !(tau > 0.0) {
        return Err(RegistrationError::InvalidParams("tau must be positive"));
    }
    let mask = inlier_mask(corrs, transform, T::lit(tau));
    Ok(mask.iter().filter(|&&m| m).count() as f64 / corrs.len() as f64)
}
