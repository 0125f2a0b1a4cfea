//! Evaluation: Recall@k, MRR, top-1 distance checks and pose accuracy.
//!
//! Everything here operates on [`QueryOutcome`] records, which are plain
//! `f64`/`String` data so that a results file alone is enough to recompute
//! every summary number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{geo_distance, RigidTransform};
use crate::linalg::{mat_mul, transpose};
use crate::scalar::Real;
use crate::scan::ScanRecord;

/// Pose success thresholds.
pub const SUCCESS_RTE_M: f64 = 2.0;
pub const SUCCESS_RRE_DEG: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no query has a ground-truth positive")]
    NoEvaluableQueries,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no positives recorded for radius {0} m")]
    UnknownRadius(f64),
}

/// Which ranked list of an outcome to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Descriptor retrieval order.
    Retrieved,
    /// Order after re-ranking.
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positives {
    pub radius: f64,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Metres.
    pub rte: f64,
    /// Degrees.
    pub rre: f64,
}

impl PoseError {
    pub fn is_success(&self) -> bool {
        self.rte <= SUCCESS_RTE_M && self.rre <= SUCCESS_RRE_DEG
    }
}

/// Everything recorded about one evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub retrieved: Vec<String>,
    pub reranked: Vec<String>,
    pub positives: Vec<Positives>,
    /// Geo distance from the query to the top-1 entry, before and after
    /// re-ranking; `None` for failed queries.
    pub top1_distance_before: Option<f64>,
    pub top1_distance_after: Option<f64>,
    /// Error of the pose estimated against the top-1 re-ranked candidate;
    /// `None` when registration failed.
    pub pose_error: Option<PoseError>,
    /// Why the query degraded to a worst-case outcome, if it did.
    pub failure: Option<String>,
    /// Wall-clock duration of the re-rank stage.
    pub rerank_ms: f64,
}

impl QueryOutcome {
    /// Worst-case outcome for a query whose pipeline failed.
    pub fn failed(query_id: &str, positives: Vec<Positives>, reason: String) -> Self {
        Self {
            query_id: query_id.to_string(),
            retrieved: Vec::new(),
            reranked: Vec::new(),
            positives,
            top1_distance_before: None,
            top1_distance_after: None,
            pose_error: None,
            failure: Some(reason),
            rerank_ms: 0.0,
        }
    }

    pub fn list(&self, stage: Stage) -> &[String] {
        match stage {
            Stage::Retrieved => &self.retrieved,
            Stage::Reranked => &self.reranked,
        }
    }

    pub fn positives_at(&self, radius: f64) -> Option<&[String]> {
        self.positives.iter().find(|p| p.radius == radius).map(|p| p.ids.as_slice())
    }

    /// 1-based rank of the first positive in the given list.
    pub fn first_positive_rank(&self, stage: Stage, radius: f64) -> Result<Option<usize>, MetricsError> {
        let pos = self.positives_at(radius).ok_or(MetricsError::UnknownRadius(radius))?;
        Ok(self.list(stage).iter().position(|id| pos.contains(id)).map(|r| r + 1))
    }
}

/// Ids of database scans within `radius` metres of the query, in database order.
///
/// # Panics
/// If `radius` is not positive.
pub fn ground_truth_positives<T: Real>(query: &ScanRecord<T>, database: &[ScanRecord<T>], radius: f64) -> Vec<String> {
    assert!(radius > 0.0, "radius must be positive");
    database
        .iter()
        .filter(|s| geo_distance(query.geo_location(), s.geo_location()).as_f64() <= radius)
        .map(|s| s.id().to_string())
        .collect()
}

fn evaluable(outcomes: &[QueryOutcome], radius: f64) -> Result<Vec<&QueryOutcome>, MetricsError> {
    let mut out = Vec::new();
    for o in outcomes {
        let pos = o.positives_at(radius).ok_or(MetricsError::UnknownRadius(radius))?;
        if !pos.is_empty() {
            out.push(o);
        }
    }
    if out.is_empty() {
        return Err(MetricsError::NoEvaluableQueries);
    }
    Ok(out)
}

/// Percentage of evaluable queries with a positive among the first `k` entries.
/// Queries with no positive in the database are left out of the denominator.
pub fn recall_at_k(outcomes: &[QueryOutcome], stage: Stage, k: usize, radius: f64) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let qs = evaluable(outcomes, radius)?;
    let mut hits = 0usize;
    for o in &qs {
        if matches!(o.first_positive_rank(stage, radius)?, Some(r) if r <= k) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / qs.len() as f64)
}

/// Mean of `1/r_q` over evaluable queries, as a percentage. A query whose
/// list holds no positive contributes 0.
pub fn mean_reciprocal_rank(outcomes: &[QueryOutcome], stage: Stage, radius: f64) -> Result<f64, MetricsError> {
    let qs = evaluable(outcomes, radius)?;
    let mut sum = 0.0;
    for o in &qs {
        if let Some(r) = o.first_positive_rank(stage, radius)? {
            sum += 1.0 / r as f64;
        }
    }
    Ok(100.0 * sum / qs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopOneShift {
    /// Queries whose top-1 geo distance grew after re-ranking.
    pub violations: usize,
    pub mean_before: f64,
    pub mean_after: f64,
}

/// Checks that re-ranking never moves the top-1 entry farther from the query.
/// Failed queries are skipped.
pub fn top1_distance_violations(outcomes: &[QueryOutcome]) -> TopOneShift {
    let valid: Vec<(f64, f64)> =
        outcomes.iter().filter_map(|o| Some((o.top1_distance_before?, o.top1_distance_after?))).collect();
    let violations = valid.iter().filter(|(b, a)| a > b).count();
    let n = valid.len().max(1) as f64;
    TopOneShift {
        violations,
        mean_before: valid.iter().map(|v| v.0).sum::<f64>() / n,
        mean_after: valid.iter().map(|v| v.1).sum::<f64>() / n,
    }
}

/// Translation error in metres and rotation error in degrees between two
/// relative transforms.
pub fn pose_errors<T: Real>(est: &RigidTransform<T>, gt: &RigidTransform<T>) -> PoseError {
    let (te, tg) = (est.translation(), gt.translation());
    let rte = (0..3).map(|i| (te[i] - tg[i]).as_f64().powi(2)).sum::<f64>().sqrt();
    let r = mat_mul(&transpose(gt.rotation()), est.rotation());
    let e = |i: usize, j: usize| r[i][j].as_f64();
    // atan2 of the skew and symmetric parts stays accurate near 0 and 180
    // degrees, where acos of the trace loses half the digits
    let sin2 = ((e(2, 1) - e(1, 2)).powi(2) + (e(0, 2) - e(2, 0)).powi(2) + (e(1, 0) - e(0, 1)).powi(2)).sqrt();
    let cos2 = e(0, 0) + e(1, 1) + e(2, 2) - 1.0;
    let rre = sin2.atan2(cos2).to_degrees();
    PoseError { rte, rre }
}

/// Percentage of all queries localized within 2 m and 5°. Queries without a
/// pose estimate count as failures.
pub fn success_rate(outcomes: &[QueryOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::NoEvaluableQueries);
    }
    let ok = outcomes.iter().filter(|o| o.pose_error.is_some_and(|p| p.is_success())).count();
    Ok(100.0 * ok as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub k: usize,
    /// Percentage; `None` when no query is evaluable.
    pub value: Option<f64>,
}

/// Retrieval metrics for one stage at one revisit radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusMetrics {
    pub radius: f64,
    pub evaluable_queries: usize,
    /// In the order the `k` values were requested.
    pub recall_at: Vec<RecallAt>,
    pub mrr: Option<f64>,
}

impl RadiusMetrics {
    pub fn compute(outcomes: &[QueryOutcome], stage: Stage, radius: f64, ks: &[usize]) -> Result<Self, MetricsError> {
        let evaluable_queries = match evaluable(outcomes, radius) {
            Ok(qs) => qs.len(),
            Err(MetricsError::NoEvaluableQueries) => 0,
            Err(e) => return Err(e),
        };
        let opt = |r: Result<f64, MetricsError>| match r {
            Ok(v) => Ok(Some(v)),
            Err(MetricsError::NoEvaluableQueries) => Ok(None),
            Err(e) => Err(e),
        };
        let recall_at = ks
            .iter()
            .map(|&k| Ok(RecallAt { k, value: opt(recall_at_k(outcomes, stage, k, radius))? }))
            .collect::<Result<_, MetricsError>>()?;
        Ok(Self { radius, evaluable_queries, recall_at, mrr: opt(mean_reciprocal_rank(outcomes, stage, radius))? })
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.iter().find(|r| r.k == k).and_then(|r| r.value)
    }
}

/// Aggregate metrics of a run. Contains no timing, so it is a pure function
/// of the per-query records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub num_queries: usize,
    pub failed_queries: usize,
    pub retrieved: Vec<RadiusMetrics>,
    /// Absent when no re-ranking was applied.
    pub reranked: Option<Vec<RadiusMetrics>>,
    pub top1_shift: TopOneShift,
    pub success_rate: Option<f64>,
    /// Queries with a pose estimate; the means below are over these.
    pub registered_queries: usize,
    pub mean_rte: Option<f64>,
    pub mean_rre: Option<f64>,
}

impl MetricReport {
    pub fn compute(
        outcomes: &[QueryOutcome],
        radii: &[f64],
        ks: &[usize],
        reranked: bool,
    ) -> Result<Self, MetricsError> {
        let per_radius = |stage| {
            radii.iter().map(|&r| RadiusMetrics::compute(outcomes, stage, r, ks)).collect::<Result<Vec<_>, _>>()
        };
        let poses: Vec<PoseError> = outcomes.iter().filter_map(|o| o.pose_error).collect();
        let mean = |f: fn(&PoseError) -> f64| {
            (!poses.is_empty()).then(|| poses.iter().map(f).sum::<f64>() / poses.len() as f64)
        };
        Ok(Self {
            num_queries: outcomes.len(),
            failed_queries: outcomes.iter().filter(|o| o.failure.is_some()).count(),
            retrieved: per_radius(Stage::Retrieved)?,
            reranked: if reranked { Some(per_radius(Stage::Reranked)?) } else { None },
            top1_shift: top1_distance_violations(outcomes),
            success_rate: success_rate(outcomes).ok(),
            registered_queries: poses.len(),
            mean_rte: mean(|p| p.rte),
            mean_rre: mean(|p| p.rre),
        })
    }

    /// Metrics of the final ranking: re-ranked when present, else retrieved.
    pub fn final_stage(&self) -> &[RadiusMetrics] {
        self.reranked.as_deref().unwrap_or(&self.retrieved)
    }

    pub fn at_radius(stage: &[RadiusMetrics], radius: f64) -> Option<&RadiusMetrics> {
        stage.iter().find(|m| m.radius == radius)
    }
}
