use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::{PipelineError, Precision, RunConfig};
use crate::geometry::geo_distance;
use crate::matching::QueryMatcher;
use crate::metrics::{ground_truth_positives, pose_errors, MetricReport, Positives, QueryOutcome, Stage};
use crate::ranking::RankedList;
use crate::registration::{ransac_register, RansacParams};
use crate::report::{BenchRow, ResultsFile, RunHeader, Summary, Timing};
use crate::rerank::{rerank, CandidateSource, RerankParams, ScanLookup, Strategy};
use crate::retrieval::DescriptorIndex;
use crate::scalar::Real;
use crate::scan::ScanRecord;
use crate::storage::{load_dataset, write_results, Dataset};
use crate::synthgen::{export_world, generate_world, WorldConfig};

/// Everything one query evaluation needs; shared across queries.
pub struct QueryContext<'a, T> {
    pub database: &'a [ScanRecord<T>],
    pub index: &'a DescriptorIndex<T>,
    pub lookup: &'a ScanLookup<'a, T>,
    pub params: RerankParams,
    pub list_length: usize,
    pub radii: &'a [f64],
    /// Register against the top-1 entry to score the pose.
    pub register: bool,
    pub seed: u64,
}

/// Runs one query through the pipeline. Failures degrade to a worst-case
/// outcome rather than an error.
pub fn evaluate_query<T: Real>(ctx: &QueryContext<'_, T>, ordinal: usize, query: &ScanRecord<T>) -> QueryOutcome {
    let positives: Vec<Positives> = ctx
        .radii
        .iter()
        .map(|&radius| Positives { radius, ids: ground_truth_positives(query, ctx.database, radius) })
        .collect();

    let lr = match ctx.index.query_topk(query.global_descriptor(), ctx.list_length) {
        Ok(lr) => lr,
        Err(e) => return QueryOutcome::failed(query.id(), positives, format!("retrieval: {e}")),
    };
    let start = Instant::now();
    let reranked = rerank(query, ctx.lookup, ctx.index, &lr, &ctx.params);
    let rerank_ms = start.elapsed().as_secs_f64() * 1e3;
    let post = match reranked {
        Ok(post) => post,
        Err(e) => {
            let mut o = QueryOutcome::failed(query.id(), positives, format!("rerank: {e}"));
            o.retrieved = lr.ids().map(str::to_string).collect();
            return o;
        }
    };

    let top1 = |l: &RankedList<T>| l.top().and_then(|e| ctx.lookup.get(&e.candidate_id));
    let dist = |s: Option<&ScanRecord<T>>| s.map(|s| geo_distance(query.geo_location(), s.geo_location()).as_f64());
    let best = top1(&post);
    let pose_error = match best {
        Some(cand) if ctx.register => register(query, cand, &ctx.params, ctx.seed ^ ordinal as u64),
        _ => None,
    };
    QueryOutcome {
        query_id: query.id().to_string(),
        retrieved: lr.ids().map(str::to_string).collect(),
        reranked: post.ids().map(str::to_string).collect(),
        positives,
        top1_distance_before: dist(top1(&lr)),
        top1_distance_after: dist(best),
        pose_error,
        failure: None,
        rerank_ms,
    }
}

fn register<T: Real>(
    query: &ScanRecord<T>,
    cand: &ScanRecord<T>,
    params: &RerankParams,
    seed: u64,
) -> Option<crate::metrics::PoseError> {
    let matcher = QueryMatcher::new(query, params.spectral.matching).ok()?;
    let corrs = matcher.match_candidate(cand).ok()?;
    let ransac: RansacParams = params.ransac.with_seed(seed);
    let est = ransac_register(&corrs, ransac).ok()?.transform;
    Some(pose_errors(&est, &query.relative_pose_to(cand)))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| PipelineError::ThreadPool(e.to_string()))
}

fn params_for(cfg: &RunConfig, strategy: Strategy, n_topk: usize) -> RerankParams {
    let mut p = cfg.rerank;
    p.strategy = strategy;
    p.n_topk = n_topk;
    p.ransac.seed = cfg.seed;
    p
}

/// Full pipeline over a loaded dataset. Queries run in parallel; the output
/// does not depend on the thread count apart from timings.
pub fn run_dataset<T: Real>(dataset: &Dataset<T>, cfg: &RunConfig) -> Result<ResultsFile, PipelineError> {
    let index = DescriptorIndex::build(&dataset.database)?;
    let lookup = ScanLookup::new(&dataset.database);
    let params = params_for(cfg, cfg.rerank.strategy, cfg.rerank.n_topk);
    let ctx = QueryContext {
        database: &dataset.database,
        index: &index,
        lookup: &lookup,
        params,
        list_length: cfg.effective_list_length(params.n_topk),
        radii: &cfg.radii,
        register: true,
        seed: cfg.seed,
    };
    let start = Instant::now();
    let outcomes: Vec<QueryOutcome> = thread_pool(cfg.threads)?
        .install(|| dataset.queries.par_iter().enumerate().map(|(i, q)| evaluate_query(&ctx, i, q)).collect());
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    let header = RunHeader::new("run", cfg.describe());
    let summary = if outcomes.is_empty() {
        None
    } else {
        let metrics = MetricReport::compute(&outcomes, &cfg.radii, &cfg.k_values, params.strategy != Strategy::None)?;
        let mean_rerank_ms = outcomes.iter().map(|o| o.rerank_ms).sum::<f64>() / outcomes.len() as f64;
        Some(Summary { metrics, timing: Timing { mean_rerank_ms, total_ms } })
    };
    Ok(ResultsFile { header, queries: outcomes, bench: Vec::new(), summary })
}

/// Times each strategy × `n_topk` cell. Queries run one after another so
/// that each timing sees the whole thread pool; candidate scoring inside a
/// query is parallel.
pub fn bench_dataset<T: Real>(dataset: &Dataset<T>, cfg: &RunConfig) -> Result<ResultsFile, PipelineError> {
    let index = DescriptorIndex::build(&dataset.database)?;
    let lookup = ScanLookup::new(&dataset.database);
    let pool = thread_pool(cfg.threads)?;
    let radius = cfg.radii[0];
    let mut rows = Vec::new();
    for &strategy in &cfg.bench_strategies {
        for &n_topk in &cfg.bench_n_topk {
            let params = params_for(cfg, strategy, n_topk);
            let ctx = QueryContext {
                database: &dataset.database,
                index: &index,
                lookup: &lookup,
                params,
                list_length: cfg.effective_list_length(n_topk),
                radii: &cfg.radii,
                register: false,
                seed: cfg.seed,
            };
            let outcomes: Vec<QueryOutcome> = pool.install(|| {
                if let Some(q) = dataset.queries.first() {
                    // warm caches and the pool before timing
                    evaluate_query(&ctx, 0, q);
                }
                dataset.queries.iter().enumerate().map(|(i, q)| evaluate_query(&ctx, i, q)).collect()
            });
            let n = outcomes.len();
            let stage = if strategy == Strategy::None { Stage::Retrieved } else { Stage::Reranked };
            rows.push(BenchRow {
                strategy,
                n_topk,
                num_queries: n,
                mean_rerank_ms: outcomes.iter().map(|o| o.rerank_ms).sum::<f64>() / n.max(1) as f64,
                recall_at_1: crate::metrics::recall_at_k(&outcomes, stage, 1, radius).ok(),
                mrr: crate::metrics::mean_reciprocal_rank(&outcomes, stage, radius).ok(),
            });
        }
    }
    let mut config = cfg.describe();
    config.insert("bench_n_topk".into(), cfg.bench_n_topk.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    config
        .insert("bench_strategies".into(), cfg.bench_strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
    config.insert("bench_radius".into(), radius.to_string());
    Ok(ResultsFile { header: RunHeader::new("bench", config), queries: Vec::new(), bench: rows, summary: None })
}

fn with_dataset<R>(
    cfg: &RunConfig,
    f32_run: impl FnOnce(&Dataset<f32>) -> Result<R, PipelineError>,
    f64_run: impl FnOnce(&Dataset<f64>) -> Result<R, PipelineError>,
) -> Result<R, PipelineError> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => f32_run(&load_dataset(&cfg.manifest)?),
        Precision::F64 => f64_run(&load_dataset(&cfg.manifest)?),
    }
}

/// Loads the manifest, runs the pipeline and writes the results file.
pub fn cmd_run(cfg: &RunConfig) -> Result<ResultsFile, PipelineError> {
    let results = with_dataset(cfg, |d| run_dataset(d, cfg), |d| run_dataset(d, cfg))?;
    write_results(&cfg.out, &results)?;
    Ok(results)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<ResultsFile, PipelineError> {
    let results = with_dataset(cfg, |d| bench_dataset(d, cfg), |d| bench_dataset(d, cfg))?;
    write_results(&cfg.out, &results)?;
    Ok(results)
}

/// Generates a world and exports it; returns the manifest path.
pub fn cmd_synth(cfg: &WorldConfig, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    let world = generate_world::<f64>(cfg)?;
    Ok(export_world(&world, out_dir)?)
}
