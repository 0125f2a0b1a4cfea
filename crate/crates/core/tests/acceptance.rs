//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use spectralgv::matching::MatchParams;
use spectralgv::metrics::{mean_reciprocal_rank, recall_at_k, MetricReport, Positives, QueryOutcome, Stage};
use spectralgv::pipeline::{bench_dataset, cmd_run, run_dataset, RunConfig};
use spectralgv::report::ResultsFile;
use spectralgv::rerank::Strategy;
use spectralgv::spectral::{build_compatibility_matrix, power_iterate, score_candidate, SolverParams, SpectralParams};
use spectralgv::storage::{read_results, Dataset};
use spectralgv::synthgen::{export_world, generate_world, WorldConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1_spectral_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(1);
    // tight solver settings: the criterion is about the eigenpair, not the default stopping rule
    let solver = SolverParams { tol: 1e-12, max_iters: 100_000 };
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=100);
        let corrs = common::random_correspondences(&mut rng, n);
        let m = build_compatibility_matrix(&corrs, 0.5).unwrap();
        let res = power_iterate(&m, solver).unwrap();
        unconverged += usize::from(!res.converged);
        let oracle = SymmetricEigen::new(DMatrix::from_row_slice(n, n, m.values()));
        let lambda_max = oracle.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = lambda_max.abs().max(1e-12);
        for got in [res.lambda, res.s_star] {
            let rel =
                if lambda_max.abs() < 1e-12 && got.abs() < 1e-12 { 0.0 } else { (got - lambda_max).abs() / scale };
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!("500 sets, max relative error {worst:.2e} (≤ 1e-6), {unconverged} unconverged, {elapsed:.2?} (< 5 s)"),
    )
}

fn c2_rigid_invariance() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(2);
    let params = SpectralParams { matching: MatchParams { n_max: 1000, mutual: false }, ..SpectralParams::default() };
    let mut worst_ratio = 0.0f64;
    for i in 0..100 {
        let n = rng.random_range(3..=200);
        let q = common::random_scan(&mut rng, &format!("q{i}"), n, 8);
        let t = common::random_transform(&mut rng);
        let moved = q.transformed(&t).with_id("moved");
        let (a, na) = score_candidate(&q, &moved, params).unwrap();
        let (b, _) = score_candidate(&q, &q, params).unwrap();
        let bound = 1e-5 * (na as f64 - 1.0);
        worst_ratio = worst_ratio.max((a - b).abs() / bound);
    }
    let elapsed = start.elapsed();
    verdict(
        worst_ratio < 1.0 && elapsed < Duration::from_secs(5),
        format!("100 pairs, max |Δs*| / (1e-5·(n−1)) = {worst_ratio:.2e} (< 1), {elapsed:.2?} (< 5 s)"),
    )
}

struct WorldRuns {
    build: Duration,
    baseline: ResultsFile,
    sgv: ResultsFile,
    rir: ResultsFile,
    avg_qe: ResultsFile,
    alpha_qe: ResultsFile,
    sgv_elapsed: Duration,
}

fn default_world() -> Dataset<f64> {
    generate_world::<f64>(&WorldConfig::default()).unwrap().into_dataset()
}

fn run_strategies(dataset: &Dataset<f64>) -> WorldRuns {
    let start = Instant::now();
    let run = |s: Strategy| {
        let mut cfg = RunConfig::new("unused");
        cfg.rerank.strategy = s;
        let t = Instant::now();
        let r = run_dataset(dataset, &cfg).unwrap();
        (r, t.elapsed())
    };
    let (baseline, _) = run(Strategy::None);
    let (sgv, sgv_elapsed) = run(Strategy::SpectralGv);
    let (rir, _) = run(Strategy::RansacRir);
    let (avg_qe, _) = run(Strategy::AverageQe);
    let (alpha_qe, _) = run(Strategy::AlphaQe);
    WorldRuns { build: start.elapsed(), baseline, sgv, rir, avg_qe, alpha_qe, sgv_elapsed }
}

fn metrics(r: &ResultsFile) -> &MetricReport {
    &r.summary.as_ref().expect("queries were evaluated").metrics
}

fn r1_mrr(r: &ResultsFile) -> (f64, f64) {
    let m = MetricReport::at_radius(metrics(r).final_stage(), 5.0).unwrap();
    (m.recall(1).unwrap(), m.mrr.unwrap())
}

fn c3_rerank_benefit(runs: &WorldRuns, gen: Duration) -> Verdict {
    let (b1, bm) = r1_mrr(&runs.baseline);
    let (s1, sm) = r1_mrr(&runs.sgv);
    let elapsed = gen + runs.sgv_elapsed;
    verdict(
        s1 - b1 >= 15.0 && sm > bm && elapsed < Duration::from_secs(60),
        format!(
            "R1@5m {b1:.1} → {s1:.1} (Δ {:.1} ≥ 15), MRR {bm:.1} → {sm:.1} (strictly up), {elapsed:.2?} (< 60 s)",
            s1 - b1
        ),
    )
}

fn c4_strategy_ordering(runs: &WorldRuns) -> Verdict {
    let (b, _) = r1_mrr(&runs.baseline);
    let (s, _) = r1_mrr(&runs.sgv);
    let (r, _) = r1_mrr(&runs.rir);
    let (a, _) = r1_mrr(&runs.avg_qe);
    let (q, _) = r1_mrr(&runs.alpha_qe);
    verdict(
        s >= r && r >= b && a <= b && q <= b,
        format!(
            "R1@5m SGV {s:.1} ≥ RIR {r:.1} ≥ baseline {b:.1}; average-QE {a:.1} ≤ {b:.1}; alpha-QE {q:.1} ≤ {b:.1}"
        ),
    )
}

fn c5_runtime_scaling(dataset: &Dataset<f64>) -> Verdict {
    let mut cfg = RunConfig::new("unused");
    cfg.bench_n_topk = vec![2, 20];
    cfg.bench_strategies = vec![Strategy::SpectralGv, Strategy::RansacRir];
    cfg.threads = 0;
    let bench = bench_dataset(dataset, &cfg).unwrap().bench;
    let t = |s: Strategy, k: usize| bench.iter().find(|r| r.strategy == s && r.n_topk == k).unwrap().mean_rerank_ms;
    let sgv = t(Strategy::SpectralGv, 20) / t(Strategy::SpectralGv, 2);
    let rir = t(Strategy::RansacRir, 20) / t(Strategy::RansacRir, 2);
    let threads = rayon::current_num_threads();
    verdict(
        sgv <= 3.0 && rir >= 5.0,
        format!(
            "t_SGV(20)/t_SGV(2) = {sgv:.2} (≤ 3), t_RIR(20)/t_RIR(2) = {rir:.2} (≥ 5); SGV {:.2}→{:.2} ms, RIR {:.2}→{:.2} ms on {threads} thread(s)",
            t(Strategy::SpectralGv, 2),
            t(Strategy::SpectralGv, 20),
            t(Strategy::RansacRir, 2),
            t(Strategy::RansacRir, 20)
        ),
    )
}

fn c6_top1_distance(runs: &WorldRuns) -> Verdict {
    let m = metrics(&runs.sgv);
    let s = m.top1_shift;
    let share = 100.0 * s.violations as f64 / m.num_queries as f64;
    verdict(
        share <= 5.0 && s.mean_after < s.mean_before,
        format!(
            "{} of {} queries moved farther ({share:.1}% ≤ 5%), mean top-1 distance {:.2} m → {:.2} m",
            s.violations, m.num_queries, s.mean_before, s.mean_after
        ),
    )
}

fn c7_pose_improvement(runs: &WorldRuns) -> Verdict {
    let (b, s) = (metrics(&runs.baseline), metrics(&runs.sgv));
    let (bs, ss) = (b.success_rate.unwrap(), s.success_rate.unwrap());
    let (brte, srte) = (b.mean_rte.unwrap(), s.mean_rte.unwrap());
    let drop = 100.0 * (brte - srte) / brte;
    verdict(
        ss - bs >= 10.0 && drop >= 50.0 && runs.build < Duration::from_secs(120),
        format!(
            "success {bs:.1}% → {ss:.1}% (Δ {:.1} ≥ 10), mean RTE {brte:.3} m → {srte:.3} m (−{drop:.1}% ≥ 50%), {:.2?} (< 120 s)",
            ss - bs,
            runs.build
        ),
    )
}

fn brute_recall(outcomes: &[QueryOutcome], k: usize) -> Option<f64> {
    let mut n = 0usize;
    let mut hits = 0usize;
    for o in outcomes {
        let pos = &o.positives[0].ids;
        if pos.is_empty() {
            continue;
        }
        n += 1;
        if o.retrieved.iter().take(k).any(|id| pos.contains(id)) {
            hits += 1;
        }
    }
    (n > 0).then(|| 100.0 * hits as f64 / n as f64)
}

fn brute_mrr(outcomes: &[QueryOutcome]) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for o in outcomes {
        let pos = &o.positives[0].ids;
        if pos.is_empty() {
            continue;
        }
        n += 1;
        for (i, id) in o.retrieved.iter().enumerate() {
            if pos.contains(id) {
                sum += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    (n > 0).then(|| 100.0 * sum / n as f64)
}

fn c8_metric_oracles() -> Verdict {
    let mut rng = common::rng(8);
    let mut mismatches = 0;
    let mut checks = 0;
    for _ in 0..200 {
        let nq = rng.random_range(1..=20);
        let outcomes: Vec<QueryOutcome> = (0..nq)
            .map(|qi| {
                let len = rng.random_range(1..=30);
                let list: Vec<String> = (0..len).map(|i| format!("c{i}")).collect();
                let pool = rng.random_range(1..=40);
                let ids: Vec<String> =
                    (0..pool).filter(|_| rng.random::<f64>() < 0.08).map(|i| format!("c{i}")).collect();
                QueryOutcome {
                    query_id: format!("q{qi}"),
                    retrieved: list.clone(),
                    reranked: list,
                    positives: vec![Positives { radius: 5.0, ids }],
                    top1_distance_before: None,
                    top1_distance_after: None,
                    pose_error: None,
                    failure: None,
                    rerank_ms: 0.0,
                }
            })
            .collect();
        for k in [1, 2, 5, 10, 30] {
            checks += 1;
            if recall_at_k(&outcomes, Stage::Retrieved, k, 5.0).ok() != brute_recall(&outcomes, k) {
                mismatches += 1;
            }
        }
        checks += 1;
        if mean_reciprocal_rank(&outcomes, Stage::Retrieved, 5.0).ok() != brute_mrr(&outcomes) {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{checks} recall/MRR values over 200 outcome sets, {mismatches} mismatches (exact)"),
    )
}

fn c9_determinism(dataset: &Dataset<f64>) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let world = spectralgv::synthgen::World {
        database: dataset.database.clone(),
        queries: dataset.queries.clone(),
        truth: Default::default(),
        aliases: Default::default(),
    };
    let manifest = export_world(&world, dir.path()).unwrap();
    let run = |threads: usize| {
        let mut cfg = RunConfig::new(&manifest);
        cfg.threads = threads;
        cfg.seed = 42;
        cfg.out = dir.path().join(format!("results-{threads}.jsonl"));
        cmd_run(&cfg).unwrap();
        let r = read_results(&cfg.out).unwrap();
        let per_query: Vec<String> = r
            .queries
            .iter()
            .map(|q| serde_json::to_string(&QueryOutcome { rerank_ms: 0.0, ..q.clone() }).unwrap())
            .collect();
        (serde_json::to_string(&r.summary.unwrap().metrics).unwrap(), per_query)
    };
    let (a, qa) = run(1);
    let (b, qb) = run(4);
    verdict(
        a == b && qa == qb,
        format!(
            "threads 1 vs 4: metric summaries {} ({} bytes), per-query records {}",
            if a == b { "identical" } else { "differ" },
            a.len(),
            if qa == qb { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let t = Instant::now();
    let dataset = default_world();
    let gen = t.elapsed();

    let mut verdicts = vec![(1, c1_spectral_oracle()), (2, c2_rigid_invariance())];
    let runs = run_strategies(&dataset);
    verdicts.push((3, c3_rerank_benefit(&runs, gen)));
    verdicts.push((4, c4_strategy_ordering(&runs)));
    verdicts.push((5, c5_runtime_scaling(&dataset)));
    verdicts.push((6, c6_top1_distance(&runs)));
    verdicts.push((7, c7_pose_improvement(&runs)));
    verdicts.push((8, c8_metric_oracles()));
    verdicts.push((9, c9_determinism(&dataset)));

    let mut failed = 0;
    for (n, v) in &verdicts {
        println!("criterion {n}: {} — {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
