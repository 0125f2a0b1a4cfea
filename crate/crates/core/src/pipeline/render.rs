use std::fmt::Write;

use crate::metrics::RadiusMetrics;
use crate::report::{BenchRow, ResultsFile};

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn stage_table(out: &mut String, title: &str, stage: &[RadiusMetrics]) {
    let _ = writeln!(out, "{title}");
    let ks: Vec<usize> = stage.first().map(|m| m.recall_at.iter().map(|r| r.k).collect()).unwrap_or_default();
    let mut head = format!("  {:>8} {:>6}", "radius", "n");
    for k in &ks {
        head.push_str(&format!(" {:>7}", format!("R@{k}")));
    }
    head.push_str(&format!(" {:>7}", "MRR"));
    let _ = writeln!(out, "{head}");
    for m in stage {
        let mut row = format!("  {:>7}m {:>6}", m.radius, m.evaluable_queries);
        for k in &ks {
            row.push_str(&format!(" {:>7}", pct(m.recall(*k))));
        }
        row.push_str(&format!(" {:>7}", pct(m.mrr)));
        let _ = writeln!(out, "{row}");
    }
}

/// Aligned text table of benchmark rows.
pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let mut out =
        format!("{:<12} {:>6} {:>8} {:>12} {:>7} {:>7}\n", "strategy", "n_topk", "queries", "rerank ms", "R@1", "MRR");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>12.3} {:>7} {:>7}",
            r.strategy.name(),
            r.n_topk,
            r.num_queries,
            r.mean_rerank_ms,
            pct(r.recall_at_1),
            pct(r.mrr)
        );
    }
    out
}

/// Human-readable summary of a results file.
pub fn render_results(results: &ResultsFile) -> String {
    let mut out = String::new();
    let h = &results.header;
    let _ = writeln!(out, "{} ({})", h.mode, h.format);
    for (k, v) in &h.config {
        let _ = writeln!(out, "  {k:<22} {v}");
    }
    if !results.bench.is_empty() {
        let _ = writeln!(out);
        out.push_str(&render_bench_table(&results.bench));
    }
    let Some(summary) = &results.summary else {
        if results.bench.is_empty() {
            let _ = writeln!(out, "\nno queries evaluated");
        }
        return out;
    };
    let m = &summary.metrics;
    let _ = writeln!(out, "\nqueries: {} ({} failed)", m.num_queries, m.failed_queries);
    stage_table(&mut out, "retrieval", &m.retrieved);
    if let Some(re) = &m.reranked {
        stage_table(&mut out, "re-ranked", re);
    }
    let s = &m.top1_shift;
    let _ = writeln!(
        out,
        "top-1 distance: {:.2} m -> {:.2} m ({} queries moved farther)",
        s.mean_before, s.mean_after, s.violations
    );
    let opt = |v: Option<f64>, unit: &str| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}{unit}"));
    let _ = writeln!(
        out,
        "pose: success {}%, mean RTE {}, mean RRE {} over {} registered",
        pct(m.success_rate),
        opt(m.mean_rte, " m"),
        opt(m.mean_rre, " deg"),
        m.registered_queries
    );
    let _ = writeln!(
        out,
        "timing: {:.3} ms mean re-rank per query, {:.1} ms total",
        summary.timing.mean_rerank_ms, summary.timing.total_ms
    );
    out
}
