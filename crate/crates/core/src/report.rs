//! Records of a results file and their in-memory grouping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricReport, QueryOutcome};
use crate::rerank::Strategy;

pub const RESULTS_FORMAT: &str = "sgv-results/1";

/// Leading record: the run's resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    /// `run` or `bench`.
    pub mode: String,
    pub config: BTreeMap<String, String>,
}

impl RunHeader {
    pub fn new(mode: &str, config: BTreeMap<String, String>) -> Self {
        Self { format: RESULTS_FORMAT.to_string(), mode: mode.to_string(), config }
    }
}

/// Wall-clock figures, kept apart from the metrics so that metric output can
/// be compared across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_rerank_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metrics: MetricReport,
    pub timing: Timing,
}

/// One strategy × `n_topk` cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub n_topk: usize,
    pub num_queries: usize,
    pub mean_rerank_ms: f64,
    pub recall_at_1: Option<f64>,
    pub mrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ResultRecord {
    Header(RunHeader),
    Query(QueryOutcome),
    Bench(BenchRow),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub header: RunHeader,
    pub queries: Vec<QueryOutcome>,
    pub bench: Vec<BenchRow>,
    pub summary: Option<Summary>,
}

impl ResultsFile {
    /// Records in file order: header, queries, bench rows, summary.
    pub fn records(&self) -> Vec<ResultRecord> {
        let mut out = vec![ResultRecord::Header(self.header.clone())];
        out.extend(self.queries.iter().cloned().map(ResultRecord::Query));
        out.extend(self.bench.iter().cloned().map(ResultRecord::Bench));
        out.extend(self.summary.clone().map(ResultRecord::Summary));
        out
    }

    pub fn from_records(records: Vec<ResultRecord>) -> Result<Self, String> {
        let mut it = records.into_iter();
        let Some(ResultRecord::Header(header)) = it.next() else {
            return Err("first record must be the header".into());
        };
        let mut file = Self { header, queries: Vec::new(), bench: Vec::new(), summary: None };
        for rec in it {
            if file.summary.is_some() {
                return Err("records after the summary".into());
            }
            match rec {
                ResultRecord::Header(_) => return Err("second header record".into()),
                ResultRecord::Query(q) => file.queries.push(q),
                ResultRecord::Bench(b) => file.bench.push(b),
                ResultRecord::Summary(s) => file.summary = Some(s),
            }
        }
        Ok(file)
    }
}
