//! `key = value` configuration files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::rerank::{RerankParams, Strategy};
use crate::synthgen::WorldConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// One `key = value` assignment and the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a config file into assignments. Blank lines and `#` comments are
/// skipped; a key may appear only once.
pub fn parse_assignments(text: &str) -> Result<Vec<Assignment>, ConfigError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Line { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() {
            return Err(ConfigError::Line { line, message: "empty key".into() });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Line { line, message: format!("duplicate key `{key}`") });
        }
        out.push(Assignment { line, key: key.to_string(), value: value.to_string() });
    }
    Ok(out)
}

fn parse<V: FromStr>(a: &Assignment) -> Result<V, ConfigError>
where
    V::Err: Display,
{
    a.value.parse().map_err(|e| ConfigError::Line { line: a.line, message: format!("bad value for `{}`: {e}", a.key) })
}

fn parse_list<V: FromStr>(a: &Assignment) -> Result<Vec<V>, ConfigError>
where
    V::Err: Display,
{
    a.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| ConfigError::Line { line: a.line, message: format!("bad list item for `{}`: {e}", a.key) })
        })
        .collect()
}

fn parse_strategy(a: &Assignment) -> Result<Strategy, ConfigError> {
    Strategy::parse(&a.value)
        .ok_or_else(|| ConfigError::Line { line: a.line, message: format!("unknown strategy `{}`", a.value) })
}

fn unknown(a: &Assignment) -> ConfigError {
    ConfigError::Line { line: a.line, message: format!("unknown key `{}`", a.key) }
}

pub fn read_config_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn parse_world_config(text: &str) -> Result<WorldConfig, ConfigError> {
    let mut c = WorldConfig::default();
    for a in parse_assignments(text)? {
        match a.key.as_str() {
            "seed" => c.seed = parse(&a)?,
            "num_places" => c.num_places = parse(&a)?,
            "num_queries" => c.num_queries = parse(&a)?,
            "place_spacing" => c.place_spacing = parse(&a)?,
            "points_per_scan" => c.points_per_scan = parse(&a)?,
            "crop_radius" => c.crop_radius = parse(&a)?,
            "alias_fraction" => c.alias_fraction = parse(&a)?,
            "feature_noise_sigma" => c.feature_noise_sigma = parse(&a)?,
            "outlier_rate" => c.outlier_rate = parse(&a)?,
            "pose_noise_trans" => c.pose_noise.0 = parse(&a)?,
            "pose_noise_rot_deg" => c.pose_noise.1 = parse(&a)?,
            "descriptor_dim" => c.descriptor_dim = parse(&a)?,
            "feature_dim" => c.feature_dim = parse(&a)?,
            "point_noise_sigma" => c.point_noise_sigma = parse(&a)?,
            "descriptor_noise" => c.descriptor_noise = parse(&a)?,
            "num_place_types" => c.num_place_types = parse(&a)?,
            _ => return Err(unknown(&a)),
        }
    }
    c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(format!("expected f32 or f64, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub rerank: RerankParams,
    /// Retrieval depth; never shorter than `n_topk`.
    pub list_length: usize,
    pub radii: Vec<f64>,
    pub k_values: Vec<usize>,
    pub out: PathBuf,
    pub seed: u64,
    /// 0 lets the runtime pick.
    pub threads: usize,
    pub precision: Precision,
    pub bench_n_topk: Vec<usize>,
    pub bench_strategies: Vec<Strategy>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            rerank: RerankParams::default(),
            list_length: 25,
            radii: vec![5.0, 20.0],
            k_values: vec![1, 5, 10, 20],
            out: PathBuf::from("results.jsonl"),
            seed: 0,
            threads: 0,
            precision: Precision::default(),
            bench_n_topk: vec![2, 20],
            bench_strategies: vec![Strategy::SpectralGv, Strategy::RansacRir],
        }
    }

    /// Parses a run config. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut c = Self::new(PathBuf::new());
        let mut manifest = None;
        for a in parse_assignments(text)? {
            let r = &mut c.rerank;
            match a.key.as_str() {
                "manifest" => manifest = Some(base_dir.join(&a.value)),
                "out" => c.out = base_dir.join(&a.value),
                "strategy" => r.strategy = parse_strategy(&a)?,
                "n_topk" => r.n_topk = parse(&a)?,
                "list_length" => c.list_length = parse(&a)?,
                "d_thr" => r.spectral.d_thr = parse(&a)?,
                "n_max" => r.spectral.matching.n_max = parse(&a)?,
                "mutual" => r.spectral.matching.mutual = parse(&a)?,
                "solver_tol" => r.spectral.solver.tol = parse(&a)?,
                "solver_max_iters" => r.spectral.solver.max_iters = parse(&a)?,
                "ransac_tau" => r.ransac.inlier_threshold = parse(&a)?,
                "ransac_max_iterations" => r.ransac.max_iterations = parse(&a)?,
                "ransac_confidence" => r.ransac.confidence = parse(&a)?,
                "rir_tau" => r.rir_tau = parse(&a)?,
                "alpha" => r.alpha = parse(&a)?,
                "n_qe" => r.n_qe = Some(parse(&a)?),
                "radii" => c.radii = parse_list(&a)?,
                "k_values" => c.k_values = parse_list(&a)?,
                "seed" => c.seed = parse(&a)?,
                "threads" => c.threads = parse(&a)?,
                "precision" => c.precision = parse(&a)?,
                "bench_n_topk" => c.bench_n_topk = parse_list(&a)?,
                "bench_strategies" => {
                    c.bench_strategies = a
                        .value
                        .split(',')
                        .map(|s| Assignment { value: s.trim().to_string(), ..a.clone() })
                        .map(|s| parse_strategy(&s))
                        .collect::<Result<_, _>>()?
                }
                _ => return Err(unknown(&a)),
            }
        }
        c.manifest = manifest.ok_or(ConfigError::Missing("manifest"))?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = read_config_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks parameter ranges and that the manifest exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.rerank.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.rerank.spectral.d_thr > 0.0) {
            return invalid("d_thr must be positive".into());
        }
        if self.rerank.spectral.matching.n_max == 0 {
            return invalid("n_max must be at least 1".into());
        }
        if !(self.rerank.spectral.solver.tol > 0.0) || self.rerank.spectral.solver.max_iters == 0 {
            return invalid("solver_tol must be positive and solver_max_iters at least 1".into());
        }
        let ransac = &self.rerank.ransac;
        if !(ransac.inlier_threshold > 0.0) || ransac.max_iterations == 0 || !(0.0..1.0).contains(&ransac.confidence) {
            return invalid("ransac_tau > 0, ransac_max_iterations >= 1, ransac_confidence in [0, 1) required".into());
        }
        if self.radii.is_empty() || !self.radii.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return invalid("radii must be a non-empty list of positive numbers".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return invalid("k_values must be a non-empty list of positive integers".into());
        }
        if self.bench_n_topk.is_empty() || self.bench_n_topk.contains(&0) {
            return invalid("bench_n_topk must be a non-empty list of positive integers".into());
        }
        if !self.manifest.is_file() {
            return invalid(format!("manifest {} does not exist", self.manifest.display()));
        }
        Ok(())
    }

    pub fn effective_list_length(&self, n_topk: usize) -> usize {
        self.list_length.max(n_topk)
    }

    /// Resolved settings as recorded in a results header.
    pub fn describe(&self) -> BTreeMap<String, String> {
        let r = &self.rerank;
        let join = |v: Vec<String>| v.join(",");
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("manifest", self.manifest.display().to_string());
        put("strategy", r.strategy.to_string());
        put("n_topk", r.n_topk.to_string());
        put("list_length", self.effective_list_length(r.n_topk).to_string());
        put("d_thr", r.spectral.d_thr.to_string());
        put("n_max", r.spectral.matching.n_max.to_string());
        put("mutual", r.spectral.matching.mutual.to_string());
        put("solver_tol", r.spectral.solver.tol.to_string());
        put("solver_max_iters", r.spectral.solver.max_iters.to_string());
        put("ransac_tau", r.ransac.inlier_threshold.to_string());
        put("ransac_max_iterations", r.ransac.max_iterations.to_string());
        put("ransac_confidence", r.ransac.confidence.to_string());
        put("rir_tau", r.rir_tau.to_string());
        put("alpha", r.alpha.to_string());
        put("n_qe", r.effective_n_qe().to_string());
        put("radii", join(self.radii.iter().map(f64::to_string).collect()));
        put("k_values", join(self.k_values.iter().map(usize::to_string).collect()));
        put("seed", self.seed.to_string());
        put("threads", self.threads.to_string());
        put("precision", format!("{:?}", self.precision).to_lowercase());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_skip_comments() {
        let a = parse_assignments("# header\n\nseed = 3  # trailing\nout=x\n").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].line, a[0].key.as_str(), a[0].value.as_str()), (3, "seed", "3"));
        assert_eq!(a[1].value, "x");
    }

    #[test]
    fn malformed_lines_report_their_number() {
        assert_eq!(
            parse_assignments("seed = 1\nnonsense\n").unwrap_err(),
            ConfigError::Line { line: 2, message: "expected `key = value`, got `nonsense`".into() }
        );
        assert!(matches!(parse_assignments("a = 1\na = 2\n"), Err(ConfigError::Line { line: 2, .. })));
        assert!(matches!(parse_world_config("seed = 1\ncolour = red\n"), Err(ConfigError::Line { line: 2, .. })));
        assert!(matches!(parse_world_config("num_places = many\n"), Err(ConfigError::Line { line: 1, .. })));
        assert!(matches!(parse_world_config("alias_fraction = 2\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn world_config_overrides() {
        let c = parse_world_config("seed = 11\npose_noise_rot_deg = 2.5\n").unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.pose_noise, (0.5, 2.5));
        assert_eq!(parse_world_config("").unwrap(), WorldConfig::default());
    }

    #[test]
    fn run_config_parsing() {
        let c = RunConfig::parse(
            "manifest = data/manifest.txt\nstrategy = rir\nn_topk = 5\nradii = 5, 20\nbench_strategies = sgv, none\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.manifest, Path::new("/base/data/manifest.txt"));
        assert_eq!(c.rerank.strategy, Strategy::RansacRir);
        assert_eq!(c.rerank.n_topk, 5);
        assert_eq!(c.radii, [5.0, 20.0]);
        assert_eq!(c.bench_strategies, [Strategy::SpectralGv, Strategy::None]);
        assert_eq!(RunConfig::parse("n_topk = 3\n", Path::new(".")).unwrap_err(), ConfigError::Missing("manifest"));
        assert!(matches!(
            RunConfig::parse("manifest = m\nstrategy = magic\n", Path::new(".")),
            Err(ConfigError::Line { line: 2, .. })
        ));
    }

    #[test]
    fn validation_requires_existing_manifest() {
        let c = RunConfig::new("/definitely/not/here.txt");
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(m)) if m.contains("does not exist")));
    }
}
