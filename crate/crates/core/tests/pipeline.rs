//! Storage, synthetic worlds and the end-to-end pipeline.

mod common;

use std::fs;
use std::path::Path;

use spectralgv::geometry::{Point3, RigidTransform};
use spectralgv::matching::{match_features, MatchParams};
use spectralgv::metrics::{ground_truth_positives, MetricReport, Stage};
use spectralgv::pipeline::{cmd_run, cmd_synth, run_dataset, RunConfig};
use spectralgv::ranking::{OrderingKind, RankedEntry, RankedList};
use spectralgv::rerank::{rerank_spectral, RerankParams, Strategy};
use spectralgv::retrieval::DescriptorIndex;
use spectralgv::scan::ScanRecord;
use spectralgv::storage::{export_dataset, load_dataset, read_results, write_results, Dataset, StorageError};
use spectralgv::synthgen::{export_world, generate_world, WorldConfig, TRUTH_RADIUS};

fn small_world() -> WorldConfig {
    WorldConfig { num_places: 40, num_queries: 10, ..WorldConfig::default() }
}

fn scan(id: &str, n: usize, fdim: usize, ddim: usize, at: f64) -> ScanRecord<f64> {
    let mut rng = common::rng(id.len() as u64);
    let s = common::random_scan(&mut rng, id, n, fdim);
    ScanRecord::new(
        id,
        s.cloud().to_vec(),
        s.local_features().clone(),
        vec![at; ddim],
        RigidTransform::from_translation([at, 0.0, 0.0]),
        Point3::new(at, 0.0, 0.0),
    )
    .unwrap()
}

#[test]
fn dataset_round_trips_through_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset {
        database: vec![scan("db_b", 5, 3, 4, 0.0), scan("db_a", 7, 3, 4, 1.0)],
        queries: vec![scan("q", 6, 3, 4, 2.0)],
    };
    let manifest = export_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset::<f64>(&manifest).unwrap();
    assert_eq!(back.database.iter().map(|s| s.id()).collect::<Vec<_>>(), ["db_b", "db_a"]);
    assert_eq!(back.queries.len(), 1);
    // archives store single precision
    let narrow = |v: f64| v as f32 as f64;
    for (a, b) in ds.database.iter().chain(&ds.queries).zip(back.database.iter().chain(&back.queries)) {
        assert_eq!(a.id(), b.id());
        for (p, q) in a.cloud().iter().zip(b.cloud()) {
            assert_eq!([narrow(p.x), narrow(p.y), narrow(p.z)], [q.x, q.y, q.z]);
        }
        let fa: Vec<f64> = a.local_features().as_slice().iter().copied().map(narrow).collect();
        assert_eq!(fa, b.local_features().as_slice());
        assert_eq!(a.global_descriptor(), b.global_descriptor());
    }
}

fn write_manifest(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("manifest.txt");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn dataset_loading_rejects_bad_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset { database: vec![scan("a", 4, 3, 4, 0.0), scan("wide", 4, 5, 4, 0.0)], queries: vec![] };
    export_dataset(&ds, dir.path()).unwrap();

    let dup = write_manifest(dir.path(), "db a scans/a.sgv\ndb a scans/a.sgv\n");
    assert!(matches!(load_dataset::<f64>(&dup), Err(StorageError::DuplicateId(_))));

    let dims = write_manifest(dir.path(), "db a scans/a.sgv\nquery wide scans/wide.sgv\n");
    assert!(matches!(load_dataset::<f64>(&dims), Err(StorageError::InconsistentDims { .. })));

    let missing = write_manifest(dir.path(), "db a scans/a.sgv\ndb gone scans/gone.sgv\n");
    assert!(matches!(load_dataset::<f64>(&missing), Err(StorageError::MissingFile(_))));
}

#[test]
fn results_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world::<f64>(&WorldConfig { num_queries: 1, ..small_world() }).unwrap();
    let ds = world.into_dataset();
    let cfg = RunConfig::new("unused");

    let one = run_dataset(&ds, &cfg).unwrap();
    assert_eq!(one.queries.len(), 1);
    assert!(one.summary.is_some());
    let path = dir.path().join("one.jsonl");
    write_results(&path, &one).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);
    assert_eq!(read_results(&path).unwrap(), one);

    let empty = run_dataset(&Dataset { database: ds.database, queries: vec![] }, &cfg).unwrap();
    write_results(&path, &empty).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
    assert_eq!(read_results(&path).unwrap(), empty);
}

#[test]
fn noiseless_world_is_solved_exactly() {
    let cfg = WorldConfig { num_places: 40, num_queries: 10, ..WorldConfig::noiseless() };
    let ds = generate_world::<f64>(&cfg).unwrap().into_dataset();
    let results = run_dataset(&ds, &RunConfig::new("unused")).unwrap();
    let m = results.summary.unwrap().metrics;
    let r = MetricReport::at_radius(m.final_stage(), TRUTH_RADIUS).unwrap();
    assert_eq!(r.recall(1), Some(100.0));
    assert_eq!(m.success_rate, Some(100.0));
    assert!(m.mean_rte.unwrap() < 1e-6 && m.mean_rre.unwrap() < 1e-4, "{:?} {:?}", m.mean_rte, m.mean_rre);
}

#[test]
fn strategy_none_reports_only_retrieval_metrics() {
    let ds = generate_world::<f64>(&small_world()).unwrap().into_dataset();
    let mut cfg = RunConfig::new("unused");
    cfg.rerank.strategy = Strategy::None;
    let results = run_dataset(&ds, &cfg).unwrap();
    assert!(results.summary.unwrap().metrics.reranked.is_none());
    assert!(results.queries.iter().all(|q| q.reranked == q.retrieved));
}

#[test]
fn summary_is_recomputable_from_query_records() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cmd_synth(&small_world(), dir.path()).unwrap();
    let mut cfg = RunConfig::new(manifest);
    cfg.out = dir.path().join("results.jsonl");
    cmd_run(&cfg).unwrap();
    let back = read_results(&cfg.out).unwrap();
    let recomputed = MetricReport::compute(&back.queries, &cfg.radii, &cfg.k_values, true).unwrap();
    assert_eq!(back.summary.unwrap().metrics, recomputed);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().display().to_string(), fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    fs::read_dir(dir)
        .unwrap()
        .flat_map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p)
            } else {
                vec![p]
            }
        })
        .collect()
}

#[test]
fn synthesis_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_synth(&small_world(), a.path()).unwrap();
    cmd_synth(&small_world(), b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

#[test]
fn export_into_unwritable_location_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let world = generate_world::<f64>(&small_world()).unwrap();
    assert!(export_world(&world, &blocker.join("sub")).is_err());
}

#[test]
fn recorded_truth_matches_geometric_positives() {
    let world = generate_world::<f64>(&small_world()).unwrap();
    for q in &world.queries {
        assert_eq!(world.truth[q.id()], ground_truth_positives(q, &world.database, TRUTH_RADIUS));
    }
}

#[test]
fn aliased_places_are_separated_only_by_geometry() {
    let cfg = WorldConfig {
        alias_fraction: 0.5,
        feature_noise_sigma: 0.0,
        num_places: 60,
        num_queries: 30,
        ..WorldConfig::default()
    };
    let world = generate_world::<f64>(&cfg).unwrap();
    let index = DescriptorIndex::build(&world.database).unwrap();
    let mut checked = 0;
    for q in &world.queries {
        let truth = &world.truth[q.id()][0];
        // clones map to their source; a source may have several clones
        let decoy = match world.aliases.get(truth) {
            Some(source) => source,
            None => match world.aliases.iter().find(|(_, s)| *s == truth) {
                Some((clone, _)) => clone,
                None => continue,
            },
        };
        checked += 1;
        let d = |id: &str| {
            let g = index.descriptor_of(id).unwrap();
            g.iter().zip(q.global_descriptor()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        // the descriptor barely tells the two apart
        assert!((d(truth) - d(decoy)).abs() < 0.5 * d(truth).max(d(decoy)), "{} vs {}", d(truth), d(decoy));

        let lr = RankedList::new(
            vec![
                RankedEntry { candidate_id: decoy.clone(), score: 0.0 },
                RankedEntry { candidate_id: truth.clone(), score: 0.0 },
            ],
            OrderingKind::AscendingDistance,
        )
        .unwrap();
        let p = RerankParams { n_topk: 2, ..RerankParams::default() };
        let out = rerank_spectral(q, &world.database, &lr, &p).unwrap();
        assert_eq!(&out.entries()[0].candidate_id, truth);
        assert!(out.entries()[0].score > out.entries()[1].score);
    }
    assert!(checked >= 5, "only {checked} aliased queries");
}

/// Fraction of putative matches consistent with the true relative pose.
fn inlier_rate(world: &spectralgv::synthgen::World<f64>) -> f64 {
    let (mut inliers, mut total) = (0usize, 0usize);
    for q in &world.queries {
        let truth = &world.truth[q.id()][0];
        let place = world.database.iter().find(|s| s.id() == truth).unwrap();
        let gt = q.relative_pose_to(place);
        let corrs = match_features(q, place, MatchParams::default()).unwrap();
        total += corrs.len();
        inliers += corrs.pairs().iter().filter(|c| (gt.apply(c.query_point) - c.candidate_point).norm() < 1.0).count();
    }
    inliers as f64 / total as f64
}

#[test]
fn outlier_rate_controls_the_inlier_rate() {
    let rates = [0.0, 0.2, 0.4, 0.6, 0.8];
    let measured: Vec<f64> = rates
        .iter()
        .map(|&outlier_rate| inlier_rate(&generate_world(&WorldConfig { outlier_rate, ..small_world() }).unwrap()))
        .collect();
    // with distinct values, Spearman's rho is -1 exactly when the sequence strictly decreases
    assert!(measured.windows(2).all(|w| w[1] < w[0]), "{measured:?}");
}

#[test]
fn f32_and_f64_pipelines_agree() {
    let w64 = generate_world::<f64>(&small_world()).unwrap().into_dataset();
    let w32 = generate_world::<f32>(&small_world()).unwrap().into_dataset();
    let cfg = RunConfig::new("unused");
    let a = run_dataset(&w64, &cfg).unwrap();
    let b = run_dataset(&w32, &cfg).unwrap();
    for (x, y) in a.queries.iter().zip(&b.queries) {
        assert_eq!(x.list(Stage::Retrieved), y.list(Stage::Retrieved));
        assert_eq!(x.list(Stage::Reranked)[0], y.list(Stage::Reranked)[0]);
    }
}
