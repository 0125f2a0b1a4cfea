//! Deterministic synthetic worlds with known ground truth.
//!
//! Every place is a random layout of landmarks in its own local frame. Each
//! landmark has a class (which drives the global descriptor) and a unit
//! embedding (which is its local feature, so feature matches are correct
//! exactly when they hit the same landmark). A fraction of places are
//! aliased clones: they copy a distant place's layout, classes and
//! embeddings, with a random 10% of landmarks displaced by 0.5–1.0 m. Their
//! descriptors are therefore nearly identical to the source's while the
//! geometry disagrees in a few places.
//!
//! Queries revisit database places under a pose offset, see the landmarks
//! within the crop radius of the offset pose, in shuffled order, and have a
//! fixed fraction of their features replaced by random vectors.
//!
//! All values are rounded through `f32`, so worlds survive the archive
//! format unchanged.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Point3, RigidTransform};
use crate::scalar::Real;
use crate::scan::{Features, ScanRecord};
use crate::storage::{self, Dataset, StorageError};

/// Revisit radius used for the truth map.
pub const TRUTH_RADIUS: f64 = 5.0;
/// Fraction of a clone's landmarks that are displaced.
pub const ALIAS_PERTURBED_FRACTION: f64 = 0.1;
pub const ALIAS_DISPLACEMENT: (f64, f64) = (0.5, 1.0);
/// Number of landmark classes in the descriptor histogram.
pub const LANDMARK_CLASSES: usize = 32;
const LANDMARK_HEIGHT: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    pub num_places: usize,
    pub num_queries: usize,
    /// Grid spacing between neighbouring places, metres.
    pub place_spacing: f64,
    /// Expected number of points in a database scan.
    pub points_per_scan: usize,
    pub crop_radius: f64,
    pub alias_fraction: f64,
    pub feature_noise_sigma: f64,
    pub outlier_rate: f64,
    /// Query offset: translation sigma in metres, yaw sigma in degrees.
    pub pose_noise: (f64, f64),
    pub descriptor_dim: usize,
    pub feature_dim: usize,
    /// Per-axis sensor noise on point positions, metres.
    pub point_noise_sigma: f64,
    /// Expected norm of the noise added to unit global descriptors.
    pub descriptor_noise: f64,
    /// Places of one type draw landmark classes from the same distribution,
    /// which makes their descriptors correlated.
    pub num_place_types: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            num_places: 200,
            num_queries: 50,
            place_spacing: 10.0,
            points_per_scan: 256,
            crop_radius: 25.0,
            alias_fraction: 0.3,
            feature_noise_sigma: 0.02,
            outlier_rate: 0.3,
            pose_noise: (0.5, 5.0),
            descriptor_dim: 64,
            feature_dim: 16,
            point_noise_sigma: 0.02,
            descriptor_noise: 0.05,
            num_place_types: 4,
        }
    }
}

impl WorldConfig {
    /// Zero noise, no aliasing, no outliers.
    pub fn noiseless() -> Self {
        Self {
            alias_fraction: 0.0,
            feature_noise_sigma: 0.0,
            outlier_rate: 0.0,
            pose_noise: (0.0, 0.0),
            point_noise_sigma: 0.0,
            descriptor_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.num_places == 0 {
            return bad("num_places must be at least 1");
        }
        if self.num_queries > self.num_places {
            return bad("num_queries cannot exceed num_places");
        }
        if self.points_per_scan == 0 || self.descriptor_dim == 0 || self.feature_dim == 0 {
            return bad("points_per_scan, descriptor_dim and feature_dim must be positive");
        }
        if !(self.place_spacing > 0.0) || !(self.crop_radius > 0.0) {
            return bad("place_spacing and crop_radius must be positive");
        }
        for (name, v) in [("alias_fraction", self.alias_fraction), ("outlier_rate", self.outlier_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        let sigmas = [
            self.feature_noise_sigma,
            self.pose_noise.0,
            self.pose_noise.1,
            self.point_noise_sigma,
            self.descriptor_noise,
        ];
        if !sigmas.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return bad("noise levels must be finite and non-negative");
        }
        if self.num_place_types == 0 {
            return bad("num_place_types must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World<T> {
    pub database: Vec<ScanRecord<T>>,
    pub queries: Vec<ScanRecord<T>>,
    /// Query id → database ids within 5 m.
    pub truth: BTreeMap<String, Vec<String>>,
    /// Clone id → the id of the place it copies.
    pub aliases: BTreeMap<String, String>,
}

impl<T: Real> World<T> {
    pub fn into_dataset(self) -> Dataset<T> {
        Dataset { database: self.database, queries: self.queries }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    positions: Vec<[f64; 3]>,
    classes: Vec<usize>,
    /// Row-major, `feature_dim` per landmark.
    embeddings: Vec<f64>,
}

struct Shared {
    projection: Vec<f64>,
    class_probs: Vec<Vec<f64>>,
}

fn q32(v: f64) -> f64 {
    v as f32 as f64
}

fn to_t<T: Real>(v: f64) -> T {
    T::lit(q32(v))
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn generation_radius(cfg: &WorldConfig) -> f64 {
    cfg.crop_radius + (4.0 * cfg.pose_noise.0).max(2.0)
}

fn random_layout(cfg: &WorldConfig, probs: &[f64], rng: &mut ChaCha8Rng) -> Layout {
    let r_gen = generation_radius(cfg);
    let count = (cfg.points_per_scan as f64 * (r_gen / cfg.crop_radius).powi(2)).round() as usize;
    let mut layout = Layout { positions: Vec::with_capacity(count), classes: Vec::new(), embeddings: Vec::new() };
    for _ in 0..count {
        let r = r_gen * rng.random::<f64>().sqrt();
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let z = rng.random::<f64>() * LANDMARK_HEIGHT;
        layout.positions.push([r * a.cos(), r * a.sin(), z]);
        layout.classes.push(categorical(rng, probs));
        layout.embeddings.extend(unit_vector(rng, cfg.feature_dim));
    }
    layout
}

fn perturbed_copy(source: &Layout, rng: &mut ChaCha8Rng) -> Layout {
    let mut layout = source.clone();
    let n = layout.positions.len();
    let count = (ALIAS_PERTURBED_FRACTION * n as f64).round() as usize;
    for i in index::sample(rng, n, count.min(n)) {
        let dir = unit_vector(rng, 3);
        let mag = rng.random_range(ALIAS_DISPLACEMENT.0..=ALIAS_DISPLACEMENT.1);
        for (p, d) in layout.positions[i].iter_mut().zip(&dir) {
            *p += mag * d;
        }
    }
    layout
}

fn descriptor(cfg: &WorldConfig, shared: &Shared, classes: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut hist = vec![0.0; LANDMARK_CLASSES];
    for &c in classes {
        hist[c] += 1.0;
    }
    let total = classes.len().max(1) as f64;
    let d = cfg.descriptor_dim;
    let mut g: Vec<f64> = (0..d)
        .map(|i| (0..LANDMARK_CLASSES).map(|c| shared.projection[i * LANDMARK_CLASSES + c] * hist[c] / total).sum())
        .collect();
    normalize(&mut g);
    let sigma = cfg.descriptor_noise / (d as f64).sqrt();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for v in g.iter_mut() {
            *v += noise.sample(rng);
        }
        normalize(&mut g);
    }
    g
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn feature_noise(cfg: &WorldConfig) -> Option<Normal<f64>> {
    (cfg.feature_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.feature_noise_sigma).expect("finite sigma"))
}

fn point_noise(cfg: &WorldConfig) -> Option<Normal<f64>> {
    (cfg.point_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.point_noise_sigma).expect("finite sigma"))
}

/// Quantized pose with yaw `yaw` and translation `t`.
fn planar_pose<T: Real>(yaw: f64, t: [f64; 3]) -> RigidTransform<T> {
    let (s, c) = yaw.sin_cos();
    let m = [
        [q32(c), q32(-s), 0.0, q32(t[0])],
        [q32(s), q32(c), 0.0, q32(t[1])],
        [0.0, 0.0, 1.0, q32(t[2])],
        [0.0, 0.0, 0.0, 1.0],
    ];
    let m = m.map(|row| row.map(T::lit));
    RigidTransform::from_homogeneous(&m, storage::STORED_POSE_TOLERANCE).expect("planar rotation is orthonormal")
}

/// Builds a scan from the landmarks `order` of `layout`, expressed in a
/// frame whose pose in the layout frame is `(yaw, t)`.
#[allow(clippy::too_many_arguments)]
fn observe<T: Real>(
    cfg: &WorldConfig,
    shared: &Shared,
    layout: &Layout,
    id: String,
    sensor: (f64, [f64; 2]),
    world_pose: (f64, [f64; 3]),
    outliers: bool,
    rng: &mut ChaCha8Rng,
) -> ScanRecord<T> {
    let (yaw, t) = sensor;
    let (s, c) = yaw.sin_cos();
    let mut visible: Vec<(usize, [f64; 3])> = layout
        .positions
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (dx, dy) = (p[0] - t[0], p[1] - t[1]);
            let local = [c * dx + s * dy, -s * dx + c * dy, p[2]];
            (local[0].hypot(local[1]) <= cfg.crop_radius).then_some((i, local))
        })
        .collect();
    if outliers {
        // query scans arrive in arbitrary order
        let n = visible.len();
        let perm = index::sample(rng, n, n).into_vec();
        visible = perm.into_iter().map(|i| visible[i]).collect();
    }
    let n = visible.len();
    let fd = cfg.feature_dim;
    let pn = point_noise(cfg);
    let fnz = feature_noise(cfg);
    let mut cloud = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n * fd);
    for (li, p) in &visible {
        let p = p.map(|v| v + pn.map_or(0.0, |d| d.sample(rng)));
        cloud.push(Point3::new(to_t(p[0]), to_t(p[1]), to_t(p[2])));
        feats.extend_from_slice(&layout.embeddings[li * fd..(li + 1) * fd]);
    }
    if outliers && cfg.outlier_rate > 0.0 {
        let count = (cfg.outlier_rate * n as f64).round() as usize;
        for i in index::sample(rng, n, count.min(n)) {
            let v = unit_vector(rng, fd);
            feats[i * fd..(i + 1) * fd].copy_from_slice(&v);
        }
    }
    if let Some(d) = fnz {
        feats.iter_mut().for_each(|f| *f += d.sample(rng));
    }
    let classes: Vec<usize> = visible.iter().map(|(li, _)| layout.classes[*li]).collect();
    let g = descriptor(cfg, shared, &classes, rng);
    let (wyaw, wt) = world_pose;
    ScanRecord::new(
        id,
        cloud,
        Features::new(fd, feats.into_iter().map(to_t).collect()).expect("n × d' features"),
        g.into_iter().map(to_t).collect(),
        planar_pose(wyaw, wt),
        Point3::new(to_t(wt[0]), to_t(wt[1]), to_t(wt[2])),
    )
    .expect("generated scans are valid")
}

pub fn place_id(i: usize) -> String {
    format!("place{i:04}")
}

pub fn query_id(i: usize) -> String {
    format!("query{i:04}")
}

/// Generates a world. The same config always yields the same world, bit for bit.
pub fn generate_world<T: Real>(cfg: &WorldConfig) -> Result<World<T>, SynthError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_places;

    let projection: Vec<f64> =
        (0..cfg.descriptor_dim * LANDMARK_CLASSES).map(|_| master.sample(StandardNormal)).collect();
    let class_probs: Vec<Vec<f64>> = (0..cfg.num_place_types)
        .map(|_| {
            let w: Vec<f64> = (0..LANDMARK_CLASSES).map(|_| master.sample::<f64, _>(StandardNormal).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let shared = Shared { projection, class_probs };

    let cols = (n as f64).sqrt().ceil() as usize;
    let geo: Vec<[f64; 3]> =
        (0..n).map(|i| [(i % cols) as f64 * cfg.place_spacing, (i / cols) as f64 * cfg.place_spacing, 0.0]).collect();
    let yaws: Vec<f64> = (0..n).map(|_| master.random::<f64>() * std::f64::consts::TAU).collect();
    let types: Vec<usize> = (0..n).map(|_| master.random_range(0..cfg.num_place_types)).collect();
    let seeds: Vec<u64> = (0..n).map(|_| master.random()).collect();

    // clones copy a distinct, distant, non-clone source where one exists
    let num_clones = (cfg.alias_fraction * n as f64).round() as usize;
    let clone_ids = index::sample(&mut master, n, num_clones.min(n)).into_vec();
    let mut is_clone = vec![false; n];
    clone_ids.iter().for_each(|&c| is_clone[c] = true);
    let far = 2.0 * cfg.crop_radius;
    let mut used = vec![false; n];
    let mut source_of = BTreeMap::new();
    for &c in &clone_ids {
        let dist = |s: usize| ((geo[s][0] - geo[c][0]).powi(2) + (geo[s][1] - geo[c][1]).powi(2)).sqrt();
        let pick = |pred: &dyn Fn(usize) -> bool, rng: &mut ChaCha8Rng| {
            let pool: Vec<usize> = (0..n).filter(|&s| pred(s)).collect();
            (!pool.is_empty()).then(|| pool[rng.random_range(0..pool.len())])
        };
        let src = pick(&|s| !is_clone[s] && !used[s] && dist(s) >= far, &mut master)
            .or_else(|| pick(&|s| !is_clone[s] && dist(s) >= far, &mut master))
            .or_else(|| pick(&|s| !is_clone[s], &mut master));
        if let Some(s) = src {
            used[s] = true;
            source_of.insert(c, s);
        }
    }

    let query_places = index::sample(&mut master, n, cfg.num_queries).into_vec();
    let query_seeds: Vec<u64> = (0..cfg.num_queries).map(|_| master.random()).collect();

    let mut layouts: Vec<Layout> = (0..n)
        .into_par_iter()
        .map(|i| random_layout(cfg, &shared.class_probs[types[i]], &mut ChaCha8Rng::seed_from_u64(seeds[i])))
        .collect();
    for (&c, &s) in &source_of {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[c] ^ 0xA11A5);
        layouts[c] = perturbed_copy(&layouts[s], &mut rng);
    }

    let database: Vec<ScanRecord<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds[i].rotate_left(17));
            observe(cfg, &shared, &layouts[i], place_id(i), (0.0, [0.0, 0.0]), (yaws[i], geo[i]), false, &mut rng)
        })
        .collect();

    let trans = (cfg.pose_noise.0 > 0.0).then(|| Normal::new(0.0, cfg.pose_noise.0).expect("finite sigma"));
    let rot = (cfg.pose_noise.1 > 0.0).then(|| Normal::new(0.0, cfg.pose_noise.1.to_radians()).expect("finite sigma"));
    let queries: Vec<ScanRecord<T>> = query_places
        .par_iter()
        .zip(&query_seeds)
        .enumerate()
        .map(|(qi, (&p, &seed))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dyaw = rot.map_or(0.0, |d| d.sample(&mut rng));
            let dt = [trans.map_or(0.0, |d| d.sample(&mut rng)), trans.map_or(0.0, |d| d.sample(&mut rng))];
            // world pose = place pose ∘ offset
            let (s, c) = yaws[p].sin_cos();
            let wt = [geo[p][0] + c * dt[0] - s * dt[1], geo[p][1] + s * dt[0] + c * dt[1], 0.0];
            observe(cfg, &shared, &layouts[p], query_id(qi), (dyaw, dt), (yaws[p] + dyaw, wt), true, &mut rng)
        })
        .collect();

    let truth = queries
        .iter()
        .map(|q| (q.id().to_string(), crate::metrics::ground_truth_positives(q, &database, TRUTH_RADIUS)))
        .collect();
    let aliases = source_of.iter().map(|(&c, &s)| (place_id(c), place_id(s))).collect();
    Ok(World { database, queries, truth, aliases })
}

/// Writes the world's scans and manifest under `out_dir`.
pub fn export_world<T: Real>(world: &World<T>, out_dir: &Path) -> Result<PathBuf, SynthError> {
    let dataset = Dataset { database: world.database.clone(), queries: world.queries.clone() };
    Ok(storage::export_dataset(&dataset, out_dir)?)
}
