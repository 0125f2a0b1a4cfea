#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectralgv::geometry::{Point3, RigidTransform};
use spectralgv::matching::CorrespondenceSet;
use spectralgv::scan::{Features, ScanRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, extent: f64) -> Point3<f64> {
    Point3::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent), rng.random_range(-extent..extent))
}

pub fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform<f64> {
    let axis = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let t = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
    if axis.iter().map(|a| a * a).sum::<f64>() < 1e-6 {
        return RigidTransform::from_translation(t);
    }
    RigidTransform::from_axis_angle(axis, angle, t)
}

/// `n` correspondences, a fraction of them consistent under one rigid motion
/// and the rest random.
pub fn random_correspondences(rng: &mut ChaCha8Rng, n: usize) -> CorrespondenceSet<f64> {
    let t = random_transform(rng);
    let inlier_fraction: f64 = rng.random_range(0.0..1.0);
    let pairs: Vec<_> = (0..n)
        .map(|_| {
            let x = random_point(rng, 5.0);
            let y = if rng.random::<f64>() < inlier_fraction {
                let noise = random_point(rng, 0.05);
                t.apply(x) + noise
            } else {
                random_point(rng, 5.0)
            };
            (x, y)
        })
        .collect();
    CorrespondenceSet::from_point_pairs(&pairs)
}

/// Scan whose features are unique random vectors.
pub fn random_scan(rng: &mut ChaCha8Rng, id: &str, n: usize, dim: usize) -> ScanRecord<f64> {
    let cloud = (0..n).map(|_| random_point(rng, 10.0)).collect();
    let feats = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScanRecord::new(
        id,
        cloud,
        Features::new(dim, feats).unwrap(),
        vec![0.0; 4],
        RigidTransform::identity(),
        Point3::origin(),
    )
    .unwrap()
}
