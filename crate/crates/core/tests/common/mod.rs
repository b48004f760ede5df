#![allow(dead_code)]

use covforms_core::bundle::{random_well_conditioned, BundleData, Mat};
use covforms_core::TorusGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random orthogonal transports, then a random non-orthogonal gauge: the
/// result has non-identity SPD metrics and stays metric-compatible.
pub fn compatible_bundle(grid: &TorusGrid, rank: usize, seed: u64, strength: f64) -> BundleData {
    let base = BundleData::random_orthogonal(grid, rank, seed, strength).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let gauge: Vec<Mat> = (0..grid.vertex_count())
        .map(|_| random_well_conditioned(&mut rng, rank, 2.0))
        .collect();
    base.gauge_transform(grid, &gauge, 1e8).unwrap()
}

/// Independent random SPD metrics and random invertible transports.
pub fn incompatible_bundle(grid: &TorusGrid, rank: usize, seed: u64) -> BundleData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = (0..grid.vertex_count())
        .map(|_| {
            let a = random_well_conditioned(&mut rng, rank, 2.0);
            a.transpose() * a
        })
        .collect();
    let transport = (0..grid.edge_count())
        .map(|_| random_well_conditioned(&mut rng, rank, 1.5))
        .collect();
    BundleData::new(grid, rank, metric, transport).unwrap()
}

pub fn random_gauge(grid: &TorusGrid, rank: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.vertex_count())
        .map(|_| random_well_conditioned(&mut rng, rank, 2.0))
        .collect()
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}
