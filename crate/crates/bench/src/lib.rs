//! Shared generators for the criterion benchmarks.

use grassgp::manifold::{exp_map, GrassmannPoint};
use grassgp::synth::{random_point, random_tangent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A base point with a set of nearby points on the same manifold.
pub fn scattered_points(
    n: usize,
    p: usize,
    count: usize,
    scale: f64,
    seed: u64,
) -> Vec<GrassmannPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_point(n, p, &mut rng);
    (0..count)
        .map(|_| exp_map(&base, &random_tangent(&base, scale, &mut rng)).unwrap())
        .collect()
}

pub fn point_pair(n: usize, p: usize, scale: f64, seed: u64) -> (GrassmannPoint, GrassmannPoint) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_point(n, p, &mut rng);
    let b = exp_map(&a, &random_tangent(&a, scale, &mut rng)).unwrap();
    (a, b)
}
