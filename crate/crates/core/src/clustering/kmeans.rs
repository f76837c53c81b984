//! Seeded k-means with k-means++ initialization. Ties in assignment,
//! seeding, and restart selection all resolve toward the lowest index so
//! a fixed seed gives one reproducible labelling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_LLOYD_ITERS: usize = 200;

/// Best-of-`restarts` k-means labelling of the rows.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    assert!(k >= 1, "k must be at least 1");
    assert!(
        k <= rows.len(),
        "k = {k} exceeds the number of rows {}",
        rows.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let (wcss, labels) = run_once(rows, k, &mut rng);
        let better = match &best {
            None => true,
            Some((best_wcss, _)) => wcss < *best_wcss,
        };
        if better {
            best = Some((wcss, labels));
        }
    }
    best.expect("at least one restart ran").1
}

fn run_once(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = rows.len();
    let dim = rows[0].len();
    let mut centers = plus_plus_init(rows, k, rng);
    let mut labels = vec![0usize; n];

    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let l = nearest_center(row, &centers);
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (row, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(row) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an emptied cluster at the point farthest from its
                // current center, unless the data has too few distinct rows.
                if let Some(far) = farthest_row(rows, &centers, &labels) {
                    centers[c] = rows[far].clone();
                    changed = true;
                }
                continue;
            }
            for (j, s) in sums[c].iter().enumerate() {
                centers[c][j] = s / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let wcss = rows
        .iter()
        .zip(&labels)
        .map(|(row, &l)| dist2(row, &centers[l]))
        .sum();
    (wcss, labels)
}

fn plus_plus_init(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let first = rng.random_range(0..n);
    let mut centers = vec![rows[first].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = 0;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
                pick = i;
            }
            pick
        } else {
            // All remaining rows coincide with a chosen center.
            0
        };
        centers.push(rows[next].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(dist2(r, centers.last().unwrap()));
        }
    }
    centers
}

fn nearest_center(row: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(row, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn farthest_row(rows: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, row) in rows.iter().enumerate() {
        let d = dist2(row, &centers[labels[i]]);
        if d > 0.0 && best.map_or(true, |(bd, _)| d > bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
