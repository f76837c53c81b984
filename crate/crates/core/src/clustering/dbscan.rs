//! DBSCAN over Euclidean parameter points. Labels are assigned in
//! ascending index order of the first core point discovered, so the
//! partition is deterministic for a fixed input order. Noise is -1.

/// Standard DBSCAN; neighborhoods include the point itself.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let eps2 = eps * eps;
    let mut labels = vec![i32::MIN; n]; // unvisited
    let mut cluster = 0i32;

    for i in 0..n {
        if labels[i] != i32::MIN {
            continue;
        }
        let neighbors = region_query(points, i, eps2);
        if neighbors.len() < min_pts {
            labels[i] = -1;
            continue;
        }
        labels[i] = cluster;
        let mut frontier = neighbors;
        let mut cursor = 0;
        while cursor < frontier.len() {
            let j = frontier[cursor];
            cursor += 1;
            if labels[j] == -1 {
                labels[j] = cluster; // border point reached from a core
            }
            if labels[j] != i32::MIN {
                continue;
            }
            labels[j] = cluster;
            let more = region_query(points, j, eps2);
            if more.len() >= min_pts {
                frontier.extend(more);
            }
        }
        cluster += 1;
    }
    labels
}

fn region_query(points: &[Vec<f64>], i: usize, eps2: f64) -> Vec<usize> {
    let p = &points[i];
    points
        .iter()
        .enumerate()
        .filter(|(_, q)| dist2(p, q) <= eps2)
        .map(|(j, _)| j)
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median nearest-neighbor distance, the basis for the default eps.
pub fn median_nearest_neighbor_distance(points: &[Vec<f64>]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| dist2(p, q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(nn[nn.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bands_get_two_labels() {
        let mut pts = Vec::new();
        for i in 0..20 {
            pts.push(vec![-1.0 - 0.01 * i as f64, 0.0]);
        }
        for i in 0..20 {
            pts.push(vec![1.0 + 0.01 * i as f64, 0.0]);
        }
        let labels = dbscan(&pts, 0.05, 3);
        let distinct: std::collections::BTreeSet<i32> =
            labels.iter().copied().filter(|&l| l >= 0).collect();
        assert_eq!(distinct.len(), 2);
        assert!(labels.iter().all(|&l| l >= 0));
        assert_ne!(labels[0], labels[20]);
    }

    #[test]
    fn dense_blob_is_one_cluster() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![0.001 * i as f64]).collect();
        let labels = dbscan(&pts, 0.5, 5);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts: Vec<Vec<f64>> = (0..10).map(|i| vec![0.01 * i as f64]).collect();
        pts.push(vec![1000.0]);
        let labels = dbscan(&pts, 0.5, 3);
        assert_eq!(labels[10], -1);
        assert!(labels[..10].iter().all(|&l| l == 0));
    }

    #[test]
    fn duplicating_points_keeps_original_partition() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![0.1 * i as f64, 0.0]);
        }
        for i in 0..8 {
            pts.push(vec![10.0 + 0.1 * i as f64, 0.0]);
        }
        let before = dbscan(&pts, 0.5, 3);
        let doubled: Vec<Vec<f64>> = pts.iter().chain(pts.iter()).cloned().collect();
        let after = dbscan(&doubled, 0.5, 3);
        // Same partition of the original indices, up to label names.
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(
                    before[i] == before[j],
                    after[i] == after[j],
                    "pair ({i},{j}) changed co-membership"
                );
            }
        }
    }
}
