//! Solution clustering on the Grassmannian: projection-kernel similarity,
//! symmetric normalized Laplacian, spectral k-means, tangent-space
//! projection error, and the iterative cluster-count search. DBSCAN
//! sub-clustering of parameter points lives here too.

mod dbscan;
mod kmeans;

pub use dbscan::{dbscan, median_nearest_neighbor_distance};
pub use kmeans::kmeans;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{
    exp_map_raw, log_map_raw, projection_kernel, reconstruct_triplet, GrassmannPoint,
    ReducedSolution,
};
use crate::stats::{karcher_mean_with_options, KarcherConfig, KarcherOptions, KarcherResult};

/// Symmetric nonnegative similarity matrix with its vertex degrees.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl SimilarityGraph {
    /// Validates symmetry (1e-12) and nonnegativity, then symmetrizes
    /// exactly so downstream spectra are bitwise symmetric.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                actual: format!("{}x{}", weights.nrows(), weights.ncols()),
            });
        }
        let n = weights.nrows();
        for i in 0..n {
            for j in 0..i {
                if (weights[(i, j)] - weights[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "similarity matrix is asymmetric at ({i},{j})"
                    )));
                }
            }
            for j in 0..n {
                if weights[(i, j)] < 0.0 || !weights[(i, j)].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "similarity entry ({i},{j}) = {} is invalid",
                        weights[(i, j)]
                    )));
                }
            }
        }
        let mut w = weights;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (w[(i, j)] + w[(j, i)]);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let degrees = DVector::from_fn(n, |i, _| w.row(i).sum());
        Ok(Self {
            weights: w,
            degrees,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }
}

/// Pairwise projection-kernel similarity of the left singular bases.
/// Ranks may differ; the kernel is well defined for rectangular overlaps.
pub fn build_similarity(points: &[GrassmannPoint]) -> Result<SimilarityGraph> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no points to compare".into()));
    }
    for p in points {
        if p.ambient_dim() != points[0].ambient_dim() {
            return Err(Error::AmbientMismatch {
                left: points[0].ambient_dim(),
                right: p.ambient_dim(),
            });
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| projection_kernel(&points[i], &points[j]).expect("validated dims"))
                .collect()
        })
        .collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            w[(i, j)] = rows[i][j];
            w[(j, i)] = rows[i][j];
        }
    }
    SimilarityGraph::new(w)
}

/// Symmetric normalized Laplacian `I - D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian(graph: &SimilarityGraph) -> Result<DMatrix<f64>> {
    let n = graph.len();
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let d = graph.degrees()[i];
        if d <= 0.0 {
            return Err(Error::IsolatedVertex { index: i });
        }
        inv_sqrt[i] = 1.0 / d.sqrt();
    }
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let norm = inv_sqrt[i] * graph.weights()[(i, j)] * inv_sqrt[j];
            l[(i, j)] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    Ok(l)
}

/// Eigendecomposition of the normalized Laplacian, reusable across
/// candidate cluster counts. Eigenpairs are sorted ascending and each
/// eigenvector's sign is fixed for determinism.
pub struct SpectralEmbedding {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralEmbedding {
    pub fn new(graph: &SimilarityGraph) -> Result<Self> {
        let l = normalized_laplacian(graph)?;
        let eig = nalgebra::linalg::SymmetricEigen::new(l);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let eigenvalues = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).clone_owned();
            let mut arg = 0;
            let mut max = -1.0;
            for i in 0..n {
                let a = col[i].abs();
                if a > max {
                    max = a;
                    arg = i;
                }
            }
            if col[arg] < 0.0 {
                col.neg_mut();
            }
            eigenvectors.set_column(dst, &col);
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// K-means on the row-normalized leading `n_c` eigenvectors.
    pub fn cluster(&self, n_c: usize, seed: u64) -> Result<Vec<usize>> {
        let n = self.eigenvalues.len();
        if n_c < 2 || n_c > n {
            return Err(Error::InvalidArgument(format!(
                "cluster count {n_c} outside 2..={n}"
            )));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row: Vec<f64> = (0..n_c).map(|j| self.eigenvectors[(i, j)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut row {
                    *x /= norm;
                }
            }
            rows.push(row);
        }
        let labels = kmeans(&rows, n_c, seed, 10);
        let mut used = vec![false; n_c];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::EmptyCluster { requested: n_c });
        }
        Ok(labels)
    }
}

/// Spectral clustering of a similarity graph into `n_c` groups.
pub fn spectral_cluster(graph: &SimilarityGraph, n_c: usize, seed: u64) -> Result<Vec<usize>> {
    SpectralEmbedding::new(graph)?.cluster(n_c, seed)
}

/// Settings for the iterative cluster-count search.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ClusterConfig {
    /// Minimum admissible cluster size.
    pub n_min_points: usize,
    /// Upper bound on the cluster count; `None` means `N / n_min_points`.
    pub n_max_clusters: Option<usize>,
    /// Per-cluster mean projection error considered acceptable.
    pub error_threshold: f64,
    /// Fraction of clusters that must pass the threshold.
    pub pass_fraction: f64,
    /// Cluster count the search starts from.
    pub n_start: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_min_points: 10,
            n_max_clusters: None,
            error_threshold: 1e-3,
            pass_fraction: 0.9,
            n_start: 2,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_start < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_start must be at least 2, got {}",
                self.n_start
            )));
        }
        if !(self.pass_fraction > 0.0 && self.pass_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pass_fraction must lie in (0, 1], got {}",
                self.pass_fraction
            )));
        }
        if self.error_threshold <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "error_threshold must be positive, got {}",
                self.error_threshold
            )));
        }
        if self.n_min_points == 0 {
            return Err(Error::InvalidArgument(
                "n_min_points must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn resolved_n_max(&self, n_samples: usize) -> usize {
        self.n_max_clusters
            .unwrap_or_else(|| (n_samples / self.n_min_points).max(self.n_start))
    }
}

/// Per-cluster projection-error diagnostics of a labelling.
#[derive(Debug, Clone)]
pub struct ClusterDiagnostics {
    /// alpha_j per member, one list per cluster id.
    pub per_point_errors: Vec<Vec<f64>>,
    /// epsilon_h per cluster id; infinite when the tangent mapping failed.
    pub per_cluster_mean_error: Vec<f64>,
    pub chosen_n_c: usize,
    pub pass_fraction_achieved: f64,
    /// False when the search stopped on budget rather than on the criterion.
    pub converged: bool,
}

/// Tangent-space description of one cluster at its Karcher means.
pub struct ClusterGeometry {
    /// Equalized rank, the maximum member rank.
    pub rank: usize,
    pub mean_u: GrassmannPoint,
    pub mean_v: GrassmannPoint,
    /// Log-mapped left bases, one n_f x p_h matrix per member.
    pub gammas_u: Vec<DMatrix<f64>>,
    /// Log-mapped right bases, one m_f x p_h matrix per member.
    pub gammas_v: Vec<DMatrix<f64>>,
    /// Equalized singular values per member.
    pub sigmas: Vec<DVector<f64>>,
    /// Reconstruction error per member after the tangent round trip.
    pub alphas: Vec<f64>,
    /// Mean of `alphas`.
    pub mean_error: f64,
}

/// Karcher means, tangent projections and round-trip errors for the given
/// cluster members.
pub fn cluster_geometry(
    solutions: &[ReducedSolution],
    member_ids: &[usize],
    karcher: &KarcherConfig,
) -> Result<ClusterGeometry> {
    if member_ids.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    let rank = member_ids
        .iter()
        .map(|&i| solutions[i].rank())
        .max()
        .expect("nonempty cluster");
    let mut us = Vec::with_capacity(member_ids.len());
    let mut vs = Vec::with_capacity(member_ids.len());
    let mut sigmas = Vec::with_capacity(member_ids.len());
    for &i in member_ids {
        let (u, s, v) = solutions[i].equalized(rank)?;
        us.push(u);
        vs.push(v);
        sigmas.push(s);
    }
    let mean_u = cluster_karcher(&us, karcher)?.mean;
    let mean_v = cluster_karcher(&vs, karcher)?.mean;

    let gammas_u: Vec<DMatrix<f64>> = us
        .par_iter()
        .map(|u| log_map_raw(mean_u.basis(), u.basis()))
        .collect::<Result<_>>()?;
    let gammas_v: Vec<DMatrix<f64>> = vs
        .par_iter()
        .map(|v| log_map_raw(mean_v.basis(), v.basis()))
        .collect::<Result<_>>()?;

    let alphas: Vec<f64> = (0..member_ids.len())
        .into_par_iter()
        .map(|j| {
            let u_tilde = exp_map_raw(mean_u.basis(), &gammas_u[j]);
            let v_tilde = exp_map_raw(mean_v.basis(), &gammas_v[j]);
            let sigma = sigmas[j].as_slice();
            let exact = reconstruct_triplet(us[j].basis(), sigma, vs[j].basis());
            let mapped = reconstruct_triplet(&u_tilde, sigma, &v_tilde);
            (exact - mapped).norm()
        })
        .collect();
    let mean_error = alphas.iter().sum::<f64>() / alphas.len() as f64;

    Ok(ClusterGeometry {
        rank,
        mean_u,
        mean_v,
        gammas_u,
        gammas_v,
        sigmas,
        alphas,
        mean_error,
    })
}

/// Cluster means tolerate a gradient plateau: wide point sets stall just
/// above the strict tolerance on exp/log rounding noise, which is orders
/// of magnitude below any spread that matters to the error threshold.
/// The iteration budget is capped accordingly.
fn cluster_karcher(points: &[GrassmannPoint], cfg: &KarcherConfig) -> Result<KarcherResult> {
    karcher_mean_with_options(
        points,
        &KarcherOptions {
            tol: cfg.tol,
            max_iter: cfg.max_iter.min(250),
            step: cfg.step,
            stall_floor: Some((cfg.tol * 1e2).max(1e-8)),
            accept_best_ceiling: Some(1e-2),
        },
    )
}

/// Point-wise and mean tangent round-trip errors of a cluster: equalize
/// ranks, log-map every member to the tangent spaces at the Karcher means
/// of the U and V points, exp-map back and compare reconstructions.
pub fn cluster_projection_error(
    members: &[ReducedSolution],
    karcher: &KarcherConfig,
) -> Result<(Vec<f64>, f64)> {
    let ids: Vec<usize> = (0..members.len()).collect();
    let geom = cluster_geometry(members, &ids, karcher)?;
    Ok((geom.alphas, geom.mean_error))
}

pub(crate) fn members_of(labels: &[usize], n_c: usize) -> Vec<Vec<usize>> {
    let mut clusters = vec![Vec::new(); n_c];
    for (i, &l) in labels.iter().enumerate() {
        clusters[l].push(i);
    }
    clusters
}

/// Outcome of evaluating one candidate cluster count.
struct Candidate {
    labels: Vec<usize>,
    diagnostics: ClusterDiagnostics,
}

/// Iterative cluster-count selection: spectral-cluster at increasing n_c
/// until the configured fraction of clusters has mean projection error
/// below the threshold. Clusters whose tangent mapping fails outright
/// (orthogonal members, stalled Karcher iteration) count as failing with
/// infinite error. Candidates with a cluster smaller than `n_min_points`
/// are rejected. On budget exhaustion the best labelling is returned
/// inside [`Error::BudgetExhausted`].
pub fn optimize_cluster_count(
    solutions: &[ReducedSolution],
    config: &ClusterConfig,
    karcher: &KarcherConfig,
    seed: u64,
) -> Result<(Vec<usize>, ClusterDiagnostics)> {
    config.validate()?;
    let n = solutions.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "need at least two solutions to cluster".into(),
        ));
    }
    let n_max = config.resolved_n_max(n).min(n);
    if config.n_start > n_max {
        return Err(Error::InvalidArgument(format!(
            "n_start {} exceeds n_max {n_max}",
            config.n_start
        )));
    }

    let u_points: Vec<GrassmannPoint> = solutions.iter().map(|s| s.basis_u()).collect();
    let graph = build_similarity(&u_points)?;
    let embedding = SpectralEmbedding::new(&graph)?;

    // Cluster errors depend only on the member set; membership repeats
    // heavily across consecutive n_c, so memoize on sorted member ids.
    let mut memo: HashMap<Vec<usize>, (Vec<f64>, f64)> = HashMap::new();
    let mut best: Option<(f64, f64, Candidate)> = None;
    let mut fallback: Option<Candidate> = None;

    for n_c in config.n_start..=n_max {
        let labels = match embedding.cluster(n_c, seed) {
            Ok(l) => l,
            Err(Error::EmptyCluster { .. }) => continue,
            Err(e) => return Err(e),
        };
        let clusters = members_of(&labels, n_c);
        let too_small = clusters.iter().any(|c| c.len() < config.n_min_points);
        if too_small && fallback.is_some() {
            continue;
        }

        let missing: Vec<Vec<usize>> = clusters
            .iter()
            .filter(|c| !memo.contains_key(*c))
            .cloned()
            .collect();
        let computed: Vec<(Vec<usize>, (Vec<f64>, f64))> = missing
            .par_iter()
            .map(|ids| {
                let entry = match cluster_geometry(solutions, ids, karcher) {
                    Ok(g) => (g.alphas, g.mean_error),
                    Err(
                        Error::SingularOverlap { .. }
                        | Error::NoConvergence { .. }
                        | Error::EmptyCluster { .. },
                    ) => (vec![f64::INFINITY; ids.len()], f64::INFINITY),
                    Err(e) => return Err(e),
                };
                Ok((ids.clone(), entry))
            })
            .collect::<Result<_>>()?;
        for (ids, entry) in computed {
            memo.insert(ids, entry);
        }

        let per_point: Vec<Vec<f64>> = clusters.iter().map(|c| memo[c].0.clone()).collect();
        let eps: Vec<f64> = clusters.iter().map(|c| memo[c].1).collect();
        let passing = eps.iter().filter(|e| **e <= config.error_threshold).count();
        let fraction = passing as f64 / n_c as f64;
        let mean_eps = eps.iter().sum::<f64>() / n_c as f64;
        let candidate = Candidate {
            labels,
            diagnostics: ClusterDiagnostics {
                per_point_errors: per_point,
                per_cluster_mean_error: eps,
                chosen_n_c: n_c,
                pass_fraction_achieved: fraction,
                converged: true,
            },
        };

        if fallback.is_none() {
            fallback = Some(Candidate {
                labels: candidate.labels.clone(),
                diagnostics: candidate.diagnostics.clone(),
            });
        }
        if too_small {
            continue;
        }
        if fraction >= config.pass_fraction {
            return Ok((candidate.labels, candidate.diagnostics));
        }
        // Best-so-far ranking: pass fraction first, then the mean cluster
        // error (strictly smaller wins), then the earlier candidate.
        let improves = match &best {
            None => true,
            Some((f, m, _)) => fraction > *f || (fraction == *f && mean_eps < *m),
        };
        if improves {
            best = Some((fraction, mean_eps, candidate));
        }
    }

    let chosen = best
        .map(|(_, _, c)| c)
        .or(fallback)
        .ok_or_else(|| Error::InvalidArgument("no admissible cluster count found".into()))?;
    let mut diagnostics = chosen.diagnostics;
    diagnostics.converged = false;
    Err(Error::BudgetExhausted {
        n_max,
        best_fraction: diagnostics.pass_fraction_achieved,
        labels: chosen.labels,
        diagnostics: Box::new(diagnostics),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{exp_map, project_to_grassmann, RankPolicy};
    use crate::synth::{random_point, random_tangent, three_family_dataset, FamilySpec};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, from: usize, to: usize, theta: f64) -> GrassmannPoint {
        let mut basis = DMatrix::zeros(n, 1);
        basis[(from, 0)] = theta.cos();
        basis[(to, 0)] = theta.sin();
        GrassmannPoint::new(basis).unwrap()
    }

    #[test]
    fn similarity_of_identical_and_orthogonal_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(8, 3, &mut rng);
        let g = build_similarity(&[x.clone(), x]).unwrap();
        assert_relative_eq!(g.weights()[(0, 1)], 3.0, epsilon = 1e-10);
        assert_relative_eq!(g.weights()[(0, 0)], 3.0, epsilon = 1e-10);

        let e1 = GrassmannPoint::coordinate_span(4, &[0]).unwrap();
        let e2 = GrassmannPoint::coordinate_span(4, &[1]).unwrap();
        let g = build_similarity(&[e1, e2]).unwrap();
        assert!(g.weights()[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn similarity_matches_constructed_angles() {
        // Three lines in the plane at pairwise angles {0.4, 0.3, 0.7}.
        let a = line(3, 0, 1, 0.0);
        let b = line(3, 0, 1, 0.4);
        let c = line(3, 0, 1, 0.7);
        let g = build_similarity(&[a, b, c]).unwrap();
        assert_relative_eq!(g.weights()[(0, 1)], 0.4_f64.cos().powi(2), epsilon = 1e-12);
        assert_relative_eq!(g.weights()[(1, 2)], 0.3_f64.cos().powi(2), epsilon = 1e-12);
        assert_relative_eq!(g.weights()[(0, 2)], 0.7_f64.cos().powi(2), epsilon = 1e-12);
        // Degrees are row sums.
        for i in 0..3 {
            assert_relative_eq!(g.degrees()[i], g.weights().row(i).sum(), epsilon = 1e-14);
        }
    }

    #[test]
    fn laplacian_of_k3_has_known_spectrum() {
        let mut w = DMatrix::from_element(3, 3, 1.0);
        for i in 0..3 {
            w[(i, i)] = 0.0;
        }
        let g = SimilarityGraph::new(w).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert!((&l - l.transpose()).amax() < 1e-12);
        let mut eig: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(l)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(eig[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 1.5, epsilon = 1e-12);
        assert_relative_eq!(eig[2], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_blocks_give_zero_eigenvalue_multiplicity_two() {
        let mut w = DMatrix::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    w[(i, j)] = 1.0;
                    w[(i + 3, j + 3)] = 1.0;
                }
            }
        }
        let g = SimilarityGraph::new(w).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let eig = nalgebra::linalg::SymmetricEigen::new(l).eigenvalues;
        let zeros = eig.iter().filter(|e| e.abs() < 1e-10).count();
        assert_eq!(zeros, 2);
        assert!(eig.iter().all(|e| *e > -1e-10 && *e < 2.0 + 1e-10));
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        let g = SimilarityGraph::new(w).unwrap();
        assert!(matches!(
            normalized_laplacian(&g),
            Err(Error::IsolatedVertex { index: 2 })
        ));
    }

    fn block_graph(sizes: &[usize], within: f64, between: f64) -> SimilarityGraph {
        let n: usize = sizes.iter().sum();
        let mut block_of = Vec::with_capacity(n);
        for (b, &s) in sizes.iter().enumerate() {
            block_of.extend(std::iter::repeat(b).take(s));
        }
        let w = DMatrix::from_fn(n, n, |i, j| {
            if block_of[i] == block_of[j] {
                within
            } else {
                between
            }
        });
        SimilarityGraph::new(w).unwrap()
    }

    #[test]
    fn spectral_clustering_recovers_two_blocks() {
        let g = block_graph(&[12, 18], 1.0, 0.0);
        let labels = spectral_cluster(&g, 2, 7).unwrap();
        let first = labels[0];
        assert!(labels[..12].iter().all(|&l| l == first));
        assert!(labels[12..].iter().all(|&l| l != first));
    }

    #[test]
    fn one_cluster_per_point_when_nc_equals_n() {
        // Mutually similar but distinct points; k-means on n_c = N rows
        // puts every point in its own cluster.
        let g = block_graph(&[1, 1, 1, 1], 1.0, 0.5);
        let labels = spectral_cluster(&g, 4, 1).unwrap();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn permuting_inputs_permutes_labels_consistently() {
        let g = block_graph(&[10, 10, 10], 1.0, 0.01);
        let labels = spectral_cluster(&g, 3, 3).unwrap();

        // Reverse the vertex order and re-cluster.
        let n = g.len();
        let wp = DMatrix::from_fn(n, n, |i, j| g.weights()[(n - 1 - i, n - 1 - j)]);
        let gp = SimilarityGraph::new(wp).unwrap();
        let permuted = spectral_cluster(&gp, 3, 3).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    labels[i] == labels[j],
                    permuted[n - 1 - i] == permuted[n - 1 - j],
                    "partition changed under permutation at ({i},{j})"
                );
            }
        }
    }

    fn tight_cluster(
        n: usize,
        p: usize,
        count: usize,
        scale: f64,
        seed: u64,
    ) -> Vec<ReducedSolution> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base_u = random_point(n, p, &mut rng);
        let base_v = random_point(p + 4, p, &mut rng);
        (0..count)
            .map(|_| {
                let u = exp_map(&base_u, &random_tangent(&base_u, scale, &mut rng)).unwrap();
                let v = exp_map(&base_v, &random_tangent(&base_v, scale, &mut rng)).unwrap();
                let mut us = u.basis().clone();
                for (j, s) in [3.0, 2.0, 1.0].iter().take(p).enumerate() {
                    us.column_mut(j).scale_mut(*s);
                }
                let f = us * v.basis().transpose();
                project_to_grassmann(&f, RankPolicy::Fixed(p)).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_solutions_have_zero_projection_error() {
        let members = tight_cluster(10, 2, 1, 0.0, 5);
        let same = vec![members[0].clone(), members[0].clone(), members[0].clone()];
        let (alphas, eps) = cluster_projection_error(&same, &KarcherConfig::default()).unwrap();
        assert!(alphas.iter().all(|a| *a < 1e-10));
        assert!(eps < 1e-10);
    }

    #[test]
    fn nearby_solutions_have_tiny_projection_error() {
        // The round-trip error of SVD-produced bases scales with the
        // squared spread times the singular-value magnitude, so the 1e-6
        // bound needs a genuinely tight pair.
        let members = tight_cluster(10, 3, 2, 2e-4, 6);
        let (alphas, eps) = cluster_projection_error(&members, &KarcherConfig::default()).unwrap();
        assert_eq!(alphas.len(), 2);
        assert!(eps < 1e-6, "eps = {eps:e}");
    }

    #[test]
    fn projection_error_grows_quadratically_with_spread() {
        let karcher = KarcherConfig::default();
        let (_, tight) =
            cluster_projection_error(&tight_cluster(10, 3, 6, 0.01, 6), &karcher).unwrap();
        let (_, loose) =
            cluster_projection_error(&tight_cluster(10, 3, 6, 0.1, 6), &karcher).unwrap();
        assert!(tight < loose, "tight {tight:e} vs loose {loose:e}");
        assert!(loose / tight > 10.0, "expected roughly quadratic growth");
        assert!(loose < 5e-2);
    }

    #[test]
    fn far_apart_solutions_fail_loudly_or_hugely() {
        // Two solutions on nearly orthogonal subspaces.
        let e01 = GrassmannPoint::coordinate_span(8, &[0, 1]).unwrap();
        let e23 = GrassmannPoint::coordinate_span(8, &[2, 3]).unwrap();
        let ev = GrassmannPoint::coordinate_span(6, &[0, 1]).unwrap();
        let make = |u: &GrassmannPoint| {
            let mut us = u.basis().clone();
            us.column_mut(0).scale_mut(2.0);
            let f = us * ev.basis().transpose();
            project_to_grassmann(&f, RankPolicy::Fixed(2)).unwrap()
        };
        let members = vec![make(&e01), make(&e23)];
        match cluster_projection_error(&members, &KarcherConfig::default()) {
            Err(Error::SingularOverlap { .. }) => {}
            Ok((_, eps)) => assert!(eps > 0.5, "expected a large error, got {eps:e}"),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn three_families_select_three_clusters() {
        let spec = FamilySpec {
            train_per_family: 12,
            test_per_family: 1,
            ..FamilySpec::default()
        };
        let data = three_family_dataset(&spec);
        let solutions: Vec<ReducedSolution> = data
            .train_snapshots
            .iter()
            .map(|s| project_to_grassmann(&s.matrix, RankPolicy::Tolerance(1e-8)).unwrap())
            .collect();
        let config = ClusterConfig {
            n_min_points: 5,
            error_threshold: 1e-3,
            pass_fraction: 0.9,
            ..ClusterConfig::default()
        };
        let (labels, diag) =
            optimize_cluster_count(&solutions, &config, &KarcherConfig::default(), 11).unwrap();
        assert_eq!(diag.chosen_n_c, 3);
        assert!(diag.converged);
        // Clusters coincide with the true families.
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                assert_eq!(
                    labels[i] == labels[j],
                    data.train_family[i] == data.train_family[j]
                );
            }
        }
    }

    #[test]
    fn single_family_stops_at_n_start() {
        let members = tight_cluster(12, 3, 30, 0.02, 9);
        let config = ClusterConfig {
            n_min_points: 5,
            error_threshold: 1e-3,
            pass_fraction: 0.9,
            ..ClusterConfig::default()
        };
        let (_, diag) =
            optimize_cluster_count(&members, &config, &KarcherConfig::default(), 13).unwrap();
        assert_eq!(diag.chosen_n_c, config.n_start);
    }

    #[test]
    fn budget_exhaustion_carries_best_labels() {
        // Families too loose for the threshold: every candidate fails.
        let members = tight_cluster(12, 3, 24, 0.4, 10);
        let config = ClusterConfig {
            n_min_points: 10,
            n_max_clusters: Some(2),
            error_threshold: 1e-12,
            pass_fraction: 1.0,
            ..ClusterConfig::default()
        };
        match optimize_cluster_count(&members, &config, &KarcherConfig::default(), 17) {
            Err(Error::BudgetExhausted {
                labels,
                diagnostics,
                ..
            }) => {
                assert_eq!(labels.len(), 24);
                assert!(!diagnostics.converged);
                assert_eq!(diagnostics.per_cluster_mean_error.len(), diagnostics.chosen_n_c);
            }
            other => panic!("expected BudgetExhausted, got {other:?}"),
        }
    }

    #[test]
    fn mean_error_non_increasing_on_synthetic_families() {
        let spec = FamilySpec {
            train_per_family: 16,
            test_per_family: 1,
            ..FamilySpec::default()
        };
        let data = three_family_dataset(&spec);
        let solutions: Vec<ReducedSolution> = data
            .train_snapshots
            .iter()
            .map(|s| project_to_grassmann(&s.matrix, RankPolicy::Tolerance(1e-8)).unwrap())
            .collect();
        let u_points: Vec<GrassmannPoint> = solutions.iter().map(|s| s.basis_u()).collect();
        let graph = build_similarity(&u_points).unwrap();
        let embedding = SpectralEmbedding::new(&graph).unwrap();
        let karcher = KarcherConfig::default();
        let mut means = Vec::new();
        for n_c in 2..=5 {
            let labels = embedding.cluster(n_c, 23).unwrap();
            let clusters = members_of(&labels, n_c);
            let eps: Vec<f64> = clusters
                .iter()
                .map(|ids| match cluster_geometry(&solutions, ids, &karcher) {
                    Ok(g) => g.mean_error,
                    Err(_) => f64::INFINITY,
                })
                .collect();
            let finite: Vec<f64> = eps.iter().copied().filter(|e| e.is_finite()).collect();
            let mean = if finite.len() < eps.len() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            means.push(mean);
        }
        for w in means.windows(2) {
            assert!(
                w[1] <= w[0] || (w[1] - w[0]).abs() < 1e-12,
                "mean eps increased: {means:?}"
            );
        }
    }

    #[test]
    fn diagnostics_mean_matches_alpha_lists() {
        let members = tight_cluster(10, 2, 14, 0.05, 30);
        let config = ClusterConfig {
            n_min_points: 3,
            error_threshold: 1e-2,
            pass_fraction: 0.5,
            ..ClusterConfig::default()
        };
        let (_, diag) =
            optimize_cluster_count(&members, &config, &KarcherConfig::default(), 5).unwrap();
        for (alphas, eps) in diag
            .per_point_errors
            .iter()
            .zip(&diag.per_cluster_mean_error)
        {
            let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
            assert!((mean - eps).abs() < 1e-12);
        }
    }
}
