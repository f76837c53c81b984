//! End-to-end surrogate construction and prediction: matricize snapshots,
//! project by thin SVD, cluster on the Grassmannian, map each cluster to
//! the tangent space at its Karcher means, optionally sub-cluster the
//! parameter points, fit per-(sub)cluster GP blocks, and reconstruct
//! full-field predictions at new parameter points.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::clustering::{
    cluster_geometry, dbscan, median_nearest_neighbor_distance, members_of,
    optimize_cluster_count, ClusterConfig, ClusterDiagnostics,
};
use crate::error::{Error, Result};
use crate::gp::{GpBlock, GpConfig};
use crate::manifold::{
    exp_map_raw, project_to_grassmann, GrassmannPoint, RankPolicy, ReducedSolution,
};
use crate::stats::KarcherConfig;

/// A point in the input parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub values: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "parameter points must be nonempty and finite".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One solution snapshot in matrix form.
#[derive(Debug, Clone)]
pub struct SolutionSnapshot {
    pub matrix: DMatrix<f64>,
    /// Index of the parameter point this solution came from.
    pub source_id: usize,
}

/// Reshapes a flat solution vector into an `n_f x m_f` matrix,
/// column-major: entry `k` lands at row `k % n_f`, column `k / n_f`.
pub fn matricize(solution: &[f64], n_f: usize, m_f: usize) -> Result<DMatrix<f64>> {
    if n_f * m_f != solution.len() {
        return Err(Error::ShapeError(format!(
            "{} x {} does not match vector length {}",
            n_f,
            m_f,
            solution.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n_f, m_f, solution))
}

/// Inverse of [`matricize`]; exact.
pub fn flatten(matrix: &DMatrix<f64>) -> Vec<f64> {
    matrix.as_slice().to_vec()
}

/// Closest-to-square factor pair of `n_dof`, rows >= columns.
pub fn default_shape(n_dof: usize) -> (usize, usize) {
    let mut best = (n_dof, 1);
    let mut i = 1;
    while i * i <= n_dof {
        if n_dof % i == 0 {
            best = (n_dof / i, i);
        }
        i += 1;
    }
    best
}

/// Whether and when parameter-space sub-clustering runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SubclusterMode {
    /// Sub-cluster only when DBSCAN finds two or more groups.
    Auto,
    /// Always keep whatever partition DBSCAN finds.
    On,
    Off,
}

/// DBSCAN settings for parameter-space sub-clustering. With `eps = None`
/// each cluster uses three times the median nearest-neighbor distance of
/// its own parameter points.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DbscanConfig {
    pub eps: Option<f64>,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self {
            eps: None,
            min_pts: 5,
        }
    }
}

/// Everything trainable about the surrogate.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SurrogateConfig {
    pub cluster: ClusterConfig,
    pub rank_policy: RankPolicy,
    pub subcluster: SubclusterMode,
    pub dbscan: DbscanConfig,
    pub karcher: KarcherConfig,
    pub gp: GpConfig,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            rank_policy: RankPolicy::default(),
            subcluster: SubclusterMode::Auto,
            dbscan: DbscanConfig::default(),
            karcher: KarcherConfig::default(),
            gp: GpConfig::default(),
            seed: 0,
        }
    }
}

/// GP regressors of one parameter-space sub-cluster: component-wise maps
/// from xi to the flattened tangent matrices and the singular values.
#[derive(Debug, Clone)]
pub struct SubclusterGp {
    pub sublabel: i32,
    /// Global sample ids in this sub-cluster.
    pub member_ids: Vec<usize>,
    pub gp_gamma_u: GpBlock,
    pub gp_gamma_v: GpBlock,
    pub gp_sigma: GpBlock,
}

/// One solution cluster: tangent space anchored at the Karcher means plus
/// its fitted GP blocks, possibly split over parameter-space sub-clusters.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub cluster_id: usize,
    /// Global sample ids, ascending.
    pub member_ids: Vec<usize>,
    /// Equalized rank p_h (maximum member rank).
    pub rank: usize,
    pub karcher_mean_u: GrassmannPoint,
    pub karcher_mean_v: GrassmannPoint,
    /// Per-member sub-cluster labels, parallel to `member_ids`; `None`
    /// when sub-clustering did not run.
    pub sublabels: Option<Vec<i32>>,
    pub submodels: Vec<SubclusterGp>,
}

impl ClusterModel {
    /// Sub-cluster label of a training sample, 0 when sub-clustering
    /// did not run or the sample is not a member.
    pub fn sublabel_of_global(&self, global_id: usize) -> i32 {
        match (&self.sublabels, self.member_ids.binary_search(&global_id)) {
            (Some(subs), Ok(pos)) => subs[pos],
            _ => 0,
        }
    }

    fn submodel(&self, sublabel: i32) -> Result<&SubclusterGp> {
        self.submodels
            .iter()
            .find(|s| s.sublabel == sublabel)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sublabel {sublabel}")))
    }
}

/// Training diagnostics stored with the model.
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    pub cluster: ClusterDiagnostics,
    /// Sub-cluster count per cluster id.
    pub sublabel_counts: Vec<usize>,
}

/// A fully trained surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub clusters: Vec<ClusterModel>,
    pub train_params: Vec<ParameterPoint>,
    /// Cluster id per training sample.
    pub labels: Vec<usize>,
    pub config: SurrogateConfig,
    /// Snapshot shape (n_f, m_f).
    pub shape: (usize, usize),
    pub diagnostics: TrainDiagnostics,
}

/// Full prediction output with its bookkeeping.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub matrix: DMatrix<f64>,
    pub cluster_id: usize,
    pub sublabel: i32,
    /// Number of adjacent predicted singular values out of nonincreasing
    /// order; recorded, never reordered.
    pub sigma_order_violations: usize,
}

/// Builds the clustered Grassmannian GP surrogate.
///
/// When the cluster-count search exhausts its budget the model is still
/// built from the best labelling found and flagged via
/// `diagnostics.cluster.converged = false`.
pub fn train_surrogate(
    params: &[ParameterPoint],
    snapshots: &[SolutionSnapshot],
    config: &SurrogateConfig,
) -> Result<SurrogateModel> {
    config.cluster.validate()?;
    if params.len() != snapshots.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: snapshots.len(),
        });
    }
    let minimum = config.cluster.n_min_points * config.cluster.n_start;
    if params.len() < minimum {
        return Err(Error::InvalidArgument(format!(
            "need at least n_min_points * n_start = {minimum} samples, got {}",
            params.len()
        )));
    }
    let shape = snapshots[0].matrix.shape();
    if snapshots.iter().any(|s| s.matrix.shape() != shape) {
        return Err(Error::ShapeError(
            "snapshots have inconsistent shapes".into(),
        ));
    }
    let dim = params[0].dim();
    if params.iter().any(|p| p.dim() != dim) {
        return Err(Error::InvalidArgument(
            "parameter points have inconsistent dimensions".into(),
        ));
    }

    let reduced: Vec<ReducedSolution> = snapshots
        .par_iter()
        .map(|s| project_to_grassmann(&s.matrix, config.rank_policy))
        .collect::<Result<_>>()?;

    let (labels, cluster_diag) =
        match optimize_cluster_count(&reduced, &config.cluster, &config.karcher, config.seed) {
            Ok(x) => x,
            Err(Error::BudgetExhausted {
                labels,
                diagnostics,
                ..
            }) => (labels, *diagnostics),
            Err(e) => return Err(e),
        };

    let n_c = cluster_diag.chosen_n_c;
    let member_lists = members_of(&labels, n_c);
    let clusters: Vec<ClusterModel> = member_lists
        .par_iter()
        .enumerate()
        .map(|(h, ids)| build_cluster(h, ids, params, &reduced, config).map_err(|e| e.with_cluster(h)))
        .collect::<Result<_>>()?;

    let sublabel_counts = clusters.iter().map(|c| c.submodels.len()).collect();
    Ok(SurrogateModel {
        clusters,
        train_params: params.to_vec(),
        labels,
        config: config.clone(),
        shape,
        diagnostics: TrainDiagnostics {
            cluster: cluster_diag,
            sublabel_counts,
        },
    })
}

fn build_cluster(
    cluster_id: usize,
    member_ids: &[usize],
    params: &[ParameterPoint],
    reduced: &[ReducedSolution],
    config: &SurrogateConfig,
) -> Result<ClusterModel> {
    let geom = cluster_geometry(reduced, member_ids, &config.karcher)?;
    let member_params: Vec<Vec<f64>> = member_ids
        .iter()
        .map(|&i| params[i].values.clone())
        .collect();

    let sublabels = match config.subcluster {
        SubclusterMode::Off => None,
        mode => {
            let labels = subcluster_parameters(&member_params, &config.dbscan);
            let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
            if distinct >= 2 || mode == SubclusterMode::On {
                Some(labels)
            } else {
                None
            }
        }
    };

    let groups: Vec<(i32, Vec<usize>)> = match &sublabels {
        None => vec![(0, (0..member_ids.len()).collect())],
        Some(labels) => {
            let max = *labels.iter().max().expect("nonempty cluster");
            (0..=max)
                .map(|s| {
                    let pos = labels
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| **l == s)
                        .map(|(i, _)| i)
                        .collect();
                    (s, pos)
                })
                .collect()
        }
    };

    let (n_f, p_h) = geom.mean_u.basis().shape();
    let m_f = geom.mean_v.basis().nrows();
    let submodels = groups
        .into_iter()
        .map(|(sublabel, positions)| {
            let inputs: Vec<Vec<f64>> = positions.iter().map(|&p| member_params[p].clone()).collect();
            let gamma_u = stack_rows(&positions, |p| geom.gammas_u[p].as_slice(), n_f * p_h);
            let gamma_v = stack_rows(&positions, |p| geom.gammas_v[p].as_slice(), m_f * p_h);
            let sigma = stack_rows(&positions, |p| geom.sigmas[p].as_slice(), p_h);
            Ok(SubclusterGp {
                sublabel,
                member_ids: positions.iter().map(|&p| member_ids[p]).collect(),
                gp_gamma_u: GpBlock::fit(inputs.clone(), gamma_u, &config.gp)?,
                gp_gamma_v: GpBlock::fit(inputs.clone(), gamma_v, &config.gp)?,
                gp_sigma: GpBlock::fit(inputs, sigma, &config.gp)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ClusterModel {
        cluster_id,
        member_ids: member_ids.to_vec(),
        rank: geom.rank,
        karcher_mean_u: geom.mean_u,
        karcher_mean_v: geom.mean_v,
        sublabels,
        submodels,
    })
}

fn stack_rows<'a, F>(positions: &[usize], row: F, width: usize) -> DMatrix<f64>
where
    F: Fn(usize) -> &'a [f64],
{
    let mut out = DMatrix::zeros(positions.len(), width);
    for (r, &p) in positions.iter().enumerate() {
        let data = row(p);
        debug_assert_eq!(data.len(), width);
        for (c, v) in data.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    out
}

/// DBSCAN over the cluster's parameter points with the configured or
/// per-cluster default eps. Noise points join the sub-cluster of their
/// nearest labelled neighbor; sub-clusters too small to train a GP merge
/// into their nearest neighboring group. Labels are renumbered to
/// consecutive integers in order of first appearance.
fn subcluster_parameters(points: &[Vec<f64>], cfg: &DbscanConfig) -> Vec<i32> {
    let eps = match cfg.eps {
        Some(e) => e,
        None => match median_nearest_neighbor_distance(points) {
            Some(m) if m > 0.0 => 3.0 * m,
            _ => return vec![0; points.len()],
        },
    };
    let mut labels = dbscan(points, eps, cfg.min_pts);

    if labels.iter().all(|&l| l == -1) {
        return vec![0; points.len()];
    }
    // Attach noise to the nearest labelled point.
    for i in 0..points.len() {
        if labels[i] != -1 {
            continue;
        }
        let mut best = (f64::INFINITY, 0i32);
        for (j, q) in points.iter().enumerate() {
            if labels[j] == -1 {
                continue;
            }
            let d: f64 = points[i]
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, labels[j]);
            }
        }
        labels[i] = best.1;
    }
    // Merge groups below the GP minimum of two points.
    loop {
        let mut counts = std::collections::BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        if counts.len() < 2 {
            break;
        }
        let Some((&tiny, _)) = counts.iter().find(|(_, c)| **c < 2) else {
            break;
        };
        let i = labels.iter().position(|&l| l == tiny).expect("member exists");
        let mut best = (f64::INFINITY, tiny);
        for (j, q) in points.iter().enumerate() {
            if labels[j] == tiny {
                continue;
            }
            let d: f64 = points[i]
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, labels[j]);
            }
        }
        labels[i] = best.1;
    }
    // Renumber by first appearance.
    let mut next = 0;
    let mut map = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            *map.entry(*l).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Cluster and sub-cluster of the Euclidean-nearest training point; ties
/// resolve to the lowest training index.
pub fn assign_cluster(model: &SurrogateModel, x: &ParameterPoint) -> Result<(usize, i32)> {
    let dim = model.train_params[0].dim();
    if x.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.dim(),
        });
    }
    let mut best = (f64::INFINITY, 0usize);
    for (i, p) in model.train_params.iter().enumerate() {
        let d: f64 = p
            .values
            .iter()
            .zip(&x.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    let idx = best.1;
    let cluster_id = model.labels[idx];
    let sublabel = model.clusters[cluster_id].sublabel_of_global(idx);
    Ok((cluster_id, sublabel))
}

/// Predicts the full-field solution at a new parameter point.
pub fn predict_solution(model: &SurrogateModel, x: &ParameterPoint) -> Result<DMatrix<f64>> {
    Ok(predict_solution_detailed(model, x)?.matrix)
}

/// Prediction plus routing and singular-value ordering diagnostics.
pub fn predict_solution_detailed(model: &SurrogateModel, x: &ParameterPoint) -> Result<Prediction> {
    let (cluster_id, sublabel) = assign_cluster(model, x)?;
    let cluster = &model.clusters[cluster_id];
    let sub = cluster.submodel(sublabel)?;
    let p_h = cluster.rank;
    let (n_f, m_f) = model.shape;

    let (gu_flat, _) = sub.gp_gamma_u.predict(&x.values)?;
    let (gv_flat, _) = sub.gp_gamma_v.predict(&x.values)?;
    let (sigma_raw, _) = sub.gp_sigma.predict(&x.values)?;
    if gu_flat.iter().chain(gv_flat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularPrediction {
            cluster: cluster_id,
        });
    }

    let gamma_u = tangent_from_flat(&gu_flat, n_f, p_h, &cluster.karcher_mean_u);
    let gamma_v = tangent_from_flat(&gv_flat, m_f, p_h, &cluster.karcher_mean_v);
    let u = exp_map_raw(cluster.karcher_mean_u.basis(), &gamma_u);
    let v = exp_map_raw(cluster.karcher_mean_v.basis(), &gamma_v);

    let mut violations = 0;
    for i in 1..sigma_raw.len() {
        if sigma_raw[i] > sigma_raw[i - 1] {
            violations += 1;
        }
    }
    let sigma: DVector<f64> = sigma_raw.map(|s| s.max(0.0));

    let mut us = u;
    for j in 0..p_h {
        us.column_mut(j).scale_mut(sigma[j]);
    }
    Ok(Prediction {
        matrix: us * v.transpose(),
        cluster_id,
        sublabel,
        sigma_order_violations: violations,
    })
}

/// GP block means are affine combinations of the training tangents, so
/// the reshaped matrix is tangent up to rounding; scrub the remainder.
fn tangent_from_flat(
    flat: &DVector<f64>,
    rows: usize,
    cols: usize,
    base: &GrassmannPoint,
) -> DMatrix<f64> {
    let gamma = DMatrix::from_column_slice(rows, cols, flat.as_slice());
    let overlap = base.basis().tr_mul(&gamma);
    &gamma - base.basis() * overlap
}

/// Mean and per-sample Frobenius errors of the surrogate on a test set.
pub fn evaluate(
    model: &SurrogateModel,
    test_params: &[ParameterPoint],
    test_snapshots: &[SolutionSnapshot],
) -> Result<(f64, Vec<f64>)> {
    if test_params.len() != test_snapshots.len() {
        return Err(Error::DimensionMismatch {
            expected: test_params.len(),
            actual: test_snapshots.len(),
        });
    }
    if test_snapshots.iter().any(|s| s.matrix.shape() != model.shape) {
        return Err(Error::ShapeError(format!(
            "test snapshots must be {} x {}",
            model.shape.0, model.shape.1
        )));
    }
    let per_point: Vec<f64> = test_params
        .par_iter()
        .zip(test_snapshots.par_iter())
        .map(|(p, s)| {
            let predicted = predict_solution(model, p)?;
            Ok((&s.matrix - predicted).norm())
        })
        .collect::<Result<_>>()?;
    let mean = per_point.iter().sum::<f64>() / per_point.len().max(1) as f64;
    Ok((mean, per_point))
}
