//! Riemannian statistics on the Grassmannian: the sample Karcher mean by
//! iterative tangent-space averaging, and the Karcher variance.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{
    distance, exp_map_raw, grassmann_distance_raw, log_map_raw, DistanceMetric, GrassmannPoint,
};

/// Iteration parameters for the Karcher fixed-point scheme.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct KarcherConfig {
    /// Stop once the mean tangent norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the mean tangent applied per update.
    pub step: f64,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            step: 0.5,
        }
    }
}

/// Converged Karcher mean with its diagnostics.
#[derive(Debug, Clone)]
pub struct KarcherResult {
    pub mean: GrassmannPoint,
    /// Mean squared geodesic distance of the inputs to the mean.
    pub variance: f64,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Set when the ensemble radius exceeds pi/4 (max pairwise distance
    /// above pi/2), where the mean is no longer guaranteed unique.
    pub radius_warning: bool,
}

/// Internal iteration options. `stall_floor` lets pipeline callers accept
/// a mean whose gradient has plateaued below a secondary threshold: on
/// wide point sets the exp/log round-trip rounding keeps the gradient
/// from ever reaching the primary tolerance.
pub(crate) struct KarcherOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step: f64,
    pub stall_floor: Option<f64>,
    /// At budget exhaustion, hand back the best iterate seen instead of
    /// failing, provided its gradient is below this ceiling. Wide clusters
    /// need a central anchor point even when the mean iteration cannot
    /// settle; their quality is reported through the projection error.
    pub accept_best_ceiling: Option<f64>,
}

/// Sample Karcher mean of points on a shared G(p, n).
///
/// Iterates: log-map all points at the current estimate, average the
/// tangent vectors, exp-map `step` times the average. Starts from the
/// input point with minimal sum of squared geodesic distances to the rest,
/// which makes the result independent of input order.
pub fn karcher_mean(
    points: &[GrassmannPoint],
    tol: f64,
    max_iter: usize,
    step: f64,
) -> Result<KarcherResult> {
    karcher_mean_with_options(
        points,
        &KarcherOptions {
            tol,
            max_iter,
            step,
            stall_floor: None,
            accept_best_ceiling: None,
        },
    )
}

pub(crate) fn karcher_mean_with_options(
    points: &[GrassmannPoint],
    opts: &KarcherOptions,
) -> Result<KarcherResult> {
    let (tol, max_iter, step) = (opts.tol, opts.max_iter, opts.step);
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "karcher_mean requires at least one point".into(),
        ));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let shape = points[0].basis().shape();
    for p in points {
        if p.basis().shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", shape.0, shape.1),
                actual: format!("{}x{}", p.ambient_dim(), p.subspace_dim()),
            });
        }
    }

    let n = points.len();
    // Pairwise distances drive both the deterministic start point and the
    // non-uniqueness radius warning.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| grassmann_distance_raw(points[i].basis(), points[j].basis()))
                .collect()
        })
        .collect();
    let mut dist2_sums = vec![0.0; n];
    let mut max_pairwise: f64 = 0.0;
    for i in 0..n {
        for (off, &d) in rows[i].iter().enumerate() {
            let j = i + 1 + off;
            dist2_sums[i] += d * d;
            dist2_sums[j] += d * d;
            max_pairwise = max_pairwise.max(d);
        }
    }
    let start = dist2_sums
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let radius_warning = max_pairwise > std::f64::consts::FRAC_PI_2;

    let mut mean = points[start].basis().clone();
    let inv_n = 1.0 / n as f64;
    let mut window: Vec<f64> = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>, usize)> = None;
    for it in 1..=max_iter {
        let gammas: Vec<DMatrix<f64>> = points
            .par_iter()
            .map(|p| log_map_raw(&mean, p.basis()))
            .collect::<Result<_>>()?;
        let mut avg = DMatrix::zeros(shape.0, shape.1);
        for g in &gammas {
            avg += g;
        }
        avg.scale_mut(inv_n);
        let grad = avg.norm();
        if opts.accept_best_ceiling.is_some()
            && best.as_ref().map(|(g, _, _)| grad < *g).unwrap_or(true)
        {
            best = Some((grad, mean.clone(), it));
        }
        let stalled = match opts.stall_floor {
            Some(floor) => {
                window.push(grad);
                let lookback = 16;
                grad < floor
                    && window.len() > lookback
                    && grad > 0.95 * window[window.len() - 1 - lookback]
            }
            None => false,
        };
        if grad < tol || stalled {
            let mean = GrassmannPoint::new_unchecked(mean);
            let variance = variance_at(points, &mean);
            return Ok(KarcherResult {
                mean,
                variance,
                iterations: it,
                final_gradient_norm: grad,
                radius_warning,
            });
        }
        avg.scale_mut(step);
        mean = exp_map_raw(&mean, &avg);
    }

    if let (Some(ceiling), Some((grad, basis, it))) = (opts.accept_best_ceiling, best) {
        if grad <= ceiling {
            let mean = GrassmannPoint::new_unchecked(basis);
            let variance = variance_at(points, &mean);
            return Ok(KarcherResult {
                mean,
                variance,
                iterations: it,
                final_gradient_norm: grad,
                radius_warning,
            });
        }
    }

    // One more gradient evaluation to report where the iteration stalled.
    let gammas: Vec<DMatrix<f64>> = points
        .par_iter()
        .map(|p| log_map_raw(&mean, p.basis()))
        .collect::<Result<_>>()?;
    let mut avg = DMatrix::zeros(shape.0, shape.1);
    for g in &gammas {
        avg += g;
    }
    avg.scale_mut(inv_n);
    Err(Error::NoConvergence {
        iterations: max_iter,
        gradient_norm: avg.norm(),
    })
}

fn variance_at(points: &[GrassmannPoint], mean: &GrassmannPoint) -> f64 {
    let n = points.len() as f64;
    points
        .iter()
        .map(|p| grassmann_distance_raw(p.basis(), mean.basis()).powi(2))
        .sum::<f64>()
        / n
}

/// Mean squared distance of a set of points to a given center.
pub fn karcher_variance(
    points: &[GrassmannPoint],
    mean: &GrassmannPoint,
    metric: DistanceMetric,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "karcher_variance requires at least one point".into(),
        ));
    }
    let mut sum = 0.0;
    for p in points {
        let d = distance(p, mean, metric)?;
        sum += d * d;
    }
    Ok(sum / points.len() as f64)
}
