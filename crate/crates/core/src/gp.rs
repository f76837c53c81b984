//! Noise-free Gaussian-process regression with a Gaussian (RBF) kernel.
//!
//! The kernel is `k(x, x') = exp(-||x - x'||^2 / (2 l^2))` with a single
//! isotropic length scale fitted by maximizing the log marginal likelihood
//! over a bounded bracket. Outputs are centered before fitting (the prior
//! mean is zero) and the training mean is added back at prediction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Hyperparameter and stabilizer settings shared by all GP fits.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GpConfig {
    /// Starting value for the length-scale search.
    pub l_init: f64,
    /// Search bracket for the length scale.
    pub l_bounds: (f64, f64),
    /// Initial jitter added to the kernel diagonal.
    pub nugget: f64,
    /// Escalation ceiling before a fit is declared ill-conditioned.
    pub max_nugget: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            l_init: 1.0,
            l_bounds: (1e-3, 1e3),
            nugget: 1e-10,
            max_nugget: 1e-4,
        }
    }
}

/// Squared-exponential kernel value for two parameter vectors.
pub fn rbf_kernel(x: &[f64], y: &[f64], l: f64) -> Result<f64> {
    if l <= 0.0 {
        return Err(Error::NonpositiveLengthScale(l));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (2.0 * l * l)).exp())
}

fn gram(inputs: &[Vec<f64>], l: f64) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(&inputs[i], &inputs[j], l).expect("validated length scale");
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + nugget I`, escalating the nugget by 10x up to the
/// ceiling when factorization fails.
fn chol_with_nugget(
    k: &DMatrix<f64>,
    nugget: f64,
    max_nugget: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut nu = nugget;
    loop {
        let mut kn = k.clone();
        for i in 0..n {
            kn[(i, i)] += nu;
        }
        if let Some(chol) = Cholesky::new(kn) {
            return Ok((chol, nu));
        }
        nu *= 10.0;
        if nu > max_nugget {
            return Err(Error::IllConditioned(format!(
                "Cholesky failed up to nugget {max_nugget:e}; near-duplicate training inputs?"
            )));
        }
    }
}

fn check_duplicates(inputs: &[Vec<f64>], outputs: &DMatrix<f64>) -> Result<()> {
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] && outputs.row(i) != outputs.row(j) {
                return Err(Error::IllConditioned(format!(
                    "duplicated inputs {i} and {j} carry different outputs"
                )));
            }
        }
    }
    Ok(())
}

/// Log marginal likelihood of centered outputs under the factored kernel.
/// Summed over output columns (all columns share the Gram matrix).
fn log_marginal(chol: &Cholesky<f64, Dyn>, centered: &DMatrix<f64>) -> f64 {
    let n = centered.nrows() as f64;
    let d = centered.ncols() as f64;
    let alpha = chol.solve(centered);
    let mut fit = 0.0;
    for j in 0..centered.ncols() {
        fit += centered.column(j).dot(&alpha.column(j));
    }
    let logdet_half: f64 = (0..centered.nrows())
        .map(|i| chol.l_dirty()[(i, i)].ln())
        .sum();
    -0.5 * fit - d * logdet_half - 0.5 * n * d * (std::f64::consts::TAU).ln()
}

/// Conditioning ceiling for length-scale candidates. Noise-free marginal
/// likelihood keeps rising into the numerically degenerate large-l regime
/// where interpolation accuracy collapses; candidates whose estimated
/// condition number (lambda_max <= n against the smallest squared
/// Cholesky diagonal) exceeds this are scored as minus infinity.
const CONDITION_GUARD: f64 = 1e10;

/// Golden-section maximization of the pooled marginal likelihood over
/// `ln l` in the configured bracket; the explicit `l_init` candidate is
/// kept when it beats the bracket optimum.
fn fit_length_scale(inputs: &[Vec<f64>], centered: &DMatrix<f64>, cfg: &GpConfig) -> Result<f64> {
    let eval = |l: f64| -> Result<f64> {
        let k = gram(inputs, l);
        let (chol, nu) = chol_with_nugget(&k, cfg.nugget, cfg.max_nugget)?;
        if nu > cfg.nugget {
            return Ok(f64::NEG_INFINITY);
        }
        let n = k.nrows();
        let min_diag = (0..n)
            .map(|i| chol.l_dirty()[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if n as f64 / (min_diag * min_diag) > CONDITION_GUARD {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(log_marginal(&chol, centered))
    };

    let (mut lo, mut hi) = (cfg.l_bounds.0.ln(), cfg.l_bounds.1.ln());
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = eval(a.exp())?;
    let mut fb = eval(b.exp())?;
    while hi - lo > 1e-3 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = eval(b.exp())?;
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = eval(a.exp())?;
        }
    }
    let l_opt = (0.5 * (lo + hi)).exp();
    let f_opt = eval(l_opt)?;
    let f_init = if cfg.l_bounds.0 <= cfg.l_init && cfg.l_init <= cfg.l_bounds.1 {
        eval(cfg.l_init)?
    } else {
        f64::NEG_INFINITY
    };
    if f_opt == f64::NEG_INFINITY && f_init == f64::NEG_INFINITY {
        // Every probe hit the guard; fall back to the initial value and
        // let the final assembly stabilize with the nugget ladder.
        return Ok(cfg.l_init);
    }
    Ok(if f_init > f_opt { cfg.l_init } else { l_opt })
}

/// A fitted single-output GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    block: GpBlock,
}

/// Posterior mean and (clamped) variance at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPrediction {
    pub mean: f64,
    pub variance: f64,
}

/// Fits the length scale by marginal likelihood and caches the Cholesky
/// factor of `K + nugget I`.
pub fn gp_fit(inputs: &[Vec<f64>], outputs: &[f64], l_init: f64, nugget: f64) -> Result<GpModel> {
    let cfg = GpConfig {
        l_init,
        nugget,
        ..GpConfig::default()
    };
    let y = DMatrix::from_column_slice(outputs.len(), 1, outputs);
    Ok(GpModel {
        block: GpBlock::fit(inputs.to_vec(), y, &cfg)?,
    })
}

impl GpModel {
    /// Fit with a caller-chosen length scale (no search).
    pub fn fit_with_length_scale(
        inputs: &[Vec<f64>],
        outputs: &[f64],
        l: f64,
        nugget: f64,
    ) -> Result<Self> {
        let y = DMatrix::from_column_slice(outputs.len(), 1, outputs);
        let cfg = GpConfig {
            nugget,
            ..GpConfig::default()
        };
        Ok(Self {
            block: GpBlock::fit_fixed(inputs.to_vec(), y, l, &cfg)?,
        })
    }

    pub fn length_scale(&self) -> f64 {
        self.block.length_scale
    }

    pub fn nugget(&self) -> f64 {
        self.block.nugget
    }

    /// Posterior mean `K*^T K^{-1} W` and variance `K** - K*^T K^{-1} K*`.
    pub fn predict(&self, x: &[f64]) -> Result<GpPrediction> {
        let (means, variance) = self.block.predict(x)?;
        Ok(GpPrediction {
            mean: means[0],
            variance,
        })
    }
}

/// Multi-output GP whose columns share inputs, length scale and Cholesky
/// factor; the per-cluster tangent and singular-value regressors are
/// blocks with one column per matrix entry.
#[derive(Debug, Clone)]
pub struct GpBlock {
    inputs: Vec<Vec<f64>>,
    /// Raw outputs, one column per component.
    outputs: DMatrix<f64>,
    col_means: DVector<f64>,
    length_scale: f64,
    nugget: f64,
    chol: Cholesky<f64, Dyn>,
    /// `(K + nugget I)^{-1} (Y - 1 mean^T)`.
    alphas: DMatrix<f64>,
}

impl GpBlock {
    /// Fit the shared length scale on the pooled marginal likelihood.
    pub fn fit(inputs: Vec<Vec<f64>>, outputs: DMatrix<f64>, cfg: &GpConfig) -> Result<Self> {
        Self::validate(&inputs, &outputs)?;
        let centered = Self::center(&outputs);
        let l = fit_length_scale(&inputs, &centered.0, cfg)?;
        Self::assemble(inputs, outputs, centered, l, cfg)
    }

    /// Rebuilds a block from serialized raw data and hyperparameters,
    /// recomputing the Cholesky factor. Starting from the stored nugget
    /// reproduces the original factorization exactly.
    pub fn from_parts(
        inputs: Vec<Vec<f64>>,
        outputs: DMatrix<f64>,
        length_scale: f64,
        nugget: f64,
    ) -> Result<Self> {
        let cfg = GpConfig {
            nugget,
            ..GpConfig::default()
        };
        Self::fit_fixed(inputs, outputs, length_scale, &cfg)
    }

    /// Fit with a fixed length scale.
    pub fn fit_fixed(
        inputs: Vec<Vec<f64>>,
        outputs: DMatrix<f64>,
        l: f64,
        cfg: &GpConfig,
    ) -> Result<Self> {
        if l <= 0.0 {
            return Err(Error::NonpositiveLengthScale(l));
        }
        Self::validate(&inputs, &outputs)?;
        let centered = Self::center(&outputs);
        Self::assemble(inputs, outputs, centered, l, cfg)
    }

    fn validate(inputs: &[Vec<f64>], outputs: &DMatrix<f64>) -> Result<()> {
        if inputs.len() != outputs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: outputs.nrows(),
            });
        }
        if inputs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "GP fitting needs at least 2 training points, got {}",
                inputs.len()
            )));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::InvalidArgument(
                "inconsistent parameter dimensions in GP inputs".into(),
            ));
        }
        check_duplicates(inputs, outputs)
    }

    fn center(outputs: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = outputs.nrows() as f64;
        let means = DVector::from_fn(outputs.ncols(), |j, _| outputs.column(j).sum() / n);
        let mut centered = outputs.clone();
        for j in 0..outputs.ncols() {
            centered.column_mut(j).add_scalar_mut(-means[j]);
        }
        (centered, means)
    }

    fn assemble(
        inputs: Vec<Vec<f64>>,
        outputs: DMatrix<f64>,
        (centered, col_means): (DMatrix<f64>, DVector<f64>),
        l: f64,
        cfg: &GpConfig,
    ) -> Result<Self> {
        let k = gram(&inputs, l);
        let (chol, nugget) = chol_with_nugget(&k, cfg.nugget, cfg.max_nugget)?;
        let alphas = chol.solve(&centered);
        Ok(Self {
            inputs,
            outputs,
            col_means,
            length_scale: l,
            nugget,
            chol,
            alphas,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    /// Per-column posterior means plus the shared posterior variance.
    pub fn predict(&self, x: &[f64]) -> Result<(DVector<f64>, f64)> {
        let dim = self.inputs[0].len();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }
        let kstar = DVector::from_fn(self.inputs.len(), |i, _| {
            rbf_kernel(&self.inputs[i], x, self.length_scale).expect("validated length scale")
        });
        let means = DVector::from_fn(self.n_outputs(), |j, _| {
            kstar.dot(&self.alphas.column(j)) + self.col_means[j]
        });
        let solved = self.chol.solve(&kstar);
        let raw = 1.0 - kstar.dot(&solved);
        debug_assert!(raw > -1e-8, "posterior variance fell to {raw:e}");
        Ok((means, raw.max(0.0)))
    }
}
