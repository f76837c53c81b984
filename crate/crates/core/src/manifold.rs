//! Grassmann-manifold geometry: subspace representatives, exp/log maps,
//! geodesics, principal angles, distances and the projection kernel.
//!
//! A point on `G(p, n)` is a p-dimensional linear subspace of R^n,
//! represented by an n x p matrix with orthonormal columns. The tangent
//! space at a point X is the set of n x p matrices G with X^T G = 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Max-norm tolerance for the orthonormality invariant `X^T X = I`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Max-entry tolerance for the tangency invariant `X^T G = 0`.
pub const TANGENCY_TOL: f64 = 1e-8;
/// Condition-number limit on the subspace overlap matrix beyond which the
/// log map is treated as undefined (a principal angle at pi/2).
pub const OVERLAP_COND_LIMIT: f64 = 1e12;
/// Absolute singular-value floor below which a snapshot counts as zero.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-14;

/// An orthonormal basis representing a point on the Grassmann manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: DMatrix<f64>,
}

impl GrassmannPoint {
    /// Wraps an orthonormal basis, validating `X^T X = I` to 1e-10.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let (n, p) = basis.shape();
        if p == 0 || p > n {
            return Err(Error::InvalidArgument(format!(
                "subspace dimension must satisfy 1 <= p <= n, got p = {p}, n = {n}"
            )));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "basis contains non-finite entries".into(),
            ));
        }
        let gram = basis.tr_mul(&basis);
        for i in 0..p {
            for j in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "columns are not orthonormal: |(X^T X - I)[{i},{j}]| = {:e}",
                        (gram[(i, j)] - target).abs()
                    )));
                }
            }
        }
        Ok(Self { basis })
    }

    /// Wraps a basis known to be orthonormal (outputs of QR/SVD).
    pub(crate) fn new_unchecked(basis: DMatrix<f64>) -> Self {
        debug_assert!({
            let p = basis.ncols();
            let gram = basis.tr_mul(&basis);
            (gram - DMatrix::identity(p, p)).amax() < 1e-9
        });
        Self { basis }
    }

    /// Orthonormalizes an arbitrary full-rank matrix via thin QR.
    pub fn orthonormalized(m: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = m.shape();
        if p == 0 || p > n {
            return Err(Error::InvalidArgument(format!(
                "cannot orthonormalize a {n}x{p} matrix"
            )));
        }
        Ok(Self::new_unchecked(thin_qr_q(m.clone())))
    }

    /// The subspace spanned by the given coordinate axes of R^n.
    pub fn coordinate_span(n: usize, axes: &[usize]) -> Result<Self> {
        let mut basis = DMatrix::zeros(n, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "axis {i} out of range for ambient dimension {n}"
                )));
            }
            basis[(i, j)] = 1.0;
        }
        Self::new(basis)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }
}

/// A matrix in the tangent space at a base point, `base^T matrix = 0`.
#[derive(Debug, Clone)]
pub struct TangentVector {
    matrix: DMatrix<f64>,
    base: GrassmannPoint,
}

impl TangentVector {
    /// Validates the tangency invariant: every entry of `base^T G` below 1e-8.
    pub fn new(base: GrassmannPoint, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.shape() != base.basis().shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", base.ambient_dim(), base.subspace_dim()),
                actual: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        let overlap = base.basis().tr_mul(&matrix);
        if overlap.amax() > TANGENCY_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not tangent at base: max |X^T G| = {:e}",
                overlap.amax()
            )));
        }
        Ok(Self { matrix, base })
    }

    pub fn zero(base: GrassmannPoint) -> Self {
        let m = DMatrix::zeros(base.ambient_dim(), base.subspace_dim());
        Self { matrix: m, base }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn base(&self) -> &GrassmannPoint {
        &self.base
    }

    /// Frobenius norm; equals the geodesic distance travelled by the exp map.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// Principal angles between two subspaces, nondecreasing in [0, pi/2].
#[derive(Debug, Clone)]
pub struct PrincipalAngles {
    angles: Vec<f64>,
    dims: (usize, usize),
}

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Subspace dimensions (p, k) of the two arguments.
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn max_angle(&self) -> f64 {
        self.angles.last().copied().unwrap_or(0.0)
    }
}

/// Subspace distances expressible through principal angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DistanceMetric {
    /// Geodesic (arc-length) distance.
    Grassmann,
    Procrustes,
    Projection,
}

/// Rank selection for the thin-SVD projection of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RankPolicy {
    Fixed(usize),
    /// Keep singular values with `sigma_i / sigma_1 > tol`.
    Tolerance(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Tolerance(1e-8)
    }
}

/// Thin-SVD triplet of one solution snapshot, `F ~ U diag(sigma) V^T`.
///
/// All `min(n_f, m_f)` singular triplets are retained so that cluster rank
/// equalization can extend a member past its truncation rank; accessors
/// expose the first `rank` columns.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
    rank: usize,
}

impl ReducedSolution {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Shape (n_f, m_f) of the snapshot this was built from.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// Number of retained singular triplets (>= rank).
    pub fn retained(&self) -> usize {
        self.sigma.len()
    }

    /// Left singular basis truncated at `rank`, a point on G(p, n_f).
    pub fn basis_u(&self) -> GrassmannPoint {
        GrassmannPoint::new_unchecked(self.u.columns(0, self.rank).into_owned())
    }

    /// Right singular basis truncated at `rank`, a point on G(p, m_f).
    pub fn basis_v(&self) -> GrassmannPoint {
        GrassmannPoint::new_unchecked(self.v.columns(0, self.rank).into_owned())
    }

    /// Singular values truncated at `rank`, nonincreasing.
    pub fn sigma(&self) -> DVector<f64> {
        self.sigma.rows(0, self.rank).into_owned()
    }

    /// Truncation at a cluster-equalized rank `p_h >= rank`. Singular values
    /// past the true rank of the snapshot are zeros.
    pub fn equalized(&self, p_h: usize) -> Result<(GrassmannPoint, DVector<f64>, GrassmannPoint)> {
        if p_h == 0 || p_h > self.retained() {
            return Err(Error::InvalidArgument(format!(
                "equalized rank {p_h} outside retained range 1..={}",
                self.retained()
            )));
        }
        Ok((
            GrassmannPoint::new_unchecked(self.u.columns(0, p_h).into_owned()),
            self.sigma.rows(0, p_h).into_owned(),
            GrassmannPoint::new_unchecked(self.v.columns(0, p_h).into_owned()),
        ))
    }

    /// Rank-`rank` reconstruction `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        reconstruct_triplet(
            &self.u.columns(0, self.rank).into_owned(),
            self.sigma.rows(0, self.rank).as_slice(),
            &self.v.columns(0, self.rank).into_owned(),
        )
    }
}

pub(crate) fn reconstruct_triplet(u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut us = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    us * v.transpose()
}

/// Thin SVD with the sign convention fixed: each left singular column has
/// its largest-magnitude entry positive (first occurrence wins ties), the
/// right column flipped to match so the product is unchanged.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd_signed(m: &DMatrix<f64>) -> ThinSvd {
    let svd = m.clone().svd(true, true);
    let mut u = svd.u.expect("SVD with u requested");
    let mut v_t = svd.v_t.expect("SVD with v_t requested");
    for j in 0..u.ncols() {
        let mut arg = 0;
        let mut max = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > max {
                max = a;
                arg = i;
            }
        }
        if u[(arg, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v_t.row_mut(j).neg_mut();
        }
    }
    ThinSvd {
        u,
        sigma: svd.singular_values,
        v: v_t.transpose(),
    }
}

/// Thin-QR orthonormalization with positive R diagonal for continuity.
pub(crate) fn thin_qr_q(m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p.min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Projects a snapshot onto the Grassmann manifold by thin SVD.
///
/// Returns the sign-fixed singular triplet truncated per `policy`.
pub fn project_to_grassmann(f: &DMatrix<f64>, policy: RankPolicy) -> Result<ReducedSolution> {
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "snapshot contains non-finite entries".into(),
        ));
    }
    let max_rank = f.nrows().min(f.ncols());
    if let RankPolicy::Fixed(p) = policy {
        if p == 0 || p > max_rank {
            return Err(Error::InvalidArgument(format!(
                "fixed rank {p} outside 1..={max_rank} for a {}x{} snapshot",
                f.nrows(),
                f.ncols()
            )));
        }
    }
    let ThinSvd { u, sigma, v } = thin_svd_signed(f);
    let s_max = sigma[0];
    if s_max < SINGULAR_VALUE_FLOOR {
        return Err(Error::ZeroMatrix {
            floor: SINGULAR_VALUE_FLOOR,
        });
    }
    let rank = match policy {
        RankPolicy::Fixed(p) => p,
        RankPolicy::Tolerance(tol) => sigma.iter().filter(|s| **s / s_max > tol).count().max(1),
    };
    Ok(ReducedSolution { u, sigma, v, rank })
}

fn check_same_manifold(base: &GrassmannPoint, target: &GrassmannPoint) -> Result<()> {
    if base.ambient_dim() != target.ambient_dim() {
        return Err(Error::AmbientMismatch {
            left: base.ambient_dim(),
            right: target.ambient_dim(),
        });
    }
    if base.subspace_dim() != target.subspace_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", base.ambient_dim(), base.subspace_dim()),
            actual: format!("{}x{}", target.ambient_dim(), target.subspace_dim()),
        });
    }
    Ok(())
}

/// The SVD of `M = (X1 - X0 X0^T X1)(X0^T X1)^{-1}`, whose singular values
/// are the tangents of the principal angles. Shared by the log map and the
/// geodesic.
fn log_map_svd(base: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<ThinSvd> {
    let a = base.tr_mul(target);
    let a_svd = a.clone().svd(true, true);
    let s = &a_svd.singular_values;
    let (s_max, s_min) = (s[0], s[s.len() - 1]);
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !cond.is_finite() || cond > OVERLAP_COND_LIMIT {
        return Err(Error::SingularOverlap {
            cond,
            limit: OVERLAP_COND_LIMIT,
        });
    }
    // M = (X1 - X0 X0^T X1) A^{-1} = X1 A^{-1} - X0, with A^{-1} from the SVD.
    let u = a_svd.u.as_ref().expect("svd u");
    let v_t = a_svd.v_t.as_ref().expect("svd v_t");
    let mut inv_s = DMatrix::zeros(s.len(), s.len());
    for i in 0..s.len() {
        inv_s[(i, i)] = 1.0 / s[i];
    }
    let a_inv = v_t.transpose() * inv_s * u.transpose();
    let m = target * a_inv - base;
    Ok(thin_svd_signed(&m))
}

pub(crate) fn log_map_raw(base: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ThinSvd { u, sigma, v } = log_map_svd(base, target)?;
    let angles: Vec<f64> = sigma.iter().map(|s| s.atan()).collect();
    Ok(reconstruct_triplet(&u, &angles, &v))
}

/// Logarithmic map: the tangent vector at `base` whose geodesic reaches
/// `target` at unit time.
pub fn log_map(base: &GrassmannPoint, target: &GrassmannPoint) -> Result<TangentVector> {
    check_same_manifold(base, target)?;
    let gamma = log_map_raw(base.basis(), target.basis())?;
    TangentVector::new(base.clone(), gamma)
}

pub(crate) fn exp_map_raw(base: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let ThinSvd { u, sigma, v } = thin_svd_signed(gamma);
    let p = v.nrows();
    let mut cos = DMatrix::zeros(p, p);
    let mut sin = DMatrix::zeros(p, p);
    for i in 0..p {
        cos[(i, i)] = sigma[i].cos();
        sin[(i, i)] = sigma[i].sin();
    }
    let x1 = base * &v * cos * v.transpose() + u * sin * v.transpose();
    thin_qr_q(x1)
}

/// Exponential map: follows the geodesic from `base` in the direction of
/// `gamma` for unit time. The result is re-orthonormalized by thin QR.
pub fn exp_map(base: &GrassmannPoint, gamma: &TangentVector) -> Result<GrassmannPoint> {
    if gamma.matrix().shape() != base.basis().shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", base.ambient_dim(), base.subspace_dim()),
            actual: format!("{}x{}", gamma.matrix().nrows(), gamma.matrix().ncols()),
        });
    }
    Ok(GrassmannPoint::new_unchecked(exp_map_raw(
        base.basis(),
        gamma.matrix(),
    )))
}

/// A point on the geodesic from `x0` (z = 0) to `x1` (z = 1).
pub fn geodesic(x0: &GrassmannPoint, x1: &GrassmannPoint, z: f64) -> Result<GrassmannPoint> {
    check_same_manifold(x0, x1)?;
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidArgument(format!(
            "geodesic parameter must lie in [0, 1], got {z}"
        )));
    }
    let ThinSvd { u, sigma, v } = log_map_svd(x0.basis(), x1.basis())?;
    let p = v.nrows();
    let mut cos = DMatrix::zeros(p, p);
    let mut sin = DMatrix::zeros(p, p);
    for i in 0..p {
        let theta = z * sigma[i].atan();
        cos[(i, i)] = theta.cos();
        sin[(i, i)] = theta.sin();
    }
    let x = x0.basis() * &v * cos * v.transpose() + u * sin * v.transpose();
    Ok(GrassmannPoint::new_unchecked(thin_qr_q(x)))
}

/// Principal angles between two subspaces of possibly different dimensions
/// sharing an ambient space.
pub fn principal_angles(x1: &GrassmannPoint, x2: &GrassmannPoint) -> Result<PrincipalAngles> {
    if x1.ambient_dim() != x2.ambient_dim() {
        return Err(Error::AmbientMismatch {
            left: x1.ambient_dim(),
            right: x2.ambient_dim(),
        });
    }
    let overlap = x1.basis().tr_mul(x2.basis());
    let svd = overlap.svd(false, false);
    // Singular values are sorted nonincreasing, so the angles come out
    // nondecreasing. Clamp against floating-point overshoot past 1.
    let angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(0.0, 1.0).acos())
        .collect();
    Ok(PrincipalAngles {
        angles,
        dims: (x1.subspace_dim(), x2.subspace_dim()),
    })
}

/// Distance between subspaces. Equal dimensions use the finite-Grassmannian
/// forms; unequal dimensions add the |k - p| completion term, equivalent to
/// padding the principal angles with pi/2.
///
/// The projection distance is evaluated through the orthogonal-complement
/// residual, `||X2 - X1 (X1^T X2)||_F` with the larger subspace second.
/// That equals `sqrt(|k - p| + sum sin^2 theta_i)` identically but stays
/// accurate for tiny angles, where arccos of a near-unit singular value
/// loses half the working precision.
pub fn distance(x1: &GrassmannPoint, x2: &GrassmannPoint, metric: DistanceMetric) -> Result<f64> {
    if let DistanceMetric::Projection = metric {
        if x1.ambient_dim() != x2.ambient_dim() {
            return Err(Error::AmbientMismatch {
                left: x1.ambient_dim(),
                right: x2.ambient_dim(),
            });
        }
        let (small, large) = if x1.subspace_dim() <= x2.subspace_dim() {
            (x1, x2)
        } else {
            (x2, x1)
        };
        let overlap = small.basis().tr_mul(large.basis());
        let residual = large.basis() - small.basis() * overlap;
        return Ok(residual.norm());
    }

    let pa = principal_angles(x1, x2)?;
    let (p, k) = pa.dims();
    let gap = p.abs_diff(k) as f64;
    let d = if p == k {
        match metric {
            DistanceMetric::Grassmann => {
                pa.angles().iter().map(|t| t * t).sum::<f64>().sqrt()
            }
            DistanceMetric::Procrustes => {
                2.0 * pa
                    .angles()
                    .iter()
                    .map(|t| (t / 2.0).sin().powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
            DistanceMetric::Projection => unreachable!("handled above"),
        }
    } else {
        match metric {
            DistanceMetric::Grassmann => {
                let sum: f64 = pa.angles().iter().map(|t| t * t).sum();
                (gap * std::f64::consts::FRAC_PI_2.powi(2) + sum).sqrt()
            }
            DistanceMetric::Procrustes => {
                let sum: f64 = pa.angles().iter().map(|t| (t / 2.0).sin().powi(2)).sum();
                (gap + sum).sqrt()
            }
            DistanceMetric::Projection => unreachable!("handled above"),
        }
    };
    Ok(d)
}

pub(crate) fn grassmann_distance_raw(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let overlap = a.tr_mul(b);
    let svd = overlap.svd(false, false);
    svd.singular_values
        .iter()
        .map(|s| s.clamp(0.0, 1.0).acos().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Projection kernel `k_p(U_i, U_j) = ||U_i^T U_j||_F^2`, the positive
/// semi-definite similarity underlying the solution clustering.
pub fn projection_kernel(u_i: &GrassmannPoint, u_j: &GrassmannPoint) -> Result<f64> {
    if u_i.ambient_dim() != u_j.ambient_dim() {
        return Err(Error::AmbientMismatch {
            left: u_i.ambient_dim(),
            right: u_j.ambient_dim(),
        });
    }
    Ok(u_i.basis().tr_mul(u_j.basis()).norm_squared())
}
