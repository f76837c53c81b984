//! Data-driven surrogates for high-dimensional model outputs on the
//! Grassmann manifold.
//!
//! Solution snapshots are projected onto the Grassmannian by thin SVD,
//! clustered by subspace similarity with a projection-kernel spectral
//! method, mapped to the tangent space at each cluster's Karcher mean,
//! and regressed against the input parameters with per-cluster Gaussian
//! processes. The trained surrogate reconstructs full-field solutions at
//! new parameter points without running the underlying model.

pub mod bundle;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod ko;
pub mod manifold;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use gp::{gp_fit, rbf_kernel, GpBlock, GpConfig, GpModel, GpPrediction};
pub use manifold::{
    distance, exp_map, geodesic, log_map, principal_angles, project_to_grassmann,
    projection_kernel, DistanceMetric, GrassmannPoint, PrincipalAngles, RankPolicy,
    ReducedSolution, TangentVector,
};
pub use pipeline::{
    assign_cluster, evaluate, matricize, predict_solution, predict_solution_detailed,
    train_surrogate, ClusterModel, ParameterPoint, Prediction, SolutionSnapshot, SubclusterMode,
    SurrogateConfig, SurrogateModel,
};
pub use stats::{karcher_mean, karcher_variance, KarcherConfig, KarcherResult};
