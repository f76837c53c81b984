//! Model bundle: a versioned JSON envelope holding the trained surrogate.
//! Numeric arrays are base64-encoded little-endian f64 blocks, which keeps
//! save -> load -> save byte-identical (including non-finite diagnostics).
//! GP Cholesky factors are not stored; they are recomputed on load from
//! the raw training data and hyperparameters.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterDiagnostics;
use crate::error::{Error, Result};
use crate::gp::GpBlock;
use crate::manifold::GrassmannPoint;
use crate::pipeline::{
    ClusterModel, ParameterPoint, SubclusterGp, SurrogateConfig, SurrogateModel, TrainDiagnostics,
};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct B64Matrix {
    rows: usize,
    cols: usize,
    /// Column-major little-endian f64 bytes.
    data: String,
}

impl B64Matrix {
    fn encode(m: &DMatrix<f64>) -> Self {
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for v in m.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: B64.encode(bytes),
        }
    }

    fn decode(&self) -> Result<DMatrix<f64>> {
        let bytes = B64.decode(&self.data).map_err(|e| Error::Parse {
            path: "<bundle>".into(),
            line: 0,
            message: format!("bad base64 block: {e}"),
        })?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(Error::Parse {
                path: "<bundle>".into(),
                line: 0,
                message: format!(
                    "matrix block holds {} bytes, expected {}",
                    bytes.len(),
                    self.rows * self.cols * 8
                ),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(DMatrix::from_column_slice(self.rows, self.cols, &values))
    }

    fn encode_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        Self::encode(&m)
    }

    fn decode_rows(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.decode()?;
        Ok((0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect())
    }

    fn encode_vec(v: &[f64]) -> Self {
        Self::encode(&DMatrix::from_column_slice(v.len(), 1, v))
    }

    fn decode_vec(&self) -> Result<Vec<f64>> {
        Ok(self.decode()?.as_slice().to_vec())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GpBlockDto {
    inputs: B64Matrix,
    outputs: B64Matrix,
    length_scale: f64,
    nugget: f64,
}

impl GpBlockDto {
    fn encode(gp: &GpBlock) -> Self {
        Self {
            inputs: B64Matrix::encode_rows(gp.inputs()),
            outputs: B64Matrix::encode(gp.outputs()),
            length_scale: gp.length_scale(),
            nugget: gp.nugget(),
        }
    }

    fn decode(&self) -> Result<GpBlock> {
        GpBlock::from_parts(
            self.inputs.decode_rows()?,
            self.outputs.decode()?,
            self.length_scale,
            self.nugget,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SubclusterDto {
    sublabel: i32,
    member_ids: Vec<usize>,
    gp_gamma_u: GpBlockDto,
    gp_gamma_v: GpBlockDto,
    gp_sigma: GpBlockDto,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterDto {
    cluster_id: usize,
    member_ids: Vec<usize>,
    rank: usize,
    karcher_mean_u: B64Matrix,
    karcher_mean_v: B64Matrix,
    sublabels: Option<Vec<i32>>,
    submodels: Vec<SubclusterDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiagnosticsDto {
    per_point_errors: Vec<B64Matrix>,
    per_cluster_mean_error: B64Matrix,
    chosen_n_c: usize,
    pass_fraction_achieved: f64,
    converged: bool,
    sublabel_counts: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleDto {
    version: u32,
    config: SurrogateConfig,
    shape: (usize, usize),
    labels: Vec<usize>,
    train_params: B64Matrix,
    clusters: Vec<ClusterDto>,
    diagnostics: DiagnosticsDto,
}

/// Serializes a trained model to the bundle JSON text.
pub fn model_to_json(model: &SurrogateModel) -> Result<String> {
    let dto = BundleDto {
        version: BUNDLE_VERSION,
        config: model.config.clone(),
        shape: model.shape,
        labels: model.labels.clone(),
        train_params: B64Matrix::encode_rows(
            &model
                .train_params
                .iter()
                .map(|p| p.values.clone())
                .collect::<Vec<_>>(),
        ),
        clusters: model
            .clusters
            .iter()
            .map(|c| ClusterDto {
                cluster_id: c.cluster_id,
                member_ids: c.member_ids.clone(),
                rank: c.rank,
                karcher_mean_u: B64Matrix::encode(c.karcher_mean_u.basis()),
                karcher_mean_v: B64Matrix::encode(c.karcher_mean_v.basis()),
                sublabels: c.sublabels.clone(),
                submodels: c
                    .submodels
                    .iter()
                    .map(|s| SubclusterDto {
                        sublabel: s.sublabel,
                        member_ids: s.member_ids.clone(),
                        gp_gamma_u: GpBlockDto::encode(&s.gp_gamma_u),
                        gp_gamma_v: GpBlockDto::encode(&s.gp_gamma_v),
                        gp_sigma: GpBlockDto::encode(&s.gp_sigma),
                    })
                    .collect(),
            })
            .collect(),
        diagnostics: DiagnosticsDto {
            per_point_errors: model
                .diagnostics
                .cluster
                .per_point_errors
                .iter()
                .map(|v| B64Matrix::encode_vec(v))
                .collect(),
            per_cluster_mean_error: B64Matrix::encode_vec(
                &model.diagnostics.cluster.per_cluster_mean_error,
            ),
            chosen_n_c: model.diagnostics.cluster.chosen_n_c,
            pass_fraction_achieved: model.diagnostics.cluster.pass_fraction_achieved,
            converged: model.diagnostics.cluster.converged,
            sublabel_counts: model.diagnostics.sublabel_counts.clone(),
        },
    };
    serde_json::to_string(&dto).map_err(|e| Error::Parse {
        path: "<bundle>".into(),
        line: 0,
        message: e.to_string(),
    })
}

/// Parses a bundle JSON text back into a usable model, revalidating the
/// manifold invariants and refitting the cached GP factorizations.
pub fn model_from_json(text: &str) -> Result<SurrogateModel> {
    let dto: BundleDto = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<bundle>".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if dto.version != BUNDLE_VERSION {
        return Err(Error::Parse {
            path: "<bundle>".into(),
            line: 0,
            message: format!(
                "unsupported bundle version {} (expected {BUNDLE_VERSION})",
                dto.version
            ),
        });
    }
    let train_params = dto
        .train_params
        .decode_rows()?
        .into_iter()
        .map(ParameterPoint::new)
        .collect::<Result<Vec<_>>>()?;
    let clusters = dto
        .clusters
        .into_iter()
        .map(|c| {
            Ok(ClusterModel {
                cluster_id: c.cluster_id,
                member_ids: c.member_ids,
                rank: c.rank,
                karcher_mean_u: GrassmannPoint::new(c.karcher_mean_u.decode()?)?,
                karcher_mean_v: GrassmannPoint::new(c.karcher_mean_v.decode()?)?,
                sublabels: c.sublabels,
                submodels: c
                    .submodels
                    .into_iter()
                    .map(|s| {
                        Ok(SubclusterGp {
                            sublabel: s.sublabel,
                            member_ids: s.member_ids,
                            gp_gamma_u: s.gp_gamma_u.decode()?,
                            gp_gamma_v: s.gp_gamma_v.decode()?,
                            gp_sigma: s.gp_sigma.decode()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = TrainDiagnostics {
        cluster: ClusterDiagnostics {
            per_point_errors: dto
                .diagnostics
                .per_point_errors
                .iter()
                .map(|b| b.decode_vec())
                .collect::<Result<Vec<_>>>()?,
            per_cluster_mean_error: dto.diagnostics.per_cluster_mean_error.decode_vec()?,
            chosen_n_c: dto.diagnostics.chosen_n_c,
            pass_fraction_achieved: dto.diagnostics.pass_fraction_achieved,
            converged: dto.diagnostics.converged,
        },
        sublabel_counts: dto.diagnostics.sublabel_counts,
    };
    Ok(SurrogateModel {
        clusters,
        train_params,
        labels: dto.labels,
        config: dto.config,
        shape: dto.shape,
        diagnostics,
    })
}

/// Writes the bundle file.
pub fn save_model(path: &Path, model: &SurrogateModel) -> Result<()> {
    let json = model_to_json(model)?;
    fs::write(path, json).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Loads a bundle file.
pub fn load_model(path: &Path) -> Result<SurrogateModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    model_from_json(&text)
}
