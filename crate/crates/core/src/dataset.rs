//! On-disk dataset format: a JSON manifest, a parameters CSV and one
//! matrix CSV per snapshot. Floats are rendered with 17 significant
//! digits so write -> read -> write is byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ParameterPoint, SolutionSnapshot};

pub const DATASET_VERSION: u32 = 1;

/// Provenance of a dataset: what produced it and with which knobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorInfo {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl GeneratorInfo {
    pub fn external() -> Self {
        Self {
            kind: "external".into(),
            rng: None,
            t_final: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub snapshot: String,
}

/// Dataset layout contract; every referenced file must exist and parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub n_samples: usize,
    pub param_dim: usize,
    pub shape: (usize, usize),
    /// Matricization order of the stored matrices.
    pub layout: String,
    pub seed: u64,
    pub generator: GeneratorInfo,
    pub samples: Vec<SampleEntry>,
}

/// 17-significant-digit decimal rendering; lossless for binary64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("bad float {s:?}: {e}"),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one matrix as CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 25);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| parse_f64(tok, path, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "empty matrix file".into(),
        });
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Writes params.csv with header `sample_id,xi_1,...,xi_nd`.
pub fn write_params_csv(path: &Path, params: &[ParameterPoint]) -> Result<()> {
    let dim = params.first().map(|p| p.dim()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("sample_id");
    for d in 0..dim {
        out.push_str(&format!(",xi_{}", d + 1));
    }
    out.push('\n');
    for (i, p) in params.iter().enumerate() {
        out.push_str(&i.to_string());
        for v in &p.values {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads params.csv; an empty or header-only file yields no points.
pub fn read_params_csv(path: &Path) -> Result<Vec<ParameterPoint>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut params = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("sample_id")) {
            continue;
        }
        let mut toks = line.split(',');
        let _id = toks.next();
        let values = toks
            .map(|tok| parse_f64(tok, path, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "row has no parameter columns".into(),
            });
        }
        params.push(ParameterPoint::new(values)?);
    }
    Ok(params)
}

pub fn snapshot_file_name(id: usize) -> String {
    format!("snap_{id:04}.csv")
}

/// Writes a complete dataset directory: manifest.json, params.csv and one
/// snapshot CSV per sample. `layout` records how the flat solution vector
/// was matricized ("column-major", or "row-major" for the KO generator).
pub fn write_dataset(
    dir: &Path,
    seed: u64,
    generator: GeneratorInfo,
    layout: &str,
    params: &[ParameterPoint],
    snapshots: &[SolutionSnapshot],
) -> Result<DatasetManifest> {
    if params.len() != snapshots.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: snapshots.len(),
        });
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let shape = snapshots
        .first()
        .map(|s| s.matrix.shape())
        .unwrap_or((0, 0));
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        n_samples: params.len(),
        param_dim: params.first().map(|p| p.dim()).unwrap_or(0),
        shape,
        layout: layout.into(),
        seed,
        generator,
        samples: (0..params.len())
            .map(|i| SampleEntry {
                id: i,
                snapshot: snapshot_file_name(i),
            })
            .collect(),
    };
    write_params_csv(&dir.join("params.csv"), params)?;
    for (entry, snap) in manifest.samples.iter().zip(snapshots) {
        write_matrix_csv(&dir.join(&entry.snapshot), &snap.matrix)?;
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
    fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Reads a dataset directory back, checking the manifest's counts and
/// shapes against the files on disk.
pub fn read_dataset(
    dir: &Path,
) -> Result<(DatasetManifest, Vec<ParameterPoint>, Vec<SolutionSnapshot>)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let params = read_params_csv(&dir.join("params.csv"))?;
    if params.len() != manifest.n_samples || manifest.samples.len() != manifest.n_samples {
        return Err(Error::Parse {
            path: manifest_path.display().to_string(),
            line: 0,
            message: format!(
                "manifest declares {} samples but found {} parameter rows and {} snapshot entries",
                manifest.n_samples,
                params.len(),
                manifest.samples.len()
            ),
        });
    }
    if let Some(p) = params.iter().find(|p| p.dim() != manifest.param_dim) {
        return Err(Error::Parse {
            path: manifest_path.display().to_string(),
            line: 0,
            message: format!(
                "manifest declares param_dim {} but a row has {}",
                manifest.param_dim,
                p.dim()
            ),
        });
    }
    let mut snapshots = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let path = dir.join(&entry.snapshot);
        let matrix = read_matrix_csv(&path)?;
        if matrix.shape() != manifest.shape {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: format!(
                    "snapshot is {}x{}, manifest says {}x{}",
                    matrix.nrows(),
                    matrix.ncols(),
                    manifest.shape.0,
                    manifest.shape.1
                ),
            });
        }
        snapshots.push(SolutionSnapshot {
            matrix,
            source_id: entry.id,
        });
    }
    Ok((manifest, params, snapshots))
}

/// Directory layout helper used by the CLI for prediction outputs.
pub fn prediction_file(dir: &Path, row: usize) -> PathBuf {
    dir.join(snapshot_file_name(row))
}

/// Writes a predictions manifest mirroring the dataset layout.
pub fn write_predictions_manifest(
    dir: &Path,
    param_dim: usize,
    shape: (usize, usize),
    n: usize,
) -> Result<()> {
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        n_samples: n,
        param_dim,
        shape,
        layout: "column-major".into(),
        seed: 0,
        generator: GeneratorInfo {
            kind: "prediction".into(),
            rng: None,
            t_final: None,
            dt: None,
        },
        samples: (0..n)
            .map(|i| SampleEntry {
                id: i,
                snapshot: snapshot_file_name(i),
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    writeln!(f, "{json}").map_err(|e| io_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_csv_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(5, 4, |i, j| {
            (i as f64 + 1.0).sqrt() * (-1.0_f64).powi(j as i32) / 3.0
        });
        let p1 = dir.path().join("a.csv");
        write_matrix_csv(&p1, &m).unwrap();
        let m2 = read_matrix_csv(&p1).unwrap();
        let p2 = dir.path().join("b.csv");
        write_matrix_csv(&p2, &m2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(m, m2);
    }

    #[test]
    fn dataset_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let params = vec![
            ParameterPoint::new(vec![0.25, -0.5]).unwrap(),
            ParameterPoint::new(vec![1.0 / 3.0, 0.125]).unwrap(),
        ];
        let snapshots: Vec<SolutionSnapshot> = (0..2)
            .map(|k| SolutionSnapshot {
                matrix: DMatrix::from_fn(3, 2, |i, j| (i + j + k) as f64 / 7.0),
                source_id: k,
            })
            .collect();
        let manifest = write_dataset(
            dir.path(),
            7,
            GeneratorInfo::external(),
            "column-major",
            &params,
            &snapshots,
        )
        .unwrap();
        assert_eq!(manifest.shape, (3, 2));
        let (m2, p2, s2) = read_dataset(dir.path()).unwrap();
        assert_eq!(m2.n_samples, 2);
        assert_eq!(m2.layout, "column-major");
        assert_eq!(p2[0].values, params[0].values);
        assert_eq!(s2[1].matrix, snapshots[1].matrix);
    }

    #[test]
    fn params_csv_header_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.csv");
        write_params_csv(&path, &[]).unwrap();
        assert_eq!(read_params_csv(&path).unwrap().len(), 0);

        fs::write(&path, "").unwrap();
        assert_eq!(read_params_csv(&path).unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn float_rendering_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_f64(x);
            let y: f64 = s.parse().unwrap();
            prop_assert_eq!(x.to_bits(), y.to_bits());
            prop_assert_eq!(format_f64(y), s);
        }
    }
}
