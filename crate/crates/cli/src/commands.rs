use std::fs;
use std::path::Path;

use grassgp::bundle;
use grassgp::clustering::ClusterConfig;
use grassgp::dataset::{
    self, read_dataset, read_params_csv, write_dataset, write_matrix_csv, GeneratorInfo,
};
use grassgp::ko::{sample_ko_dataset, KoConfig};
use grassgp::pipeline::{
    self, predict_solution_detailed, train_surrogate, SubclusterMode, SurrogateConfig,
};
use grassgp::report;
use grassgp::Error;

use crate::SubclusterArg;

type CmdResult = Result<u8, Error>;

fn parse_shape(text: &str) -> Result<(usize, usize), Error> {
    let mut parts = text.split(['x', 'X']);
    let bad = || Error::InvalidArgument(format!("shape must look like 100x100, got {text:?}"));
    let n: usize = parts
        .next()
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(bad)?;
    let m: usize = parts
        .next()
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() || n == 0 || m == 0 {
        return Err(bad());
    }
    Ok((n, m))
}

pub fn generate_ko(
    n_samples: usize,
    seed: u64,
    out: &Path,
    shape: Option<&str>,
    t_final: f64,
    dt: f64,
) -> CmdResult {
    let shape = shape.map(parse_shape).transpose()?;
    let config = KoConfig {
        t_final,
        dt,
        v1_init: 1.0,
    };
    let steps = config.n_steps()?;
    if let Some((n, m)) = shape {
        if n * m != steps {
            return Err(Error::ShapeError(format!(
                "shape {n}x{m} does not match the {steps}-step trajectory"
            )));
        }
    }
    let (params, snapshots) = sample_ko_dataset(n_samples, seed, &config, shape)?;
    let generator = GeneratorInfo {
        kind: "kraichnan-orszag".into(),
        rng: Some("chacha8".into()),
        t_final: Some(t_final),
        dt: Some(dt),
    };
    let manifest = write_dataset(out, seed, generator, "row-major", &params, &snapshots)?;
    println!(
        "wrote {} snapshots of shape {}x{} to {}",
        manifest.n_samples,
        manifest.shape.0,
        manifest.shape.1,
        out.display()
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    data: &Path,
    out: &Path,
    n_start: usize,
    n_max: Option<usize>,
    n_min_points: usize,
    threshold: f64,
    pass_fraction: f64,
    seed: u64,
    subcluster: SubclusterArg,
) -> CmdResult {
    let (_, params, snapshots) = read_dataset(data)?;
    let config = SurrogateConfig {
        cluster: ClusterConfig {
            n_min_points,
            n_max_clusters: n_max,
            error_threshold: threshold,
            pass_fraction,
            n_start,
        },
        subcluster: match subcluster {
            SubclusterArg::Auto => SubclusterMode::Auto,
            SubclusterArg::On => SubclusterMode::On,
            SubclusterArg::Off => SubclusterMode::Off,
        },
        seed,
        ..SurrogateConfig::default()
    };
    let model = train_surrogate(&params, &snapshots, &config)?;
    bundle::save_model(out, &model)?;
    let diag_path = diagnostics_path(out);
    fs::write(&diag_path, report::diagnostics_csv(&model)).map_err(|e| Error::Io {
        path: diag_path.display().to_string(),
        source: e,
    })?;
    println!(
        "chosen n_c = {}, pass fraction = {:.3}, model -> {}, diagnostics -> {}",
        model.diagnostics.cluster.chosen_n_c,
        model.diagnostics.cluster.pass_fraction_achieved,
        out.display(),
        diag_path.display()
    );
    if model.diagnostics.cluster.converged {
        Ok(0)
    } else {
        println!(
            "warning: cluster budget exhausted at n_max without meeting the error criterion; \
             best labelling kept"
        );
        Ok(2)
    }
}

pub fn diagnostics_path(bundle_path: &Path) -> std::path::PathBuf {
    let mut name = bundle_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    name.push_str(".diagnostics.csv");
    bundle_path.with_file_name(name)
}

pub fn predict(model_path: &Path, params_path: &Path, out: &Path) -> CmdResult {
    let model = bundle::load_model(model_path)?;
    let params = read_params_csv(params_path)?;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    let dim = model.train_params[0].dim();
    for (row, p) in params.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "row {row}: expected {dim} parameter components, found {}",
                p.dim()
            )));
        }
        let prediction = predict_solution_detailed(&model, p)?;
        write_matrix_csv(&dataset::prediction_file(out, row), &prediction.matrix)?;
        if prediction.sigma_order_violations > 0 {
            eprintln!(
                "note: row {row}: {} predicted singular values out of order",
                prediction.sigma_order_violations
            );
        }
    }
    dataset::write_predictions_manifest(out, dim, model.shape, params.len())?;
    println!("wrote {} predictions to {}", params.len(), out.display());
    Ok(0)
}

pub fn evaluate(model_path: &Path, data: &Path, out: &Path) -> CmdResult {
    let model = bundle::load_model(model_path)?;
    let (_, params, snapshots) = read_dataset(data)?;
    let (mean, per_point) = pipeline::evaluate(&model, &params, &snapshots)?;
    fs::write(out, report::report_csv(&per_point, mean)).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    println!(
        "mean frobenius error {mean:.6e} over {} samples -> {}",
        per_point.len(),
        out.display()
    );
    Ok(0)
}

pub fn inspect_clusters(model_path: &Path, out: &Path) -> CmdResult {
    let model = bundle::load_model(model_path)?;
    fs::write(out, report::clusters_csv(&model)).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    println!(
        "wrote cluster table for {} samples -> {}",
        model.train_params.len(),
        out.display()
    );
    Ok(0)
}
