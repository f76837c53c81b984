//! Plot-ready CSV renderings of training diagnostics, evaluation reports
//! and cluster membership tables. Rendering is deterministic so repeated
//! runs with the same seed produce byte-identical files.

use crate::dataset::format_f64;
use crate::pipeline::SurrogateModel;

/// Per-cluster training diagnostics:
/// `cluster_id,size,epsilon_h,pass,sublabel_count`.
pub fn diagnostics_csv(model: &SurrogateModel) -> String {
    let threshold = model.config.cluster.error_threshold;
    let mut out = String::from("cluster_id,size,epsilon_h,pass,sublabel_count\n");
    for cluster in &model.clusters {
        let eps = model.diagnostics.cluster.per_cluster_mean_error[cluster.cluster_id];
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            cluster.cluster_id,
            cluster.member_ids.len(),
            format_f64(eps),
            if eps <= threshold { "pass" } else { "fail" },
            cluster.submodels.len(),
        ));
    }
    out
}

/// Per-sample evaluation report with a trailing summary:
/// `sample_id,frobenius_error` rows then `mean`, `min`, `max` rows.
pub fn report_csv(per_point: &[f64], mean: f64) -> String {
    let mut out = String::from("sample_id,frobenius_error\n");
    for (i, e) in per_point.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", format_f64(*e)));
    }
    let min = per_point.iter().copied().fold(f64::INFINITY, f64::min);
    let max = per_point.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.push_str(&format!("mean,{}\n", format_f64(mean)));
    out.push_str(&format!(
        "min,{}\n",
        format_f64(if per_point.is_empty() { 0.0 } else { min })
    ));
    out.push_str(&format!(
        "max,{}\n",
        format_f64(if per_point.is_empty() { 0.0 } else { max })
    ));
    out
}

/// Scatter-plot table of the training set:
/// `sample_id,xi_1..xi_nd,cluster_id,sublabel,epsilon_h`.
pub fn clusters_csv(model: &SurrogateModel) -> String {
    let dim = model.train_params.first().map(|p| p.dim()).unwrap_or(0);
    let mut out = String::from("sample_id");
    for d in 0..dim {
        out.push_str(&format!(",xi_{}", d + 1));
    }
    out.push_str(",cluster_id,sublabel,epsilon_h\n");
    for (i, p) in model.train_params.iter().enumerate() {
        let cluster_id = model.labels[i];
        let sublabel = model.clusters[cluster_id].sublabel_of_global(i);
        let eps = model.diagnostics.cluster.per_cluster_mean_error[cluster_id];
        out.push_str(&i.to_string());
        for v in &p.values {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push_str(&format!(",{cluster_id},{sublabel},{}\n", format_f64(eps)));
    }
    out
}
