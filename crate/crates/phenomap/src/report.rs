//! Line-oriented output files. Each starts with `#` comment lines naming the
//! format and version, followed by a CSV header and rows.

use std::path::{Path, PathBuf};

use phenomap_core::stability::{ConfigStatus, ReducerSpec, SweepReport};

use crate::artifact::{PipelineArtifact, SelectedModel};
use crate::error::Result;
use crate::io::write_commented_csv;
use crate::pipeline::Projection;

pub const REPORT_HEADER: [&str; 10] = [
    "reducer",
    "n_neighbors",
    "min_dist",
    "n_clusters",
    "mean_pairwise_ari",
    "mean_nonnull",
    "valid",
    "selected",
    "ground_truth_ari",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn spec_fields(spec: &ReducerSpec) -> [String; 3] {
    match spec {
        ReducerSpec::Umap { n_neighbors, min_dist } => ["umap".into(), n_neighbors.to_string(), min_dist.to_string()],
        ReducerSpec::Pca => ["pca".into(), String::new(), String::new()],
    }
}

fn status(s: &ConfigStatus) -> String {
    match s {
        ConfigStatus::Ok => "ok".into(),
        ConfigStatus::Failed(m) => format!("failed: {m}"),
    }
}

fn selection_line(report: &SweepReport) -> String {
    match report.selected() {
        Some(c) => {
            let [r, k, d] = spec_fields(&c.config.reducer);
            format!("selected: reducer={r} n_neighbors={k} min_dist={d} n_clusters={}", c.config.n_clusters)
        }
        None => "selected: none (no stable clustering)".into(),
    }
}

pub fn write_report(path: &Path, report: &SweepReport, seed: u64) -> Result<()> {
    let comments = vec![
        "phenomap sweep report v1".to_owned(),
        format!("seed: {seed}"),
        format!("folds: {}", report.fold_count),
        format!("test_rows: {}", report.test_rows),
        selection_line(report),
    ];
    let rows = report.configs.iter().map(|c| {
        let [r, k, d] = spec_fields(&c.config.reducer);
        vec![
            r,
            k,
            d,
            c.config.n_clusters.to_string(),
            opt(c.mean_pairwise_ari),
            c.mean_nonnull.to_string(),
            c.valid.to_string(),
            c.selected.to_string(),
            opt(c.ground_truth_ari),
            status(&c.status),
        ]
    });
    write_commented_csv(path, &comments, &REPORT_HEADER, rows)
}

/// One row per (reducer, n) with the per-fold non-null counts.
pub fn write_ari_curves(path: &Path, report: &SweepReport) -> Result<()> {
    let mut header: Vec<String> = ["reducer", "n_neighbors", "min_dist", "n_clusters", "mean_pairwise_ari", "ground_truth_ari"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..report.fold_count).map(|f| format!("nonnull_fold{f}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = report.configs.iter().map(|c| {
        let [r, k, d] = spec_fields(&c.config.reducer);
        let mut row = vec![r, k, d, c.config.n_clusters.to_string(), opt(c.mean_pairwise_ari), opt(c.ground_truth_ari)];
        row.extend((0..report.fold_count).map(|f| c.nonnull.get(f).map(|v| v.to_string()).unwrap_or_default()));
        row
    });
    write_commented_csv(path, &["phenomap ari curves v1".to_owned()], &header_refs, rows)
}

/// Writes `fold{f}_train.csv` and `fold{f}_test.csv` for every fold-model.
pub fn write_points(dir: &Path, artifact: &PipelineArtifact, model: &SelectedModel) -> Result<Vec<PathBuf>> {
    let with_truth = artifact.test_truth.is_some();
    let mut header = vec!["fold", "split", "row", "x", "y", "label"];
    if with_truth {
        header.push("truth");
    }
    let mut written = Vec::new();
    for fm in &model.folds {
        let comments = |split: &str| {
            vec![
                "phenomap points v1".to_owned(),
                format!("fold: {} ({split})", fm.fold),
                format!("primary: {}", fm.fold == model.primary_fold),
            ]
        };
        let truth_col = |t: Option<&Vec<u32>>, i: usize| t.map(|t| t[i].to_string());
        let train = dir.join(format!("fold{}_train.csv", fm.fold));
        let rows = (0..fm.train_coords.len()).map(|i| {
            let c = fm.train_coords[i];
            let mut r = vec![
                fm.fold.to_string(),
                "train".into(),
                fm.training_rows[i].to_string(),
                c[0].to_string(),
                c[1].to_string(),
                fm.train_labels[i].to_string(),
            ];
            r.extend(truth_col(fm.train_truth.as_ref(), i));
            r
        });
        write_commented_csv(&train, &comments("train"), &header, rows)?;
        let test = dir.join(format!("fold{}_test.csv", fm.fold));
        let rows = (0..fm.test_coords.len()).map(|i| {
            let c = fm.test_coords[i];
            let mut r = vec![
                fm.fold.to_string(),
                "test".into(),
                artifact.test_rows[i].to_string(),
                c[0].to_string(),
                c[1].to_string(),
                fm.test_partition.labels[i].to_string(),
            ];
            r.extend(truth_col(artifact.test_truth.as_ref(), i));
            r
        });
        write_commented_csv(&test, &comments("test"), &header, rows)?;
        written.push(train);
        written.push(test);
    }
    Ok(written)
}

/// One row per (cluster, top feature) of the primary fold-model's clusters.
pub fn write_profiles(path: &Path, model: &SelectedModel, top_k: usize) -> Result<()> {
    let s = &model.summary;
    let comments = vec![
        "phenomap cluster profiles v1".to_owned(),
        format!("primary_fold: {}", s.primary_fold),
        format!("interval basis: {} (normal approximation, 95%)", s.interval_basis),
        format!("unmatched clusters: {}", s.unmatched.len()),
    ];
    let header = [
        "cluster",
        "count",
        "share",
        "share_mean",
        "share_lower",
        "share_upper",
        "admit_rate_mean",
        "admit_rate_lower",
        "admit_rate_upper",
        "rank",
        "feature",
        "difference",
    ];
    let mut rows = Vec::new();
    for c in &s.clusters {
        let a = c.admit_rate;
        for (rank, fd) in c.profile.top(top_k).iter().enumerate() {
            rows.push(vec![
                c.cluster.to_string(),
                c.profile.count.to_string(),
                c.profile.share.to_string(),
                c.share.mean.to_string(),
                c.share.lower.to_string(),
                c.share.upper.to_string(),
                opt(a.map(|a| a.mean)),
                opt(a.map(|a| a.lower)),
                opt(a.map(|a| a.upper)),
                (rank + 1).to_string(),
                fd.feature.clone(),
                fd.difference.to_string(),
            ]);
        }
    }
    write_commented_csv(path, &comments, &header, rows)
}

pub fn write_projections(path: &Path, projections: &[Projection], model: &SelectedModel) -> Result<()> {
    let k = model.primary().mixture.n();
    let mut header: Vec<String> = ["record", "x", "y", "label"].iter().map(|s| s.to_string()).collect();
    header.extend((0..k).map(|j| format!("p{j}")));
    for f in 0..model.folds.len() {
        header.extend([format!("fold{f}_x"), format!("fold{f}_y"), format!("fold{f}_label")]);
    }
    header.push("warnings".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = projections.iter().enumerate().map(|(i, p)| {
        let mut r = vec![i.to_string(), p.coordinates[0].to_string(), p.coordinates[1].to_string(), p.label.to_string()];
        r.extend(p.responsibilities.iter().map(|v| v.to_string()));
        for (c, l) in p.fold_coordinates.iter().zip(&p.fold_labels) {
            r.extend([c[0].to_string(), c[1].to_string(), l.to_string()]);
        }
        r.push(p.warnings.join("; "));
        r
    });
    let comments = vec![
        "phenomap transform v1".to_owned(),
        format!("primary_fold: {}", model.primary_fold),
    ];
    write_commented_csv(path, &comments, &header_refs, rows)
}
