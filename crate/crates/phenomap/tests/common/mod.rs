#![allow(dead_code)]

use std::path::Path;

use phenomap::pipeline::{run_pipeline, SweepOptions};
use phenomap::schema::SchemaConfig;
use phenomap::artifact::PipelineArtifact;
use phenomap_core::rng::rng_from;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const SCHEMA: &str = r#"{
  "columns": {"x0": "numeric", "x1": "numeric", "x2": "numeric", "x3": "numeric",
              "site": "categorical", "cc": "binary", "dispo": "categorical", "label": "numeric"},
  "complaint_flags": ["cc"],
  "outcome": {"column": "dispo", "positive": "admit"},
  "ground_truth": "label"
}"#;

/// Three well separated blobs with a correlated category, a complaint flag,
/// an outcome and about 3% missing numerics.
pub fn blob_csv(rows: usize, seed: u64) -> String {
    let mut rng = rng_from(seed);
    let mut out = String::from("x0,x1,x2,x3,site,cc,dispo,label\n");
    for i in 0..rows {
        let c = i % 3;
        let mut fields: Vec<String> = (0..4)
            .map(|d| {
                let centre = if d == c { 8.0 } else { 0.0 };
                let v: f64 = StandardNormal.sample(&mut rng);
                if rng.random::<f64>() < 0.03 {
                    "NA".to_owned()
                } else {
                    format!("{}", centre + v)
                }
            })
            .collect();
        fields.push(["north", "south", "east"][c].to_owned());
        fields.push(if rng.random::<f64>() < 0.8 { "1" } else { "0" }.to_owned());
        let admit = rng.random::<f64>() < [0.1, 0.5, 0.9][c];
        fields.push(if admit { "admit" } else { "home" }.to_owned());
        fields.push(c.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn schema() -> SchemaConfig {
    serde_json::from_str(SCHEMA).unwrap()
}

pub fn small_options(seed: u64) -> SweepOptions {
    SweepOptions {
        neighbors: vec![10],
        min_dists: vec![0.1],
        include_pca: true,
        n_min: 2,
        n_max: 4,
        seed,
        epochs: Some(60),
        threads: 1,
        hogwild: false,
    }
}

pub fn write_fixture(dir: &Path, rows: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data.csv");
    let schema = dir.join("schema.json");
    std::fs::write(&data, blob_csv(rows, seed)).unwrap();
    std::fs::write(&schema, SCHEMA).unwrap();
    (data, schema)
}

pub fn fitted_artifact(rows: usize, seed: u64) -> PipelineArtifact {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_fixture(dir.path(), rows, seed);
    let schema = schema();
    let table = phenomap::io::load_csv(&data, &schema).unwrap();
    run_pipeline(&table, &schema, &small_options(seed)).unwrap().artifact
}
