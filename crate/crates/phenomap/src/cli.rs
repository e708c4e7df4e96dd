use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use phenomap_core::dataset::{generate_synthetic, SyntheticSpec};

use crate::artifact::PipelineArtifact;
use crate::error::{exit, PipelineError, Result};
use crate::io::{load_csv, load_records, write_table};
use crate::pipeline::{project, recompute_profiles, reducer_label, run_pipeline, SweepOptions};
use crate::report::{write_ari_curves, write_points, write_profiles, write_projections, write_report};
use crate::schema::SchemaConfig;
use crate::service::{serve, AppState};

pub const ARTIFACT_FILE: &str = "model.phenomap";
pub const REPORT_FILE: &str = "report.csv";
pub const CURVES_FILE: &str = "ari_curves.csv";

#[derive(Debug, Parser)]
#[command(name = "phenomap", version, about = "Embed, cluster and characterise tabular visit records")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Run the cross-fold stability sweep and write the artifact and reports.
    Sweep(SweepArgs),
    /// Embed and label new records with a fitted artifact.
    Transform(TransformArgs),
    /// Write cluster profiles of the selected configuration.
    Characterize(CharacterizeArgs),
    /// Write per-fold scatter data and ARI curves.
    ExportPlot(ExportArgs),
    /// Serve the JSON API over an artifact.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub features: usize,
    #[arg(long)]
    pub informative: usize,
    #[arg(long)]
    pub classes: usize,
    /// Half side length of the hypercube holding the class centroids.
    #[arg(long)]
    pub sep: f64,
    #[arg(long, default_value_t = 0)]
    pub redundant: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write a matching schema config.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReducerChoice {
    All,
    Umap,
    Pca,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Directory for the artifact, report and ARI curves.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Neighbour counts [default: 2,15,150].
    #[arg(long, value_delimiter = ',')]
    pub neighbors: Option<Vec<usize>>,
    /// Minimum embedding distances [default: 0,0.1,0.25].
    #[arg(long, value_delimiter = ',')]
    pub min_dist: Option<Vec<f64>>,
    /// Smallest cluster count [default: 2].
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Largest cluster count [default: 20].
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Reducers to include [default: all].
    #[arg(long, value_enum)]
    pub reducer: Option<ReducerChoice>,
    /// UMAP training epochs [default: 500 below 10,000 rows, else 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Unsynchronised parallel layout updates (results depend on thread count).
    #[arg(long)]
    pub parallel_sgd: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// CSV of new records; excluded columns may be omitted.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Without an artifact every data endpoint answers 503.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Directory of static UI assets served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

pub fn sweep_options(args: &SweepArgs, schema: &SchemaConfig) -> SweepOptions {
    let mut opts = SweepOptions::default().with_settings(&schema.sweep);
    if let Some(v) = &args.neighbors {
        opts.neighbors = v.clone();
    }
    if let Some(v) = &args.min_dist {
        opts.min_dists = v.clone();
    }
    if let Some(v) = args.n_min {
        opts.n_min = v;
    }
    if let Some(v) = args.n_max {
        opts.n_max = v;
    }
    if let Some(v) = args.seed {
        opts.seed = v;
    }
    if args.epochs.is_some() {
        opts.epochs = args.epochs;
    }
    match args.reducer {
        Some(ReducerChoice::Umap) => opts.include_pca = false,
        Some(ReducerChoice::Pca) => {
            opts.neighbors.clear();
            opts.include_pca = true;
        }
        Some(ReducerChoice::All) | None => {}
    }
    opts.threads = args.threads;
    opts.hogwild = args.parallel_sgd;
    opts
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::new(args.samples, args.features, args.informative, args.classes, args.sep, args.seed);
    spec.redundant_count = args.redundant;
    let data = generate_synthetic(&spec)?;
    write_table(&args.out, &data.table)?;
    if let Some(p) = &args.schema_out {
        let schema = SchemaConfig {
            columns: data
                .table
                .columns()
                .iter()
                .map(|c| (c.name.clone(), c.kind.as_str().to_owned()))
                .collect(),
            excluded: Vec::new(),
            complaint_flags: Vec::new(),
            complaint: None,
            missing_tokens: None,
            outcome: None,
            ground_truth: Some(phenomap_core::dataset::LABEL_COLUMN.to_owned()),
            infer: false,
            sweep: Default::default(),
        };
        let text = serde_json::to_string_pretty(&schema).expect("schema serialises");
        std::fs::write(p, text + "\n").map_err(|e| PipelineError::io(p, e))?;
    }
    log::info!("wrote {} rows to {}", data.table.row_count(), args.out.display());
    Ok(())
}

/// Runs the sweep and writes its files. Returns the exit code: success, or
/// the no-stable-clustering code when nothing met the cutoff.
pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let schema = SchemaConfig::load(&args.schema)?;
    let table = load_csv(&args.data, &schema)?;
    let opts = sweep_options(args, &schema);
    let run = run_pipeline(&table, &schema, &opts)?;
    create_dir(&args.out)?;
    let a = &run.artifact;
    a.save(&args.out.join(ARTIFACT_FILE))?;
    write_report(&args.out.join(REPORT_FILE), &a.report, a.seed)?;
    write_ari_curves(&args.out.join(CURVES_FILE), &a.report)?;
    match a.report.selected() {
        Some(c) => {
            log::info!(
                "selected {} with n = {} (mean pairwise ARI {:.3})",
                reducer_label(&c.config.reducer),
                c.config.n_clusters,
                c.mean_pairwise_ari.unwrap_or(f64::NAN)
            );
            Ok(exit::OK)
        }
        None => {
            log::warn!("no configuration met the validity cutoff; artifact marked as no stable clustering");
            Ok(exit::NO_STABLE_CLUSTERING)
        }
    }
}

pub fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let artifact = PipelineArtifact::load(&args.artifact)?;
    let model = artifact.require_model()?;
    let records = load_records(&args.data, &artifact.test_table, &artifact.schema)?;
    let projections = project(model, &records)?;
    for (i, p) in projections.iter().enumerate() {
        for w in &p.warnings {
            log::warn!("record {i}: {w}");
        }
    }
    write_projections(&args.out, &projections, model)
}

pub fn cmd_characterize(args: &CharacterizeArgs) -> Result<()> {
    let artifact = PipelineArtifact::load(&args.artifact)?;
    let model = artifact.require_model()?;
    if recompute_profiles(&artifact)? != model.profiles {
        return Err(PipelineError::Artifact("stored profiles do not match the stored test rows".into()));
    }
    create_dir(&args.out)?;
    write_profiles(&args.out.join("profiles.csv"), model, args.top_k)?;
    let json = serde_json::to_string_pretty(&model.summary).expect("summary serialises");
    let p = args.out.join("clusters.json");
    std::fs::write(&p, json + "\n").map_err(|e| PipelineError::io(&p, e))?;
    Ok(())
}

pub fn cmd_export_plot(args: &ExportArgs) -> Result<()> {
    let artifact = PipelineArtifact::load(&args.artifact)?;
    create_dir(&args.out)?;
    write_ari_curves(&args.out.join(CURVES_FILE), &artifact.report)?;
    let model = artifact.require_model()?;
    let files = write_points(&args.out, &artifact, model)?;
    log::info!("wrote {} point files to {}", files.len(), args.out.display());
    Ok(())
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let artifact = match &args.artifact {
        Some(p) => Some(Arc::new(PipelineArtifact::load(p)?)),
        None => {
            log::warn!("no artifact given; data endpoints will answer 503");
            None
        }
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| PipelineError::io("tokio runtime", e))?;
    runtime
        .block_on(serve(args.addr, AppState { artifact }, args.static_dir.clone()))
        .map_err(|e| PipelineError::io(args.addr.to_string(), e))
}

/// Dispatches a parsed command line and maps the outcome to an exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| exit::OK),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Transform(a) => cmd_transform(a).map(|_| exit::OK),
        Command::Characterize(a) => cmd_characterize(a).map(|_| exit::OK),
        Command::ExportPlot(a) => cmd_export_plot(a).map(|_| exit::OK),
        Command::Serve(a) => cmd_serve(a).map(|_| exit::OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
