//! The `plancost` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Every command that writes a directory leaves one `run_manifest.json` in
//! it; commands that write a single file leave `<file>.run.json` next to it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SubsecRound, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::collector::{collect, CollectError, CollectionConfig, PostgresBackend, Status};
use crate::evaluate::{evaluate_model, render_report, stratified_split, EvalError, SplitSpec};
use crate::featurize::{
    featurize_corpus, files, load_plan_corpus, read_dataset_csv, read_sequences, sequence_schema, write_dataset_csv,
    write_node_csv, EmbeddingTable, FeatureConfig, FeatureError, FeatureMode, FeaturizerState, NodeTypeEncoding,
    NormScheme, NormStats, TfidfConfig, FEATURIZER_FORMAT_VERSION,
};
use crate::learn::{
    grid_search, write_cv_table, GridSearchSpec, LearnError, ModelDocument, ModelKind, SplitInfo, TrainingData,
};
use crate::plan_ingest::parse_plan_document_lenient;
use crate::workload::{generate_workload_with_report, load_templates, read_workload, write_workload, WorkloadError};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RUN_MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "plancost",
    version,
    about = "Predict PostgreSQL query runtimes from execution plans"
)]
pub struct Cli {
    /// Log progress at info level (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Instantiate the query templates into a workload file.
    GenWorkload(GenWorkloadArgs),
    /// Run a workload with EXPLAIN ANALYZE and store plans plus a manifest.
    Collect(CollectArgs),
    /// Turn collected plans into node and query-level feature files.
    Featurize(FeaturizeArgs),
    /// Grid-search and fit one model on a featurized dataset.
    Train(TrainArgs),
    /// Compare models on a shared stratified test split.
    Evaluate(EvaluateArgs),
    /// Predict the runtime of a single plan.
    Predict(PredictArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenWorkloadArgs {
    /// Directory with q1.sql .. q22.sql and params.manifest.
    #[arg(long)]
    pub templates: PathBuf,
    /// Queries generated per template.
    #[arg(long, default_value_t = 50)]
    pub per_template: usize,
    /// Seed for parameter sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output workload file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CollectArgs {
    /// Workload file written by gen-workload.
    #[arg(long)]
    pub workload: PathBuf,
    /// Environment variable that holds the connection string.
    #[arg(long, default_value = "PLANCOST_DSN")]
    pub dsn_env: String,
    /// Output directory for plans, query texts and manifest.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Executions per query; the median-runtime plan is kept.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Per-statement timeout in seconds.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    /// Run each query once without recording before the measured runs.
    #[arg(long)]
    pub warmup: bool,
    /// SQL run once per session before the workload (repeatable).
    #[arg(long)]
    pub preamble: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    EstimateOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    OneHot,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    Zscore,
    Minmax,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturizeArgs {
    /// Collector output directory, or a directory of plan JSON files.
    #[arg(long)]
    pub plans: PathBuf,
    /// Which plan fields may feed features.
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    /// TF-IDF over the SQL texts as the semantic block.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub tfidf: Switch,
    /// Largest TF-IDF vocabulary.
    #[arg(long, default_value_t = 256)]
    pub max_vocab: usize,
    /// Node-type encoding.
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    pub encoding: EncodingArg,
    /// Normalization applied at training time.
    #[arg(long, value_enum, default_value_t = NormArg::Zscore)]
    pub normalization: NormArg,
    /// Precomputed query embeddings (query_id<TAB>v1,v2,...); replaces TF-IDF.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Linear,
    Forest,
    Gbdt,
    Mlp,
    Lstm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Linear => ModelKind::Linear,
            ModelArg::Forest => ModelKind::Forest,
            ModelArg::Gbdt => ModelKind::Gbdt,
            ModelArg::Mlp => ModelKind::Mlp,
            ModelArg::Lstm => ModelKind::Lstm,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Featurize output directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model family.
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Grid file (JSON: model, folds, seed, params with candidate lists).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Cross-validation folds; overrides the grid file.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for folds and model initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the held-out split; use the same value with evaluate.
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    /// Fraction of each template held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Train on every row instead of the training partition.
    #[arg(long)]
    pub all_rows: bool,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Featurize output directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model files to compare.
    #[arg(long, num_args = 1.., required = true)]
    pub models: Vec<PathBuf>,
    /// Seed of the stratified test split.
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    /// Fraction of each template in the test split.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model file written by train.
    #[arg(long)]
    pub model: PathBuf,
    /// Plan JSON from EXPLAIN (FORMAT JSON), with or without ANALYZE.
    #[arg(long)]
    pub plan: PathBuf,
    /// SQL text of the query; overrides any "Query Text" in the plan.
    #[arg(long)]
    pub sql: Option<PathBuf>,
    /// Embedding file, required by models trained on external embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CollectError> for CliError {
    fn from(e: CollectError) -> Self {
        match e {
            CollectError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Diverged { .. } | LearnError::Io { .. } => CliError::Runtime(e.to_string()),
            LearnError::Feature(f) => f.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model { .. } | EvalError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            EvalError::Learn(l) => l.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime_io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Reproducibility record written next to every pipeline output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunManifest {
    fn new(command: &str, config: &impl Serialize, started_at: DateTime<Utc>) -> Self {
        RunManifest {
            format_version: RUN_MANIFEST_FORMAT_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).expect("arguments serialize"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_at,
            finished_at: started_at,
        }
    }

    fn write(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_at = Utc::now().trunc_subsecs(6);
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| runtime_io(path, e))
    }
}

fn file_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| runtime_io(p, e)),
        _ => Ok(()),
    }
}

fn now() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(6)
}

fn cmd_gen_workload(args: &GenWorkloadArgs) -> Result<(), CliError> {
    let started = now();
    if !args.templates.is_dir() {
        return Err(CliError::Usage(format!(
            "template directory {} not found",
            args.templates.display()
        )));
    }
    let templates = load_templates(&args.templates)?;
    let workload = generate_workload_with_report(&templates, args.per_template, args.seed);
    if workload.duplicate_warnings > 0 {
        log::warn!(
            "{} duplicate parameter bindings survived redraws",
            workload.duplicate_warnings
        );
    }
    let mut buf = Vec::new();
    write_workload(&workload.queries, &mut buf).map_err(|e| runtime_io(&args.out, e))?;
    ensure_parent(&args.out)?;
    fs::write(&args.out, buf).map_err(|e| runtime_io(&args.out, e))?;
    println!("wrote {} statements to {}", workload.queries.len(), args.out.display());

    let mut m = RunManifest::new("gen-workload", args, started);
    m.inputs.push(display(&args.templates));
    m.outputs.push(display(&args.out));
    m.seed = Some(args.seed);
    m.write(&file_manifest_path(&args.out))
}

fn cmd_collect(args: &CollectArgs) -> Result<(), CliError> {
    let started = now();
    let text =
        fs::read_to_string(&args.workload).map_err(|e| CliError::Usage(format!("{}: {e}", args.workload.display())))?;
    let workload = read_workload(&text)?;
    let mut config = CollectionConfig::new(args.dsn_env.clone(), args.out.clone());
    config.timeout = Duration::from_secs(args.timeout);
    config.repeats = args.repeats;
    config.warmup = args.warmup;
    config.preamble = args.preamble.clone();
    config.validate()?;
    fs::create_dir_all(&args.out).map_err(|e| runtime_io(&args.out, e))?;
    let mut backend = PostgresBackend::connect(&config)?;
    let mut progress = |i: usize, n: usize, r: &crate::collector::CollectionRecord| {
        let detail = match (r.status, r.execution_time_ms, &r.error) {
            (Status::Ok, Some(ms), _) => format!("{ms:.3} ms"),
            (_, _, Some(e)) => e.clone(),
            _ => String::new(),
        };
        eprintln!(
            "[{i}/{n}] {} template {} {:?} {detail}",
            r.query_id, r.template_id, r.status
        );
    };
    let records = collect(&workload, &config, &mut backend, Some(&mut progress))?;
    let ok = records.iter().filter(|r| r.status == Status::Ok).count();
    let timeouts = records.iter().filter(|r| r.status == Status::Timeout).count();
    let errors = records.len() - ok - timeouts;
    println!(
        "{ok} ok, {timeouts} timeout, {errors} error of {} queries",
        records.len()
    );

    let mut m = RunManifest::new("collect", args, started);
    m.inputs.push(display(&args.workload));
    m.outputs.push(display(&args.out));
    m.write(&args.out.join(RUN_MANIFEST_FILE))?;
    if ok == 0 {
        return Err(CliError::Runtime("no query was collected successfully".into()));
    }
    if timeouts + errors > 0 {
        log::warn!("{} queries failed; see manifest.tsv", timeouts + errors);
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| runtime_io(path, e))
}

fn cmd_featurize(args: &FeaturizeArgs) -> Result<(), CliError> {
    let started = now();
    if !args.plans.is_dir() {
        return Err(CliError::Usage(format!(
            "plan directory {} not found",
            args.plans.display()
        )));
    }
    let embeddings = match &args.embeddings {
        Some(p) if !p.is_file() => {
            return Err(CliError::Usage(format!("embedding file {} not found", p.display())));
        }
        Some(p) => Some(EmbeddingTable::load(p).map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let config = FeatureConfig {
        mode: match args.mode {
            ModeArg::EstimateOnly => FeatureMode::EstimateOnly,
            ModeArg::Full => FeatureMode::Full,
        },
        node_type_encoding: match args.encoding {
            EncodingArg::OneHot => NodeTypeEncoding::OneHot,
            EncodingArg::Label => NodeTypeEncoding::Label,
        },
        normalization: match args.normalization {
            NormArg::Zscore => NormScheme::Zscore,
            NormArg::Minmax => NormScheme::Minmax,
            NormArg::None => NormScheme::None,
        },
        tfidf: TfidfConfig {
            enabled: args.tfidf == Switch::On,
            max_vocab: args.max_vocab,
        },
        external_embeddings: args.embeddings.clone(),
    };

    let corpus = load_plan_corpus(&args.plans)?;
    let out = featurize_corpus(&corpus, &config, embeddings.as_ref())?;
    for s in &out.skipped {
        log::warn!("skipped {}: {}", s.source, s.reason);
    }
    fs::create_dir_all(&args.out).map_err(|e| runtime_io(&args.out, e))?;
    let dir = &args.out;
    write_node_csv(&dir.join(files::NODES), &out.node_rows)?;
    write_dataset_csv(&dir.join(files::DATASET), &out.dataset)?;
    write_json(&dir.join(files::SEQUENCES), &out.sequences)?;
    let tfidf_path = dir.join(files::TFIDF);
    match &out.tfidf {
        Some(t) => fs::write(&tfidf_path, t.to_json() + "\n").map_err(|e| runtime_io(&tfidf_path, e))?,
        None if tfidf_path.exists() => fs::remove_file(&tfidf_path).map_err(|e| runtime_io(&tfidf_path, e))?,
        None => {}
    }
    write_json(
        &dir.join(files::NORMALIZATION),
        &NormStats::fit(&out.dataset.matrix(), config.normalization),
    )?;
    let mut skipped = String::from("source\treason\n");
    for s in &out.skipped {
        skipped.push_str(&format!("{}\t{}\n", s.source, s.reason.replace(['\t', '\n'], " ")));
    }
    let skipped_path = dir.join(files::SKIPPED);
    fs::write(&skipped_path, skipped).map_err(|e| runtime_io(&skipped_path, e))?;
    let state = FeaturizerState {
        format_version: FEATURIZER_FORMAT_VERSION,
        config: config.clone(),
        schema: out.dataset.schema.clone(),
        sequence_schema: sequence_schema(&config),
        tfidf: out.tfidf.clone(),
        embedding_dim: out.embedding_dim,
        plans_featurized: out.dataset.len(),
        plans_skipped: out.skipped.len(),
    };
    write_json(&dir.join(files::STATE), &state)?;
    println!(
        "featurized {} plans ({} nodes, {} columns), skipped {}",
        out.dataset.len(),
        out.node_rows.len(),
        out.dataset.schema.width(),
        out.skipped.len()
    );

    let mut m = RunManifest::new("featurize", args, started);
    m.inputs.push(display(&args.plans));
    m.outputs.extend(
        [
            files::NODES,
            files::DATASET,
            files::SEQUENCES,
            files::NORMALIZATION,
            files::STATE,
            files::SKIPPED,
        ]
        .iter()
        .map(|f| display(&dir.join(f))),
    );
    if out.tfidf.is_some() {
        m.outputs.push(display(&tfidf_path));
    }
    m.write(&dir.join(RUN_MANIFEST_FILE))?;
    if out.dataset.is_empty() {
        return Err(CliError::Runtime("no plan could be featurized".into()));
    }
    Ok(())
}

struct LoadedDataset {
    state: FeaturizerState,
    dataset: crate::featurize::Dataset,
    sequences: Option<crate::featurize::SequenceSet>,
}

fn load_dataset_dir(dir: &Path, need_sequences: bool) -> Result<LoadedDataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "dataset directory {} not found",
            dir.display()
        )));
    }
    let state_path = dir.join(files::STATE);
    if !state_path.is_file() {
        return Err(CliError::Usage(format!(
            "{} missing; run featurize first",
            state_path.display()
        )));
    }
    let state = FeaturizerState::load(dir).map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = read_dataset_csv(&dir.join(files::DATASET), Some(&state.schema))?;
    let seq_path = dir.join(files::SEQUENCES);
    let sequences = if seq_path.is_file() {
        Some(read_sequences(&seq_path).map_err(|e| CliError::Usage(e.to_string()))?)
    } else if need_sequences {
        return Err(CliError::Usage(format!(
            "{} missing; sequence models need the node-sequence sidecar from featurize",
            seq_path.display()
        )));
    } else {
        None
    };
    Ok(LoadedDataset {
        state,
        dataset,
        sequences,
    })
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let started = now();
    let kind = ModelKind::from(args.model);
    let loaded = load_dataset_dir(&args.dataset, kind.is_sequence())?;
    let mut spec = match &args.grid {
        Some(p) if !p.is_file() => return Err(CliError::Usage(format!("grid file {} not found", p.display()))),
        Some(p) => GridSearchSpec::load(p)?,
        None => GridSearchSpec::default_for(kind, args.seed),
    };
    if spec.model != kind {
        return Err(CliError::Usage(format!(
            "grid file is for {} but --model is {kind}",
            spec.model
        )));
    }
    spec.seed = args.seed;
    if let Some(k) = args.folds {
        spec.folds = k;
    }

    let n = loaded.dataset.len();
    let (train_idx, split) = if args.all_rows {
        ((0..n).collect::<Vec<_>>(), None)
    } else {
        let s = stratified_split(
            &loaded.dataset.template_ids(),
            &SplitSpec {
                test_fraction: args.test_fraction,
                seed: args.split_seed,
            },
        )?;
        for w in &s.warnings {
            log::warn!("{w}");
        }
        let info = SplitInfo {
            seed: args.split_seed,
            test_fraction: args.test_fraction,
            train_rows: s.train.len(),
        };
        (s.train, Some(info))
    };
    let data = TrainingData {
        dataset: &loaded.dataset,
        sequences: loaded.sequences.as_ref(),
        normalization: loaded.state.config.normalization,
    };
    let result = grid_search(&spec, &data, &train_idx)?;

    println!("candidate\tmean_mse\tparams");
    for row in &result.table {
        let marker = if row.candidate == result.best_index { "*" } else { "" };
        println!(
            "{}{marker}\t{:.6}\t{}",
            row.candidate,
            row.mean_mse,
            serde_json::to_string(&row.config).expect("config serializes")
        );
    }

    let columns = if kind.is_sequence() {
        loaded.state.sequence_schema.names()
    } else {
        loaded.state.schema.names()
    };
    let mut doc = ModelDocument::new(result.model, columns, result.normalizers);
    doc.feature_config = Some(loaded.state.config.clone());
    doc.tfidf = loaded.state.tfidf.clone();
    doc.embedding_dim = loaded.state.embedding_dim;
    doc.train_config = Some(result.best);
    doc.split = split;
    ensure_parent(&args.out)?;
    doc.save(&args.out)?;
    let mut cv_name = args.out.file_name().unwrap_or_default().to_os_string();
    cv_name.push(".cv.csv");
    let cv_path = args.out.with_file_name(cv_name);
    write_cv_table(&cv_path, &result.table)?;
    println!("wrote {} model to {}", kind, args.out.display());

    let mut m = RunManifest::new("train", args, started);
    m.inputs.push(display(&args.dataset));
    if let Some(g) = &args.grid {
        m.inputs.push(display(g));
    }
    m.outputs.push(display(&args.out));
    m.outputs.push(display(&cv_path));
    m.seed = Some(args.seed);
    m.write(&file_manifest_path(&args.out))
}

fn model_names(paths: &[PathBuf]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p
            .file_stem()
            .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
        let mut name = stem.clone();
        let mut k = 2;
        while names.contains(&name) {
            name = format!("{stem}_{k}");
            k += 1;
        }
        names.push(name);
    }
    names
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let started = now();
    let loaded = load_dataset_dir(&args.dataset, false)?;
    let spec = SplitSpec {
        test_fraction: args.test_fraction,
        seed: args.split_seed,
    };
    let split = stratified_split(&loaded.dataset.template_ids(), &spec)?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let mut reports = Vec::with_capacity(args.models.len());
    for (path, name) in args.models.iter().zip(model_names(&args.models)) {
        if !path.is_file() {
            return Err(CliError::Usage(format!("model file {} not found", path.display())));
        }
        let doc = ModelDocument::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        match &doc.split {
            Some(s) if s.seed != spec.seed || s.test_fraction != spec.test_fraction => log::warn!(
                "{name} was trained with split seed {} fraction {}; its training rows may overlap this test split",
                s.seed,
                s.test_fraction
            ),
            None => log::warn!("{name} records no training split; its training rows may overlap this test split"),
            _ => {}
        }
        reports.push(evaluate_model(
            &name,
            &doc,
            &loaded.dataset,
            loaded.sequences.as_ref(),
            &split.test,
        )?);
    }
    let written = render_report(&reports, Some(spec), Some(split.train.len()), &args.out)?;
    println!("model\tn\tmse\tr2\tacc10\tmse_raw\tr2_raw\tacc10_raw");
    for r in &reports {
        println!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.2}\t{:.6}\t{:.6}\t{:.2}",
            r.model,
            r.n_test,
            r.transformed.mse,
            r.transformed.r2,
            r.transformed.acc10,
            r.raw.mse,
            r.raw.r2,
            r.raw.acc10
        );
    }

    let mut m = RunManifest::new("evaluate", args, started);
    m.inputs.push(display(&args.dataset));
    m.inputs.extend(args.models.iter().map(|p| display(p)));
    m.outputs.extend(written.iter().map(|p| display(p)));
    m.seed = Some(args.split_seed);
    m.write(&args.out.join(RUN_MANIFEST_FILE))
}

fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let doc = ModelDocument::load(&args.model).map_err(|e| match e {
        LearnError::Io { .. } => CliError::Usage(format!("model file {}: {e}", args.model.display())),
        other => other.into(),
    })?;
    let text = fs::read_to_string(&args.plan).map_err(|e| CliError::Usage(format!("{}: {e}", args.plan.display())))?;
    let mut tree = parse_plan_document_lenient(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(sql) = &args.sql {
        let q = fs::read_to_string(sql).map_err(|e| CliError::Usage(format!("{}: {e}", sql.display())))?;
        tree = tree.with_query_text(q.trim().trim_end_matches(';').trim_end());
    }
    let embeddings = match &args.embeddings {
        Some(p) => Some(EmbeddingTable::load(p).map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let p = doc.predict_plan(&tree, embeddings.as_ref())?;
    let out = json!({
        "query_id": tree.query_id,
        "model": doc.kind.as_str(),
        "predicted_ms": p.predicted_ms,
        "predicted_log": p.predicted_log,
    });
    println!("{out}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenWorkload(a) => cmd_gen_workload(a),
        Command::Collect(a) => cmd_collect(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
