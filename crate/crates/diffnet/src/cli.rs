//! Pipeline orchestration: every stage of the diffusion-prediction workflow
//! as a subcommand with reproducible configuration and seeding.
//!
//! Configuration comes from a single JSON file (`--config`) merged over
//! built-in defaults, with command-line flags winning over both. All
//! randomness flows from one root seed (`rng_seed` in the config or
//! `--rng-seed`); each stage derives its own named streams from it, so any
//! stage can be re-run in isolation and still reproduce byte-identical
//! artifacts.
//!
//! Artifacts land in `--output-dir` under canonical names (`graph.edges`,
//! `events.jsonl`, `dataset_bin{0..3}.csv`, `model_bin{b}.json`, ...), and
//! every run writes `manifest-<subcommand>.json` echoing the effective
//! config, the seed, and a SHA-256 hash of each output file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data validation
//! error, 3 learner failure.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blr::{self, BlrConfig, BlrModel};
use crate::eval::{self, BlrLearner, EvalReport, TopKSelection};
use crate::eventlog::{self, EventLog, Lexicon, MalformedLine, Topic, UserProfile};
use crate::features::{Dataset, FeatureContext, TimeBin};
use crate::forest::{self, ForestConfig, RankedFeature};
use crate::graph::SocialGraph;
use crate::rngs;
use crate::simulator::{self, SynthConfig};
use crate::virality::{self, EventType, ViralityCorpusConfig};

const BIN_COUNT: u8 = 4;

/// Process-level failure classes, each with its own exit code.
#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable/invalid config, missing seed or input path.
    Usage(String),
    /// Input files that do not parse or violate data invariants.
    Data(String),
    /// Model fitting, selection, or evaluation failure.
    Learner(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Learner(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Learner(m) => m,
        }
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::graph::GraphError> for CliError {
    fn from(e: crate::graph::GraphError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::eventlog::EventLogError> for CliError {
    fn from(e: crate::eventlog::EventLogError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::features::FeatureError> for CliError {
    fn from(e: crate::features::FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::blr::BlrError> for CliError {
    fn from(e: crate::blr::BlrError) -> Self {
        CliError::Learner(e.to_string())
    }
}

impl From<crate::forest::ForestError> for CliError {
    fn from(e: crate::forest::ForestError) -> Self {
        CliError::Learner(e.to_string())
    }
}

impl From<crate::eval::EvalError> for CliError {
    fn from(e: crate::eval::EvalError) -> Self {
        CliError::Learner(e.to_string())
    }
}

impl From<crate::simulator::SimError> for CliError {
    fn from(e: crate::simulator::SimError) -> Self {
        match e {
            crate::simulator::SimError::BadParams(_)
            | crate::simulator::SimError::UnknownFeature(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<crate::virality::ViralityError> for CliError {
    fn from(e: crate::virality::ViralityError) -> Self {
        match e {
            crate::virality::ViralityError::BadConfig(_) => CliError::Usage(e.to_string()),
            crate::virality::ViralityError::Blr(_) | crate::virality::ViralityError::Eval(_) => {
                CliError::Learner(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// The file-backed half of the configuration; flags override these values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub simulator: SynthConfig,
    pub learner: LearnerConfig,
    pub eval: EvalSettings,
    pub virality: ViralitySettings,
    /// Root seed; mandatory for any stochastic stage.
    pub rng_seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            simulator: SynthConfig::default(),
            learner: LearnerConfig::default(),
            eval: EvalSettings::default(),
            virality: ViralitySettings::default(),
            rng_seed: None,
        }
    }
}

/// Input locations and the artifact directory. Unset inputs default to the
/// canonical artifact names inside `output_dir`, so stages chain without
/// explicit paths.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
    pub graph: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub topic: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            graph: None,
            events: None,
            profiles: None,
            topic: None,
            lexicon: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub blr: BlrConfig,
    pub forest: ForestConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Stratified cross-validation fold count.
    pub folds: usize,
    /// Train share for repeated holdout.
    pub train_fraction: f64,
    /// Holdout repeats.
    pub repeats: usize,
    /// When set, evaluation selects the top-k features inside each training
    /// fold before fitting.
    pub top_k: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            folds: 10,
            train_fraction: 0.9,
            repeats: 5,
            top_k: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViralitySettings {
    pub corpus: ViralityCorpusConfig,
    /// Verdict on an even vote split.
    pub tie_rule: EventType,
}

impl Default for ViralitySettings {
    fn default() -> Self {
        Self {
            corpus: ViralityCorpusConfig::default(),
            tie_rule: EventType::Trending,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "diffnet",
    version,
    about = "Microscopic diffusion prediction over social event logs",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// JSON pipeline config; flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory receiving all artifacts (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Root seed for every stochastic stage.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world: graph, event log, profiles, topics, and
    /// the planted ground truth.
    Simulate(SimulateArgs),
    /// Validate and normalize an external event log and profile file.
    Ingest(IngestArgs),
    /// Extract the per-bin edge-feature datasets from a log.
    Extract(ExtractArgs),
    /// Fit the full logistic model for each temporal bin.
    Train(TrainArgs),
    /// Fit random forests and write feature-importance rankings.
    Rank(RankArgs),
    /// Refit logistic models on the top-k ranked features.
    RetrainTopk(RetrainTopkArgs),
    /// Cross-validate and repeatedly hold out the per-bin models.
    Evaluate(EvaluateArgs),
    /// Score a fitted model on a dataset from another source.
    CrossTest(CrossTestArgs),
    /// Summarize when topic content is posted, forwarded, and predicted.
    TimeReport(TimeReportArgs),
    /// Train the per-interaction classifier and vote on message virality.
    PredictVirality(PredictViralityArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    edges_per_node: Option<usize>,
    #[arg(long)]
    n_topics: Option<usize>,
    #[arg(long)]
    n_days: Option<u32>,
    #[arg(long)]
    avg_daily_posts: Option<f64>,
    #[arg(long)]
    cascades_per_topic: Option<usize>,
    /// Target positive-label share; omit to leave the intercept at 0.
    #[arg(long)]
    class_balance: Option<f64>,
    /// Planted coefficient as `feature=weight`; repeatable.
    #[arg(long = "planted", value_name = "FEATURE=WEIGHT")]
    planted: Vec<String>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_name = "FILE")]
    events: PathBuf,
    #[arg(long, value_name = "FILE")]
    profiles: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    topic: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    prior_variance: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    features_per_split: Option<usize>,
}

#[derive(Args, Debug)]
struct RetrainTopkArgs {
    /// How many top-ranked features to keep.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["10", "15"]))]
    k: String,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Select the top-k features inside each training fold before fitting.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug)]
struct CrossTestArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct TimeReportArgs {
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    topic: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictViralityArgs {
    #[arg(long)]
    n_messages: Option<usize>,
    #[arg(long)]
    trending_fraction: Option<f64>,
    #[arg(long)]
    trend_reactor_fraction: Option<f64>,
    #[arg(long)]
    signal_shift: Option<f64>,
    /// Verdict on an even vote split: trending or informative.
    #[arg(long, value_parser = parse_event_type)]
    tie_rule: Option<EventType>,
}

fn parse_event_type(s: &str) -> Result<EventType, String> {
    match s {
        "trending" => Ok(EventType::Trending),
        "informative" => Ok(EventType::Informative),
        _ => Err(format!("expected `trending` or `informative`, got {s:?}")),
    }
}

/// Parses the CLI and runs the selected stage, translating failures into
/// the documented exit codes.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    let (name, outputs) = match &cli.command {
        Command::Simulate(args) => ("simulate", run_simulate(&mut cfg, args)?),
        Command::Ingest(args) => ("ingest", run_ingest(&cfg, args)?),
        Command::Extract(args) => ("extract", run_extract(&cfg, args)?),
        Command::Train(args) => ("train", run_train(&mut cfg, args)?),
        Command::Rank(args) => ("rank", run_rank(&mut cfg, args)?),
        Command::RetrainTopk(args) => ("retrain-topk", run_retrain_topk(&cfg, args)?),
        Command::Evaluate(args) => ("evaluate", run_evaluate(&mut cfg, args)?),
        Command::CrossTest(args) => ("cross-test", run_cross_test(&cfg, args)?),
        Command::TimeReport(args) => ("time-report", run_time_report(&cfg, args)?),
        Command::PredictVirality(args) => {
            ("predict-virality", run_predict_virality(&mut cfg, args)?)
        }
    };
    let manifest = write_manifest(&cfg, name, &outputs)?;
    for path in outputs.iter().chain(std::iter::once(&manifest)) {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
    };
    if let Some(dir) = &cli.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    if let Some(seed) = cli.rng_seed {
        cfg.rng_seed = Some(seed);
    }
    Ok(cfg)
}

/// Turns a list of per-key validation failures into one usage error that
/// names every offending key.
fn reject_invalid(stage: &str, problems: Vec<String>) -> Result<(), CliError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(usage(format!(
            "invalid configuration for {stage}:\n  - {}",
            problems.join("\n  - ")
        )))
    }
}

fn required_seed(cfg: &PipelineConfig, stage: &str) -> Result<u64, CliError> {
    cfg.rng_seed.ok_or_else(|| {
        usage(format!(
            "{stage} is stochastic: set rng_seed in the config or pass --rng-seed"
        ))
    })
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.output_dir.join(name)
}

fn ensure_output_dir(cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.paths.output_dir)
        .map_err(|e| data(format!("cannot create output dir: {e}")))
}

/// Resolves an input path: explicit flag, then config, then the canonical
/// artifact name inside the output directory.
fn input_path(
    flag: &Option<PathBuf>,
    configured: &Option<PathBuf>,
    cfg: &PipelineConfig,
    default_name: &str,
) -> PathBuf {
    flag.clone()
        .or_else(|| configured.clone())
        .unwrap_or_else(|| out_path(cfg, default_name))
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input path {} does not exist", path.display())))
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    rng_seed: Option<u64>,
    config: &'a PipelineConfig,
    /// Output file name -> SHA-256 of its content.
    outputs: BTreeMap<String, String>,
}

fn write_manifest(
    cfg: &PipelineConfig,
    subcommand: &str,
    outputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let mut hashes = BTreeMap::new();
    for path in outputs {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        hashes.insert(name, sha256_file(path)?);
    }
    let manifest = Manifest {
        subcommand,
        rng_seed: cfg.rng_seed,
        config: cfg,
        outputs: hashes,
    };
    let path = out_path(cfg, &format!("manifest-{subcommand}.json"));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(data)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn parse_planted(entries: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut weights = BTreeMap::new();
    for entry in entries {
        let (name, value) = entry.split_once('=').ok_or_else(|| {
            usage(format!("--planted expects FEATURE=WEIGHT, got {entry:?}"))
        })?;
        let weight: f64 = value
            .parse()
            .map_err(|e| usage(format!("--planted {entry:?}: bad weight: {e}")))?;
        weights.insert(name.to_string(), weight);
    }
    Ok(weights)
}

fn run_simulate(cfg: &mut PipelineConfig, args: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let seed = required_seed(cfg, "simulate")?;
    let sim = &mut cfg.simulator;
    if let Some(v) = args.n_users {
        sim.n_users = v;
    }
    if let Some(v) = args.edges_per_node {
        sim.edges_per_node = v;
    }
    if let Some(v) = args.n_topics {
        sim.n_topics = v;
    }
    if let Some(v) = args.n_days {
        sim.n_days = v;
    }
    if let Some(v) = args.avg_daily_posts {
        sim.avg_daily_posts = v;
    }
    if let Some(v) = args.cascades_per_topic {
        sim.cascades_per_topic = v;
    }
    if let Some(v) = args.class_balance {
        sim.class_balance = Some(v);
    }
    if !args.planted.is_empty() {
        sim.planted_weights = parse_planted(&args.planted)?;
    }
    sim.rng_seed = rngs::seed_for(seed, "simulate", 0);
    let mut problems = Vec::new();
    if let Err(e) = sim.validate() {
        problems.push(format!("simulator: {e}"));
    }
    reject_invalid("simulate", problems)?;

    let synth = simulator::synthesize(&cfg.simulator)?;
    ensure_output_dir(cfg)?;
    let mut outputs = Vec::new();

    let graph_path = out_path(cfg, "graph.edges");
    synth.graph.write_edge_list_file(&graph_path)?;
    outputs.push(graph_path);

    let events_path = out_path(cfg, "events.jsonl");
    eventlog::write_events_file(synth.log.records(), &events_path)?;
    outputs.push(events_path);

    let profiles_path = out_path(cfg, "profiles.jsonl");
    eventlog::write_profiles_file(&synth.profiles, &profiles_path)?;
    outputs.push(profiles_path);

    for (t, topic) in synth.topics.iter().enumerate() {
        let path = out_path(cfg, &format!("topic_{t}.json"));
        write_pretty_json(&path, topic)?;
        outputs.push(path);
    }

    let truth_path = out_path(cfg, "ground_truth.json");
    synth.ground_truth.write_json_file(&truth_path)?;
    outputs.push(truth_path);

    Ok(outputs)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    n_events: usize,
    n_profiles: usize,
    n_malformed_events: usize,
    n_malformed_profiles: usize,
    n_dangling_refs: usize,
    malformed_events: &'a [MalformedLine],
    malformed_profiles: &'a [MalformedLine],
    dangling_refs: &'a [u64],
}

fn run_ingest(cfg: &PipelineConfig, args: &IngestArgs) -> Result<Vec<PathBuf>, CliError> {
    require_exists(&args.events)?;
    require_exists(&args.profiles)?;
    let report = eventlog::ingest(&args.events, &args.profiles)?;
    ensure_output_dir(cfg)?;

    let events_path = out_path(cfg, "events_clean.jsonl");
    eventlog::write_events_file(report.log.records(), &events_path)?;
    let profiles_path = out_path(cfg, "profiles_clean.jsonl");
    eventlog::write_profiles_file(&report.profiles, &profiles_path)?;

    let summary = IngestSummary {
        n_events: report.log.records().len(),
        n_profiles: report.profiles.len(),
        n_malformed_events: report.malformed_events.len(),
        n_malformed_profiles: report.malformed_profiles.len(),
        n_dangling_refs: report.dangling_refs.len(),
        malformed_events: &report.malformed_events,
        malformed_profiles: &report.malformed_profiles,
        dangling_refs: &report.dangling_refs,
    };
    let report_path = out_path(cfg, "ingest_report.json");
    write_pretty_json(&report_path, &summary)?;

    Ok(vec![events_path, profiles_path, report_path])
}

fn load_topic(path: &Path) -> Result<Topic, CliError> {
    let text = fs::read_to_string(path)?;
    let topic: Topic = serde_json::from_str(&text)
        .map_err(|e| data(format!("invalid topic file {}: {e}", path.display())))?;
    if topic.keywords.is_empty() {
        return Err(data(format!(
            "topic file {} has no keywords",
            path.display()
        )));
    }
    Ok(topic)
}

fn load_log_and_profiles(
    events: &Path,
    profiles: &Path,
) -> Result<(EventLog, Vec<UserProfile>), CliError> {
    let report = eventlog::ingest(events, profiles)?;
    Ok((report.log, report.profiles))
}

fn run_extract(cfg: &PipelineConfig, args: &ExtractArgs) -> Result<Vec<PathBuf>, CliError> {
    let graph_path = input_path(&args.graph, &cfg.paths.graph, cfg, "graph.edges");
    let events_path = input_path(&args.events, &cfg.paths.events, cfg, "events.jsonl");
    let profiles_path = input_path(&args.profiles, &cfg.paths.profiles, cfg, "profiles.jsonl");
    let topic_path = input_path(&args.topic, &cfg.paths.topic, cfg, "topic_0.json");
    for path in [&graph_path, &events_path, &profiles_path, &topic_path] {
        require_exists(path)?;
    }
    let lexicon_path = args.lexicon.clone().or_else(|| cfg.paths.lexicon.clone());
    let lexicon = match &lexicon_path {
        None => None,
        Some(path) => {
            require_exists(path)?;
            Some(Lexicon::read(BufReader::new(File::open(path)?))?)
        }
    };

    let graph = SocialGraph::from_edge_list_file(&graph_path)?;
    let (log, profiles) = load_log_and_profiles(&events_path, &profiles_path)?;
    let topic = load_topic(&topic_path)?;
    let ctx = FeatureContext::new(&graph, &log, &profiles, &topic, lexicon.as_ref());

    ensure_output_dir(cfg)?;
    let mut outputs = Vec::new();
    for b in 0..BIN_COUNT {
        let bin = TimeBin::new(b)?;
        let ds = ctx.build_dataset(bin);
        let path = out_path(cfg, &format!("dataset_bin{b}.csv"));
        ds.write_csv_file(&path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

fn load_datasets(cfg: &PipelineConfig) -> Result<[Dataset; 4], CliError> {
    let mut datasets = Vec::with_capacity(4);
    for b in 0..BIN_COUNT {
        let path = out_path(cfg, &format!("dataset_bin{b}.csv"));
        require_exists(&path)?;
        datasets.push(Dataset::read_csv_file(&path)?);
    }
    Ok(datasets.try_into().expect("exactly four bins"))
}

fn run_train(cfg: &mut PipelineConfig, args: &TrainArgs) -> Result<Vec<PathBuf>, CliError> {
    if let Some(v) = args.prior_variance {
        cfg.learner.blr.prior_variance = v;
    }
    if let Some(v) = args.tol {
        cfg.learner.blr.tol = v;
    }
    if let Some(v) = args.max_iter {
        cfg.learner.blr.max_iter = v;
    }
    let mut problems = Vec::new();
    if let Err(e) = cfg.learner.blr.validate() {
        problems.push(format!("learner.blr: {e}"));
    }
    reject_invalid("train", problems)?;

    let datasets = load_datasets(cfg)?;
    let mut outputs = Vec::new();
    for (b, ds) in datasets.iter().enumerate() {
        let model = blr::fit_dataset(ds, &cfg.learner.blr)?;
        let path = out_path(cfg, &format!("model_bin{b}.json"));
        model.write_json_file(&path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

fn run_rank(cfg: &mut PipelineConfig, args: &RankArgs) -> Result<Vec<PathBuf>, CliError> {
    let seed = required_seed(cfg, "rank")?;
    let f = &mut cfg.learner.forest;
    if let Some(v) = args.n_trees {
        f.n_trees = v;
    }
    if let Some(v) = args.max_depth {
        f.max_depth = v;
    }
    if let Some(v) = args.min_leaf {
        f.min_leaf = v;
    }
    if let Some(v) = args.features_per_split {
        f.features_per_split = Some(v);
    }

    let datasets = load_datasets(cfg)?;
    let mut problems = Vec::new();
    if let Err(e) = cfg.learner.forest.validate(datasets[0].schema.len()) {
        problems.push(format!("learner.forest: {e}"));
    }
    reject_invalid("rank", problems)?;

    let mut outputs = Vec::new();
    let n_features = datasets[0].schema.len();
    let mut pooled = vec![0.0f64; n_features];
    for (b, ds) in datasets.iter().enumerate() {
        let fitted = forest::fit(ds, &cfg.learner.forest, rngs::seed_for(seed, "rank", b as u64))?;
        let ranking = fitted.importance_ranking();
        for r in &ranking {
            pooled[r.index] += r.importance / 4.0;
        }
        let path = out_path(cfg, &format!("ranking_bin{b}.csv"));
        forest::write_ranking_csv_file(&ranking, &path)?;
        outputs.push(path);
    }

    let schema = &datasets[0].schema;
    let mut order: Vec<usize> = (0..n_features).collect();
    order.sort_by(|&a, &b| pooled[b].total_cmp(&pooled[a]).then(a.cmp(&b)));
    let pooled_ranking: Vec<RankedFeature> = order
        .iter()
        .enumerate()
        .map(|(pos, &index)| RankedFeature {
            rank: pos + 1,
            index,
            name: schema[index].clone(),
            importance: pooled[index],
        })
        .collect();
    let pooled_path = out_path(cfg, "ranking_pooled.csv");
    forest::write_ranking_csv_file(&pooled_ranking, &pooled_path)?;
    outputs.push(pooled_path);
    Ok(outputs)
}

fn run_retrain_topk(cfg: &PipelineConfig, args: &RetrainTopkArgs) -> Result<Vec<PathBuf>, CliError> {
    let k: usize = args.k.parse().expect("clap restricted the values");
    let datasets = load_datasets(cfg)?;
    let mut outputs = Vec::new();
    for (b, ds) in datasets.iter().enumerate() {
        let ranking_path = out_path(cfg, &format!("ranking_bin{b}.csv"));
        let ranking = if ranking_path.exists() {
            forest::read_ranking_csv_file(&ranking_path)?
        } else {
            let seed = required_seed(cfg, "retrain-topk (no ranking file present)")?;
            let fitted =
                forest::fit(ds, &cfg.learner.forest, rngs::seed_for(seed, "rank", b as u64))?;
            fitted.importance_ranking()
        };
        let keep = forest::select_top_k(&ranking, k)?;
        let reduced = ds.select_columns(&keep)?;
        let model = blr::fit_dataset(&reduced, &cfg.learner.blr)?;
        let path = out_path(cfg, &format!("model_top{k}_bin{b}.json"));
        model.write_json_file(&path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

/// Both evaluation procedures for one bin.
#[derive(Serialize, Deserialize)]
pub struct BinEvaluation {
    pub cv: EvalReport,
    pub holdout: EvalReport,
}

fn run_evaluate(cfg: &mut PipelineConfig, args: &EvaluateArgs) -> Result<Vec<PathBuf>, CliError> {
    let seed = required_seed(cfg, "evaluate")?;
    let e = &mut cfg.eval;
    if let Some(v) = args.folds {
        e.folds = v;
    }
    if let Some(v) = args.train_fraction {
        e.train_fraction = v;
    }
    if let Some(v) = args.repeats {
        e.repeats = v;
    }
    if let Some(v) = args.top_k {
        e.top_k = Some(v);
    }

    let mut problems = Vec::new();
    if cfg.eval.folds < 2 {
        problems.push(format!("eval.folds: must be at least 2, got {}", cfg.eval.folds));
    }
    if !(cfg.eval.train_fraction > 0.0 && cfg.eval.train_fraction < 1.0) {
        problems.push(format!(
            "eval.train_fraction: must be inside (0, 1), got {}",
            cfg.eval.train_fraction
        ));
    }
    if cfg.eval.repeats == 0 {
        problems.push("eval.repeats: must be at least 1".to_string());
    }
    if let Err(err) = cfg.learner.blr.validate() {
        problems.push(format!("learner.blr: {err}"));
    }
    reject_invalid("evaluate", problems)?;

    let datasets = load_datasets(cfg)?;
    if let Some(k) = cfg.eval.top_k {
        if k == 0 || k > datasets[0].schema.len() {
            return Err(usage(format!(
                "eval.top_k: must be in 1..={}, got {k}",
                datasets[0].schema.len()
            )));
        }
    }

    let mut outputs = Vec::new();
    let mut evaluations = Vec::new();
    for (b, ds) in datasets.iter().enumerate() {
        let learner: BlrLearner = match cfg.eval.top_k {
            None => BlrLearner::new(cfg.learner.blr),
            Some(k) => BlrLearner::with_selection(
                cfg.learner.blr,
                TopKSelection {
                    forest: cfg.learner.forest,
                    k,
                    rng_seed: rngs::seed_for(seed, "evaluate-forest", b as u64),
                },
            ),
        };
        let stage_seed = rngs::seed_for(seed, "evaluate", b as u64);
        let cv = eval::cross_validate(&learner, ds, cfg.eval.folds, stage_seed)?;
        let holdout = eval::holdout(
            &learner,
            ds,
            cfg.eval.train_fraction,
            cfg.eval.repeats,
            stage_seed,
        )?;
        let bin_eval = BinEvaluation { cv, holdout };
        let path = out_path(cfg, &format!("eval_bin{b}.json"));
        write_pretty_json(&path, &bin_eval)?;
        outputs.push(path);
        evaluations.push(bin_eval);
    }

    let summary_path = out_path(cfg, "eval_summary.csv");
    let mut text = String::from("bin,procedure,metric,mean,stddev\n");
    for (b, bin_eval) in evaluations.iter().enumerate() {
        for (procedure, report) in [("cv", &bin_eval.cv), ("holdout", &bin_eval.holdout)] {
            for row in &report.summary {
                text.push_str(&format!(
                    "{b},{procedure},{},{:.8e},{:.8e}\n",
                    row.metric, row.mean, row.stddev
                ));
            }
        }
    }
    fs::write(&summary_path, text)?;
    outputs.push(summary_path);
    Ok(outputs)
}

fn run_cross_test(cfg: &PipelineConfig, args: &CrossTestArgs) -> Result<Vec<PathBuf>, CliError> {
    require_exists(&args.model)?;
    require_exists(&args.dataset)?;
    let model = BlrModel::from_json_file(&args.model)
        .map_err(|e| data(format!("cannot load model {}: {e}", args.model.display())))?;
    let ds = Dataset::read_csv_file(&args.dataset)?;
    let report = eval::cross_test(&model, &ds)?;
    ensure_output_dir(cfg)?;
    let path = out_path(cfg, "cross_test_report.json");
    report
        .write_json_file(&path)
        .map_err(|e| data(format!("cannot write report: {e}")))?;
    Ok(vec![path])
}

fn run_time_report(cfg: &PipelineConfig, args: &TimeReportArgs) -> Result<Vec<PathBuf>, CliError> {
    let events_path = input_path(&args.events, &cfg.paths.events, cfg, "events.jsonl");
    let topic_path = input_path(&args.topic, &cfg.paths.topic, cfg, "topic_0.json");
    require_exists(&events_path)?;
    require_exists(&topic_path)?;

    let (records, _malformed) =
        eventlog::read_events(BufReader::new(File::open(&events_path)?))?;
    let log = EventLog::from_records(records)?;
    let topic = load_topic(&topic_path)?;
    let datasets = load_datasets(cfg)?;
    let mut models = Vec::with_capacity(4);
    for b in 0..BIN_COUNT {
        let path = out_path(cfg, &format!("model_bin{b}.json"));
        require_exists(&path)?;
        models.push(
            BlrModel::from_json_file(&path)
                .map_err(|e| data(format!("cannot load model {}: {e}", path.display())))?,
        );
    }
    let models: [BlrModel; 4] = models.try_into().expect("exactly four bins");

    let report = eval::time_to_tweet_report(&log, &topic, &datasets, &models)?;
    let path = out_path(cfg, "time_report.csv");
    report
        .write_csv_file(&path)
        .map_err(|e| data(format!("cannot write report: {e}")))?;
    Ok(vec![path])
}

fn run_predict_virality(
    cfg: &mut PipelineConfig,
    args: &PredictViralityArgs,
) -> Result<Vec<PathBuf>, CliError> {
    let seed = required_seed(cfg, "predict-virality")?;
    let v = &mut cfg.virality;
    if let Some(n) = args.n_messages {
        v.corpus.n_messages = n;
    }
    if let Some(f) = args.trending_fraction {
        v.corpus.trending_fraction = f;
    }
    if let Some(f) = args.trend_reactor_fraction {
        v.corpus.trend_reactor_fraction = f;
    }
    if let Some(s) = args.signal_shift {
        v.corpus.signal_shift = s;
    }
    if let Some(t) = args.tie_rule {
        v.tie_rule = t;
    }
    let mut problems = Vec::new();
    if let Err(e) = cfg.virality.corpus.validate() {
        problems.push(format!("virality.corpus: {e}"));
    }
    if let Err(e) = cfg.learner.blr.validate() {
        problems.push(format!("learner.blr: {e}"));
    }
    reject_invalid("predict-virality", problems)?;

    let mut train_cfg = cfg.virality.corpus.clone();
    train_cfg.rng_seed = rngs::seed_for(seed, "virality-train", 0);
    let mut eval_cfg = cfg.virality.corpus.clone();
    eval_cfg.rng_seed = rngs::seed_for(seed, "virality-eval", 0);

    let train_samples = virality::synthesize_interaction_corpus(&train_cfg)?;
    let eval_samples = virality::synthesize_interaction_corpus(&eval_cfg)?;
    let model = virality::train_virality(&train_samples, &cfg.learner.blr)?;
    let evaluation = virality::evaluate_virality(&model, &eval_samples, cfg.virality.tie_rule)?;

    ensure_output_dir(cfg)?;
    let mut outputs = Vec::new();

    let train_path = out_path(cfg, "virality_train.jsonl");
    virality::write_interactions_jsonl_file(&train_path, &train_samples)?;
    outputs.push(train_path);

    let eval_path = out_path(cfg, "virality_eval.jsonl");
    virality::write_interactions_jsonl_file(&eval_path, &eval_samples)?;
    outputs.push(eval_path);

    let model_path = out_path(cfg, "virality_model.json");
    model.write_json_file(&model_path)?;
    outputs.push(model_path);

    let verdicts_path = out_path(cfg, "virality_verdicts.csv");
    virality::write_verdicts_csv_file(&verdicts_path, &evaluation.verdicts)?;
    outputs.push(verdicts_path);

    let report_path = out_path(cfg, "virality_eval.json");
    evaluation
        .report
        .write_json_file(&report_path)
        .map_err(|e| data(format!("cannot write report: {e}")))?;
    outputs.push(report_path);

    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_merges_file_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("cfg.json");
        fs::write(
            &config_path,
            r#"{
                "paths": {"output_dir": "from_file"},
                "simulator": {"n_users": 123},
                "eval": {"folds": 3},
                "rng_seed": 5
            }"#,
        )
        .unwrap();
        let cli = Cli::try_parse_from([
            "diffnet",
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--output-dir",
            "from_flag",
        ])
        .unwrap();
        let cfg = load_config(&cli).unwrap();
        assert_eq!(cfg.paths.output_dir, PathBuf::from("from_flag"));
        assert_eq!(cfg.simulator.n_users, 123);
        assert_eq!(cfg.eval.folds, 3);
        assert_eq!(cfg.rng_seed, Some(5));
        // Untouched keys keep their defaults.
        assert_eq!(cfg.simulator.n_topics, SynthConfig::default().n_topics);
        assert_eq!(cfg.eval.repeats, 5);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("cfg.json");
        fs::write(&config_path, r#"{"rng_sed": 5}"#).unwrap();
        let cli =
            Cli::try_parse_from(["diffnet", "train", "--config", config_path.to_str().unwrap()])
                .unwrap();
        let err = load_config(&cli).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.message().contains("rng_sed"), "{}", err.message());
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let err = reject_invalid(
            "evaluate",
            vec!["eval.folds: bad".to_string(), "eval.repeats: bad".to_string()],
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.message().contains("eval.folds"));
        assert!(err.message().contains("eval.repeats"));
    }

    #[test]
    fn missing_seed_is_a_usage_error() {
        let cfg = PipelineConfig::default();
        let err = required_seed(&cfg, "rank").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.message().contains("rank"));
    }

    #[test]
    fn planted_weight_parsing() {
        let parsed = parse_planted(&[
            "src_followers_count=1.5".to_string(),
            "dst_mention_rate=-2".to_string(),
        ])
        .unwrap();
        assert_eq!(parsed["src_followers_count"], 1.5);
        assert_eq!(parsed["dst_mention_rate"], -2.0);
        assert!(parse_planted(&["nonsense".to_string()]).is_err());
        assert!(parse_planted(&["a=b".to_string()]).is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(CliError::from(crate::blr::BlrError::SingleClass).exit_code(), 3);
        assert_eq!(
            CliError::from(crate::simulator::SimError::BadParams("x".into())).exit_code(),
            1
        );
        assert_eq!(
            CliError::from(std::io::Error::new(std::io::ErrorKind::NotFound, "gone")).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(crate::virality::ViralityError::BadConfig("x".into())).exit_code(),
            1
        );
    }

    #[test]
    fn manifest_hashes_match_recomputed_file_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.output_dir = dir.path().to_path_buf();
        let artifact = dir.path().join("artifact.txt");
        fs::write(&artifact, b"hello artifacts\n").unwrap();

        let manifest_path = write_manifest(&cfg, "simulate", &[artifact.clone()]).unwrap();
        let text = fs::read_to_string(&manifest_path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let recorded = parsed["outputs"]["artifact.txt"].as_str().unwrap();
        assert_eq!(recorded, sha256_file(&artifact).unwrap());
        assert_eq!(parsed["subcommand"], "simulate");
    }
}
