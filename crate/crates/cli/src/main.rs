//! `acal`: run cases, benchmark, serve the HTTP API, record fixtures and dump
//! stored graphs.
//!
//! Configuration is read from `--config`, else `$ACAL_CONFIG`, else
//! `./acal.toml` when present, else built-in defaults. Flags override the
//! file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use acal_core::backend::{BackendSpec, Backends};
use acal_core::bench::{
    load_task, render_table, run_benchmark, AblationGrid, BenchOptions, MetricsOptions, MetricsReport, TaskFormat,
    TaskSpec, DEFAULT_BETAS,
};
use acal_core::relations::RelationMode;
use acal_core::retrieval::load_corpus_dir;
use acal_core::store::CaseStore;
use acal_core::{CaseRecord, Pipeline, PipelineConfig, TaskInput};

const CONFIG_ENV: &str = "ACAL_CONFIG";
const DEFAULT_CONFIG: &str = "acal.toml";

#[derive(Parser)]
#[command(name = "acal", version, about = "Argumentation pipeline for legal yes/no questions")]
struct Cli {
    /// Config file (TOML). Falls back to $ACAL_CONFIG, then ./acal.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and print its decision
    RunCase(RunCaseArgs),
    /// Evaluate the configured pipeline on a labelled task file
    Bench(BenchArgs),
    /// Evaluate an ablation grid on a labelled task file
    Ablate(AblateArgs),
    /// Serve the HTTP API over a case store
    Serve(ServeArgs),
    /// Run cases against live backends and save every exchange as a replay fixture
    RecordFixtures(RecordArgs),
    /// Write a stored case's graph and strengths
    DumpGraph(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RelationModeArg {
    Heuristic,
    Model,
}

/// Settings that mirror the pipeline configuration.
#[derive(Args, Default)]
struct PipelineFlags {
    /// Replay recorded fixtures from this directory for every backend purpose
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    replay: Option<PathBuf>,
    /// Use the offline synthetic backend with this seed
    #[arg(long, value_name = "SEED")]
    synthetic: Option<u64>,
    /// Corpus directory with a manifest.json
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// How relations between arguments are identified
    #[arg(long, value_enum)]
    relation_mode: Option<RelationModeArg>,
    /// Argument pairs per relation request
    #[arg(long)]
    relation_batch_size: Option<usize>,
    /// Minimum confidence for a model-identified relation
    #[arg(long)]
    relation_confidence: Option<f64>,
    /// Largest score gap that counts as a clash
    #[arg(long)]
    delta: Option<f64>,
    /// Clash adjustment magnitude
    #[arg(long)]
    beta: Option<f64>,
    /// Keep scores as generated, skipping the clash arena
    #[arg(long)]
    no_clash_resolution: bool,
    /// Never escalate near-threshold cases to the final judge
    #[arg(long)]
    no_uae: bool,
    /// Decision threshold on the claim strength
    #[arg(long)]
    threshold: Option<f64>,
    /// Passages retrieved per case
    #[arg(long)]
    retrieval_k: Option<usize>,
    /// Seed recorded with every case
    #[arg(long)]
    seed: Option<u64>,
}

impl PipelineFlags {
    fn apply(&self, config: &mut PipelineConfig) {
        if let Some(dir) = &self.replay {
            config.backends.default = BackendSpec::Replay {
                fixtures: dir.display().to_string(),
            };
            config.backends.overrides.clear();
        }
        if let Some(seed) = self.synthetic {
            config.backends.default = BackendSpec::Synthetic { seed };
            config.backends.overrides.clear();
        }
        if let Some(m) = self.relation_mode {
            config.relation_mode = match m {
                RelationModeArg::Heuristic => RelationMode::Heuristic,
                RelationModeArg::Model => RelationMode::Model,
            };
        }
        if let Some(b) = self.relation_batch_size {
            config.relation_batch_size = b;
        }
        if let Some(c) = self.relation_confidence {
            config.relation_confidence_threshold = c;
        }
        if let Some(d) = self.delta {
            config.arena.delta = d;
        }
        if let Some(b) = self.beta {
            config.arena.beta = b;
        }
        if self.no_clash_resolution {
            config.clash_resolution_enabled = false;
        }
        if self.no_uae {
            config.decision.uae_enabled = false;
        }
        if let Some(t) = self.threshold {
            config.decision.threshold = t;
        }
        if let Some(k) = self.retrieval_k {
            config.retrieval_k = k;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
    }
}

#[derive(Args)]
struct TaskArgs {
    /// Yes/no question or proposition to decide
    #[arg(long, conflicts_with = "input")]
    claim: Option<String>,
    /// Case facts
    #[arg(long, default_value = "", conflicts_with = "input")]
    facts: String,
    /// JSON file holding a task: {"claim", "facts", "task_id", "metadata"}
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
}

impl TaskArgs {
    fn task(&self) -> Result<TaskInput> {
        if let Some(path) = &self.input {
            let text = read(path)?;
            return serde_json::from_str(&text).with_context(|| format!("{}: not a task document", path.display()));
        }
        match &self.claim {
            Some(claim) => Ok(TaskInput::new(claim.clone(), self.facts.clone())),
            None => bail!("either --claim or --input is required"),
        }
    }
}

#[derive(Args)]
struct RunCaseArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Also store the record in this case store
    #[arg(long, value_name = "DIR")]
    store: Option<PathBuf>,
    /// Write the full record here
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Task name: hearsay or learned_hands_courts
    #[arg(long)]
    task: String,
    /// Labelled examples (.tsv or .json)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Concurrent examples
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Leave failed examples out of the metrics instead of counting them wrong
    #[arg(long)]
    exclude_abstentions: bool,
    /// Value of a metric whose denominator is zero
    #[arg(long, default_value_t = 0.0)]
    zero_division: f64,
    /// Directory for reports and per-example predictions
    #[arg(long, short, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    /// Clash resolution and escalation switched on and off
    Modules,
    /// Clash adjustment magnitude sweep
    Beta,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long, value_enum, default_value = "modules")]
    grid: GridKind,
    /// Comma-separated values for the beta grid
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Where fixtures are written
    #[arg(long, value_name = "DIR")]
    fixtures: PathBuf,
    /// Record a single case
    #[command(flatten)]
    task: TaskArgs,
    /// Record every example of a labelled task file instead (needs --task-name)
    #[arg(long, value_name = "FILE", conflicts_with_all = ["claim", "input"])]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    task_name: Option<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    #[arg(long = "case", value_name = "ID")]
    case_id: String,
    /// Output file; stdout when absent
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(CONFIG_ENV).filter(|p| !p.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(DEFAULT_CONFIG);
    local.is_file().then_some(local)
}

fn load_config(flag: Option<&Path>, overrides: &PipelineFlags) -> Result<PipelineConfig> {
    let mut config = match config_path(flag) {
        Some(path) => PipelineConfig::load(&path).with_context(|| format!("config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut config);
    config.check()?;
    Ok(config)
}

fn pipeline(config: PipelineConfig, flags: &PipelineFlags) -> Result<Pipeline> {
    let mut p = Pipeline::new(config)?;
    if let Some(dir) = &flags.corpus {
        let corpus = load_corpus_dir(dir, p.config().chunk)?;
        p = p.with_corpus(corpus);
    }
    Ok(p)
}

fn summary(record: &CaseRecord) -> String {
    let d = &record.decision;
    let mut line = format!(
        "{}  answer={}  sigma={:.6}  decided_by={}",
        record.case_id,
        d.answer,
        d.claim_strength,
        d.decided_by
    );
    if d.escalated {
        line.push_str("  escalated");
    }
    line
}

fn run_case(cli: &Cli, args: &RunCaseArgs) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &args.pipeline)?;
    let task = args.task.task()?;
    let record = pipeline(config, &args.pipeline)?.run(&task)?;
    for entry in &record.trace {
        for w in entry.warnings() {
            eprintln!("warning [{}]: {w}", entry.stage());
        }
    }
    if let Some(dir) = &args.store {
        let store = CaseStore::open(dir)?;
        if !store.contains(&record.case_id) {
            store.put_record(&record)?;
        }
    }
    if let Some(out) = &args.out {
        write(out, &record.to_json())?;
    }
    println!("{}", summary(&record));
    Ok(())
}

fn examples(data: &DataArgs) -> Result<(TaskSpec, Vec<acal_core::bench::LabeledExample>)> {
    let Some(spec) = TaskSpec::builtin(&data.task) else {
        bail!("unknown task `{}` (known: hearsay, learned_hands_courts)", data.task);
    };
    let examples = load_task(&data.data, TaskFormat::from_path(&data.data), &spec)?;
    Ok((spec, examples))
}

fn bench_options(data: &DataArgs) -> BenchOptions {
    BenchOptions {
        workers: data.workers.max(1),
        metrics: MetricsOptions {
            zero_division: data.zero_division,
            exclude_abstentions: data.exclude_abstentions,
        },
        predictions_dir: Some(data.out.join("predictions")),
    }
}

fn write_reports(out: &Path, reports: &[MetricsReport]) -> Result<()> {
    let doc = serde_json::to_string_pretty(reports)?;
    write(&out.join("reports.json"), &doc)?;
    print!("{}", render_table(reports));
    Ok(())
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &args.pipeline)?;
    let (spec, examples) = examples(&args.data)?;
    let grid = AblationGrid::single(&config);
    let p = pipeline(config, &args.pipeline)?;
    let results = run_benchmark(&p, &spec, &examples, &grid, &bench_options(&args.data))?;
    let reports: Vec<MetricsReport> = results.into_iter().map(|r| r.report).collect();
    write(&args.data.out.join("report.json"), &serde_json::to_string_pretty(&reports[0])?)?;
    write_reports(&args.data.out, &reports)
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &args.pipeline)?;
    let (spec, examples) = examples(&args.data)?;
    let grid = match args.grid {
        GridKind::Modules => AblationGrid::modules(&config),
        GridKind::Beta if args.betas.is_empty() => AblationGrid::beta(&config, &DEFAULT_BETAS),
        GridKind::Beta => AblationGrid::beta(&config, &args.betas),
    };
    let p = pipeline(config, &args.pipeline)?;
    let results = run_benchmark(&p, &spec, &examples, &grid, &bench_options(&args.data))?;
    let reports: Vec<MetricsReport> = results.into_iter().map(|r| r.report).collect();
    write_reports(&args.data.out, &reports)
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &args.pipeline)?;
    let p = pipeline(config, &args.pipeline)?;
    let store = CaseStore::open(&args.store)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        acal_service::serve(listener, acal_service::AppState::new(p, store)).await?;
        Ok(())
    })
}

fn record_fixtures(cli: &Cli, args: &RecordArgs) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &args.pipeline)?;
    if matches!(config.backends.default, BackendSpec::Replay { .. }) {
        bail!("record-fixtures needs a live backend, not a replay directory");
    }
    let base = pipeline(config, &args.pipeline)?;
    let recording: Backends = base.backends().recording(&args.fixtures);
    let p = base.with_backends(recording);
    let tasks: Vec<TaskInput> = match &args.data {
        Some(path) => {
            let name = args.task_name.as_deref().context("--task-name is required with --data")?;
            let spec = TaskSpec::builtin(name).with_context(|| format!("unknown task `{name}`"))?;
            load_task(path, TaskFormat::from_path(path), &spec)?
                .into_iter()
                .map(|ex| {
                    let mut t = TaskInput::new(spec.claim.clone(), ex.text);
                    t.task_id = Some(ex.id);
                    t
                })
                .collect()
        }
        None => vec![args.task.task()?],
    };
    for task in &tasks {
        let record = p.run(task)?;
        println!("{}", summary(&record));
    }
    let count = std::fs::read_dir(&args.fixtures).map(|d| d.count()).unwrap_or(0);
    eprintln!("{count} fixtures in {}", args.fixtures.display());
    Ok(())
}

fn dump_graph(args: &DumpArgs) -> Result<()> {
    let store = CaseStore::open(&args.store)?;
    let record = store.get_record(&args.case_id)?;
    let doc = serde_json::json!({
        "graph": record.graph,
        "strengths": record.strengths,
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &args.out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let result = match &cli.command {
        Command::RunCase(a) => run_case(&cli, a),
        Command::Bench(a) => bench(&cli, a),
        Command::Ablate(a) => ablate(&cli, a),
        Command::Serve(a) => serve(&cli, a),
        Command::RecordFixtures(a) => record_fixtures(&cli, a),
        Command::DumpGraph(a) => dump_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
