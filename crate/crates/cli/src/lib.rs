//! Command-line front end: `convert`, `prompt`, `eval`, `serve` and `import`.
//!
//! Exit codes: 0 ok, 2 input error, 3 prompt over budget, 4 backend error.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use screenllm::backend::{BackendConfig, BackendError, CompletionBackend, RecordingBackend, RecordingStore, ReplayBackend};
use screenllm::dataset::{sample_exemplars, Corpus, DatasetError, SampleMode};
use screenllm::eval::{run_eval, write_outputs, EvalConfig, EvalError, Parallelism, RunManifest};
use screenllm::html::convert;
use screenllm::ingest::{parse_view_hierarchy, IngestError};
use screenllm::prompt::{build_prompt, OverflowPolicy, Prompt, PromptError, PromptSpec, TaskKind, DEFAULT_BUDGET_TOKENS, DEFAULT_SHOT_CAP};

pub mod import;

#[derive(Debug, Parser)]
#[command(name = "screenllm", version, about = "Mobile-screen prompting and evaluation toolkit")]
pub struct Cli {
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a RICO view-hierarchy JSON file to HTML.
    Convert(ConvertArgs),
    /// Build a few-shot prompt for one screen.
    Prompt(PromptArgs),
    /// Run a full evaluation and write report files.
    #[command(alias = "run")]
    Eval(EvalArgs),
    /// Serve the HTTP API over a corpus.
    Serve(ServeArgs),
    /// Convert upstream dataset files into corpus records.
    #[command(subcommand)]
    Import(import::ImportCommand),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Screen id; defaults to the file stem.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PromptOptions {
    #[arg(long, default_value_t = 0)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SampleMode::Any)]
    pub mode: SampleMode,
    /// Approximate token budget for the whole prompt.
    #[arg(long, default_value_t = DEFAULT_BUDGET_TOKENS)]
    pub budget: usize,
    /// `fail` or `drop` (drop trailing exemplars until the prompt fits).
    #[arg(long, default_value = "fail")]
    pub on_overflow: OverflowPolicy,
    /// Largest shot count accepted; defaults to max(2, --shots).
    #[arg(long)]
    pub max_shots: Option<usize>,
}

impl PromptOptions {
    fn shot_cap(&self) -> usize {
        self.max_shots.unwrap_or(DEFAULT_SHOT_CAP.max(self.shots))
    }
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long)]
    pub task: TaskKind,
    #[arg(long)]
    pub screen: String,
    #[arg(long, default_value = ".")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub options: PromptOptions,
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub instruction: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print `{"shots_used", "approx_tokens"}` to stderr.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Replay,
    Scripted,
    Live,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend kind; `scripted` and `live` read their settings from --config.
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// JSON backend config (`{"kind": "replay" | "scripted" | "live", ...}`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Recording store read by the replay backend.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Append every completion to this recording store.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub task: TaskKind,
    #[arg(long, default_value = ".")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub options: PromptOptions,
    /// Maximum items in flight; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Keep QA pairs whose answer is absent from the view hierarchy.
    #[arg(long)]
    pub include_absent: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = ".")]
    pub corpus: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = DEFAULT_BUDGET_TOKENS)]
    pub budget: usize,
    #[arg(long, default_value = "fail")]
    pub on_overflow: OverflowPolicy,
    #[arg(long, default_value_t = DEFAULT_SHOT_CAP)]
    pub max_shots: usize,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long)]
    pub cors_origin: Vec<String>,
    /// Serve static files (the web client) from this directory.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Prompt(PromptError::BudgetExceeded { .. }) => 3,
            CliError::Backend(BackendError::Config(_)) => 2,
            CliError::Backend(_) => 4,
            CliError::Eval(EvalError::Backend(BackendError::Config(_))) => 2,
            CliError::Eval(EvalError::Backend(_)) => 4,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Io(_) => "io",
            CliError::Ingest(_) => "ingest",
            CliError::Dataset(_) => "dataset",
            CliError::Prompt(PromptError::BudgetExceeded { .. }) => "budget",
            CliError::Prompt(_) => "prompt",
            CliError::Backend(_) | CliError::Eval(EvalError::Backend(_)) => "backend",
            CliError::Eval(_) => "eval",
        }
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

/// Formats an error for stderr.
pub fn render_error(err: &CliError, json: bool) -> String {
    if json {
        serde_json::to_string(&ErrorJson { error: err.kind(), message: err.to_string(), exit_code: err.exit_code() })
            .expect("error json")
    } else {
        format!("error: {err}")
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert(a) => cmd_convert(&a),
        Command::Prompt(a) => cmd_prompt(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Serve(a) => cmd_serve(a),
        Command::Import(c) => import::run(&c),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<(), CliError> {
    let raw = read(&args.input)?;
    let id = args
        .id
        .clone()
        .or_else(|| args.input.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let source = parse_view_hierarchy(id, &raw)?;
    let mut html = convert(&source).html_text;
    html.push('\n');
    emit(&html, args.out.as_deref())
}

/// Builds the prompt the `prompt` subcommand prints.
pub fn build_cli_prompt(args: &PromptArgs) -> Result<Prompt, CliError> {
    let corpus = Corpus::load(&args.corpus)?;
    let screen = corpus.screen(&args.screen)?;
    let input = match args.task {
        TaskKind::QuestionAnswering => args.question.as_deref(),
        TaskKind::InstructionToAction => args.instruction.as_deref(),
        _ => args.question.as_deref().or(args.instruction.as_deref()),
    };
    let o = &args.options;
    let exemplars = sample_exemplars(&corpus, args.task, o.shots, o.seed, o.mode, &args.screen)?;
    let spec = PromptSpec::new(args.task, exemplars).with_budget(o.budget, o.on_overflow).with_shot_cap(o.shot_cap());
    Ok(build_prompt(&spec, &screen.html, input)?)
}

pub fn cmd_prompt(args: &PromptArgs) -> Result<(), CliError> {
    let prompt = build_cli_prompt(args)?;
    emit(&prompt.text, args.out.as_deref())?;
    if args.stats {
        eprintln!("{}", serde_json::json!({ "shots_used": prompt.shots_used, "approx_tokens": prompt.approx_tokens }));
    }
    Ok(())
}

/// Resolves backend flags into a backend, wrapping it in a recorder if asked.
pub fn build_backend(args: &BackendArgs) -> Result<Box<dyn CompletionBackend>, CliError> {
    let config: BackendConfig = match (args.backend, &args.config, &args.store) {
        (Some(BackendKind::Replay) | None, None, Some(store)) => BackendConfig::Replay { store: store.clone() },
        (Some(BackendKind::Replay), None, None) => {
            return Err(CliError::Input("replay backend needs --store or --config".into()));
        }
        (None, None, None) => return Err(CliError::Input("no backend: pass --backend with --store or --config".into())),
        (Some(kind), None, _) => {
            let name = kind.to_possible_value().expect("no skipped variants");
            return Err(CliError::Input(format!("{} backend needs --config", name.get_name())));
        }
        (kind, Some(path), _) => {
            let raw: serde_json::Value = serde_json::from_slice(&read(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if let Some(kind) = kind {
                let wanted = kind.to_possible_value().expect("no skipped variants");
                if raw.get("kind").and_then(|k| k.as_str()) != Some(wanted.get_name()) {
                    return Err(CliError::Input(format!(
                        "{} does not describe a {} backend",
                        path.display(),
                        wanted.get_name()
                    )));
                }
            }
            serde_json::from_value(raw).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
    };
    let backend = config.build()?;
    Ok(match &args.record {
        Some(path) => Box::new(RecordingBackend::new(backend, RecordingStore::new(path.clone()))),
        None => backend,
    })
}

pub fn eval_config(args: &EvalArgs) -> EvalConfig {
    let o = &args.options;
    let mut cfg = EvalConfig::new(args.task, o.shots, o.seed, o.mode);
    cfg.budget_tokens = o.budget;
    cfg.on_overflow = o.on_overflow;
    cfg.shot_cap = o.shot_cap();
    cfg.include_absent = args.include_absent;
    cfg.parallelism = Parallelism::from_limit(args.parallel);
    cfg
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let corpus = Corpus::load(&args.corpus)?;
    let backend = build_backend(&args.backend)?;
    let cfg = eval_config(args);
    let outcome = run_eval(&corpus, backend.as_ref(), &cfg)?;
    let manifest = RunManifest::new(&cfg, backend.id(), &args.corpus);
    write_outputs(&args.out, &outcome, &manifest)?;
    let table = fs::read_to_string(args.out.join("report.txt"))?;
    emit(&table, None)
}

pub fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let corpus = Corpus::load(&args.corpus)?;
    let backend: Arc<dyn CompletionBackend> = match build_backend(&args.backend) {
        Ok(b) => Arc::from(b),
        Err(CliError::Input(msg)) if msg.starts_with("no backend") => {
            Arc::new(ReplayBackend::from_recordings(Vec::new()))
        }
        Err(e) => return Err(e),
    };
    let config = screenllm_service::ServiceConfig {
        budget_tokens: args.budget,
        on_overflow: args.on_overflow,
        shot_cap: args.max_shots,
        cors_origins: (!args.cors_origin.is_empty()).then_some(args.cors_origin),
        static_dir: args.static_dir,
    };
    let state = screenllm_service::AppState::new(corpus, backend, config);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(screenllm_service::serve(state, args.addr))?;
    Ok(())
}
