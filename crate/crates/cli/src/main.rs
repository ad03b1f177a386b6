//! `eartriage`: index building, offline evaluation, a chat REPL and the HTTP
//! server.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or input
//! errors.

mod chat;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eartriage_core::eval::questionnaire::{means_to_json, render_means_table};
use eartriage_core::eval::{
    classification_report, group_means, read_answer_sheets, read_labeled_prompts, read_predictions, routing_eval,
    EvalError, Questionnaire,
};
use eartriage_core::knowledge::{
    corpus, ingest_document, ChunkConfig, Embedder, HashNgramEmbedder, HttpEmbedder, VectorIndex,
};
use eartriage_core::router::{GateConfig, Router};
use eartriage_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "eartriage", version, about = "Triage agent for newborn ear deformities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk and embed documents into an index file.
    Ingest(IngestArgs),
    /// Describe an index file.
    IndexInfo(IndexInfoArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Accuracy, per-class metrics and confusion for a predictions file.
    EvalClassify(EvalClassifyArgs),
    /// Per-group mean scores for questionnaire answer sheets.
    EvalQuestionnaire(EvalQuestionnaireArgs),
    /// Route confusion for a labelled prompt file.
    EvalRouting(EvalRoutingArgs),
    /// Interactive chat on stdin.
    Chat(chat::ChatArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Documents to index: `.md`/`.txt` files or directories of them.
    #[arg(required_unless_present = "packaged")]
    inputs: Vec<PathBuf>,
    /// Index the built-in sample corpus as well.
    #[arg(long)]
    packaged: bool,
    /// Output `.aidx` file.
    #[arg(long, short)]
    out: PathBuf,
    /// Existing index to extend; documents with the same id are replaced.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Also write a JSON-lines dump of the index.
    #[arg(long)]
    jsonl: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    max_chunk_chars: usize,
    #[arg(long, default_value_t = 64)]
    overlap_chars: usize,
    /// Remote embedder base URL; the built-in hash embedder otherwise.
    #[arg(long)]
    embedder_endpoint: Option<String>,
}

#[derive(Args)]
struct IndexInfoArgs {
    index: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML config file; defaults (all mock backends) otherwise.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `listen_addr` and `LISTEN_ADDR`.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, value_enum, default_value_t = LogFormat::Json)]
    log_format: LogFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Table,
    Both,
}

#[derive(Args)]
struct EvalClassifyArgs {
    /// `item_id,true,pred` CSV, or JSON lines when the name ends in `.jsonl`.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
}

#[derive(Args)]
struct EvalQuestionnaireArgs {
    /// `respondent,group,a1..aN` CSV.
    #[arg(long)]
    sheets: PathBuf,
    /// Questionnaire JSON with items and answer key.
    #[arg(long)]
    questionnaire: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
}

#[derive(Args)]
struct EvalRoutingArgs {
    /// JSON lines of `{"text"?, "image"?, "expected"}`.
    #[arg(long)]
    prompts: PathBuf,
    /// Gate config JSON; the packaged calibration otherwise.
    #[arg(long)]
    gate: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn eval_failure(e: EvalError) -> Failure {
    Failure::Input(e.into())
}

/// The exact text the eval subcommands print.
fn render(format: OutputFormat, json: &str, table: &str) -> String {
    match format {
        OutputFormat::Json => format!("{json}\n"),
        OutputFormat::Table => table.to_string(),
        OutputFormat::Both => format!("{json}\n\n{table}"),
    }
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing stdout")?;
    Ok(())
}

fn init_logging(format: LogFormat, default_level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    let _ = match format {
        LogFormat::Json => builder.json().try_init(),
        LogFormat::Text => builder.try_init(),
    };
}

fn eval_classify(args: &EvalClassifyArgs) -> Result<(), Failure> {
    let preds = read_predictions(&args.pred).map_err(eval_failure)?;
    let report = classification_report(&preds).map_err(eval_failure)?;
    emit(&render(args.format, &report.to_json(), &report.render_table()))
}

fn eval_questionnaire(args: &EvalQuestionnaireArgs) -> Result<(), Failure> {
    let q = Questionnaire::load(&args.questionnaire).map_err(eval_failure)?;
    let sheets = read_answer_sheets(&args.sheets).map_err(eval_failure)?;
    let means = group_means(&q, &sheets).map_err(eval_failure)?;
    emit(&render(args.format, &means_to_json(&means), &render_means_table(&means)))
}

async fn eval_routing(args: &EvalRoutingArgs) -> Result<(), Failure> {
    let prompts = read_labeled_prompts(&args.prompts).map_err(eval_failure)?;
    let gate = match &args.gate {
        Some(p) => GateConfig::load(p).map_err(input)?,
        None => GateConfig::packaged(),
    };
    let router = Router::new(Arc::new(HashNgramEmbedder::new()), gate).await.map_err(input)?;
    let conf = routing_eval(&router, &prompts).await;
    emit(&render(args.format, &conf.to_json(), &conf.render_table()))
}

async fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    let chunk = ChunkConfig {
        max_chunk_chars: args.max_chunk_chars,
        overlap_chars: args.overlap_chars,
    };
    if chunk.overlap_chars >= chunk.max_chunk_chars {
        return Err(input(anyhow!("--overlap-chars must be smaller than --max-chunk-chars")));
    }
    let embedder: Arc<dyn Embedder> = match &args.embedder_endpoint {
        Some(url) => Arc::new(
            HttpEmbedder::connect(url.clone(), Duration::from_secs(30))
                .await
                .with_context(|| format!("connecting to embedder at {url}"))?,
        ),
        None => Arc::new(HashNgramEmbedder::new()),
    };
    let mut docs = Vec::new();
    if args.packaged {
        docs.extend(corpus::packaged());
    }
    for p in &args.inputs {
        let loaded = corpus::load_path(p).with_context(|| format!("reading {}", p.display())).map_err(input)?;
        if loaded.is_empty() {
            return Err(input(anyhow!("{} contains no .md or .txt documents", p.display())));
        }
        docs.extend(loaded);
    }
    let mut index = match &args.base {
        Some(p) => VectorIndex::load(p).with_context(|| format!("loading {}", p.display())).map_err(input)?,
        None => VectorIndex::new(0, embedder.descriptor()),
    };
    let mut per_doc = BTreeMap::new();
    for doc in &docs {
        let (next, n) = ingest_document(&index, embedder.as_ref(), doc, chunk)
            .await
            .with_context(|| format!("indexing {}", doc.doc_id))?;
        index = next;
        per_doc.insert(doc.doc_id.clone(), n);
    }
    index.set_revision(index.revision() + 1);
    index.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(p) = &args.jsonl {
        let mut f = std::io::BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
        index.export_jsonl(&mut f).context("writing jsonl export")?;
    }
    let report = serde_json::json!({
        "index": args.out,
        "documents": per_doc,
        "chunks": index.len(),
        "revision": index.revision(),
        "embedder": index.embedder_descriptor(),
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("json")))
}

fn index_info(args: &IndexInfoArgs) -> Result<(), Failure> {
    let index = load_index(&args.index)?;
    let mut docs: BTreeMap<&str, usize> = BTreeMap::new();
    for e in index.entries() {
        *docs.entry(e.chunk.source_doc.as_str()).or_default() += 1;
    }
    let text = if args.json {
        let v = serde_json::json!({
            "chunks": index.len(),
            "dim": index.dim(),
            "embedder": index.embedder_descriptor(),
            "revision": index.revision(),
            "documents": docs,
        });
        format!("{}\n", serde_json::to_string_pretty(&v).expect("json"))
    } else {
        let mut s = format!(
            "chunks:   {}\ndim:      {}\nembedder: {}\nrevision: {}\ndocuments:\n",
            index.len(),
            index.dim(),
            index.embedder_descriptor(),
            index.revision()
        );
        for (d, n) in &docs {
            s.push_str(&format!("  {d:<32} {n:>6}\n"));
        }
        s
    };
    emit(&text)
}

fn load_index(path: &Path) -> Result<VectorIndex, Failure> {
    VectorIndex::load(path).with_context(|| format!("loading {}", path.display())).map_err(input)
}

async fn serve(args: &ServeArgs) -> Result<(), Failure> {
    init_logging(args.log_format, "info");
    let mut cfg = match &args.config {
        Some(p) => ServiceConfig::load(p).map_err(input)?,
        None => {
            let mut c = ServiceConfig::default();
            c.apply_env(|k| std::env::var(k).ok());
            c.validate().map_err(input)?;
            c
        }
    };
    if let Some(l) = &args.listen {
        cfg.listen_addr = l.clone();
    }
    let state = AppState::from_config(&cfg).await.context("starting service")?;
    let listener = tokio::net::TcpListener::bind(&cfg.listen_addr)
        .await
        .with_context(|| format!("binding {}", cfg.listen_addr))?;
    let addr = listener.local_addr().context("reading bound address")?;
    emit(&format!("listening on http://{addr}\n"))?;
    eartriage_service::serve(listener, state).await.context("serving")?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    if !matches!(cli.command, Command::Serve(_)) {
        init_logging(LogFormat::Text, "warn");
    }
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a).await,
        Command::IndexInfo(a) => index_info(a),
        Command::Serve(a) => serve(a).await,
        Command::EvalClassify(a) => eval_classify(a),
        Command::EvalQuestionnaire(a) => eval_questionnaire(a),
        Command::EvalRouting(a) => eval_routing(a).await,
        Command::Chat(a) => chat::run(a).await,
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
