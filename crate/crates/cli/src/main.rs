use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coachlab_core::analysis::report::InjectedSummaries;
use coachlab_core::analysis::{run_analysis, AnalysisOptions, EmbedSource};
use coachlab_core::gateway::{EmbeddingCache, GatewaySettings, LlmGateway, OfflineStub, OpenAiProvider};
use coachlab_core::session::jsonl::{read_sessions_dir, write_sessions, SessionFilter};
use coachlab_core::session::SystemClock;
use coachlab_core::synth::{synth_corpus, SynthSpec};
use coachlab_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "coachlab", version, about = "Persona-guided co-creation sessions and their analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Answer with the deterministic offline model instead of a provider.
        #[arg(long)]
        offline_stub: bool,
    },
    /// Run the analysis pipeline over session logs and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Write the seeded synthetic session corpus as JSONL.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory of `*.jsonl` session exports.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Persistent embedding cache (JSONL).
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    #[arg(long)]
    include_quarter_1: bool,
    #[arg(long)]
    no_continuity_correction: bool,
    #[arg(long, default_value = "both", value_parser = ["title", "description", "both"])]
    embed_source: String,
    #[arg(long)]
    offline_stub: bool,
    /// Provider settings; only the `[provider]` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON file of summary statistics to evaluate alongside the data.
    #[arg(long)]
    inject_summaries: Option<PathBuf>,
    /// Stage caches and intermediate JSONL artifacts.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Also report question metrics for each conversation quarter.
    #[arg(long)]
    per_quarter: bool,
}

fn load_config(path: Option<&PathBuf>) -> Result<ServerConfig> {
    let mut cfg = match path {
        Some(p) => ServerConfig::load(p)?,
        None => ServerConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    Ok(cfg)
}

async fn serve(config: Option<PathBuf>, offline_stub: bool) -> Result<()> {
    let cfg = load_config(config.as_ref())?;
    let state = Arc::new(AppState::from_config(&cfg, offline_stub, Arc::new(SystemClock))?);
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("cannot bind {addr}"))?;
    tracing::info!(%addr, offline_stub, "serving");
    coachlab_server::serve(listener, state, coachlab_server::shutdown_signal()).await?;
    Ok(())
}

async fn analyze(a: AnalyzeArgs) -> Result<()> {
    let sessions = read_sessions_dir(&a.logs)?;
    let cfg = load_config(a.config.as_ref())?;
    let cache = match &a.embed_cache {
        Some(p) => EmbeddingCache::open(p)?,
        None => EmbeddingCache::in_memory(),
    };
    let settings = GatewaySettings { max_in_flight: cfg.provider.max_in_flight, ..GatewaySettings::default() };
    let gateway = if a.offline_stub {
        let stub = Arc::new(OfflineStub::default());
        LlmGateway::new(stub.clone(), stub, cache, settings)
    } else {
        let Some(key) = cfg.provider.api_key.clone().filter(|k| !k.trim().is_empty()) else {
            bail!("missing credential `provider.api_key` (or pass --offline-stub)");
        };
        let provider = Arc::new(OpenAiProvider::new(cfg.provider.base_url.clone(), key));
        LlmGateway::new(provider.clone(), provider, cache, settings)
    };

    let injected = match &a.inject_summaries {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Some(serde_json::from_str::<InjectedSummaries>(&text).with_context(|| format!("{}", p.display()))?)
        }
        None => None,
    };
    let mut opts = AnalysisOptions {
        include_quarter_1: a.include_quarter_1,
        per_quarter: a.per_quarter,
        continuity_correction: !a.no_continuity_correction,
        embed_source: a.embed_source.parse::<EmbedSource>().map_err(anyhow::Error::msg)?,
        embedding_model: cfg.provider.embedding_model.clone(),
        work_dir: a.work_dir.clone(),
        injected,
        ..AnalysisOptions::default()
    };
    opts.pipeline.model = cfg.provider.chat_model.clone();

    let report = run_analysis(&gateway, sessions, &opts).await?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&a.out, report.to_json()).with_context(|| format!("cannot write {}", a.out.display()))?;
    tracing::info!(
        out = %a.out.display(),
        retained = report.participants.retained,
        excluded = report.participants.excluded.len(),
        "report written"
    );
    Ok(())
}

fn synth(out: PathBuf, seed: Option<u64>) -> Result<()> {
    let mut spec = SynthSpec::default();
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = synth_corpus(&spec);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let n = write_sessions(&corpus, &SessionFilter::default(), std::io::BufWriter::new(file))?;
    tracing::info!(sessions = n, out = %out.display(), "corpus written");
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let outcome = match Cli::parse().command {
        Command::Serve { config, offline_stub } => serve(config, offline_stub).await,
        Command::Analyze(a) => analyze(a).await,
        Command::Synth { out, seed } => synth(out, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
