use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use topiclens_core::corpus::read_corpus_file;
use topiclens_core::pipeline::fit;
use topiclens_service::export::{write_export, ExportFormat};
use topiclens_service::persist::{load_state, save_state};
use topiclens_service::{build_services, serve, App, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "topiclens",
    version,
    about = "Topic models you can question and edit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a topic model to a corpus and save it.
    Fit {
        /// JSON array of strings, JSON lines with a "text" field, or one document per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        n_topics: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides state_path from the config.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides listen_address from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Write each document's topic.
    Export {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        /// Standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Send one chat prompt to a saved model and print the turn.
    Chat {
        #[arg(long)]
        config: Option<PathBuf>,
        prompt: String,
    },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<ServiceConfig> {
    match path {
        Some(p) => ServiceConfig::from_file(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ServiceConfig::default()),
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Fit {
            corpus,
            n_topics,
            config,
            state,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if n_topics.is_some() {
                cfg.n_topics = n_topics;
            }
            if let Some(s) = state {
                cfg.state_path = s;
            }
            cfg.validate()?;
            cfg.ensure_state_dir()?;
            let texts = read_corpus_file(&corpus)?;
            let services = build_services(&cfg)?;
            let (model, report) = fit(&texts, &cfg.fit_config()?, &services)
                .map_err(|e| anyhow::anyhow!("fit failed in the {:?} stage: {e}", e.stage()))?;
            save_state(&model, services.embedder.model_name(), &cfg.state_path)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Serve { config, listen } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(l) = listen {
                cfg.listen_address = l;
            }
            cfg.validate()?;
            let address = cfg.listen_address.clone();
            let app = App::from_config(cfg)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&address).await?;
                serve(app, listener).await
            })?;
        }
        Command::Export {
            state,
            format,
            output,
        } => {
            let loaded = load_state(&state)?;
            match output {
                Some(p) => write_export(&loaded.state, format, std::fs::File::create(&p)?)?,
                None => write_export(&loaded.state, format, std::io::stdout().lock())?,
            }
        }
        Command::Chat { config, prompt } => {
            let cfg = load_config(config.as_ref())?;
            let services = build_services(&cfg)?;
            let mut model = load_state(&cfg.state_path)?.state;
            let router = topiclens_core::chatrouter::ChatRouter::standard(
                services.llm.clone(),
                topiclens_core::chatrouter::RouterConfig {
                    allow_mutations_via_chat: cfg.allow_mutations_via_chat,
                    ..Default::default()
                },
            );
            let turn = router.route(&mut model, &services, &prompt);
            if turn.version_after != turn.version_before {
                save_state(&model, services.embedder.model_name(), &cfg.state_path)?;
            }
            println!("{}", serde_json::to_string_pretty(&turn)?);
        }
    }
    Ok(())
}
