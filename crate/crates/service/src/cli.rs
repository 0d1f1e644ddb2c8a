use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use reflect_core::fixtures::{load_cases, reference_cases};
use reflect_core::session::{replay, Engine, EventLog};

use crate::setup::{EngineArgs, LlmArgs, ModelArgs};
use crate::{api, batch, eval};

#[derive(Debug, Parser)]
#[command(name = "reflect", version, about = "Treatment predictions paired with reflective questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, short, default_value_t = 8080)]
        port: u16,
        /// Append-only event log.
        #[arg(long, default_value = "reflect-events.jsonl")]
        log: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Create a session per case and write the question sets as JSON lines.
    Batch {
        /// Cases file: JSON lines of {"id", "case", "seed"?}.
        #[arg(long, value_name = "PATH")]
        cases: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long, short, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also ask the generator for a question of this taxonomy id.
        #[arg(long = "generate", value_name = "ID")]
        generate: Vec<String>,
        /// Event log for the batch sessions; kept in memory when omitted.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Inject blocklisted terms into template questions and report how many
    /// the grounding check rejects.
    EvalGrounding {
        /// Cases file; the shipped fixtures when omitted.
        #[arg(long, value_name = "PATH")]
        cases: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Recompute every derived record of an event log and compare.
    Replay {
        log: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve {
            host,
            port,
            log,
            model,
            engine,
            llm,
        } => {
            let log = EventLog::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let mut e = Engine::new(model.components()?, engine.config(), log);
            if let Some(generator) = llm.generator()? {
                e = e.with_generator(generator);
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            serve(Arc::new(e), addr)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Batch {
            cases,
            out,
            generate,
            log,
            model,
            engine,
            llm,
        } => {
            let log = match log {
                Some(path) => EventLog::open(&path).with_context(|| format!("opening {}", path.display()))?,
                None => EventLog::in_memory(),
            };
            let mut e = Engine::new(model.components()?, engine.config(), log);
            if let Some(generator) = llm.generator()? {
                e = e.with_generator(generator);
            }
            let text = std::fs::read_to_string(&cases).with_context(|| format!("reading {}", cases.display()))?;
            let lines = batch::run_batch(&e, &text, &generate)?;
            let output = batch::to_json_lines(&lines)?;
            match out {
                Some(path) => std::fs::write(&path, output).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{output}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalGrounding {
            cases,
            json,
            model,
            engine,
        } => {
            let components = model.components()?;
            let cases = match cases {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    load_cases(components.model.schema(), &text)?
                        .into_iter()
                        .map(|(_, c, _)| c)
                        .collect()
                }
                None => reference_cases().into_iter().map(|(_, c)| c).collect::<Vec<_>>(),
            };
            let e = Engine::new(components, engine.config(), EventLog::in_memory());
            let report = eval::evaluate_grounding(&e, &cases)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "injected: {}/{} rejected ({:.2}%)",
                    report.rejected,
                    report.injected,
                    100.0 * report.rejection_rate()
                );
                println!(
                    "templates: {}/{} accepted ({:.2}%)",
                    report.templates_accepted,
                    report.templates,
                    100.0 * report.acceptance_rate()
                );
                for q in report.missed.iter().chain(&report.template_failures) {
                    println!("  {q}");
                }
            }
            let clean = report.rejected == report.injected && report.templates_accepted == report.templates;
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Replay { log, json, model } => {
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let report = replay(&text, &model.components()?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "{} records, {} sessions, {}/{} derived payloads match",
                    report.records, report.sessions, report.matched, report.verified
                );
                for m in &report.mismatches {
                    println!("  session {} seq {} ({}): {}", m.session, m.seq, m.kind.as_str(), m.detail);
                }
            }
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn serve(engine: Arc<Engine>, addr: SocketAddr) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, api::router(engine))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
