use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tokroute_cli::config::{EffectiveConfig, Overrides};
use tokroute_cli::replay::{read_transcript, run_transcript};
use tokroute_cli::service;
use tokroute_core::protocol::{check_text, parse, tasks};
use tokroute_dataset::jsonl::{read_records, read_samples, write_records};
use tokroute_dataset::{build_multiturn, dataset_stats, partition_records, TemplateSet};

#[derive(Parser)]
#[command(name = "tokroute", version, about = "Route task tokens in model output to expert backends")]
struct Cli {
    /// Directory for sessions and artifacts.
    #[arg(long, global = true)]
    state_dir: Option<PathBuf>,
    /// Log filter, e.g. `info` or `tokroute=debug`.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a JSONL transcript and write a run report.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Check one message; exits 1 if it has violations.
    Validate {
        #[arg(long)]
        text: String,
    },
    /// Build multi-turn conversations from annotated samples.
    Build {
        #[arg(long)]
        input: PathBuf,
        /// Directory of template TOML files; built-in templates otherwise.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        turns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter conversations and write a rejection report.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Where to write the kept records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| format!("cannot open {}: {e}", path.display()).into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()).into())
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn init_logging(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter).unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn config(cli: &Cli, file: Option<&Path>, listen: Option<String>) -> Result<EffectiveConfig> {
    let flags = Overrides {
        state_dir: cli.state_dir.clone(),
        listen,
        log: cli.log.clone(),
    };
    let cfg = EffectiveConfig::from_process_env(file, &flags)?;
    init_logging(&cfg.log);
    Ok(cfg)
}

async fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Replay {
            transcript,
            config: file,
            out,
        } => {
            let cfg = config(&cli, file.as_deref(), None)?;
            let t = read_transcript(open(transcript)?)?;
            let report = run_transcript(&t, &cfg).await?;
            tracing::info!(
                turns = report.turns.len(),
                failed_turns = report.failed_turns,
                failed_invocations = report.failed_invocations,
                "replay finished"
            );
            write_json(out.as_deref(), &report)?;
        }
        Command::Serve { config: file, listen } => {
            let cfg = config(&cli, file.as_deref(), listen.clone())?;
            service::serve(&cfg).await?;
        }
        Command::Validate { text } => {
            let violations = check_text(text);
            let summary = match parse(text) {
                Ok(msg) => serde_json::json!({
                    "tasks": tasks(&msg).iter().map(|t| t.kind).collect::<Vec<_>>(),
                    "violations": violations,
                }),
                Err(_) => serde_json::json!({ "violations": violations }),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !violations.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Build {
            input,
            templates,
            turns,
            seed,
            out,
        } => {
            let set = match templates {
                Some(dir) => TemplateSet::load_dir(dir)?,
                None => TemplateSet::builtin(),
            };
            let samples = read_samples(open(input)?)?;
            let records = samples
                .iter()
                .enumerate()
                .map(|(i, s)| build_multiturn(s, *turns, seed.wrapping_add(i as u64), &set))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut w = create(out)?;
            write_records(&mut w, &records)?;
            w.flush()?;
            eprintln!("built {} records", records.len());
        }
        Command::Filter { input, report, out } => {
            let records = read_records(open(input)?)?;
            let (kept, summary) = partition_records(&records);
            write_json(Some(report), &summary)?;
            if let Some(out) = out {
                let mut w = create(out)?;
                write_records(&mut w, &kept)?;
                w.flush()?;
            }
            eprintln!("kept {}, rejected {}", summary.kept, summary.rejected.len());
        }
        Command::Stats { input } => {
            let records = read_records(open(input)?)?;
            write_json(None, &dataset_stats(&records))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
