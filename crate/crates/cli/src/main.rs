use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use siv_core::env::Variant;
use siv_core::experiment::{export, read_records, run_experiment_parallel, ExperimentResult, ExperimentSpec, RunMetrics};
use siv_core::session_log::{read_log, replay};
use siv_core::SivError;
use siv_session::{serve, SessionConfig, SessionError};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "siv", version, about = "Grip-preference learning with gesture feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent comparison against the synthetic user.
    Run {
        /// Experiment spec (JSON). Missing fields take their defaults.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repeat for this many consecutive master seeds.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Run cells in variant-major, run-major order.
        #[arg(long)]
        no_shuffle: bool,
        /// Cells to run at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Re-run a recorded session log and check it step for step.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Rebuild metrics and panel CSVs from a records file.
    ExportPlots {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve live sessions over a WebSocket.
    Serve {
        /// Server configuration (JSON); flags below override it.
        #[arg(long, conflicts_with = "spec")]
        config: Option<PathBuf>,
        /// Take environment, learner and preferences from an experiment spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        run: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Seconds a disconnected session waits for its client.
        #[arg(long)]
        resume_timeout: Option<u64>,
        /// Send the agent's action values with every state frame.
        #[arg(long)]
        show_q_values: bool,
        /// Tell the client which variant it is training.
        #[arg(long)]
        reveal_variant: bool,
        /// Do not send the object size to the client.
        #[arg(long)]
        hide_object: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SivError> for Failure {
    fn from(e: SivError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Config(_) => Failure::Config(e.to_string()),
            SessionError::Core(inner) => inner.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { spec, out, seeds, no_shuffle, parallel } => cmd_run(&spec, &out, seeds, no_shuffle, parallel),
        Command::Replay { log } => cmd_replay(&log),
        Command::ExportPlots { records, out } => cmd_export(&records, &out),
        Command::Serve {
            config,
            spec,
            listen,
            log_dir,
            variant,
            run,
            seed,
            resume_timeout,
            show_q_values,
            reveal_variant,
            hide_object,
        } => session_config(config.as_deref(), spec.as_deref()).and_then(|mut c| {
            if let Some(v) = listen {
                c.listen = v;
            }
            if let Some(v) = log_dir {
                c.log_dir = v;
            }
            if let Some(v) = variant {
                c.variant = v;
            }
            if let Some(v) = run {
                c.run = v;
            }
            if let Some(v) = seed {
                c.master_seed = v;
            }
            if let Some(v) = resume_timeout {
                c.resume_timeout_ms = v.saturating_mul(1000);
            }
            c.show_q_values |= show_q_values;
            c.blind &= !reveal_variant;
            c.object_size_visible &= !hide_object;
            cmd_serve(c)
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("siv: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("siv: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

#[derive(Serialize)]
struct SeedSummary {
    master_seed: u64,
    dir: String,
    total_pushes: Vec<(Variant, usize)>,
    total_steps: Vec<(Variant, usize)>,
}

fn cmd_run(spec_path: &Path, out: &Path, seeds: usize, no_shuffle: bool, parallel: usize) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if no_shuffle {
        spec.blind_shuffle = false;
    }
    if seeds == 0 || parallel == 0 {
        return Err(Failure::Config("--seeds and --parallel must be at least 1".into()));
    }
    spec.validate()?;
    if seeds == 1 {
        let result = run_experiment_parallel(&spec, parallel)?;
        export(&result.records, &result.metrics, out)?;
        print_totals(spec.master_seed, &result);
        return Ok(());
    }
    let mut summaries = Vec::new();
    for i in 0..seeds as u64 {
        let seeded = ExperimentSpec { master_seed: spec.master_seed.wrapping_add(i), ..spec.clone() };
        let dir = format!("seed-{}", seeded.master_seed);
        let result = run_experiment_parallel(&seeded, parallel)?;
        export(&result.records, &result.metrics, &out.join(&dir))?;
        print_totals(seeded.master_seed, &result);
        summaries.push(SeedSummary {
            master_seed: seeded.master_seed,
            dir,
            total_pushes: result.metrics.variants.iter().map(|t| (t.variant, t.total_pushes)).collect(),
            total_steps: result.metrics.variants.iter().map(|t| (t.variant, t.total_steps)).collect(),
        });
    }
    let mut text = serde_json::to_string_pretty(&summaries).map_err(SivError::from)?;
    text.push('\n');
    fs::write(out.join("seeds.json"), text).map_err(SivError::from)?;
    Ok(())
}

fn print_totals(seed: u64, result: &ExperimentResult) {
    for t in &result.metrics.variants {
        println!(
            "seed {seed:>4}  {:<9} steps {:>6}  pushes {:>4}  reward {:>6}  truncated {}",
            t.variant.label(),
            t.total_steps,
            t.total_pushes,
            t.total_reward,
            t.truncated
        );
    }
}

fn cmd_replay(log: &Path) -> Result<(), Failure> {
    let file = fs::File::open(log).map_err(|e| Failure::Config(format!("cannot open {}: {e}", log.display())))?;
    let recording = read_log(BufReader::new(file))?;
    let report = replay(&recording)?;
    println!(
        "replay ok: {} ticks, {} episodes, weights {}",
        report.ticks,
        report.episodes.len(),
        report.weight_digest
    );
    Ok(())
}

fn cmd_export(records: &Path, out: &Path) -> Result<(), Failure> {
    if !records.is_file() {
        return Err(Failure::Config(format!("no records file at {}", records.display())));
    }
    let rows = read_records(records)?;
    let metrics = RunMetrics::from_records(&rows);
    export(&rows, &metrics, out)?;
    println!("wrote metrics and {} panel files for {} records to {}", 5, rows.len(), out.display());
    Ok(())
}

fn session_config(config: Option<&Path>, spec: Option<&Path>) -> Result<SessionConfig, Failure> {
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        return serde_json::from_str(&text).map_err(|e| Failure::Config(format!("session config: {e}")));
    }
    match spec {
        Some(path) => Ok(SessionConfig::from_spec(&ExperimentSpec::load(path)?)),
        None => Ok(SessionConfig::default()),
    }
}

fn cmd_serve(config: SessionConfig) -> Result<(), Failure> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let server = serve(config).await?;
        eprintln!("listening on ws://{}/ (ctrl-c to stop)", server.local_addr());
        tokio::signal::ctrl_c().await.map_err(|e| Failure::Runtime(e.to_string()))?;
        server.shutdown().await;
        Ok(())
    })
}
