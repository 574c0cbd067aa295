use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use needlesim_core::experiment::{ExperimentKind, ExperimentOptions};
use needlesim_core::{run_experiment, Modality, SimConfig};
use needlesim_server::Session;

#[derive(Parser)]
#[command(name = "needlesim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment with the simulated operator.
    Run(RunArgs),
    /// Serve interactive sessions over WebSocket.
    Serve(ServeArgs),
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    experiment: ExperimentKind,
    /// Modalities to include (HF, VF, CF, CCF). Defaults to all four.
    #[arg(long, value_delimiter = ',')]
    modality: Vec<Modality>,
    /// Repetitions per modality.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feedback-path delay, overriding the experiment default.
    #[arg(long)]
    delay_ms: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run trials one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with the web UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Write each finished trial to `trial_<id>.csv` here.
    #[arg(long)]
    record_dir: Option<PathBuf>,
}

fn load_config(path: Option<&PathBuf>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn mm(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.3}", v * 1e3))
}

fn run(args: RunArgs) -> Result<()> {
    let config = load_config(args.config.as_ref())?;
    let mut options = ExperimentOptions::new(args.experiment, &config);
    if !args.modality.is_empty() {
        options.modalities = args.modality;
    }
    if let Some(reps) = args.reps {
        options.repetitions = reps;
    }
    if let Some(seed) = args.seed {
        options.seed = seed;
    }
    if let Some(delay) = args.delay_ms {
        anyhow::ensure!(delay.is_finite() && delay >= 0.0, "--delay-ms must be non-negative");
    }
    options.feedback_delay_ms = args.delay_ms;
    options.parallel = !args.serial;

    let report = run_experiment(&config, &options);
    report
        .write_outputs(&args.out, config.tissue.surface_rest)
        .with_context(|| format!("writing outputs to {}", args.out.display()))?;

    let aggregates = report.aggregates();
    println!(
        "{} seed={} delay={} ms trials={}",
        aggregates.experiment, aggregates.seed, aggregates.feedback_delay_ms, aggregates.trial_count
    );
    println!(
        "{:<4} {:>4} {:>4} {:>10} {:>10} {:>9} {:>10} {:>6}",
        "mod", "done", "t/o", "avg p mm", "max p mm", "time s", "dp mm", "peaks"
    );
    for m in &aggregates.modalities {
        println!(
            "{:<4} {:>4} {:>4} {:>10} {:>10} {:>9} {:>10} {:>6}",
            m.modality.code(),
            m.completed,
            m.timeouts,
            mm(m.avg_penetration.mean),
            mm(m.max_penetration.mean),
            m.completion_time.mean.map_or_else(|| "-".into(), |v| format!("{v:.2}")),
            mm(m.delta_p.mean),
            m.oscillation_peaks
                .mean
                .map_or_else(|| "-".into(), |v| format!("{v:.1}")),
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

async fn serve(args: ServeArgs) -> Result<()> {
    let config = load_config(args.config.as_ref())?;
    let mut session = Session::new(config);
    if let Some(dir) = args.record_dir {
        session = session.with_record_dir(dir);
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid --host/--port")?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    println!("listening on http://{}", listener.local_addr()?);
    needlesim_server::serve(listener, session, args.static_dir).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Serve(args) => tokio::runtime::Runtime::new()?.block_on(serve(args)),
        Command::Config { config } => {
            print!("{}", load_config(config.as_ref())?.to_toml_string());
            Ok(())
        }
    }
}
