use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use nekmini::bridge::BridgeConfig;
use nekmini::harness::{
    self, original_by_subtraction, HarnessError, Launch, Mode, Phase, RunConfig, SummaryRow,
};
use nekmini::solver::{stable_dt, SolverParams};
use nekmini::staging::ENDPOINT_ENV;

#[derive(Parser)]
#[command(name = "nekmini", version, about = "In situ and in transit analysis benchmarks for a small convection solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver with an in situ bridge.
    Run(RunArgs),
    /// Receive streamed steps from producers and run a bridge on them.
    Endpoint(EndpointArgs),
    /// Run a solver that streams steps to an endpoint.
    Producer(ProducerArgs),
    /// Run one endpoint and several producers.
    Bench(BenchArgs),
    /// Repeat `bench` for several producer counts.
    WeakScale(WeakScaleArgs),
    /// Parse a bridge configuration and list what it selects.
    ValidateConfig { path: PathBuf },
    /// Summarize every timings.csv under a directory.
    Report { dir: PathBuf },
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 1e5)]
    rayleigh: f64,
    #[arg(long, default_value_t = 0.7)]
    prandtl: f64,
    /// Time step; defaults to a stable value for the grid and parameters.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    amplitude: f64,
}

impl SolverArgs {
    fn params(&self) -> SolverParams {
        let mut p = SolverParams::new(self.nx, self.ny, self.rayleigh, self.prandtl);
        p.dt = self.dt.unwrap_or_else(|| stable_dt(self.ny, self.rayleigh, self.prandtl));
        p.seed = self.seed;
        p.perturbation_amplitude = self.amplitude;
        p
    }
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value = "out")]
    output: PathBuf,
    #[arg(long, default_value = "run")]
    label: String,
}

#[derive(Args)]
struct RunArgs {
    /// Bridge configuration; omit for the uninstrumented baseline.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct EndpointArgs {
    #[arg(long, env = ENDPOINT_ENV, default_value = "127.0.0.1:7766")]
    listen: String,
    #[arg(long, default_value_t = 4)]
    producers: u32,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    ack_delay_ms: u64,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct ProducerArgs {
    #[arg(long, env = ENDPOINT_ENV, default_value = "127.0.0.1:7766")]
    endpoint: String,
    #[arg(long)]
    id: u32,
    #[command(flatten)]
    stream: StreamArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Clone)]
struct StreamArgs {
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    /// Stream every n-th step.
    #[arg(long, default_value_t = 100)]
    frequency: u64,
    /// Do not stream the initial state.
    #[arg(long)]
    no_step_zero: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Run endpoint and producers as child processes instead of threads.
    #[arg(long)]
    spawn: bool,
    #[arg(long, default_value_t = 4)]
    producers: u32,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    ack_delay_ms: u64,
    #[command(flatten)]
    stream: StreamArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct WeakScaleArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    producers: Vec<u32>,
    /// Run everything as threads of this process.
    #[arg(long)]
    threads: bool,
    /// Endpoint bridge configuration; defaults to one null sink.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    stream: StreamArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: Output,
}

fn base_config(mode: Mode, solver: &SolverArgs, out: &Output, config: Option<PathBuf>) -> RunConfig {
    let mut cfg = RunConfig::new(mode, &out.output, &out.label);
    cfg.solver = solver.params();
    cfg.bridge_config_path = config;
    cfg
}

fn apply_stream(cfg: &mut RunConfig, s: &StreamArgs) {
    cfg.steps = s.steps;
    cfg.stream_frequency = s.frequency;
    cfg.stream_step_zero = !s.no_step_zero;
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<24} {:<16} {:>14} {:>14} {:>14}", "label", "phase", "mean_s", "stddev_s", "total_bytes");
    for r in rows {
        println!(
            "{:<24} {:<16} {:>14.6e} {:>14.6e} {:>14}",
            r.label,
            r.phase.to_string(),
            r.mean_s,
            r.stddev_s,
            r.total_bytes
        );
    }
}

fn spawn_launch() -> Result<Launch, HarnessError> {
    let exe = std::env::current_exe().map_err(|e| HarnessError::io(std::path::Path::new("nekmini"), e))?;
    Ok(Launch::Spawn { exe })
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(a) => {
            let mut cfg = base_config(Mode::Insitu, &a.solver, &a.out, a.config);
            cfg.steps = a.steps;
            let out = harness::run_insitu(&cfg)?;
            print_summary(&out.summary);
            println!(
                "time per step {:.6e} s, sink bytes {}, peak RSS {} bytes, sink failures {}",
                out.time_per_step(),
                out.sink_bytes(),
                out.memory.peak_rss_bytes,
                out.sink_failures
            );
            if out.bridge.sinks.iter().any(|s| s.invocations > 0) {
                if let Some(o) = original_by_subtraction(&out.summary, &out.label) {
                    println!("baseline by subtraction {o:.6e} s per step");
                }
            }
        }
        Command::Endpoint(a) => {
            let mut cfg = base_config(Mode::IntransitEndpoint, &SolverArgs::default_args(), &a.out, a.config);
            cfg.endpoint_address = a.listen;
            cfg.producers = a.producers;
            cfg.ack_delay = Duration::from_millis(a.ack_delay_ms);
            let (out, _, _) = harness::run_endpoint(&cfg, |addr| {
                println!("{}{addr}", harness::LISTENING_PREFIX);
                let _ = std::io::stdout().flush();
            })?;
            if let Some(reason) = &out.aborted {
                return Err(format!("run aborted after {} steps: {reason}", out.steps_completed).into());
            }
            eprintln!("endpoint: {} steps, {} sink bytes", out.steps_completed, out.sink_bytes());
        }
        Command::Producer(a) => {
            let mut cfg = base_config(Mode::IntransitProducer, &a.solver, &a.out, None);
            apply_stream(&mut cfg, &a.stream);
            cfg.endpoint_address = a.endpoint;
            let out = harness::run_producer(&cfg, a.id)?;
            eprintln!(
                "producer {}: {} steps streamed, {} payload bytes",
                a.id,
                out.steps_streamed(),
                out.payload_bytes()
            );
        }
        Command::Bench(a) => {
            let mut cfg = base_config(Mode::IntransitEndpoint, &a.solver, &a.out, a.config);
            apply_stream(&mut cfg, &a.stream);
            cfg.producers = a.producers;
            cfg.ack_delay = Duration::from_millis(a.ack_delay_ms);
            let launch = if a.spawn { spawn_launch()? } else { Launch::Threads };
            let out = harness::run_intransit(&cfg, &launch)?;
            print_summary(&out.summary);
            println!(
                "endpoint steps {}, endpoint sink bytes {}, aggregate peak RSS {} bytes",
                out.endpoint.steps_completed,
                out.endpoint.sink_bytes(),
                out.aggregate_peak_rss
            );
        }
        Command::WeakScale(a) => {
            let config = match a.config {
                Some(p) => p,
                None => harness::write_config(&a.out.output, "null.xml", harness::NULL_CONFIG_XML)?,
            };
            let mut cfg = base_config(Mode::IntransitEndpoint, &a.solver, &a.out, Some(config));
            apply_stream(&mut cfg, &a.stream);
            let launch = if a.threads { Launch::Threads } else { spawn_launch()? };
            let rows = harness::weak_scaling(&cfg, &a.producers, &launch)?;
            println!("{:>9} {:>14} {:>14} {:>16} {:>14}", "producers", "mean_step_s", "stddev_s", "peak_rss_mean", "payload_bytes");
            for r in &rows {
                println!(
                    "{:>9} {:>14.6e} {:>14.6e} {:>16.0} {:>14}",
                    r.producers,
                    r.mean_step_s,
                    r.stddev_s,
                    r.producer_peak_rss_mean,
                    r.payload_bytes.first().copied().unwrap_or(0)
                );
            }
        }
        Command::ValidateConfig { path } => {
            let cfg = BridgeConfig::load(&path)?;
            println!("trigger_at_step_zero = {}", cfg.trigger_at_step_zero);
            for (i, s) in cfg.specs.iter().enumerate() {
                let params: Vec<String> = s.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{i}: {} every {} steps {}", s.kind, s.frequency, params.join(" "));
            }
            for w in &cfg.warnings {
                println!("warning: {w}");
            }
        }
        Command::Report { dir } => {
            let rows = harness::report(&dir)?;
            print_summary(&rows);
            let labels: Vec<&str> = {
                let mut l: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
                l.dedup();
                l
            };
            for l in labels {
                if rows.iter().any(|r| r.label == l && r.phase == Phase::Sink && r.total_bytes > 0) {
                    if let Some(o) = original_by_subtraction(&rows, l) {
                        println!("{l}: baseline by subtraction {o:.6e} s per step");
                    }
                }
            }
        }
    }
    Ok(())
}

impl SolverArgs {
    fn default_args() -> Self {
        Self {
            nx: 64,
            ny: 64,
            rayleigh: 1e5,
            prandtl: 0.7,
            dt: None,
            seed: 0,
            amplitude: 1e-3,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
