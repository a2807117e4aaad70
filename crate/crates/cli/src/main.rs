use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use borderforge::commands::{self, ExtractInput, SeedInput};
use borderforge::service::{self, ServiceConfig};
use borderforge_core::geometry::Point2;
use borderforge_core::harness::RunOptions;
use borderforge_core::interaction::Mode;
use clap::{Parser, Subcommand};

/// Teach a simulated robot virtual borders, replay scenarios, and serve live sessions.
#[derive(Debug, Parser)]
#[command(name = "borderforge", version)]
struct Cli {
    /// Log filter, e.g. `info` or `borderforge=debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Replay one scenario with the scripted user.
    Run {
        /// Scenario file, or builtin:1..3.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "nrs")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplier on the camera noise; 0 disables noise.
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay scenarios in both modes over many seeds and write aggregate tables.
    Batch {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Scenario files or builtin:N; defaults to the three built-in scenarios.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a border from recorded points and integrate it into a map.
    Extract {
        /// CSV with x,y columns in meters.
        #[arg(long)]
        points: PathBuf,
        /// Seed location as x,y.
        #[arg(long, value_parser = parse_point, conflicts_with = "seed_points")]
        seed: Option<Point2>,
        /// CSV of recorded seed points.
        #[arg(long)]
        seed_points: Option<PathBuf>,
        /// Extraction parameters (TOML); defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Prior map (PGM, or its YAML descriptor).
        #[arg(long)]
        map: PathBuf,
        /// Cell size for a bare PGM without descriptor.
        #[arg(long, default_value_t = 0.025)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the session API over HTTP and WebSocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Point2::new(num(x)?, num(y)?))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Run {
            scenario,
            mode,
            seed,
            noise_scale,
            out,
        } => {
            let sc = commands::load_scenario(&scenario)?;
            let opts = RunOptions {
                mode,
                seed,
                noise_scale,
            };
            commands::run(&sc, opts, &out)
        }
        Cmd::Batch {
            seeds,
            scenarios,
            noise_scale,
            out,
        } => {
            let scs = if scenarios.is_empty() {
                commands::default_scenarios()
            } else {
                scenarios
                    .iter()
                    .map(|s| commands::load_scenario(s))
                    .collect::<Result<_>>()?
            };
            commands::batch(&scs, seeds, noise_scale, &out)
        }
        Cmd::Extract {
            points,
            seed,
            seed_points,
            params,
            map,
            resolution,
            out,
        } => {
            let seed = match (seed, seed_points) {
                (Some(p), _) => SeedInput::At(p),
                (None, Some(file)) => SeedInput::Recorded(commands::read_points(&file)?),
                (None, None) => anyhow::bail!("either --seed or --seed-points is required"),
            };
            commands::extract(&ExtractInput {
                points,
                seed,
                params,
                map,
                resolution,
                out,
            })
        }
        Cmd::Serve { port, host } => {
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(service::serve(SocketAddr::new(host, port), ServiceConfig::default()))
                .context("serving")?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            tracing::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
