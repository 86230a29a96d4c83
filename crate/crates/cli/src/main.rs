//! `gazealign` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gazealign_core::analysis::Frame;
use gazealign_core::simulator::{Interleaving, ScenarioKind};

#[derive(Debug, Parser)]
#[command(
    name = "gazealign",
    version,
    about = "Synchronize gaze with image manipulation streams and analyze gaze in image coordinates"
)]
struct Cli {
    /// Print machine-readable JSON to stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
struct SyncArgs {
    /// Pairing tolerance in milliseconds.
    #[arg(long, default_value_t = gazealign_core::sync::DEFAULT_DELTA_MS)]
    delta_ms: i64,
    /// Extra wait beyond the tolerance before a gaze sample is finalized.
    #[arg(long, default_value_t = 0)]
    watermark_slack_ms: i64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the ingest service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        data_dir: PathBuf,
        #[command(flatten)]
        sync: SyncArgs,
    },
    /// Generate a synthetic session and optionally replay it into a service.
    Simulate(SimulateArgs),
    /// Merge a session's raw streams into combined.csv and quality.json.
    Merge {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        sync: SyncArgs,
    },
    /// Map combined gaze into intrinsic image pixels.
    Reconstruct {
        #[arg(long)]
        session: PathBuf,
        /// Output CSV; defaults to intrinsic.csv in the session directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a gaze density heatmap (PNG plus .json sidecar).
    Heatmap {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value = "intrinsic")]
        frame: Frame,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        #[arg(long, default_value_t = 96)]
        rows: usize,
        /// Gaussian sigma in frame pixels.
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Keep samples that fall outside the frame.
        #[arg(long)]
        include_off_frame: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the gaze trace (PNG plus polyline .json).
    Trace {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value = "intrinsic")]
        frame: Frame,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render replay frames and an index.json into a directory.
    Replay {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality report of a session, recomputed from its raw streams.
    Quality {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        sync: SyncArgs,
    },
    /// Distance of gaze from a fixation target in image and screen frames.
    GuidedError {
        #[arg(long)]
        session: PathBuf,
        /// Target as `x,y` intrinsic pixels; defaults to the simulator's
        /// ground truth when present.
        #[arg(long, value_parser = parse_point)]
        target: Option<(f64, f64)>,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario kind; required unless given by --config.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with `scenario` and `faults` objects; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data directory; the session is written to `<out>/<pid>/<task>/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pid: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    duration_ms: Option<i64>,
    #[arg(long)]
    gaze_noise_px: Option<f64>,
    #[arg(long)]
    jitter_ms: Option<i64>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    pairing_offset_ms: Option<i64>,
    #[arg(long)]
    drift_px_per_min: Option<f64>,
    #[arg(long)]
    recalibration_threshold_px: Option<f64>,
    /// Also replay the session into a running service.
    #[arg(long)]
    serve_addr: Option<String>,
    #[arg(long, default_value = "sorted")]
    interleaving: Interleaving,
    #[arg(long, default_value_t = 500)]
    batch_size: usize,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(x)?, parse(y)?))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli.command, cli.json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
