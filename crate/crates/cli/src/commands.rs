use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use gazealign_core::analysis::{
    guided_error, heatmap_image, heatmap_screen, replay_frames, trace, write_heatmap, write_replay,
    write_trace, AnalysisError, Frame, HeatmapOptions, RenderStyle,
};
use gazealign_core::formats::{
    self, combined_csv_bytes, intrinsic_csv_bytes, parse_jsonl, to_jsonl, FormatError, SessionData,
    SessionDescriptor, SessionDir, SessionStatus,
};
use gazealign_core::geometry::reconstruct;
use gazealign_core::simulator::{generate, GroundTruth, SimError, SimulationConfig};
use gazealign_core::sync::SyncError;
use gazealign_core::{
    merge_offline, quality, CombinedRecord, HomPoint, QualityReport, SyncConfig, ViewportGeometry,
};
use gazealign_service::{
    replay_to_service, IngestClient, OpenRequest, ReplayError, ReplayOptions, Server, ServiceError,
};
use serde::Serialize;
use serde_json::json;

use crate::{Command, SimulateArgs, SyncArgs};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const SCENARIO_FILE: &str = "scenario.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<SyncError> for CliError {
    fn from(e: SyncError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(_) => CliError::Data(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Transport(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn sync_config(args: SyncArgs) -> Result<SyncConfig, CliError> {
    let cfg = SyncConfig {
        delta_ms: args.delta_ms,
        watermark_slack_ms: args.watermark_slack_ms,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Prints `value` as JSON with `--json`, otherwise the human summary.
/// A closed stdout (e.g. piped into `head`) is not an error.
fn emit<T: Serialize>(as_json: bool, value: &T, human: impl FnOnce() -> String) {
    let text = if as_json {
        serde_json::to_string_pretty(value).expect("output serializes")
    } else {
        human()
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))
}

pub fn run(command: Command, as_json: bool) -> Result<(), CliError> {
    match command {
        Command::Serve {
            bind,
            data_dir,
            sync,
        } => serve(bind, data_dir, sync),
        Command::Simulate(args) => simulate(args, as_json),
        Command::Merge { session, sync } => merge(&session, sync, as_json),
        Command::Reconstruct { session, out } => reconstruct_cmd(&session, out, as_json),
        Command::Heatmap {
            session,
            frame,
            cols,
            rows,
            bandwidth,
            include_off_frame,
            out,
        } => {
            let opts = HeatmapOptions {
                bandwidth,
                include_off_frame,
                ..HeatmapOptions::new(cols, rows)
            };
            heatmap(&session, frame, &opts, &out, as_json)
        }
        Command::Trace {
            session,
            frame,
            out,
        } => trace_cmd(&session, frame, &out, as_json),
        Command::Replay { session, fps, out } => replay(&session, fps, &out, as_json),
        Command::Quality { session, sync } => quality_cmd(&session, sync, as_json),
        Command::GuidedError { session, target } => guided(&session, target, as_json),
    }
}

fn serve(bind: std::net::SocketAddr, data_dir: PathBuf, sync: SyncArgs) -> Result<(), CliError> {
    let cfg = sync_config(sync)?;
    runtime()?.block_on(async move {
        let server = Server::bind(bind, data_dir, cfg).await?;
        eprintln!("listening on http://{}", server.local_addr());
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
            serde_json::from_slice::<SimulationConfig>(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => {
            let kind = args
                .scenario
                .ok_or_else(|| CliError::Usage("--scenario or --config is required".into()))?;
            SimulationConfig {
                scenario: gazealign_core::simulator::Scenario::new(kind, 0),
                ..Default::default()
            }
        }
    };
    let s = &mut cfg.scenario;
    if let Some(kind) = args.scenario {
        s.kind = kind;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(pid) = &args.pid {
        s.pid = pid.clone();
    }
    if let Some(task) = &args.task {
        s.task = Some(task.clone());
    }
    if let Some(d) = args.duration_ms {
        s.duration_ms = d;
    }
    if let Some(n) = args.gaze_noise_px {
        s.gaze_noise_sigma_px = n;
    }
    let f = &mut cfg.faults;
    if let Some(j) = args.jitter_ms {
        f.timestamp_jitter_ms = j;
    }
    if let Some(p) = args.drop_prob {
        f.drop_prob = p;
    }
    if let Some(o) = args.pairing_offset_ms {
        f.pairing_offset_ms = o;
    }
    if let Some(d) = args.drift_px_per_min {
        f.drift_px_per_min = d;
    }
    if let Some(r) = args.recalibration_threshold_px {
        f.recalibration_threshold_px = r;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SimulateSummary {
    session: PathBuf,
    gaze: usize,
    transforms: usize,
    events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    service_quality: Option<QualityReport>,
}

fn simulate(args: SimulateArgs, as_json: bool) -> Result<(), CliError> {
    let cfg = simulation_config(&args)?;
    let scenario = &cfg.scenario;
    let task = scenario.task_name();
    let data = generate(scenario, &cfg.faults)?;
    let dir = SessionDir::for_key(&args.out, &scenario.pid, &task)?;
    let descriptor = SessionDescriptor {
        pid: scenario.pid.clone(),
        task: task.clone(),
        geom: scenario.geom,
        created_at: scenario.start_ms,
        status: SessionStatus::Closed,
    };
    dir.write_streams(&SessionData {
        descriptor,
        gaze: data.gaze.clone(),
        transforms: data.transforms.clone(),
        events: data.events.clone(),
    })?;
    formats::write(&dir.root().join(GROUND_TRUTH_FILE), &to_jsonl(&data.truth))?;
    let mut cfg_bytes = serde_json::to_vec_pretty(&cfg).expect("config serializes");
    cfg_bytes.push(b'\n');
    formats::write(&dir.root().join(SCENARIO_FILE), &cfg_bytes)?;

    let service_quality = match &args.serve_addr {
        Some(addr) => {
            let client = IngestClient::new(addr);
            let open = OpenRequest {
                pid: scenario.pid.clone(),
                task: task.clone(),
                geom: scenario.geom,
            };
            let opts = ReplayOptions {
                interleaving: args.interleaving,
                batch_size: args.batch_size,
                shuffle_seed: scenario.seed,
            };
            Some(runtime()?.block_on(replay_to_service(&client, &open, &data, &opts))?)
        }
        None => None,
    };
    let summary = SimulateSummary {
        session: dir.root().to_owned(),
        gaze: data.gaze.len(),
        transforms: data.transforms.len(),
        events: data.events.len(),
        service_quality,
    };
    emit(as_json, &summary, || {
        let mut s = format!(
            "wrote {} ({} gaze, {} transform, {} calibration events)",
            summary.session.display(),
            summary.gaze,
            summary.transforms,
            summary.events
        );
        if let Some(q) = &summary.service_quality {
            s.push_str(&format!(
                "\nservice: {} of {} gaze matched ({}%)",
                q.matched, q.total_gaze, q.matched_pct
            ));
        }
        s
    });
    Ok(())
}

fn merged_report(
    dir: &SessionDir,
    sync: SyncArgs,
) -> Result<(Vec<CombinedRecord>, QualityReport), CliError> {
    let cfg = sync_config(sync)?;
    let data = dir.load()?;
    let out = merge_offline(&data.gaze, &data.transforms, &cfg)?;
    let report = quality(&out.records, &out.discarded, &data.events);
    Ok((out.records, report))
}

fn quality_summary(report: &QualityReport) -> String {
    format!(
        "{} gaze samples: {} matched ({}%), {} discarded, {} off-screen, {} recalibrations",
        report.total_gaze,
        report.matched,
        report.matched_pct,
        report.discarded,
        report.off_screen,
        report.recalibration_events
    )
}

fn merge(session: &Path, sync: SyncArgs, as_json: bool) -> Result<(), CliError> {
    let dir = SessionDir::new(session);
    let (records, report) = merged_report(&dir, sync)?;
    formats::write(&dir.combined_path(), &combined_csv_bytes(&records))?;
    formats::write(&dir.quality_path(), &report.to_json_bytes())?;
    emit(as_json, &report, || quality_summary(&report));
    Ok(())
}

fn quality_cmd(session: &Path, sync: SyncArgs, as_json: bool) -> Result<(), CliError> {
    let (_, report) = merged_report(&SessionDir::new(session), sync)?;
    emit(as_json, &report, || quality_summary(&report));
    Ok(())
}

/// Combined records and geometry of a merged session.
fn load_merged(session: &Path) -> Result<(Vec<CombinedRecord>, ViewportGeometry), CliError> {
    let dir = SessionDir::new(session);
    let descriptor = dir.read_descriptor()?;
    let records = dir.read_combined()?;
    Ok((records, descriptor.geom))
}

fn reconstruct_cmd(session: &Path, out: Option<PathBuf>, as_json: bool) -> Result<(), CliError> {
    let (records, geom) = load_merged(session)?;
    let rows: Vec<(&CombinedRecord, HomPoint)> = records
        .iter()
        .filter_map(|r| {
            reconstruct(r.xn, r.yn, &r.transform(), &geom)
                .ok()
                .map(|p| (r, p))
        })
        .collect();
    let path = out.unwrap_or_else(|| session.join("intrinsic.csv"));
    formats::write(&path, &intrinsic_csv_bytes(&rows))?;
    let summary = json!({ "out": path, "rows": rows.len(), "skipped": records.len() - rows.len() });
    emit(as_json, &summary, || {
        format!(
            "wrote {} ({} rows, {} skipped)",
            path.display(),
            rows.len(),
            records.len() - rows.len()
        )
    });
    Ok(())
}

fn heatmap(
    session: &Path,
    frame: Frame,
    opts: &HeatmapOptions,
    out: &Path,
    as_json: bool,
) -> Result<(), CliError> {
    let (records, geom) = load_merged(session)?;
    let grid = match frame {
        Frame::Screen => heatmap_screen(&records, &geom, opts)?,
        Frame::Intrinsic => heatmap_image(&records, &geom, opts)?,
    };
    write_heatmap(&grid, &RenderStyle::default(), out)?;
    let sidecar = grid.sidecar();
    emit(as_json, &sidecar, || {
        format!(
            "wrote {} ({} included, {} excluded)",
            out.display(),
            sidecar.included,
            sidecar.excluded
        )
    });
    Ok(())
}

fn trace_cmd(session: &Path, frame: Frame, out: &Path, as_json: bool) -> Result<(), CliError> {
    let (records, geom) = load_merged(session)?;
    let line = trace(&records, frame, &geom);
    let extent = match frame {
        Frame::Screen => (geom.screen_w, geom.screen_h),
        Frame::Intrinsic => (geom.intrinsic_w, geom.intrinsic_h),
    };
    write_trace(&line, extent, &RenderStyle::default(), out)?;
    let summary = json!({ "out": out, "points": line.points.len(), "skipped": line.skipped });
    emit(as_json, &summary, || {
        format!("wrote {} ({} points)", out.display(), line.points.len())
    });
    Ok(())
}

fn replay(session: &Path, fps: f64, out: &Path, as_json: bool) -> Result<(), CliError> {
    let (records, geom) = load_merged(session)?;
    let frames = replay_frames(&records, &geom, fps)?;
    write_replay(&frames, fps, &geom, &RenderStyle::default(), out)?;
    let summary = json!({ "out": out, "frames": frames.len(), "fps": fps });
    emit(as_json, &summary, || {
        format!("wrote {} frames to {}", frames.len(), out.display())
    });
    Ok(())
}

fn guided(session: &Path, target: Option<(f64, f64)>, as_json: bool) -> Result<(), CliError> {
    let (records, geom) = load_merged(session)?;
    let target = match target {
        Some(t) => t,
        None => {
            let path = session.join(GROUND_TRUTH_FILE);
            let truth: Vec<GroundTruth> = parse_jsonl(&formats::read(&path).map_err(|_| {
                CliError::Usage(format!(
                    "--target is required when {} is absent",
                    path.display()
                ))
            })?)?;
            truth
                .first()
                .map(|g| g.intrinsic)
                .ok_or_else(|| CliError::Data("ground truth is empty".into()))?
        }
    };
    let report = guided_error(&records, HomPoint::new(target.0, target.1), &geom)?;
    emit(as_json, &report, || {
        format!(
            "target ({}, {}): median image error {:.1} px, median screen error {:.1} px over {} samples",
            target.0,
            target.1,
            report.median_image_px,
            report.median_screen_px,
            report.image_distances.len()
        )
    });
    Ok(())
}
