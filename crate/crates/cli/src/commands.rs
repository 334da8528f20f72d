//! Subcommand implementations.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use contrast_bnb::event::Event;
use contrast_bnb::io::{
    read_calibration, read_events, read_ground_truth, read_reports, summarize, undistort, write_events,
    write_ground_truth, write_iwe_image, write_reports, write_trace_csv, Calibration, GroundTruth, RmsSummary,
};
use contrast_bnb::loss::LossKind;
use contrast_bnb::synth::{add_noise, gen_events, gen_scene, Motion, NoiseSpec, SceneExtent, SensorSpec};
use contrast_bnb::warp::{
    AckermannModel, AckermannParams, FlowModel, FlowParams, Intrinsics, RigConfig, RotationModel, RotationParams,
    SearchBox, WarpModel,
};
use serde::{Deserialize, Serialize};

use crate::args::{LossArgs, Patch, SolveArgs, Space, SynthModel};
use crate::pipeline::{geometry_for, run_windows, RunSpec, TauSpec, WindowOutcome};
use crate::CliError;

const FLOW_SPACE: [[f64; 2]; 2] = [[-100.0, 100.0], [-100.0, 100.0]];
const PLANAR_SPACE: [[f64; 2]; 2] = [[-1.0, 1.0], [-1.0, 1.0]];
const ROTATION_SPACE: [[f64; 2]; 3] = [[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]];

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Sensor patch `x0,y0,width,height` (default: the whole sensor).
    #[arg(long)]
    pub patch: Option<Patch>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub model: SynthModel,
    /// Ackermann angular velocity (rad/s).
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub omega: f64,
    /// Ackermann linear velocity (m/s).
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub v: f64,
    /// Flow velocity (px/s).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub vy: f64,
    /// Angular velocity (rad/s).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub wx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub wy: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub wz: f64,
    /// Window length (s).
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    /// Signal events per window.
    #[arg(long, default_value_t = 10_000)]
    pub events: usize,
    #[arg(long, default_value_t = 20)]
    pub segments: usize,
    /// Scene plane depth (m).
    #[arg(long, default_value_t = 2.0)]
    pub depth: f64,
    /// Noise-to-signal event ratio.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 346)]
    pub width: usize,
    #[arg(long, default_value_t = 260)]
    pub height: usize,
    #[arg(long, default_value_t = 300.0)]
    pub f: f64,
    /// Camera offset along the vehicle axis (m).
    #[arg(long, default_value_t = -0.45, allow_hyphen_values = true)]
    pub l: f64,
    /// Camera height above the ground plane (m); defaults to the scene depth.
    #[arg(long)]
    pub d: Option<f64>,
    /// Output directory for `events.txt`, `calib.txt` and `gt.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Report written by `flow`, `planar` or `rotation`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Summary as JSON (default: stdout).
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Calibration with `l` and `d`.
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub space: Option<Space>,
    /// Gap for SoS; Var uses `tau / N_p`.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Gap of the exponential losses relative to their value at the box centre.
    #[arg(long, default_value_t = 1e-4)]
    pub tau_rel: f64,
    #[arg(long, default_value_t = 100.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 1)]
    pub downsample: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_iterations: usize,
    /// Bench report as JSON.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub omit_timing: bool,
}

/// One row of the loss sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub loss: LossKind,
    /// Gap used by every window (absolute) or its relative factor.
    pub tau: f64,
    /// Per-window estimates.
    pub theta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms: Option<RmsSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub windows: usize,
    pub rows: Vec<BenchRow>,
}

fn load_stream(events: &Path, calib: Option<&Path>) -> Result<(Vec<Event>, Option<Calibration>), CliError> {
    let stream = read_events(events)?;
    let Some(path) = calib else {
        return Ok((stream, None));
    };
    let calib = read_calibration(path)?;
    if !calib.has_distortion() {
        return Ok((stream, Some(calib)));
    }
    let out = undistort(&stream, &calib);
    if out.dropped > 0 {
        eprintln!("undistortion dropped {} of {} events", out.dropped, stream.len());
    }
    Ok((out.events, Some(calib)))
}

fn space_or(space: &Option<Space>, default: &[[f64; 2]]) -> Result<SearchBox, CliError> {
    space.clone().unwrap_or_else(|| Space(default.to_vec())).to_box().map_err(CliError::Usage)
}

fn run_spec(a: &SolveArgs, model: &str, width: usize, height: usize, space: SearchBox, window_ms: f64) -> RunSpec {
    RunSpec {
        model: model.to_string(),
        width,
        height,
        space,
        loss: a.loss.loss,
        loss_params: a.loss.params(),
        tau: a.tau_spec(),
        downsample: a.downsample,
        threads: a.threads,
        seed: a.seed,
        window_ms: a.window_ms.unwrap_or(window_ms),
        max_iterations: a.max_iterations,
        patch: None,
        omit_timing: a.omit_timing,
    }
}

fn solve_and_emit<W: WarpModel + ?Sized>(
    stream: &[Event],
    model: &W,
    spec: &RunSpec,
    a: &SolveArgs,
) -> Result<(), CliError> {
    let gt = a.gt.as_deref().map(read_ground_truth).transpose()?;
    let outcomes = run_windows(stream, model, spec, gt.as_deref())?;
    emit(&outcomes, a, gt.as_deref())
}

fn iwe_path(base: &Path, index: usize, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("iwe");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("pgm");
    base.with_file_name(format!("{stem}_{index:04}.{ext}"))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|source| contrast_bnb::io::IoError::File { path: path.to_path_buf(), source }.into())
}

fn emit(outcomes: &[WindowOutcome], a: &SolveArgs, gt: Option<&[GroundTruth]>) -> Result<(), CliError> {
    let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
    match &a.out_json {
        Some(path) => write_reports(create(path)?, &records)?,
        None => write_reports(std::io::stdout().lock(), &records)?,
    }
    if let Some(path) = &a.out_csv {
        let traces: Vec<_> = outcomes.iter().map(|o| (o.record.window, &o.result.trace[..])).collect();
        write_trace_csv(create(path)?, &traces)?;
    }
    if let Some(base) = &a.out_iwe {
        for o in outcomes {
            write_iwe_image(&o.iwe, &iwe_path(base, o.record.window, outcomes.len() > 1))?;
        }
    }
    if let Some(gt) = gt {
        eprintln!("{}", serde_json::to_string(&summarize(&records, gt))?);
    }
    Ok(())
}

/// Sensor size from the calibration, or the smallest one holding every event.
fn sensor_size(stream: &[Event], calib: Option<&Calibration>) -> (usize, usize) {
    match calib {
        Some(c) => (c.width, c.height),
        None => {
            let w = stream.iter().map(|e| e.x).fold(0.0, f64::max);
            let h = stream.iter().map(|e| e.y).fold(0.0, f64::max);
            (w.ceil() as usize + 1, h.ceil() as usize + 1)
        }
    }
}

pub fn flow(a: &FlowArgs) -> Result<(), CliError> {
    let s = &a.solve;
    let (stream, calib) = load_stream(&s.events, s.calib.as_deref())?;
    let (width, height) = match a.patch {
        Some(Patch([_, _, w, h])) => (w, h),
        None => sensor_size(&stream, calib.as_ref()),
    };
    let mut spec = run_spec(s, "flow", width, height, space_or(&s.space, &FLOW_SPACE)?, 40.0);
    spec.patch = a.patch.map(|p| p.0);
    solve_and_emit(&stream, &FlowModel, &spec, s)
}

pub fn planar(a: &SolveArgs) -> Result<(), CliError> {
    let (stream, calib) = load_stream(&a.events, a.calib.as_deref())?;
    let rig = calib
        .as_ref()
        .and_then(Calibration::rig_config)
        .ok_or_else(|| CliError::Usage("planar needs --calib with rig keys l and d".into()))?;
    let calib = calib.expect("rig implies calibration");
    let model = AckermannModel::new(rig)?;
    let spec = run_spec(a, "ackermann", calib.width, calib.height, space_or(&a.space, &PLANAR_SPACE)?, 100.0);
    solve_and_emit(&stream, &model, &spec, a)
}

pub fn rotation(a: &SolveArgs) -> Result<(), CliError> {
    let (stream, calib) = load_stream(&a.events, a.calib.as_deref())?;
    let calib = calib.ok_or_else(|| CliError::Usage("rotation needs --calib".into()))?;
    let model = RotationModel::new(calib.intrinsics())?;
    let spec = run_spec(a, "rotation", calib.width, calib.height, space_or(&a.space, &ROTATION_SPACE)?, 10.0);
    solve_and_emit(&stream, &model, &spec, a)
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.windows == 0 || a.events == 0 {
        return Err(CliError::Usage("need at least one window and one event".into()));
    }
    let intrinsics = Intrinsics { f: a.f, cx: (a.width as f64 - 1.0) / 2.0, cy: (a.height as f64 - 1.0) / 2.0 };
    let sensor = SensorSpec { width: a.width, height: a.height, intrinsics };
    let mut calib = Calibration::pinhole(a.f, intrinsics.cx, intrinsics.cy, a.width, a.height);
    let motion = match a.model {
        SynthModel::Flow => Motion::Flow { params: FlowParams { vx: a.vx, vy: a.vy } },
        SynthModel::Ackermann => {
            let d = a.d.unwrap_or(a.depth);
            calib.rig = Some((a.l, d));
            let rig = RigConfig { f: a.f, u0: intrinsics.cx, v0: intrinsics.cy, l: a.l, d };
            Motion::Ackermann { rig, params: AckermannParams { omega: a.omega, v: a.v } }
        }
        SynthModel::Rotation => Motion::Rotation { params: RotationParams { omega: [a.wx, a.wy, a.wz] } },
    };
    let extent = SceneExtent::footprint(&intrinsics, a.width, a.height, a.depth);
    let mut stream = Vec::with_capacity(a.windows * a.events);
    let mut gt = Vec::with_capacity(a.windows);
    for k in 0..a.windows {
        let seed = a.seed.wrapping_add(3 * k as u64);
        let scene = gen_scene(a.segments, extent, a.depth, seed)?;
        let local = gen_events(&scene, &motion, a.dt, a.events, &sensor, seed + 1)?;
        let local = add_noise(&local, &NoiseSpec { ratio: a.noise, seed: seed + 2 }, a.width, a.height)?;
        let t_ref = k as f64 * a.dt;
        stream.extend(local.events().iter().map(|e| Event { t: e.t + t_ref, ..*e }));
        gt.push(GroundTruth { t_ref, theta: motion.theta() });
    }
    // Keep the stream ordered if shifted timestamps of adjacent windows round onto each other.
    stream.sort_by(|x, y| x.t.total_cmp(&y.t));
    std::fs::create_dir_all(&a.out)?;
    write_events(&a.out.join("events.txt"), &stream)?;
    create(&a.out.join("calib.txt"))?.write_all(calib.to_text().as_bytes())?;
    write_ground_truth(create(&a.out.join("gt.txt"))?, &gt)?;
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let records = read_reports(&a.report)?;
    let gt = read_ground_truth(&a.gt)?;
    let summary = summarize(&records, &gt);
    let text = serde_json::to_string(&summary)?;
    match &a.out_json {
        Some(p) => writeln!(create(p)?, "{text}")?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Runs all six losses over the windows of one planar sequence.
pub fn bench_report(a: &BenchArgs) -> Result<BenchReport, CliError> {
    let (stream, calib) = load_stream(&a.events, Some(&a.calib))?;
    let calib = calib.expect("calibration was given");
    let rig = calib
        .rig_config()
        .ok_or_else(|| CliError::Usage("bench needs a calibration with rig keys l and d".into()))?;
    let model = AckermannModel::new(rig)?;
    let gt = a.gt.as_deref().map(read_ground_truth).transpose()?;
    let space = space_or(&a.space, &PLANAR_SPACE)?;
    let geometry = geometry_for(&model, &space, calib.width, calib.height, a.window_ms * 1e-3)?;
    let mut rows = Vec::new();
    let mut windows = 0;
    for kind in LossKind::ALL {
        let (tau, tau_spec) = match kind {
            LossKind::SoS => (a.tau, TauSpec::Absolute(a.tau)),
            LossKind::Var => (a.tau / geometry.n_p() as f64, TauSpec::Absolute(a.tau / geometry.n_p() as f64)),
            _ => (a.tau_rel, TauSpec::Relative(a.tau_rel)),
        };
        let spec = RunSpec {
            model: "ackermann".into(),
            width: calib.width,
            height: calib.height,
            space: space.clone(),
            loss: kind,
            loss_params: a.loss.params(),
            tau: tau_spec,
            downsample: a.downsample,
            threads: a.threads,
            seed: 0,
            window_ms: a.window_ms,
            max_iterations: a.max_iterations,
            patch: None,
            omit_timing: a.omit_timing,
        };
        let outcomes = run_windows(&stream, &model, &spec, gt.as_deref())?;
        windows = outcomes.len();
        let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
        let mean_wall_time = (!a.omit_timing && !outcomes.is_empty())
            .then(|| outcomes.iter().map(|o| o.result.wall_time).sum::<f64>() / outcomes.len() as f64);
        rows.push(BenchRow {
            loss: kind,
            tau,
            theta: outcomes.iter().map(|o| o.result.theta.clone()).collect(),
            rms: gt.as_deref().map(|g| summarize(&records, g)),
            mean_wall_time,
        });
    }
    Ok(BenchReport { windows, rows })
}

/// Table with one row per loss: RMS of omega (deg/s) and v (m/s), and mean time per window.
pub fn bench_table(report: &BenchReport) -> String {
    let mut out = format!("{:<8} {:>12} {:>10} {:>10}\n", "loss", "w [deg/s]", "v [m/s]", "time [s]");
    for r in &report.rows {
        let (w, v) = match &r.rms {
            Some(s) if s.rms.len() == 2 => (format!("{:.3}", s.rms[0].to_degrees()), format!("{:.4}", s.rms[1])),
            _ => ("-".into(), "-".into()),
        };
        let t = r.mean_wall_time.map_or("-".into(), |t| format!("{t:.3}"));
        out.push_str(&format!("{:<8} {:>12} {:>10} {:>10}\n", r.loss.name(), w, v, t));
    }
    out
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let report = bench_report(a)?;
    print!("{}", bench_table(&report));
    if let Some(p) = &a.out_json {
        writeln!(create(p)?, "{}", serde_json::to_string(&report)?)?;
    }
    Ok(())
}
