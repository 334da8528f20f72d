//! Run reports as JSON lines, bound traces as CSV, and per-window ground truth.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IoError};
use crate::baselines::{rms_per_dim, ErrorMetrics};
use crate::bnb::{Termination, TracePoint};
use crate::loss::{LossKind, LossParams};

/// Everything needed to re-run one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    pub loss: LossKind,
    pub loss_params: LossParams,
    /// `[min, max]` per parameter.
    pub space: Vec<[f64; 2]>,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_per_event: Option<f64>,
    pub downsample: usize,
    pub seed: u64,
    pub threads: usize,
    pub window_ms: f64,
    /// `[x0, y0, width, height]` of the analysed patch, when restricted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<[usize; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub t_ref: f64,
    pub events: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Seconds; omitted for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ErrorMetrics>,
    pub config: RunConfig,
}

/// Aggregate errors over the windows that have ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsSummary {
    pub windows: usize,
    pub matched: usize,
    /// Root-mean-square error per parameter.
    pub rms: Vec<f64>,
    pub mean_epsilon: f64,
    pub mean_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_aee: Option<f64>,
}

/// Writes one JSON object per line.
pub fn write_reports<W: Write>(writer: W, records: &[WindowRecord]) -> Result<(), IoError> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<WindowRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| IoError::Parse { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

/// CSV with columns `window, iteration, upper, best_lower`.
pub fn write_trace_csv<W: Write>(writer: W, traces: &[(usize, &[TracePoint])]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window", "iteration", "upper", "best_lower"])?;
    for (window, trace) in traces {
        for p in trace.iter() {
            w.serialize((window, p.iteration, p.upper, p.best_lower))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Ground-truth parameters for the window starting at `t_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_ref: f64,
    pub theta: Vec<f64>,
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, IoError> {
    parse_ground_truth(BufReader::new(open(path)?))
}

/// Parses `t_ref theta_1 ... theta_d` lines; `#` starts a comment line.
pub fn parse_ground_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruth>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let values: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|e| IoError::Parse { line: i + 1, message: e.to_string() })?;
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Parse { line: i + 1, message: "expected t_ref and parameters".into() });
        }
        out.push(GroundTruth { t_ref: values[0], theta: values[1..].to_vec() });
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(writer: W, gt: &[GroundTruth]) -> Result<(), IoError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "# t_ref theta...")?;
    for g in gt {
        write!(w, "{:?}", g.t_ref)?;
        for v in &g.theta {
            write!(w, " {v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth closest to `t`, if it lies within `tolerance` seconds.
pub fn match_ground_truth(gt: &[GroundTruth], t: f64, tolerance: f64) -> Option<&GroundTruth> {
    gt.iter()
        .filter(|g| (g.t_ref - t).abs() <= tolerance)
        .min_by(|a, b| (a.t_ref - t).abs().total_cmp(&(b.t_ref - t).abs()))
}

/// RMS and mean parameter errors of `records` against `gt`, matching each record to the
/// ground truth within half its window length.
pub fn summarize(records: &[WindowRecord], gt: &[GroundTruth]) -> RmsSummary {
    let mut pairs = Vec::new();
    let (mut eps, mut phi) = (0.0, 0.0);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for r in records {
        let Some(g) = match_ground_truth(gt, r.t_ref, 0.5e-3 * r.config.window_ms).filter(|g| g.theta.len() == r.theta.len()) else {
            continue;
        };
        let diff: Vec<f64> = g.theta.iter().zip(&r.theta).map(|(a, b)| a - b).collect();
        eps += norm(&diff);
        phi += (norm(&g.theta) - norm(&r.theta)).abs();
        pairs.push((g.theta.clone(), r.theta.clone()));
    }
    let aees: Vec<f64> = records.iter().filter_map(|r| r.metrics.map(|m| m.aee)).collect();
    let matched = pairs.len();
    let mean = |s: f64| if matched == 0 { 0.0 } else { s / matched as f64 };
    RmsSummary {
        windows: records.len(),
        matched,
        rms: rms_per_dim(&pairs),
        mean_epsilon: mean(eps),
        mean_phi: mean(phi),
        mean_aee: (!aees.is_empty()).then(|| aees.iter().sum::<f64>() / aees.len() as f64),
    }
}
