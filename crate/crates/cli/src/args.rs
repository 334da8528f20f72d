//! Argument types shared by the subcommands.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use contrast_bnb::loss::{LossKind, LossParams};
use contrast_bnb::warp::SearchBox;

use crate::pipeline::TauSpec;

/// Parameter box written as `min,max` per dimension joined by `x`, e.g. `0.4,0.6x0.4,0.6`.
#[derive(Debug, Clone, PartialEq)]
pub struct Space(pub Vec<[f64; 2]>);

impl Space {
    pub fn to_box(&self) -> Result<SearchBox, String> {
        let ranges: Vec<(f64, f64)> = self.0.iter().map(|r| (r[0], r[1])).collect();
        SearchBox::from_ranges(&ranges).map_err(|e| e.to_string())
    }
}

impl FromStr for Space {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut dims = Vec::new();
        for part in s.split('x') {
            let (lo, hi) = part.split_once(',').ok_or_else(|| format!("expected min,max in {part:?}"))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("invalid range [{lo}, {hi}]"));
            }
            dims.push([lo, hi]);
        }
        Ok(Space(dims))
    }
}

/// Sensor sub-rectangle `x0,y0,width,height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch(pub [usize; 4]);

impl FromStr for Patch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Result<Vec<usize>, _> = s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match v.map_err(|e| e.to_string())?.as_slice() {
            &[x0, y0, w, h] if w > 0 && h > 0 => Ok(Patch([x0, y0, w, h])),
            _ => Err(format!("expected x0,y0,width,height with positive size, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    #[arg(long, default_value = "sos", value_parser = parse_loss)]
    pub loss: LossKind,
    /// Shift factor of the suppressed-accumulation losses.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w2: f64,
}

impl LossArgs {
    pub fn params(&self) -> LossParams {
        LossParams { delta: self.delta, w1: self.w1, w2: self.w2 }
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: contrast_bnb::loss::LossError| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Event file with `t x y p` lines.
    #[arg(long)]
    pub events: PathBuf,
    /// Calibration file (`key = value`).
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Search space, `min,max` per dimension joined by `x`.
    #[arg(long, allow_hyphen_values = true)]
    pub space: Option<Space>,
    /// Absolute termination gap.
    #[arg(long, conflicts_with_all = ["tau_per_event", "tau_rel"])]
    pub tau: Option<f64>,
    /// Termination gap per event (`tau = c * N`). Default 1e-4.
    #[arg(long, conflicts_with = "tau_rel")]
    pub tau_per_event: Option<f64>,
    /// Termination gap relative to the loss at the box centre.
    #[arg(long)]
    pub tau_rel: Option<f64>,
    /// Keep every m-th event of each window.
    #[arg(long, default_value_t = 1)]
    pub downsample: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Recorded in every report for reproducibility.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Window length in milliseconds (default depends on the command).
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    pub max_iterations: usize,
    /// Ground-truth file with `t_ref theta...` lines; adds per-window metrics.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Report as JSON lines (default: stdout).
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Bound traces as CSV.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// IWE at the estimate as PGM; several windows get a `_NNNN` suffix.
    #[arg(long)]
    pub out_iwe: Option<PathBuf>,
    /// Leave wall-clock times out of the report.
    #[arg(long)]
    pub omit_timing: bool,
}

impl SolveArgs {
    pub fn tau_spec(&self) -> TauSpec {
        match (self.tau, self.tau_per_event, self.tau_rel) {
            (Some(t), _, _) => TauSpec::Absolute(t),
            (_, Some(c), _) => TauSpec::PerEvent(c),
            (_, _, Some(r)) => TauSpec::Relative(r),
            _ => TauSpec::PerEvent(1e-4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthModel {
    Flow,
    Ackermann,
    Rotation,
}
