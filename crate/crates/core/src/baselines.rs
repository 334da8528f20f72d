//! Reference optimisers: exhaustive grid search, Gaussian-smoothed local ascent, and error metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::{Problem, SolverError, Workspace};
use crate::event::{round_half_away, round_to_accumulator, EventWindow, ImageGeometry};
use crate::loss::{FocusLoss, LossError, LossKind};
use crate::warp::{SearchBox, WarpModel};

/// Largest grid [`exhaustive_search`] accepts.
pub const GRID_LIMIT: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid grid axis {index}: [{min}, {max}] step {step}")]
    BadAxis { index: usize, min: f64, max: f64, step: f64 },
    #[error("grid has {cells} points, limit is {GRID_LIMIT}")]
    TooLarge { cells: usize },
    #[error("grid has {got} axes, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("kernel width must be positive, got {0}")]
    BadSigma(f64),
    #[error("local ascent diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// One grid axis: `min, min + step, ...` up to `max` (inclusive when it lands on the lattice).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self, BaselineError> {
        for (index, a) in axes.iter().enumerate() {
            if !(a.step > 0.0 && a.step.is_finite() && a.min.is_finite() && a.max.is_finite() && a.min <= a.max) {
                return Err(BaselineError::BadAxis { index, min: a.min, max: a.max, step: a.step });
            }
        }
        let g = Self { axes };
        let cells = g.axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len())).unwrap_or(usize::MAX);
        if cells > GRID_LIMIT {
            return Err(BaselineError::TooLarge { cells });
        }
        Ok(g)
    }

    /// Grid over `sbox` with the given per-dimension steps.
    pub fn over_box(sbox: &SearchBox, steps: &[f64]) -> Result<Self, BaselineError> {
        Self::new(
            (0..sbox.dim()).map(|i| GridAxis { min: sbox.lo()[i], max: sbox.hi()[i], step: steps[i] }).collect(),
        )
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(GridAxis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    /// Parameter vector at row-major index `index` (last axis fastest).
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            out[d] = a.value(index % a.len());
            index /= a.len();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub evaluated: usize,
}

/// Evaluates the loss at every grid point; the first maximum in row-major order wins.
pub fn exhaustive_search<W: WarpModel + ?Sized>(
    problem: &Problem<'_, W>,
    grid: &GridSpec,
    threads: usize,
) -> Result<GridResult, BaselineError> {
    let d = problem.warp().dim();
    if grid.axes.len() != d {
        return Err(BaselineError::Dimension { expected: d, got: grid.axes.len() });
    }
    let last = grid.axes[d - 1];
    let n_rows = grid.len() / last.len();
    let row = |r: usize, ws: &mut Workspace| -> Result<(f64, usize), BaselineError> {
        let base = r * last.len();
        let head = grid.point(base)[..d - 1].to_vec();
        scan_row(problem, &head, &last, ws).map(|(v, j)| (v, base + j))
    };
    let rows: Vec<Result<(f64, usize), BaselineError>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SolverError::Config(e.to_string()))?;
        pool.install(|| (0..n_rows).into_par_iter().map_init(|| problem.workspace(), |ws, r| row(r, ws)).collect())
    } else {
        let mut ws = problem.workspace();
        (0..n_rows).map(|r| row(r, &mut ws)).collect()
    };
    let mut best = (f64::NEG_INFINITY, 0usize);
    for r in rows {
        let (v, i) = r?;
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(GridResult { theta: grid.point(best.1), objective: best.0, evaluated: grid.len() })
}

/// Best value along one line of the last axis, with its index on that line.
fn scan_row<W: WarpModel + ?Sized>(
    problem: &Problem<'_, W>,
    head: &[f64],
    last: &GridAxis,
    ws: &mut Workspace,
) -> Result<(f64, usize), BaselineError> {
    let warp = problem.warp();
    let geometry = problem.geometry();
    let loss = problem.loss();
    let events = problem.events();
    let mut affine: Option<Vec<[f64; 4]>> =
        events.iter().map(|&[x, y, dt]| warp.affine_last(x, y, dt, head)).collect();
    // Raster order of the base position keeps the accumulator walk cache friendly.
    if let Some(aff) = affine.as_mut() {
        aff.sort_by(|a, b| a[1].floor().total_cmp(&b[1].floor()).then(a[0].total_cmp(&b[0])));
        if loss.kind() == LossKind::SoS {
            return Ok(scan_row_sos(aff, last, &geometry, ws));
        }
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut theta = head.to_vec();
    theta.push(0.0);
    for j in 0..last.len() {
        let s = last.value(j);
        let value = match &affine {
            Some(aff) => {
                for &[bx, by, dx, dy] in aff {
                    let (ix, iy) = round_to_accumulator(nalgebra::Point2::new(bx + s * dx, by + s * dy));
                    if let Some(i) = geometry.index(ix, iy) {
                        ws.bump_image(i);
                    }
                }
                ws.take_image_loss(loss)?
            }
            None => {
                theta[head.len()] = s;
                problem.objective(&theta, ws)?
            }
        };
        if value > best.0 {
            best = (value, j);
        }
    }
    Ok(best)
}

/// First index after `from` at which `round(b + value(j) d)` leaves `cur`, or `last.len()`.
///
/// The rounded coordinate is monotone in `j`, so a predicted crossing only needs local repair.
fn next_change(b: f64, d: f64, cur: i64, from: usize, last: &GridAxis) -> usize {
    let n = last.len();
    let at = |j: usize| round_half_away(b + last.value(j) * d);
    if d == 0.0 || from + 1 >= n {
        return n;
    }
    let edge = cur as f64 + 0.5f64.copysign(d);
    let guess = ((edge - b) / d - last.min) / last.step;
    let mut j = if guess.is_finite() { guess.ceil().clamp((from + 1) as f64, n as f64) as usize } else { from + 1 };
    while j > from + 1 && at(j - 1) != cur {
        j -= 1;
    }
    while j < n && at(j) == cur {
        j += 1;
    }
    j
}

/// SoS along one line of the last axis, moving each event only when its accumulator changes.
///
/// The running sum of squares is an exact integer, so every value equals a fresh evaluation.
fn scan_row_sos(aff: &[[f64; 4]], last: &GridAxis, geometry: &ImageGeometry, ws: &mut Workspace) -> (f64, usize) {
    let n = last.len();
    let cell = |e: &[f64; 4], j: usize| {
        let s = last.value(j);
        round_to_accumulator(nalgebra::Point2::new(e[0] + s * e[2], e[1] + s * e[3]))
    };
    // Per event: current cell, its linear index, and the next index where x or y changes.
    let mut state: Vec<((i64, i64), Option<usize>, usize, usize)> = Vec::with_capacity(aff.len());
    let mut due: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    let mut sos: u64 = 0;
    for (k, e) in aff.iter().enumerate() {
        let c = cell(e, 0);
        let idx = geometry.index(c.0, c.1);
        if let Some(i) = idx {
            sos += 2 * ws.bump_image(i) as u64 + 1;
        }
        let nx = next_change(e[0], e[2], c.0, 0, last);
        let ny = next_change(e[1], e[3], c.1, 0, last);
        due[nx.min(ny)].push(k as u32);
        state.push((c, idx, nx, ny));
    }
    let mut best = (sos as f64, 0usize);
    for j in 1..n {
        let moving = std::mem::take(&mut due[j]);
        for &k in &moving {
            let e = &aff[k as usize];
            let (old, old_idx, mut nx, mut ny) = state[k as usize];
            if let Some(i) = old_idx {
                sos -= 2 * ws.unbump_image(i) as u64 + 1;
            }
            let c = cell(e, j);
            let idx = geometry.index(c.0, c.1);
            if let Some(i) = idx {
                sos += 2 * ws.bump_image(i) as u64 + 1;
            }
            if c.0 != old.0 || nx <= j {
                nx = next_change(e[0], e[2], c.0, j, last);
            }
            if c.1 != old.1 || ny <= j {
                ny = next_change(e[1], e[3], c.1, j, last);
            }
            due[nx.min(ny)].push(k);
            state[k as usize] = (c, idx, nx, ny);
        }
        due[j] = moving;
        due[j].clear();
        let value = sos as f64;
        if value > best.0 {
            best = (value, j);
        }
    }
    ws.clear_image();
    best
}

/// Real-valued IWE where each event deposits a normalised, truncated Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedIWE {
    pub geometry: ImageGeometry,
    pub sigma: f64,
    /// Row-major over the padded grid.
    pub values: Vec<f64>,
    /// Events whose nearest accumulator is off the grid, or that the warp rejected.
    pub dropped: usize,
}

impl SmoothedIWE {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn splat(values: &mut [f64], geometry: &ImageGeometry, sigma: f64, px: f64, py: f64) -> bool {
    let (ix, iy) = round_to_accumulator(nalgebra::Point2::new(px, py));
    let Some(nearest) = geometry.index(ix, iy) else {
        return false;
    };
    let reach = 3.0 * sigma;
    let (gx0, gx1, gy0, gy1) = geometry.cell_range();
    let x0 = ((px - reach).ceil() as i64).max(gx0);
    let x1 = ((px + reach).floor() as i64).min(gx1);
    let y0 = ((py - reach).ceil() as i64).max(gy0);
    let y1 = ((py + reach).floor() as i64).min(gy1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let weight = |cx: i64, cy: i64| {
        let (dx, dy) = (cx as f64 - px, cy as f64 - py);
        (-(dx * dx + dy * dy) * inv).exp()
    };
    let mut norm = 0.0;
    for cy in y0..=y1 {
        for cx in x0..=x1 {
            norm += weight(cx, cy);
        }
    }
    if norm <= 0.0 || x0 > x1 || y0 > y1 {
        // Kernel narrower than the cell spacing: fall back to the nearest accumulator.
        values[nearest] += 1.0;
        return true;
    }
    for cy in y0..=y1 {
        for cx in x0..=x1 {
            let i = geometry.index(cx, cy).expect("clipped to grid");
            values[i] += weight(cx, cy) / norm;
        }
    }
    true
}

fn smooth_local<W: WarpModel + ?Sized>(
    events: &[[f64; 3]],
    warp: &W,
    theta: &[f64],
    geometry: ImageGeometry,
    sigma: f64,
) -> SmoothedIWE {
    let mut values = vec![0.0; geometry.n_p()];
    let mut dropped = 0;
    for &[x, y, dt] in events {
        let landed = warp.warp(x, y, dt, theta).is_some_and(|p| splat(&mut values, &geometry, sigma, p.x, p.y));
        dropped += !landed as usize;
    }
    SmoothedIWE { geometry, sigma, values, dropped }
}

/// Smoothed IWE of `window` at `theta`; every landed event contributes unit mass.
pub fn smooth_accumulate<W: WarpModel + ?Sized>(
    window: &EventWindow,
    warp: &W,
    theta: &[f64],
    geometry: ImageGeometry,
    sigma: f64,
) -> Result<SmoothedIWE, BaselineError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(BaselineError::BadSigma(sigma));
    }
    Ok(smooth_local(&window.local(), warp, theta, geometry, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Gaussian kernel width in pixels.
    pub sigma: f64,
    pub max_steps: usize,
    /// Stop when the normalised gradient norm drops below `grad_tol * max(|L|, 1)`.
    pub grad_tol: f64,
    /// First trial step in normalised coordinates (fractions of the box width).
    pub initial_step: f64,
    /// Stop when the accepted step shrinks below this.
    pub min_step: f64,
    /// Central-difference step as a fraction of each box width.
    pub fd_step: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { sigma: 1.0, max_steps: 200, grad_tol: 1e-6, initial_step: 0.05, min_step: 1e-6, fd_step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub theta: Vec<f64>,
    /// Unsmoothed loss at `theta`, comparable with the branch-and-bound objective.
    pub objective: f64,
    /// Smoothed loss at `theta`.
    pub smoothed: f64,
    pub steps: usize,
    /// True if the gradient test stopped the ascent (rather than the step or iteration limit).
    pub converged: bool,
}

/// Gradient ascent on the smoothed loss from `theta_init`, confined to `domain`.
///
/// Gradients are central differences in coordinates normalised by the box widths;
/// steps follow the normalised gradient with a grow-or-halve step size.
pub fn local_ascent<W: WarpModel + ?Sized>(
    problem: &Problem<'_, W>,
    theta_init: &[f64],
    domain: &SearchBox,
    cfg: &AscentConfig,
) -> Result<AscentResult, BaselineError> {
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(BaselineError::BadSigma(cfg.sigma));
    }
    let d = domain.dim();
    let widths: Vec<f64> = domain.widths().iter().map(|&w| if w > 0.0 { w } else { 1.0 }).collect();
    let clamp = |th: &mut [f64]| {
        for i in 0..d {
            th[i] = th[i].clamp(domain.lo()[i], domain.hi()[i]);
        }
    };
    let f = |th: &[f64]| -> Result<f64, BaselineError> {
        let s = smooth_local(problem.events(), problem.warp(), th, problem.geometry(), cfg.sigma);
        Ok(problem.loss().evaluate_field(&s.values)?)
    };
    let mut theta = theta_init.to_vec();
    clamp(&mut theta);
    let mut value = f(&theta)?;
    let mut step = cfg.initial_step;
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        if !value.is_finite() {
            return Err(BaselineError::Diverged { step: steps });
        }
        let mut grad = vec![0.0; d];
        for i in 0..d {
            let h = cfg.fd_step;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h * widths[i];
            b[i] -= h * widths[i];
            grad[i] = (f(&a)? - f(&b)?) / (2.0 * h);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(BaselineError::Diverged { step: steps });
        }
        if norm < cfg.grad_tol * value.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step >= cfg.min_step {
            let mut trial: Vec<f64> = (0..d).map(|i| theta[i] + step * grad[i] / norm * widths[i]).collect();
            clamp(&mut trial);
            let v = f(&trial)?;
            if v > value {
                theta = trial;
                value = v;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        steps += 1;
        if !accepted {
            break;
        }
    }
    let mut ws = problem.workspace();
    let objective = problem.objective(&theta, &mut ws)?;
    Ok(AscentResult { theta, objective, smoothed: value, steps, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Mean distance between events warped with the estimate and with the ground truth (px).
    pub aee: f64,
    /// `|theta_gt - theta_est|_2`.
    pub epsilon: f64,
    /// `| |theta_gt|_2 - |theta_est|_2 |`.
    pub phi: f64,
}

/// Endpoint and parameter errors of `est` against `gt` on one window.
pub fn error_metrics<W: WarpModel + ?Sized>(
    gt: &[f64],
    est: &[f64],
    window: &EventWindow,
    warp: &W,
) -> Result<ErrorMetrics, BaselineError> {
    if gt.len() != est.len() || gt.len() != warp.dim() {
        return Err(BaselineError::Dimension { expected: warp.dim(), got: gt.len().max(est.len()) });
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for &[x, y, dt] in &window.local() {
        if let (Some(a), Some(b)) = (warp.warp(x, y, dt, gt), warp.warp(x, y, dt, est)) {
            total += (a - b).norm();
            n += 1;
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = gt.iter().zip(est).map(|(a, b)| a - b).collect();
    Ok(ErrorMetrics {
        aee: if n == 0 { 0.0 } else { total / n as f64 },
        epsilon: norm(&diff),
        phi: (norm(gt) - norm(est)).abs(),
    })
}

/// Per-dimension root-mean-square error over `(gt, est)` pairs.
pub fn rms_per_dim(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let Some((first, _)) = pairs.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for (gt, est) in pairs {
        for (i, (a, b)) in gt.iter().zip(est).enumerate() {
            acc[i] += (a - b) * (a - b);
        }
    }
    acc.iter().map(|s| (s / pairs.len() as f64).sqrt()).collect()
}

/// Loss for a window on `geometry`, with the mean fixed by the window's event count.
pub fn loss_for(
    kind: crate::loss::LossKind,
    params: crate::loss::LossParams,
    window: &EventWindow,
    geometry: &ImageGeometry,
) -> Result<FocusLoss, LossError> {
    FocusLoss::new(kind, params, window.len(), geometry.n_p())
}
