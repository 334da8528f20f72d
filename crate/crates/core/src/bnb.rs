//! Recursive bound evaluation and best-first branch-and-bound over motion parameters.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{round_to_accumulator, AccumulatorImage, EventError, EventWindow, ImageGeometry, PixelRect};
use crate::loss::{FocusLoss, IncrementSum, LossError};
use crate::warp::{SearchBox, WarpError, WarpModel};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// How an event updates the upper-bound IWE once its maximum `Q` is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpperBoundMode {
    /// Increment every accumulator the event can reach. Each later event then sees at least
    /// as many predecessors as it could share a cell with, which makes the bound sound.
    #[default]
    Cover,
    /// Increment only the maximal accumulator. Tighter, but not guaranteed to dominate
    /// the objective when boxes of different events overlap only partially.
    Argmax,
}

/// Inclusive accumulator range `[x0, x1] x [y0, y1]` in sensor coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl CellRange {
    pub fn cells(&self) -> usize {
        ((self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)) as usize
    }
}

/// Accumulators some point of `rect` rounds to, clipped to the padded grid.
///
/// Returns the range and whether clipping removed any cell, or `None` if no cell is left.
pub fn rect_cells(rect: &PixelRect, geometry: &ImageGeometry) -> Option<(CellRange, bool)> {
    let (gx0, gx1, gy0, gy1) = geometry.cell_range();
    // Rounding is monotone, so the rounded corners bound every rounded interior point.
    let lo = round_to_accumulator(nalgebra::Point2::new(rect.x_min, rect.y_min));
    let hi = round_to_accumulator(nalgebra::Point2::new(rect.x_max, rect.y_max));
    let r = CellRange { x0: lo.0.max(gx0), x1: hi.0.min(gx1), y0: lo.1.max(gy0), y1: hi.1.min(gy1) };
    if r.x0 > r.x1 || r.y0 > r.y1 {
        return None;
    }
    let clipped = lo.0 < gx0 || hi.0 > gx1 || lo.1 < gy0 || hi.1 > gy1;
    Some((r, clipped))
}

/// Maximum count over `range` and the linear index of its first occurrence (row-major).
#[inline]
fn argmax_cells(counts: &[u32], geometry: &ImageGeometry, range: &CellRange) -> (u32, usize) {
    let pw = geometry.padded_width();
    let m = geometry.margin as i64;
    let mut best = (0u32, usize::MAX);
    for iy in range.y0..=range.y1 {
        let row = (iy + m) as usize * pw;
        let start = row + (range.x0 + m) as usize;
        let end = row + (range.x1 + m) as usize;
        for (i, &c) in counts[start..=end].iter().enumerate() {
            if c > best.0 {
                best = (c, start + i);
            }
        }
    }
    best
}

/// Maximal accumulator over the cells `rect` can round to.
///
/// Ties go to the smallest row, then column. If every cell is empty the result is
/// `(0, centre)` with the centre of `rect` rounded and clamped into the range. `None` if
/// `rect` misses the padded grid entirely.
pub fn argmax_in_rect(iwe: &AccumulatorImage, rect: &PixelRect) -> Option<(u32, (i64, i64))> {
    let geometry = iwe.geometry();
    let (range, _) = rect_cells(rect, &geometry)?;
    let (q, idx) = argmax_cells(iwe.counts(), &geometry, &range);
    if q == 0 {
        return Some((0, clamp_center(rect, &range)));
    }
    Some((q, geometry.coords(idx)))
}

fn clamp_center(rect: &PixelRect, range: &CellRange) -> (i64, i64) {
    let (cx, cy) = round_to_accumulator(rect.center());
    (cx.clamp(range.x0, range.x1), cy.clamp(range.y0, range.y1))
}

/// One window prepared for repeated bound and objective evaluation.
pub struct Problem<'a, W: WarpModel + ?Sized> {
    events: Vec<[f64; 3]>,
    warp: &'a W,
    loss: FocusLoss,
    geometry: ImageGeometry,
    duration: f64,
    mode: UpperBoundMode,
}

impl<'a, W: WarpModel + ?Sized> Problem<'a, W> {
    /// `loss` must have been built for this window's event count and `geometry`'s `N_p`.
    pub fn new(
        window: &EventWindow,
        warp: &'a W,
        loss: FocusLoss,
        geometry: ImageGeometry,
    ) -> Result<Self, SolverError> {
        let geometry = ImageGeometry::new(geometry.width, geometry.height, geometry.margin)?;
        if loss.n_p() != geometry.n_p() {
            return Err(LossError::DimensionMismatch { expected: geometry.n_p(), got: loss.n_p() }.into());
        }
        Ok(Self {
            events: window.local(),
            warp,
            loss,
            geometry,
            duration: window.duration(),
            mode: UpperBoundMode::default(),
        })
    }

    pub fn with_mode(mut self, mode: UpperBoundMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn events(&self) -> &[[f64; 3]] {
        &self.events
    }

    pub fn warp(&self) -> &W {
        self.warp
    }

    pub fn loss(&self) -> &FocusLoss {
        &self.loss
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn mode(&self) -> UpperBoundMode {
        self.mode
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.geometry)
    }

    /// Loss of the IWE at `theta`; equal to `evaluate(accumulate(..))` up to summation order.
    pub fn objective(&self, theta: &[f64], ws: &mut Workspace) -> Result<f64, SolverError> {
        ws.clear();
        for &[x, y, dt] in &self.events {
            if let Some(p) = self.warp.warp(x, y, dt, theta) {
                let (ix, iy) = round_to_accumulator(p);
                if let Some(i) = self.geometry.index(ix, iy) {
                    ws.bump_image(i);
                }
            }
        }
        Ok(ws.take_image_loss(&self.loss)?)
    }
}

/// Count grid that remembers which cells it touched, for cheap resets.
#[derive(Debug, Clone)]
struct SparseGrid {
    counts: Vec<u32>,
    touched: Vec<usize>,
}

impl SparseGrid {
    fn new(n: usize) -> Self {
        Self { counts: vec![0; n], touched: Vec::new() }
    }

    #[inline]
    fn bump(&mut self, i: usize) -> u32 {
        let c = self.counts[i];
        if c == 0 {
            self.touched.push(i);
        }
        self.counts[i] = c + 1;
        c
    }

    fn clear(&mut self) {
        if self.touched.len() * 4 > self.counts.len() {
            self.counts.fill(0);
        } else {
            for &i in &self.touched {
                self.counts[i] = 0;
            }
        }
        self.touched.clear();
    }
}

/// Scratch grids reused across bound evaluations.
#[derive(Debug, Clone)]
pub struct Workspace {
    lower: SparseGrid,
    upper: SparseGrid,
}

impl Workspace {
    pub fn new(geometry: ImageGeometry) -> Self {
        Self { lower: SparseGrid::new(geometry.n_p()), upper: SparseGrid::new(geometry.n_p()) }
    }

    fn clear(&mut self) {
        self.lower.clear();
        self.upper.clear();
    }

    /// Adds one event at linear index `i` of the scratch IWE.
    #[inline]
    pub(crate) fn bump_image(&mut self, i: usize) -> u32 {
        self.lower.bump(i)
    }

    /// Removes one event at linear index `i`; returns the count left behind.
    #[inline]
    pub(crate) fn unbump_image(&mut self, i: usize) -> u32 {
        let c = &mut self.lower.counts[i];
        debug_assert!(*c > 0);
        *c -= 1;
        *c
    }

    pub(crate) fn clear_image(&mut self) {
        self.lower.clear();
    }

    /// Loss of the scratch IWE, which is then reset.
    pub(crate) fn take_image_loss(&mut self, loss: &FocusLoss) -> Result<f64, LossError> {
        let value = loss.evaluate_sparse(self.lower.touched.iter().map(|&i| self.lower.counts[i]));
        self.lower.clear();
        value
    }
}

/// Result of one recursive bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    /// Loss at the box centre.
    pub lower: f64,
    /// Upper bound on the loss over the box.
    pub upper: f64,
    /// Box centre.
    pub theta0: Vec<f64>,
    /// Events that might leave the grid (or be rejected by the warp) somewhere in the box.
    pub uncertain: usize,
}

/// Lower and upper bounds on the loss over `sbox`, built event by event in time order.
pub fn recursive_bounds<W: WarpModel + ?Sized>(
    problem: &Problem<'_, W>,
    sbox: &SearchBox,
    ws: &mut Workspace,
) -> Result<Bounds, SolverError> {
    if sbox.dim() != problem.warp.dim() {
        return Err(WarpError::Dimension { expected: problem.warp.dim(), got: sbox.dim() }.into());
    }
    let loss = &problem.loss;
    let geometry = &problem.geometry;
    let theta0 = sbox.center();
    let point = sbox.is_point();
    let full = geometry.full_rect();
    let mut lower = IncrementSum::new();
    let mut upper = IncrementSum::new();
    let mut uncertain = 0;
    ws.clear();

    for &[x, y, dt] in &problem.events {
        let eta = problem.warp.warp(x, y, dt, &theta0);
        let eta_idx = eta.and_then(|p| {
            let (ix, iy) = round_to_accumulator(p);
            geometry.index(ix, iy)
        });
        if let Some(i) = eta_idx {
            let c = ws.lower.bump(i);
            lower.push(loss, c)?;
        }

        if point {
            // The box is a single parameter: the upper IWE tracks the lower one exactly.
            if let Some(i) = eta_idx {
                let c = ws.upper.bump(i);
                upper.push(loss, c)?;
            }
            continue;
        }

        let (rect, valid) = match problem.warp.bound(x, y, dt, sbox) {
            Some(r) => (r, true),
            None => (full, false),
        };
        let Some((range, clipped)) = rect_cells(&rect, geometry) else {
            // Off the grid for every parameter in the box: never counted.
            continue;
        };
        let may_drop = clipped || !valid;
        uncertain += may_drop as usize;
        let (q, idx) = argmax_cells(&ws.upper.counts, geometry, &range);
        if !(may_drop && loss.upper_increment(q) < 0.0) {
            upper.push(loss, q)?;
        }
        match problem.mode {
            UpperBoundMode::Cover => {
                let pw = geometry.padded_width();
                let m = geometry.margin as i64;
                for iy in range.y0..=range.y1 {
                    let row = (iy + m) as usize * pw;
                    for ix in range.x0..=range.x1 {
                        ws.upper.bump(row + (ix + m) as usize);
                    }
                }
            }
            UpperBoundMode::Argmax => {
                let target = if q == 0 {
                    let (cx, cy) = clamp_center(&rect, &range);
                    geometry.index(cx, cy).expect("clamped into the grid")
                } else {
                    idx
                };
                ws.upper.bump(target);
            }
        }
    }
    ws.clear();
    Ok(Bounds { lower: lower.value(loss), upper: upper.value(loss), theta0, uncertain })
}

/// Halves every dimension wider than its floor; `2^d` children when all dimensions split.
///
/// Returns no children when every dimension is already at or below its floor.
pub fn subdivide(sbox: &SearchBox, floor: &[f64]) -> Vec<SearchBox> {
    let split: Vec<usize> = (0..sbox.dim()).filter(|&i| sbox.hi()[i] - sbox.lo()[i] > floor[i]).collect();
    if split.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(1 << split.len());
    for mask in 0..(1usize << split.len()) {
        let mut b = sbox.clone();
        for (bit, &i) in split.iter().enumerate() {
            let (lo, hi) = (sbox.lo()[i], sbox.hi()[i]);
            let mid = 0.5 * (lo + hi);
            b = if mask >> (split.len() - 1 - bit) & 1 == 0 { b.with_interval(i, lo, mid) } else { b.with_interval(i, mid, hi) };
        }
        out.push(b);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    /// Stop once the best upper bound is within `tau` of the incumbent.
    pub tau: f64,
    pub max_iterations: usize,
    /// Worker threads for child evaluation; 1 runs everything on the caller's thread.
    pub threads: usize,
    /// Dimensions narrower than this fraction of the initial width are no longer split.
    pub resolution_floor: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tau: 1.0, max_iterations: 200_000, threads: 1, resolution_floor: 1e-4, record_trace: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SolverError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.threads == 0 {
            return Err(SolverError::Config("threads must be at least 1".into()));
        }
        if !(self.resolution_floor >= 0.0 && self.resolution_floor < 1.0) {
            return Err(SolverError::Config(format!("resolution floor {} outside [0, 1)", self.resolution_floor)));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub upper: f64,
    pub best_lower: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The best remaining upper bound came within `tau` of the incumbent.
    GapReached,
    /// Every branch was pruned or refined down to the resolution floor.
    QueueExhausted,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub theta: Vec<f64>,
    /// Loss at `theta`.
    pub objective: f64,
    pub iterations: usize,
    /// Best known upper bound minus `objective` at exit.
    pub gap: f64,
    pub converged: bool,
    pub termination: Termination,
    pub bound_evaluations: usize,
    pub trace: Vec<TracePoint>,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
struct Branch {
    sbox: SearchBox,
    upper: f64,
    lower: f64,
    theta0: Vec<f64>,
    depth: u32,
    seq: u64,
}

impl PartialEq for Branch {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Branch {}

impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Branch {
    /// Max-heap order: larger upper bound, then deeper, then lexicographically smaller
    /// centre, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .total_cmp(&other.upper)
            .then(self.depth.cmp(&other.depth))
            .then_with(|| {
                for (a, b) in self.theta0.iter().zip(&other.theta0) {
                    match b.total_cmp(a) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            })
            .then(other.seq.cmp(&self.seq))
    }
}

/// Best-first branch-and-bound maximisation of the loss over `init_box`.
pub fn solve<W: WarpModel + ?Sized>(
    problem: &Problem<'_, W>,
    init_box: &SearchBox,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    problem.warp.check_box(init_box, problem.duration)?;
    let start = Instant::now();
    let floor: Vec<f64> = init_box.widths().iter().map(|w| w * cfg.resolution_floor).collect();
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| SolverError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let mut ws = problem.workspace();

    let root = recursive_bounds(problem, init_box, &mut ws)?;
    let mut evaluations = 1usize;
    let mut best_theta = root.theta0.clone();
    let mut best = root.lower;
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    heap.push(Branch {
        sbox: init_box.clone(),
        upper: root.upper,
        lower: root.lower,
        theta0: root.theta0,
        depth: 0,
        seq,
    });
    // Highest upper bound among branches retired at the resolution floor.
    let mut retired_upper = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let batch = cfg.threads.max(1);

    let (termination, gap) = loop {
        let Some(top) = heap.peek() else {
            break (Termination::QueueExhausted, (retired_upper - best).max(0.0));
        };
        let global_upper = top.upper.max(retired_upper);
        if global_upper - best <= cfg.tau {
            iterations += 1;
            if cfg.record_trace {
                trace.push(TracePoint { iteration: iterations, upper: global_upper, best_lower: best });
            }
            break (Termination::GapReached, (global_upper - best).max(0.0));
        }
        if iterations >= cfg.max_iterations {
            break (Termination::IterationLimit, global_upper - best);
        }

        let mut popped = Vec::with_capacity(batch);
        while popped.len() < batch && iterations < cfg.max_iterations {
            let Some(b) = heap.pop() else { break };
            if b.upper < best {
                continue;
            }
            iterations += 1;
            if cfg.record_trace {
                trace.push(TracePoint { iteration: iterations, upper: b.upper.max(retired_upper), best_lower: best });
            }
            if b.lower > best {
                best = b.lower;
                best_theta = b.theta0.clone();
            }
            popped.push(b);
        }

        let jobs: Vec<(usize, SearchBox)> = popped
            .iter()
            .enumerate()
            .flat_map(|(pi, b)| subdivide(&b.sbox, &floor).into_iter().map(move |c| (pi, c)))
            .collect();
        for (pi, b) in popped.iter().enumerate() {
            if !jobs.iter().any(|(p, _)| *p == pi) {
                retired_upper = retired_upper.max(b.upper);
            }
        }
        let results: Vec<Result<Bounds, SolverError>> = match &pool {
            None => jobs.iter().map(|(_, c)| recursive_bounds(problem, c, &mut ws)).collect(),
            Some(pool) => pool.install(|| {
                jobs.par_iter()
                    .map_init(|| problem.workspace(), |ws, (_, c)| recursive_bounds(problem, c, ws))
                    .collect()
            }),
        };
        evaluations += jobs.len();

        let mut children = Vec::with_capacity(jobs.len());
        for ((pi, sbox), res) in jobs.into_iter().zip(results) {
            let bounds = res?;
            if bounds.lower > best {
                best = bounds.lower;
                best_theta = bounds.theta0.clone();
            }
            children.push((pi, sbox, bounds));
        }
        for (pi, sbox, bounds) in children {
            if bounds.upper >= best {
                seq += 1;
                heap.push(Branch {
                    sbox,
                    upper: bounds.upper,
                    lower: bounds.lower,
                    theta0: bounds.theta0,
                    depth: popped[pi].depth + 1,
                    seq,
                });
            }
        }
    };

    Ok(SolverResult {
        theta: best_theta,
        objective: best,
        iterations,
        gap,
        converged: termination != Termination::IterationLimit,
        termination,
        bound_evaluations: evaluations,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
