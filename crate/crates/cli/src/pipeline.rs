//! Per-window solving shared by the motion commands, the bench sweep and the tests.

use contrast_bnb::baselines::error_metrics;
use contrast_bnb::bnb::{solve, Problem, SolverConfig, SolverResult};
use contrast_bnb::event::{accumulate, downsample, slice_windows, AccumulatorImage, Event, EventWindow, ImageGeometry};
use contrast_bnb::io::{match_ground_truth, GroundTruth, RunConfig, WindowRecord};
use contrast_bnb::loss::{FocusLoss, LossKind, LossParams};
use contrast_bnb::warp::{required_margin, SearchBox, WarpModel};

use crate::CliError;

/// How the termination gap is derived for a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Absolute(f64),
    /// `tau = c * N` for `N` events in the window.
    PerEvent(f64),
    /// `tau = r * |L(centre)|`, the loss at the centre of the search box.
    Relative(f64),
}

impl TauSpec {
    pub fn resolve<W: WarpModel + ?Sized>(
        &self,
        problem: &Problem<'_, W>,
        sbox: &SearchBox,
    ) -> Result<f64, CliError> {
        Ok(match *self {
            TauSpec::Absolute(t) => t,
            TauSpec::PerEvent(c) => c * problem.events().len() as f64,
            TauSpec::Relative(r) => {
                let mut ws = problem.workspace();
                r * problem.objective(&sbox.center(), &mut ws)?.abs()
            }
        })
    }

    pub fn per_event(&self) -> Option<f64> {
        match *self {
            TauSpec::PerEvent(c) => Some(c),
            _ => None,
        }
    }
}

/// Settings for one run over a stream.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub model: String,
    pub width: usize,
    pub height: usize,
    pub space: SearchBox,
    pub loss: LossKind,
    pub loss_params: LossParams,
    pub tau: TauSpec,
    pub downsample: usize,
    pub threads: usize,
    pub seed: u64,
    pub window_ms: f64,
    pub max_iterations: usize,
    pub patch: Option<[usize; 4]>,
    pub omit_timing: bool,
}

/// Everything produced for one window.
#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub record: WindowRecord,
    pub result: SolverResult,
    pub geometry: ImageGeometry,
    pub iwe: AccumulatorImage,
}

/// Padded geometry large enough that no sensor event leaves it over the search box.
pub fn geometry_for<W: WarpModel + ?Sized>(
    model: &W,
    sbox: &SearchBox,
    width: usize,
    height: usize,
    duration: f64,
) -> Result<ImageGeometry, CliError> {
    Ok(ImageGeometry::new(width, height, required_margin(model, sbox, width, height, duration))?)
}

/// Solves one window, returning the solver result, the geometry used and the resolved `tau`.
pub fn solve_window<W: WarpModel + ?Sized>(
    window: &EventWindow,
    model: &W,
    spec: &RunSpec,
) -> Result<(SolverResult, ImageGeometry, f64), CliError> {
    let geometry = geometry_for(model, &spec.space, spec.width, spec.height, window.duration())?;
    let loss = FocusLoss::new(spec.loss, spec.loss_params, window.len(), geometry.n_p())?;
    let problem = Problem::new(window, model, loss, geometry)?;
    let tau = spec.tau.resolve(&problem, &spec.space)?;
    let cfg = SolverConfig {
        tau,
        max_iterations: spec.max_iterations,
        threads: spec.threads,
        ..SolverConfig::default()
    };
    Ok((solve(&problem, &spec.space, &cfg)?, geometry, tau))
}

/// Keeps the events inside `patch` and moves them to patch-local coordinates.
pub fn crop(events: &[Event], patch: [usize; 4]) -> Vec<Event> {
    let [x0, y0, w, h] = patch.map(|v| v as f64);
    events
        .iter()
        .filter(|e| e.x >= x0 && e.x < x0 + w && e.y >= y0 && e.y < y0 + h)
        .map(|e| Event { x: e.x - x0, y: e.y - y0, ..*e })
        .collect()
}

/// Windows of the stream after cropping and downsampling; empty windows are dropped.
pub fn prepare_windows(stream: &[Event], spec: &RunSpec) -> Result<Vec<(usize, EventWindow)>, CliError> {
    let cropped;
    let events = match spec.patch {
        Some(p) => {
            cropped = crop(stream, p);
            &cropped[..]
        }
        None => stream,
    };
    let mut out = Vec::new();
    for (i, w) in slice_windows(events, spec.window_ms * 1e-3)?.into_iter().enumerate() {
        let w = downsample(&w, spec.downsample as i64)?;
        if !w.is_empty() {
            out.push((i, w));
        }
    }
    Ok(out)
}

/// Solves every non-empty window of `stream`.
pub fn run_windows<W: WarpModel + ?Sized>(
    stream: &[Event],
    model: &W,
    spec: &RunSpec,
    gt: Option<&[GroundTruth]>,
) -> Result<Vec<WindowOutcome>, CliError> {
    if spec.space.dim() != model.dim() {
        return Err(CliError::Usage(format!(
            "{} needs a {}-dimensional space, got {}",
            spec.model,
            model.dim(),
            spec.space.dim()
        )));
    }
    if spec.downsample == 0 {
        return Err(CliError::Usage("downsample factor must be at least 1".into()));
    }
    let mut out = Vec::new();
    for (index, window) in prepare_windows(stream, spec)? {
        let (result, geometry, tau) = solve_window(&window, model, spec)?;
        let iwe = accumulate(&window, model, &result.theta, geometry)?.image;
        let tolerance = 0.5e-3 * spec.window_ms;
        let metrics = match gt.and_then(|g| match_ground_truth(g, window.t_ref(), tolerance)) {
            Some(g) if g.theta.len() == model.dim() => Some(error_metrics(&g.theta, &result.theta, &window, model)?),
            _ => None,
        };
        let record = WindowRecord {
            window: index,
            t_ref: window.t_ref(),
            events: window.len(),
            theta: result.theta.clone(),
            objective: result.objective,
            gap: result.gap,
            iterations: result.iterations,
            converged: result.converged,
            termination: result.termination,
            wall_time: (!spec.omit_timing).then_some(result.wall_time),
            metrics,
            config: RunConfig {
                model: spec.model.clone(),
                loss: spec.loss,
                loss_params: spec.loss_params,
                space: spec.space.lo().iter().zip(spec.space.hi()).map(|(&a, &b)| [a, b]).collect(),
                tau,
                tau_per_event: spec.tau.per_event(),
                downsample: spec.downsample,
                seed: spec.seed,
                threads: spec.threads,
                window_ms: spec.window_ms,
                patch: spec.patch,
            },
        };
        out.push(WindowOutcome { record, result, geometry, iwe });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use contrast_bnb::event::Polarity;
    use contrast_bnb::warp::FlowModel;

    fn spec() -> RunSpec {
        RunSpec {
            model: "flow".into(),
            width: 20,
            height: 20,
            space: SearchBox::from_ranges(&[(-50.0, 50.0), (-50.0, 50.0)]).unwrap(),
            loss: LossKind::SoS,
            loss_params: LossParams::default(),
            tau: TauSpec::Absolute(16.0),
            downsample: 1,
            threads: 1,
            seed: 0,
            window_ms: 40.0,
            max_iterations: 10_000,
            patch: None,
            omit_timing: true,
        }
    }

    fn stream() -> Vec<Event> {
        // A vertical edge at x = 10 moving with 100 px/s, two windows long.
        (0..160)
            .map(|i| {
                let t = i as f64 * 0.0005;
                let local = t - if t < 0.04 { 0.0 } else { 0.04 };
                Event::new((10.0 - 100.0 * local).round(), (i % 16) as f64 + 2.0, t, Polarity::Positive)
            })
            .collect()
    }

    #[test]
    fn one_record_per_window() {
        let out = run_windows(&stream(), &FlowModel, &spec(), None).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].record.events + out[1].record.events, 160);
        assert!(out[0].record.wall_time.is_none());
        assert!(out.iter().all(|o| o.result.converged));
    }

    #[test]
    fn downsampling_halves_counts() {
        let mut s = spec();
        s.downsample = 2;
        let out = run_windows(&stream(), &FlowModel, &s, None).unwrap();
        assert_eq!(out[0].record.events, 40);
    }

    #[test]
    fn crop_moves_to_patch_coordinates() {
        let e = [Event::new(5.0, 5.0, 0.0, Polarity::Positive), Event::new(15.0, 12.0, 0.0, Polarity::Positive)];
        let c = crop(&e, [10, 10, 10, 10]);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x, c[0].y), (5.0, 2.0));
    }

    #[test]
    fn tau_specs() {
        let events: Vec<Event> = stream().into_iter().take(80).collect();
        let w = EventWindow::new(events, 0.0, 0.04).unwrap();
        let s = spec();
        let g = geometry_for(&FlowModel, &s.space, 20, 20, 0.04).unwrap();
        let loss = FocusLoss::new(LossKind::SoS, LossParams::default(), w.len(), g.n_p()).unwrap();
        let p = Problem::new(&w, &FlowModel, loss, g).unwrap();
        assert_eq!(TauSpec::Absolute(2.0).resolve(&p, &s.space).unwrap(), 2.0);
        assert_eq!(TauSpec::PerEvent(0.5).resolve(&p, &s.space).unwrap(), 40.0);
        let mut ws = p.workspace();
        let centre = p.objective(&[0.0, 0.0], &mut ws).unwrap();
        assert_eq!(TauSpec::Relative(0.1).resolve(&p, &s.space).unwrap(), 0.1 * centre);
    }
}
