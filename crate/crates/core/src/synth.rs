//! Synthetic line scenes, event generation under known motion, and salt-and-pepper noise.

use nalgebra::{Matrix3, Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventError, EventWindow, Polarity};
use crate::warp::so3::so3_exp;
use crate::warp::{
    ackermann_pose, warp_ackermann, AckermannParams, FlowParams, Intrinsics, RigConfig, RotationParams, WarpError,
};

/// Largest accepted noise-to-signal ratio.
pub const MAX_NOISE_RATIO: f64 = 0.4;

/// Attempts per requested event before giving up on an off-sensor scene.
const RETRIES_PER_EVENT: usize = 1000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene needs at least one segment")]
    NoSegments,
    #[error("plane depth must be positive, got {0}")]
    BadDepth(f64),
    #[error("invalid extent: {0}")]
    BadExtent(String),
    #[error("noise ratio {0} outside [0, {MAX_NOISE_RATIO}]")]
    BadNoiseRatio(f64),
    #[error("window duration must be finite and non-negative, got {0}")]
    BadDuration(f64),
    #[error("only {got} of {wanted} events landed on the sensor; the scene leaves the field of view")]
    OffSensor { wanted: usize, got: usize },
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Axis-aligned region on the scene plane, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SceneExtent {
    /// The part of the plane at `depth` seen by a `width x height` sensor at the reference pose.
    pub fn footprint(k: &Intrinsics, width: usize, height: usize, depth: f64) -> Self {
        Self {
            x_min: -k.cx * depth / k.f,
            x_max: (width as f64 - 1.0 - k.cx) * depth / k.f,
            y_min: -k.cy * depth / k.f,
            y_max: (height as f64 - 1.0 - k.cy) * depth / k.f,
        }
    }
}

/// A 3-D segment; both endpoints lie on the scene plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl Segment {
    fn point(&self, s: f64) -> Vector3<f64> {
        let a = Vector3::from(self.a);
        a + (Vector3::from(self.b) - a) * s
    }
}

/// Horizontal and vertical segments on the plane `z = depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineScene {
    pub segments: Vec<Segment>,
    pub depth: f64,
}

/// Random axis-aligned segments inside `extent` on the plane at `depth`.
///
/// Each segment is horizontal or vertical with equal probability, starts uniformly in the
/// extent, and is between 10% and 50% of the extent long, clipped to the extent.
pub fn gen_scene(n_segments: usize, extent: SceneExtent, depth: f64, seed: u64) -> Result<LineScene, SynthError> {
    if n_segments == 0 {
        return Err(SynthError::NoSegments);
    }
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(SynthError::BadDepth(depth));
    }
    if !(extent.x_min <= extent.x_max && extent.y_min <= extent.y_max) {
        return Err(SynthError::BadExtent(format!("{extent:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if lo < hi { rng.gen_range(lo..hi) } else { lo };
    let (w, h) = (extent.x_max - extent.x_min, extent.y_max - extent.y_min);
    let segments = (0..n_segments)
        .map(|_| {
            let x = uniform(&mut rng, extent.x_min, extent.x_max);
            let y = uniform(&mut rng, extent.y_min, extent.y_max);
            let frac = rng.gen_range(0.1..0.5);
            if rng.gen_bool(0.5) {
                let x2 = (x + frac * w).min(extent.x_max);
                Segment { a: [x, y, depth], b: [x2, y, depth] }
            } else {
                let y2 = (y + frac * h).min(extent.y_max);
                Segment { a: [x, y, depth], b: [x, y2, depth] }
            }
        })
        .collect();
    Ok(LineScene { segments, depth })
}

/// Ground-truth motion used to generate events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Motion {
    Flow { params: FlowParams },
    Ackermann { rig: RigConfig, params: AckermannParams },
    Rotation { params: RotationParams },
}

impl Motion {
    /// Parameter vector in the order the matching warp model expects.
    pub fn theta(&self) -> Vec<f64> {
        match self {
            Motion::Flow { params } => params.to_vec(),
            Motion::Ackermann { params, .. } => params.to_vec(),
            Motion::Rotation { params } => params.to_vec(),
        }
    }

    /// Pixel observed at time `t` for a point seen at `reference` at time 0, i.e. the
    /// inverse of the model's warp. `None` if the point is behind the camera.
    pub fn observe(&self, reference: Point2<f64>, t: f64, k: &Intrinsics) -> Option<Point2<f64>> {
        match self {
            Motion::Flow { params } => Some(Point2::new(reference.x - params.vx * t, reference.y - params.vy * t)),
            Motion::Ackermann { rig, params } => {
                let kmat = Matrix3::new(rig.f, 0.0, rig.u0, 0.0, rig.f, rig.v0, 0.0, 0.0, 1.0);
                let (r, tc) = ackermann_pose(t, *params, rig);
                let n = Vector3::new(0.0, 0.0, -1.0);
                let h = kmat * (r - tc * n.transpose() / rig.d) * kmat.try_inverse()?;
                let p = h.try_inverse()? * Vector3::new(reference.x, reference.y, 1.0);
                if p.z.abs() < 1e-12 {
                    return None;
                }
                Some(Point2::new(p.x / p.z, p.y / p.z))
            }
            Motion::Rotation { params } => {
                let r = so3_exp(&(Vector3::from(params.omega) * -t));
                k.project(&(r * k.bearing(reference.x, reference.y)))
            }
        }
    }

    /// Forward warp of an observed pixel back to the reference time.
    pub fn warp(&self, p: Point2<f64>, t: f64, k: &Intrinsics) -> Option<Point2<f64>> {
        match self {
            Motion::Flow { params } => Some(Point2::new(p.x + params.vx * t, p.y + params.vy * t)),
            Motion::Ackermann { rig, params } => Some(warp_ackermann(p.x, p.y, t, *params, rig)),
            Motion::Rotation { params } => crate::warp::warp_rotation(p.x, p.y, t, *params, k),
        }
    }
}

/// Sensor and optics for generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
}

impl Default for SensorSpec {
    fn default() -> Self {
        // DAVIS346 resolution; the focal length is a nominal choice.
        Self { width: 346, height: 260, intrinsics: Intrinsics { f: 300.0, cx: 172.5, cy: 129.5 } }
    }
}

/// `n` events from random points on the scene's segments at uniform times in `[0, duration]`.
///
/// Each event is the reference-time projection of a scene point moved to its random
/// timestamp by the inverse warp, then rounded to the pixel grid. Events off the sensor are
/// redrawn. The window's reference time is 0.
pub fn gen_events(
    scene: &LineScene,
    motion: &Motion,
    duration: f64,
    n: usize,
    sensor: &SensorSpec,
    seed: u64,
) -> Result<EventWindow, SynthError> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SynthError::BadDuration(duration));
    }
    if scene.segments.is_empty() {
        return Err(SynthError::NoSegments);
    }
    let k = sensor.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let budget = RETRIES_PER_EVENT.saturating_mul(n.max(1));
    while events.len() < n {
        if attempts >= budget {
            return Err(SynthError::OffSensor { wanted: n, got: events.len() });
        }
        attempts += 1;
        let seg = &scene.segments[rng.gen_range(0..scene.segments.len())];
        let p = seg.point(rng.gen_range(0.0..=1.0));
        let t = if duration > 0.0 { rng.gen_range(0.0..=duration) } else { 0.0 };
        let polarity = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        let reference = Point2::new(k.cx + k.f * p.x / p.z, k.cy + k.f * p.y / p.z);
        let Some(obs) = motion.observe(reference, t, &k) else { continue };
        let (x, y) = (obs.x.round(), obs.y.round());
        if x < 0.0 || y < 0.0 || x > (sensor.width - 1) as f64 || y > (sensor.height - 1) as f64 {
            continue;
        }
        events.push(Event::new(x, y, t, polarity));
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(EventWindow::new(events, 0.0, duration)?)
}

/// Uniform salt-and-pepper noise: `floor(ratio * N)` extra events for `N` signal events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=MAX_NOISE_RATIO).contains(&self.ratio) {
            return Err(SynthError::BadNoiseRatio(self.ratio));
        }
        Ok(())
    }
}

/// Adds uniformly placed noise events at uniform times inside the window.
pub fn add_noise(window: &EventWindow, spec: &NoiseSpec, width: usize, height: usize) -> Result<EventWindow, SynthError> {
    spec.validate()?;
    let count = (spec.ratio * window.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(window.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t0, dur) = (window.t_ref(), window.duration());
    let mut events = window.events().to_vec();
    for _ in 0..count {
        let t = if dur > 0.0 { t0 + rng.gen_range(0.0..=dur) } else { t0 };
        let polarity = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        events.push(Event::new(rng.gen_range(0..width) as f64, rng.gen_range(0..height) as f64, t, polarity));
    }
    // Stable sort keeps signal events ahead of noise at equal timestamps.
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(EventWindow::new(events, t0, dur)?)
}
