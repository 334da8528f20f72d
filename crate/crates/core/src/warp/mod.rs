//! Motion models: warps to the reference time and per-event bounding boxes.

use nalgebra::Point2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::PixelRect;

mod ackermann;
mod flow;
pub mod interval;
mod rotation;
pub mod so3;

pub use ackermann::{
    ackermann_pose, bbox_case_table, bbox_interval, warp_ackermann, AckermannBound, AckermannModel,
    AckermannParams, RigConfig,
};
pub use flow::{bbox_flow, warp_flow, FlowModel, FlowParams};
pub use rotation::{bbox_rotation, cone_bound, warp_rotation, ConeBound, Intrinsics, RotationModel, RotationParams};

#[derive(Debug, Error, PartialEq)]
pub enum WarpError {
    #[error("search box has {got} dimensions, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("interval {index} is invalid: [{lo}, {hi}]")]
    BadInterval { index: usize, lo: f64, hi: f64 },
    #[error("|omega| * dt reaches {value:.4} >= pi/2; the Ackermann bounds need |omega * dt| < pi/2")]
    OmegaTooLarge { value: f64 },
    #[error("invalid rig or intrinsics: {0}")]
    BadCalibration(String),
}

/// Axis-aligned box of motion parameters, one closed interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, WarpError> {
        if lo.len() != hi.len() {
            return Err(WarpError::Dimension { expected: lo.len(), got: hi.len() });
        }
        for (index, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(WarpError::BadInterval { index, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_ranges(ranges: &[(f64, f64)]) -> Result<Self, WarpError> {
        Self::new(ranges.iter().map(|r| r.0).collect(), ranges.iter().map(|r| r.1).collect())
    }

    /// Degenerate box holding a single parameter vector.
    pub fn point(theta: &[f64]) -> Self {
        Self { lo: theta.to_vec(), hi: theta.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| t >= l && t <= h)
    }

    pub fn contains_box(&self, other: &SearchBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Box with the same centre and every width scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> SearchBox {
        let c = self.center();
        let w = self.widths();
        let lo = c.iter().zip(&w).map(|(c, w)| c - 0.5 * w * factor).collect();
        let hi = c.iter().zip(&w).map(|(c, w)| c + 0.5 * w * factor).collect();
        SearchBox { lo, hi }
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..=h) })
            .collect()
    }

    /// Restricts dimension `i` to `[lo, hi]`.
    pub(crate) fn with_interval(&self, i: usize, lo: f64, hi: f64) -> SearchBox {
        let mut b = self.clone();
        b.lo[i] = lo;
        b.hi[i] = hi;
        b
    }
}

/// A parametric warp of events to the reference time, with a bounding box over parameter boxes.
///
/// `dt` is always the event time relative to the window's reference time.
pub trait WarpModel: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &'static str;

    /// Warped position, or `None` if the model rejects the event at these parameters.
    fn warp(&self, x: f64, y: f64, dt: f64, theta: &[f64]) -> Option<Point2<f64>>;

    /// Rectangle containing `warp(x, y, dt, theta)` for every `theta` in `sbox`.
    ///
    /// `None` means no finite rectangle could be certified; callers fall back to the whole grid.
    fn bound(&self, x: f64, y: f64, dt: f64, sbox: &SearchBox) -> Option<PixelRect>;

    /// Decomposition `warp(head, s) = base + s * dir` for models affine in their last parameter,
    /// returned as `[base_x, base_y, dir_x, dir_y]` for the leading parameters `head`.
    ///
    /// Implementations must agree bit-for-bit with [`WarpModel::warp`] when the result is
    /// formed as `base + s * dir`.
    fn affine_last(&self, _x: f64, _y: f64, _dt: f64, _head: &[f64]) -> Option<[f64; 4]> {
        None
    }

    /// Admissibility of a search box for windows of the given duration.
    fn check_box(&self, sbox: &SearchBox, _duration: f64) -> Result<(), WarpError> {
        if sbox.dim() != self.dim() {
            return Err(WarpError::Dimension { expected: self.dim(), got: sbox.dim() });
        }
        Ok(())
    }
}

impl<W: WarpModel + ?Sized> WarpModel for &W {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn warp(&self, x: f64, y: f64, dt: f64, theta: &[f64]) -> Option<Point2<f64>> {
        (**self).warp(x, y, dt, theta)
    }
    fn bound(&self, x: f64, y: f64, dt: f64, sbox: &SearchBox) -> Option<PixelRect> {
        (**self).bound(x, y, dt, sbox)
    }
    fn affine_last(&self, x: f64, y: f64, dt: f64, head: &[f64]) -> Option<[f64; 4]> {
        (**self).affine_last(x, y, dt, head)
    }
    fn check_box(&self, sbox: &SearchBox, duration: f64) -> Result<(), WarpError> {
        (**self).check_box(sbox, duration)
    }
}

/// Padding needed so that no sensor pixel warps off the padded grid for any parameter in `sbox`
/// and any time in `[0, duration]`.
///
/// Sampled on a 9x9 lattice over the sensor, including its corners, at the end of the window.
pub fn required_margin<W: WarpModel + ?Sized>(
    model: &W,
    sbox: &SearchBox,
    width: usize,
    height: usize,
    duration: f64,
) -> usize {
    const STEPS: usize = 8;
    let (w, h) = ((width.max(1) - 1) as f64, (height.max(1) - 1) as f64);
    let mut excursion: f64 = 0.0;
    for i in 0..=STEPS {
        for j in 0..=STEPS {
            let x = w * i as f64 / STEPS as f64;
            let y = h * j as f64 / STEPS as f64;
            for dt in [0.5 * duration, duration] {
                let rect = match model.bound(x, y, dt, sbox) {
                    Some(r) => r,
                    None => continue,
                };
                excursion = excursion
                    .max(-rect.x_min)
                    .max(rect.x_max - w)
                    .max(-rect.y_min)
                    .max(rect.y_max - h);
            }
        }
    }
    if !excursion.is_finite() {
        return 0;
    }
    excursion.max(0.0).ceil() as usize + 1
}
