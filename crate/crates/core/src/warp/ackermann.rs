//! Ackermann (planar, non-holonomic) motion of a downward-facing camera.
//!
//! The vehicle follows a circular arc with angular velocity `omega` and forward
//! speed `v`. The camera sits `l` metres ahead of the non-steering axle, looking
//! at a ground plane `d` metres away, so the event-to-reference mapping is a
//! planar homography. Expanding it, with `u = omega t`, `k = f / d`,
//! `A = x - u0` and `B = y - v0 + l k`:
//!
//! ```text
//! x' = u0          - B sin(u) + A cos(u) + k v (1 - cos u) / omega
//! y' = v0 - l k    + A sin(u) + B cos(u) + k v sin(u) / omega
//! ```
//!
//! Both `v / omega` terms have finite limits at `omega = 0`, where the warp
//! reduces to `x' = x`, `y' = y + k v t`.

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::interval::Interval;
use super::{SearchBox, WarpError, WarpModel};
use crate::event::PixelRect;

/// Below this angular rate the `v / omega` terms switch to their series expansion.
const SMALL_OMEGA: f64 = 1e-8;

/// Outward padding (px) applied to model bounds.
const BOUND_PAD: f64 = 1e-9;

/// Vehicle motion `(omega [rad/s], v [m/s])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AckermannParams {
    pub omega: f64,
    pub v: f64,
}

impl AckermannParams {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.omega, self.v]
    }
}

/// Camera intrinsics (single focal length) plus the vehicle mounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    /// Focal length in pixels.
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
    /// Signed camera offset along the vehicle's forward axis (m).
    pub l: f64,
    /// Distance from the camera to the ground plane (m).
    pub d: f64,
}

impl RigConfig {
    pub fn validate(&self) -> Result<(), WarpError> {
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(WarpError::BadCalibration(format!("focal length {} must be positive", self.f)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(WarpError::BadCalibration(format!("plane depth {} must be positive", self.d)));
        }
        if !(self.u0.is_finite() && self.v0.is_finite() && self.l.is_finite()) {
            return Err(WarpError::BadCalibration("non-finite principal point or offset".into()));
        }
        Ok(())
    }

    fn k(&self) -> f64 {
        self.f / self.d
    }
}

/// `(1 - cos(omega t)) / omega`; odd and increasing in `omega` for `|omega t| < pi/2`.
#[inline]
fn arc_lateral(omega: f64, t: f64) -> f64 {
    if omega.abs() < SMALL_OMEGA {
        0.5 * omega * t * t
    } else {
        (1.0 - (omega * t).cos()) / omega
    }
}

/// `sin(omega t) / omega`; even in `omega`, decreasing in `|omega|` for `|omega t| < pi/2`.
#[inline]
fn arc_forward(omega: f64, t: f64) -> f64 {
    if omega.abs() < SMALL_OMEGA {
        t * (1.0 - omega * omega * t * t / 6.0)
    } else {
        (omega * t).sin() / omega
    }
}

/// Trigonometric terms of the warp at one angular rate.
#[derive(Debug, Clone, Copy)]
struct ArcTrig {
    sin: f64,
    cos: f64,
    lateral: f64,
    forward: f64,
}

impl ArcTrig {
    #[inline]
    fn new(omega: f64, t: f64) -> Self {
        let (sin, cos) = (omega * t).sin_cos();
        if omega.abs() < SMALL_OMEGA {
            return Self { sin, cos, lateral: arc_lateral(omega, t), forward: arc_forward(omega, t) };
        }
        Self { sin, cos, lateral: (1.0 - cos) / omega, forward: sin / omega }
    }
}

/// Relative camera pose `(R_c, t_c)` mapping the camera at time `t` into the reference camera.
pub fn ackermann_pose(t: f64, theta: AckermannParams, rig: &RigConfig) -> (Matrix3<f64>, Vector3<f64>) {
    let u = theta.omega * t;
    let (s, c) = u.sin_cos();
    let r_v = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let t_v = Vector3::new(theta.v * arc_lateral(theta.omega, t), theta.v * arc_forward(theta.omega, t), 0.0);
    // Camera and vehicle share orientation; the camera is offset by l along the forward axis.
    let t_vc = Vector3::new(0.0, rig.l, 0.0);
    let r_c = r_v;
    let t_c = -t_vc + t_v + r_v * t_vc;
    (r_c, t_c)
}

/// `[base_x, base_y, dir_x, dir_y]` with `warp = base + v * dir` for a fixed `omega`.
#[inline]
fn ackermann_affine(x: f64, y: f64, t: f64, omega: f64, rig: &RigConfig) -> [f64; 4] {
    let k = rig.k();
    let a = x - rig.u0;
    let b = y - rig.v0 + rig.l * k;
    let (s, c) = (omega * t).sin_cos();
    [
        rig.u0 + (a * c - b * s),
        (rig.v0 - rig.l * k) + (a * s + b * c),
        k * arc_lateral(omega, t),
        k * arc_forward(omega, t),
    ]
}

/// Warp of event `(x, y)` at time `t` to the reference view.
#[inline]
pub fn warp_ackermann(x: f64, y: f64, t: f64, theta: AckermannParams, rig: &RigConfig) -> Point2<f64> {
    let [bx, by, dx, dy] = ackermann_affine(x, y, t, theta.omega, rig);
    Point2::new(bx + theta.v * dx, by + theta.v * dy)
}

/// Which end of an interval a term is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    Min,
    Max,
}

impl End {
    fn flip(self) -> End {
        match self {
            End::Min => End::Max,
            End::Max => End::Min,
        }
    }

    fn pick(self, lo: f64, hi: f64) -> f64 {
        match self {
            End::Min => lo,
            End::Max => hi,
        }
    }
}

/// Arguments minimising each warp term: `(omega end)` for the trigonometric terms and
/// `(omega end, v end)` for the two `v / omega` terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TermArgs {
    a_x: End,
    b_x: End,
    c_x: (End, End),
    a_y: End,
    b_y: End,
    b_y_v: End,
    c_y: End,
}

impl TermArgs {
    /// The maximising arguments: every term is monotone in each argument on a case cell.
    fn flipped(self) -> TermArgs {
        TermArgs {
            a_x: self.a_x.flip(),
            b_x: self.b_x.flip(),
            c_x: (self.c_x.0.flip(), self.c_x.1.flip()),
            a_y: self.a_y.flip(),
            b_y: self.b_y.flip(),
            b_y_v: self.b_y_v.flip(),
            c_y: self.c_y.flip(),
        }
    }
}

/// Monotonicity case table for the lower corner of the box.
///
/// Terms: `a_x = -B sin u`, `b_x = A cos u`, `c_x = k v (1 - cos u)/omega`,
/// `a_y = A sin u`, `b_y = k v sin(u)/omega`, `c_y = B cos u`. The sixteen cells are
/// indexed by the signs of omega, v, `A` and `B`; omega and v are split at zero
/// before lookup so each cell has a definite sign.
fn lower_case(omega_pos: bool, v_pos: bool, a_pos: bool, b_pos: bool) -> TermArgs {
    use End::{Max, Min};
    // sin u is increasing in omega everywhere; cos u decreases for omega >= 0 and increases below.
    let a_x = if b_pos { Max } else { Min };
    let a_y = if a_pos { Min } else { Max };
    let (b_x, c_y) = if omega_pos {
        (if a_pos { Max } else { Min }, if b_pos { Max } else { Min })
    } else {
        (if a_pos { Min } else { Max }, if b_pos { Min } else { Max })
    };
    // (1 - cos u)/omega is increasing with the sign of omega; sin(u)/omega is positive,
    // decreasing in |omega|.
    let (c_x, b_y, b_y_v) = match (omega_pos, v_pos) {
        (true, true) => ((Min, Min), Max, Min),
        (true, false) => ((Max, Min), Min, Min),
        (false, true) => ((Min, Max), Min, Min),
        (false, false) => ((Max, Max), Max, Min),
    };
    TermArgs { a_x, b_x, c_x, a_y, b_y, b_y_v, c_y }
}

/// Bounds over a box whose omega and v intervals each have a definite sign.
fn case_rect(x: f64, y: f64, t: f64, w: (f64, f64), v: (f64, f64), rig: &RigConfig) -> PixelRect {
    let k = rig.k();
    let a = x - rig.u0;
    let b = y - rig.v0 + rig.l * k;
    if w.0 == 0.0 && w.1 == 0.0 {
        // Straight-line motion: only the forward displacement varies.
        let lo = warp_ackermann(x, y, t, AckermannParams { omega: 0.0, v: v.0 }, rig);
        let hi = warp_ackermann(x, y, t, AckermannParams { omega: 0.0, v: v.1 }, rig);
        return PixelRect::new(lo.x, hi.x, lo.y, hi.y);
    }
    let omega_pos = w.0 >= 0.0;
    let v_pos = v.0 >= 0.0;
    let ends = [ArcTrig::new(w.0, t), ArcTrig::new(w.1, t)];
    let eval = |args: TermArgs| -> (f64, f64) {
        let at = |e: End| &ends[(e == End::Max) as usize];
        let va = |e: End| e.pick(v.0, v.1);
        let xw = rig.u0 + (-b * at(args.a_x).sin + a * at(args.b_x).cos + k * va(args.c_x.1) * at(args.c_x.0).lateral);
        let yw = (rig.v0 - rig.l * k)
            + (a * at(args.a_y).sin + k * va(args.b_y_v) * at(args.b_y).forward + b * at(args.c_y).cos);
        (xw, yw)
    };
    let lower = lower_case(omega_pos, v_pos, a >= 0.0, b >= 0.0);
    let (x_min, y_min) = eval(lower);
    let (x_max, y_max) = eval(lower.flipped());
    PixelRect::new(x_min, x_max, y_min, y_max)
}

/// Calls `f` on the sign-definite pieces of `[lo, hi]`.
fn split_at_zero(lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    let pieces: [Option<(f64, f64)>; 2] =
        if lo < 0.0 && hi > 0.0 { [Some((lo, 0.0)), Some((0.0, hi))] } else { [Some((lo, hi)), None] };
    pieces.into_iter().flatten()
}

fn union_over_pieces(
    sbox: &SearchBox,
    mut f: impl FnMut((f64, f64), (f64, f64)) -> PixelRect,
) -> PixelRect {
    let (lo, hi) = (sbox.lo(), sbox.hi());
    let mut out: Option<PixelRect> = None;
    for w in split_at_zero(lo[0], hi[0]) {
        for v in split_at_zero(lo[1], hi[1]) {
            let r = f(w, v);
            out = Some(out.map_or(r, |o| o.union(&r)));
        }
    }
    out.expect("at least one piece")
}

/// Bounding rectangle from the monotonicity case table.
///
/// The box must satisfy `|omega| t < pi/2`.
pub fn bbox_case_table(x: f64, y: f64, t: f64, sbox: &SearchBox, rig: &RigConfig) -> PixelRect {
    union_over_pieces(sbox, |w, v| case_rect(x, y, t, w, v, rig))
}

/// Bounding rectangle from term-wise interval arithmetic.
///
/// Uses `(1 - cos u)/omega = t sin(u/2) sinc(u/2)` and `sin(u)/omega = t sinc(u)`, so
/// no term is singular at `omega = 0`. Looser than [`bbox_case_table`].
pub fn bbox_interval(x: f64, y: f64, t: f64, sbox: &SearchBox, rig: &RigConfig) -> PixelRect {
    let k = rig.k();
    let a = x - rig.u0;
    let b = y - rig.v0 + rig.l * k;
    union_over_pieces(sbox, |w, v| {
        let u = Interval::new(w.0, w.1).scale(t);
        let half = u.scale(0.5);
        let vi = Interval::new(v.0, v.1);
        let xi = u.cos().scale(a) - u.sin().scale(b) + (vi * half.sin() * half.sinc()).scale(k * t) + rig.u0;
        let yi = u.sin().scale(a) + u.cos().scale(b) + (vi * u.sinc()).scale(k * t) + (rig.v0 - rig.l * k);
        PixelRect::new(xi.lo, xi.hi, yi.lo, yi.hi)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckermannBound {
    #[default]
    CaseTable,
    Interval,
}

/// Two-parameter Ackermann model `(omega, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckermannModel {
    pub rig: RigConfig,
    pub bound: AckermannBound,
}

impl AckermannModel {
    pub fn new(rig: RigConfig) -> Result<Self, WarpError> {
        rig.validate()?;
        Ok(Self { rig, bound: AckermannBound::CaseTable })
    }

    pub fn with_bound(mut self, bound: AckermannBound) -> Self {
        self.bound = bound;
        self
    }
}

impl WarpModel for AckermannModel {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &'static str {
        "ackermann"
    }

    #[inline]
    fn warp(&self, x: f64, y: f64, dt: f64, theta: &[f64]) -> Option<Point2<f64>> {
        Some(warp_ackermann(x, y, dt, AckermannParams { omega: theta[0], v: theta[1] }, &self.rig))
    }

    #[inline]
    fn affine_last(&self, x: f64, y: f64, dt: f64, head: &[f64]) -> Option<[f64; 4]> {
        Some(ackermann_affine(x, y, dt, head[0], &self.rig))
    }

    fn bound(&self, x: f64, y: f64, dt: f64, sbox: &SearchBox) -> Option<PixelRect> {
        if sbox.is_point() {
            return self.warp(x, y, dt, sbox.lo()).map(PixelRect::point);
        }
        let r = match self.bound {
            AckermannBound::CaseTable => bbox_case_table(x, y, dt, sbox, &self.rig),
            AckermannBound::Interval => bbox_interval(x, y, dt, sbox, &self.rig),
        };
        // The bound and the warp round differently; pad so pixel rounding stays conservative.
        Some(PixelRect::new(r.x_min - BOUND_PAD, r.x_max + BOUND_PAD, r.y_min - BOUND_PAD, r.y_max + BOUND_PAD))
    }

    fn check_box(&self, sbox: &SearchBox, duration: f64) -> Result<(), WarpError> {
        if sbox.dim() != 2 {
            return Err(WarpError::Dimension { expected: 2, got: sbox.dim() });
        }
        let value = sbox.lo()[0].abs().max(sbox.hi()[0].abs()) * duration;
        if value >= std::f64::consts::FRAC_PI_2 {
            return Err(WarpError::OmegaTooLarge { value });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rig() -> RigConfig {
        RigConfig { f: 200.0, u0: 120.0, v0: 90.0, l: -0.45, d: 2.0 }
    }

    /// Independent route: dehomogenised `K (R - t n^T / d) K^-1 [x; 1]` with `n = (0, 0, -1)`.
    fn homography_oracle(x: f64, y: f64, t: f64, th: AckermannParams, rig: &RigConfig) -> Point2<f64> {
        let kmat = Matrix3::new(rig.f, 0.0, rig.u0, 0.0, rig.f, rig.v0, 0.0, 0.0, 1.0);
        let (r, tc) = ackermann_pose(t, th, rig);
        let n = Vector3::new(0.0, 0.0, -1.0);
        let h = kmat * (r - tc * n.transpose() / rig.d) * kmat.try_inverse().unwrap();
        let p = h * Vector3::new(x, y, 1.0);
        Point2::new(p.x / p.z, p.y / p.z)
    }

    #[test]
    fn pose_examples() {
        let r = RigConfig { l: 0.0, ..rig() };
        let (rc, tc) = ackermann_pose(1.0, AckermannParams { omega: 0.0, v: 1.0 }, &r);
        assert_relative_eq!(rc, Matrix3::identity());
        assert_relative_eq!(tc, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);

        let (rc, tc) = ackermann_pose(1.0, AckermannParams { omega: std::f64::consts::FRAC_PI_2, v: 0.0 }, &r);
        assert_relative_eq!(rc, Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(tc, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn pose_matches_matrix_composition() {
        // Compose vehicle motion with the camera mounting as rigid transforms.
        let r = rig();
        let th = AckermannParams { omega: 0.5, v: 0.5 };
        let t = 0.1;
        let (rc, tc) = ackermann_pose(t, th, &r);
        let u = th.omega * t;
        let rv = Matrix3::new(u.cos(), -u.sin(), 0.0, u.sin(), u.cos(), 0.0, 0.0, 0.0, 1.0);
        let tv = th.v / th.omega * Vector3::new(1.0 - u.cos(), u.sin(), 0.0);
        let tvc = Vector3::new(0.0, r.l, 0.0);
        let mut m_vc = nalgebra::Matrix4::identity();
        m_vc.fixed_view_mut::<3, 1>(0, 3).copy_from(&tvc);
        let mut m_v = nalgebra::Matrix4::identity();
        m_v.fixed_view_mut::<3, 3>(0, 0).copy_from(&rv);
        m_v.fixed_view_mut::<3, 1>(0, 3).copy_from(&tv);
        let m_c = m_vc.try_inverse().unwrap() * m_v * m_vc;
        assert_relative_eq!(rc, m_c.fixed_view::<3, 3>(0, 0).into_owned(), epsilon = 1e-14);
        assert_relative_eq!(tc, m_c.fixed_view::<3, 1>(0, 3).into_owned(), epsilon = 1e-14);
    }

    #[test]
    fn warp_limits() {
        let r = rig();
        let p = warp_ackermann(50.0, 60.0, 0.07, AckermannParams { omega: 0.0, v: 0.3 }, &r);
        assert_relative_eq!(p.x, 50.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 60.0 + 100.0 * 0.3 * 0.07, epsilon = 1e-12);
        let p = warp_ackermann(50.0, 60.0, 0.0, AckermannParams { omega: 0.4, v: 0.3 }, &r);
        assert_relative_eq!(p.x, 50.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 60.0, epsilon = 1e-12);
        // Continuity across the series switch.
        let a = warp_ackermann(10.0, 20.0, 0.1, AckermannParams { omega: 0.99e-8, v: 0.5 }, &r);
        let b = warp_ackermann(10.0, 20.0, 0.1, AckermannParams { omega: 1.01e-8, v: 0.5 }, &r);
        // The rotation term alone moves by about |B| * 2e-10 * t here.
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn warp_matches_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = rig();
        for _ in 0..2000 {
            let th = AckermannParams { omega: rng.gen_range(-2.0..2.0), v: rng.gen_range(-1.0..1.0) };
            let (x, y, t) = (rng.gen_range(0.0..240.0), rng.gen_range(0.0..180.0), rng.gen_range(0.0..0.2));
            let p = warp_ackermann(x, y, t, th, &r);
            let q = homography_oracle(x, y, t, th, &r);
            assert!((p - q).norm() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn case_one_formulas() {
        // omega, v >= 0 and the event in the A >= 0, B >= 0 quadrant.
        let r = rig();
        let (k, t) = (r.f / r.d, 0.05);
        let (x, y) = (150.0, 170.0);
        let sbox = SearchBox::from_ranges(&[(0.4, 0.6), (0.4, 0.6)]).unwrap();
        let (a, b) = (x - r.u0, y - r.v0 + r.l * k);
        assert!(a >= 0.0 && b >= 0.0);
        let (wmin, wmax, vmin, vmax) = (0.4, 0.6, 0.4, 0.6);
        let g = |w: f64| (1.0 - (w * t).cos()) / w;
        let s = |w: f64| (w * t).sin() / w;
        let x_lo = r.u0 - b * (wmax * t).sin() + a * (wmax * t).cos() + k * vmin * g(wmin);
        let x_hi = r.u0 - b * (wmin * t).sin() + a * (wmin * t).cos() + k * vmax * g(wmax);
        let y_lo = r.v0 - r.l * k + a * (wmin * t).sin() + k * vmin * s(wmax) + b * (wmax * t).cos();
        let y_hi = r.v0 - r.l * k + a * (wmax * t).sin() + k * vmax * s(wmin) + b * (wmin * t).cos();
        let rect = bbox_case_table(x, y, t, &sbox, &r);
        assert_relative_eq!(rect.x_min, x_lo, epsilon = 1e-10);
        assert_relative_eq!(rect.x_max, x_hi, epsilon = 1e-10);
        assert_relative_eq!(rect.y_min, y_lo, epsilon = 1e-10);
        assert_relative_eq!(rect.y_max, y_hi, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_box_collapses_to_warp() {
        let r = rig();
        let m = AckermannModel::new(r).unwrap();
        let th = [0.37, -0.21];
        let rect = m.bound(33.0, 150.0, 0.08, &SearchBox::point(&th)).unwrap();
        assert_eq!(rect, PixelRect::point(m.warp(33.0, 150.0, 0.08, &th).unwrap()));
        // Without the shortcut the case table still collapses to the warp within an ulp or so.
        let rect = bbox_case_table(33.0, 150.0, 0.08, &SearchBox::point(&th), &r);
        let p = m.warp(33.0, 150.0, 0.08, &th).unwrap();
        assert!((rect.x_min - p.x).abs() <= 1e-12 && (rect.x_max - p.x).abs() <= 1e-12);
        assert!((rect.y_min - p.y).abs() <= 1e-12 && (rect.y_max - p.y).abs() <= 1e-12);
    }

    #[test]
    fn both_bounds_contain_samples_and_nest() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = rig();
        for case in 0..200 {
            let t = rng.gen_range(0.0..0.1);
            let w0: f64 = rng.gen_range(-1.5..1.5);
            let v0: f64 = rng.gen_range(-1.0..1.0);
            let sbox = SearchBox::from_ranges(&[
                (w0, w0 + rng.gen_range(0.0..1.0)),
                (v0, v0 + rng.gen_range(0.0..1.0)),
            ])
            .unwrap();
            let (x, y) = (rng.gen_range(-20.0..260.0), rng.gen_range(-20.0..200.0));
            let table = bbox_case_table(x, y, t, &sbox, &r);
            let ia = bbox_interval(x, y, t, &sbox, &r);
            assert!(ia.contains_rect(&table, 1e-9), "case {case}: {table:?} not in {ia:?}");
            for _ in 0..200 {
                let th = sbox.sample(&mut rng);
                let p = warp_ackermann(x, y, t, AckermannParams { omega: th[0], v: th[1] }, &r);
                assert!(table.contains(p, 1e-9), "case {case}: {p} outside {table:?}");
            }
        }
    }

    #[test]
    fn omega_limit_is_checked() {
        let m = AckermannModel::new(rig()).unwrap();
        let ok = SearchBox::from_ranges(&[(-1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(m.check_box(&ok, 0.1).is_ok());
        let bad = SearchBox::from_ranges(&[(-20.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(m.check_box(&bad, 0.1), Err(WarpError::OmegaTooLarge { .. })));
        assert!(AckermannModel::new(RigConfig { d: 0.0, ..rig() }).is_err());
    }
}
