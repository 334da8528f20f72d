//! Pure camera rotation with constant angular velocity.

use nalgebra::{Point2, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::so3::so3_exp;
use super::{SearchBox, WarpError, WarpModel};
use crate::event::PixelRect;

/// Pinhole intrinsics with a single focal length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), WarpError> {
        if !(self.f > 0.0 && self.f.is_finite() && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(WarpError::BadCalibration(format!("bad intrinsics {self:?}")));
        }
        Ok(())
    }

    /// Unit bearing of pixel `(x, y)`.
    #[inline]
    pub fn bearing(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.f, (y - self.cy) / self.f, 1.0).normalize()
    }

    /// Pinhole projection; `None` unless the bearing is strictly in front of the camera.
    #[inline]
    pub fn project(&self, b: &Vector3<f64>) -> Option<Point2<f64>> {
        if b.z <= 0.0 {
            return None;
        }
        Some(Point2::new(self.f * b.x / b.z + self.cx, self.f * b.y / b.z + self.cy))
    }
}

/// Angular velocity in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub omega: [f64; 3],
}

impl RotationParams {
    pub fn to_vec(self) -> Vec<f64> {
        self.omega.to_vec()
    }
}

/// Rotates the bearing of `(x, y)` by `exp(omega t)` and reprojects it.
#[inline]
pub fn warp_rotation(x: f64, y: f64, t: f64, w: RotationParams, k: &Intrinsics) -> Option<Point2<f64>> {
    let r = so3_exp(&(Vector3::from(w.omega) * t));
    k.project(&(r * k.bearing(x, y)))
}

/// Cone of bearings reachable by one event over a box of angular velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeBound {
    pub axis: Unit<Vector3<f64>>,
    pub half_angle: f64,
}

/// Cone around the bearing rotated by the box centre, with half-angle half the scaled box diagonal.
pub fn cone_bound(x: f64, y: f64, t: f64, sbox: &SearchBox, k: &Intrinsics) -> ConeBound {
    let (lo, hi) = (sbox.lo(), sbox.hi());
    let c = Vector3::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]));
    let diag = Vector3::new(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    let axis = Unit::new_normalize(so3_exp(&(c * t)) * k.bearing(x, y));
    ConeBound { axis, half_angle: 0.5 * diag.norm() * t }
}

/// Axis-aligned pixel rectangle containing the projection of every bearing in the cone.
///
/// The extremes of `b_x / b_z` over the cone are where a plane `b_x = lambda b_z` is tangent
/// to it, which gives a quadratic in `lambda`; likewise for `y`. Returns `None` if the cone
/// reaches the `z = 0` plane.
pub fn bbox_rotation(cone: &ConeBound, k: &Intrinsics) -> Option<PixelRect> {
    let a = cone.axis.into_inner();
    if cone.half_angle == 0.0 {
        return k.project(&a).map(PixelRect::point);
    }
    if cone.half_angle >= std::f64::consts::FRAC_PI_2 {
        return None;
    }
    let s = cone.half_angle.sin();
    let denom = a.z * a.z - s * s;
    if a.z <= s || denom <= 0.0 {
        return None;
    }
    let extent = |u: f64, other: f64| {
        let disc = s * (1.0 - other * other - s * s).max(0.0).sqrt();
        ((u * a.z - disc) / denom, (u * a.z + disc) / denom)
    };
    let (x0, x1) = extent(a.x, a.y);
    let (y0, y1) = extent(a.y, a.x);
    // A few ulps of outward slack for the rounding in the quadratic.
    let pad = |v: f64| 4.0 * f64::EPSILON * v.abs().max(1.0);
    let (xl, xh) = (k.f * x0 + k.cx, k.f * x1 + k.cx);
    let (yl, yh) = (k.f * y0 + k.cy, k.f * y1 + k.cy);
    Some(PixelRect::new(xl - pad(xl), xh + pad(xh), yl - pad(yl), yh + pad(yh)))
}

/// Three-parameter rotation model `omega = (wx, wy, wz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationModel {
    pub intrinsics: Intrinsics,
}

impl RotationModel {
    pub fn new(intrinsics: Intrinsics) -> Result<Self, WarpError> {
        intrinsics.validate()?;
        Ok(Self { intrinsics })
    }
}

impl WarpModel for RotationModel {
    fn dim(&self) -> usize {
        3
    }

    fn name(&self) -> &'static str {
        "rotation"
    }

    #[inline]
    fn warp(&self, x: f64, y: f64, dt: f64, theta: &[f64]) -> Option<Point2<f64>> {
        warp_rotation(x, y, dt, RotationParams { omega: [theta[0], theta[1], theta[2]] }, &self.intrinsics)
    }

    fn bound(&self, x: f64, y: f64, dt: f64, sbox: &SearchBox) -> Option<PixelRect> {
        if sbox.is_point() {
            return self.warp(x, y, dt, sbox.lo()).map(PixelRect::point);
        }
        bbox_rotation(&cone_bound(x, y, dt, sbox, &self.intrinsics), &self.intrinsics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> Intrinsics {
        Intrinsics { f: 200.0, cx: 120.0, cy: 90.0 }
    }

    #[test]
    fn warp_matches_quaternion_oracle() {
        let k = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let w = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let (x, y, t) = (rng.gen_range(0.0..240.0), rng.gen_range(0.0..180.0), rng.gen_range(0.0..0.05));
            let q = UnitQuaternion::from_scaled_axis(Vector3::from(w) * t);
            let ray = q * Vector3::new(x - k.cx, y - k.cy, k.f);
            let expected = Point2::new(k.f * ray.x / ray.z + k.cx, k.f * ray.y / ray.z + k.cy);
            let got = warp_rotation(x, y, t, RotationParams { omega: w }, &k).unwrap();
            assert!((got - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn warp_identity_and_rejection() {
        let k = intr();
        let p = warp_rotation(17.0, 33.0, 0.0, RotationParams { omega: [1.0, 2.0, 3.0] }, &k).unwrap();
        assert_relative_eq!(p, Point2::new(17.0, 33.0), epsilon = 1e-12);
        // A quarter turn about y sends the principal ray to the image plane's horizon.
        let pi = std::f64::consts::PI;
        assert!(warp_rotation(120.0, 90.0, 1.0, RotationParams { omega: [0.0, pi, 0.0] }, &k).is_none());
    }

    #[test]
    fn cone_half_angle_example() {
        let sbox = SearchBox::from_ranges(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let cone = cone_bound(120.0, 90.0, 0.01, &sbox, &intr());
        assert_relative_eq!(cone.half_angle, 0.01 * 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(cone.half_angle, 0.017320, epsilon = 1e-6);
        assert_relative_eq!(cone.axis.into_inner(), Vector3::z(), epsilon = 1e-12);
        let cone = cone_bound(40.0, 10.0, 0.01, &SearchBox::point(&[0.3, 0.2, -1.0]), &intr());
        assert_eq!(cone.half_angle, 0.0);
    }

    #[test]
    fn cone_contains_rotated_bearings() {
        let k = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let lo: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..2.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..1.0)).collect();
            let sbox = SearchBox::new(lo, hi).unwrap();
            let (x, y, t) = (rng.gen_range(0.0..240.0), rng.gen_range(0.0..180.0), rng.gen_range(0.0..0.05));
            let cone = cone_bound(x, y, t, &sbox, &k);
            for _ in 0..500 {
                let w = Vector3::from_vec(sbox.sample(&mut rng));
                let b = so3_exp(&(w * t)) * k.bearing(x, y);
                assert!(b.angle(&cone.axis) <= cone.half_angle + 1e-9);
            }
        }
    }

    #[test]
    fn bbox_special_cases() {
        let k = intr();
        let cone = ConeBound { axis: Unit::new_normalize(Vector3::new(0.1, -0.2, 1.0)), half_angle: 0.0 };
        let r = bbox_rotation(&cone, &k).unwrap();
        let p = k.project(&cone.axis).unwrap();
        assert_eq!(r, PixelRect::point(p));

        let phi: f64 = 0.2;
        let cone = ConeBound { axis: Vector3::z_axis(), half_angle: phi };
        let r = bbox_rotation(&cone, &k).unwrap();
        let h = k.f * phi.tan();
        assert_relative_eq!(r.x_min, k.cx - h, epsilon = 1e-9);
        assert_relative_eq!(r.x_max, k.cx + h, epsilon = 1e-9);
        assert_relative_eq!(r.y_min, k.cy - h, epsilon = 1e-9);
        assert_relative_eq!(r.y_max, k.cy + h, epsilon = 1e-9);

        let cone = ConeBound { axis: Unit::new_normalize(Vector3::new(1.0, 0.0, 0.1)), half_angle: 0.2 };
        assert!(bbox_rotation(&cone, &k).is_none());
    }

    /// Uniform sample of a unit vector within `alpha` of `axis`.
    fn sample_in_cone(rng: &mut ChaCha8Rng, axis: &Unit<Vector3<f64>>, alpha: f64) -> Vector3<f64> {
        let cos_t = rng.gen_range(alpha.cos()..=1.0);
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let local = Vector3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t);
        let q = UnitQuaternion::rotation_between(&Vector3::z(), axis).unwrap_or_else(UnitQuaternion::identity);
        q * local
    }

    #[test]
    fn bbox_contains_cone_samples() {
        let k = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let axis = Unit::new_normalize(Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), 1.0));
            let alpha = rng.gen_range(0.0..0.3);
            let cone = ConeBound { axis, half_angle: alpha };
            let rect = match bbox_rotation(&cone, &k) {
                Some(r) => r,
                None => continue,
            };
            let mut touched = [false; 4];
            for i in 0..10_000 {
                // Include boundary samples so the rectangle's tightness is exercised too.
                let b = if i % 2 == 0 { sample_in_cone(&mut rng, &axis, alpha) } else {
                    let q = UnitQuaternion::rotation_between(&Vector3::z(), &axis).unwrap();
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    q * Vector3::new(alpha.sin() * phi.cos(), alpha.sin() * phi.sin(), alpha.cos())
                };
                let p = k.project(&b).unwrap();
                assert!(rect.contains(p, 1e-9), "{p} outside {rect:?}");
                touched[0] |= p.x - rect.x_min < 0.05;
                touched[1] |= rect.x_max - p.x < 0.05;
                touched[2] |= p.y - rect.y_min < 0.05;
                touched[3] |= rect.y_max - p.y < 0.05;
            }
            assert!(touched.iter().all(|&t| t), "rectangle not tight: {rect:?}");
        }
    }

    #[test]
    fn model_bound_contains_warps() {
        let m = RotationModel::new(intr()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let c: [f64; 3] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let w = rng.gen_range(0.0..1.0);
            let sbox = SearchBox::from_ranges(&[(c[0], c[0] + w), (c[1], c[1] + w), (c[2], c[2] + w)]).unwrap();
            let (x, y, t) = (rng.gen_range(0.0..240.0), rng.gen_range(0.0..180.0), rng.gen_range(0.0..0.02));
            let rect = m.bound(x, y, t, &sbox).unwrap();
            for _ in 0..1000 {
                let th = sbox.sample(&mut rng);
                let p = m.warp(x, y, t, &th).unwrap();
                assert!(rect.contains(p, 1e-9));
            }
        }
    }
}
