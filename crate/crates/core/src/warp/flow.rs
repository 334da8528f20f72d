use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{SearchBox, WarpModel};
use crate::event::PixelRect;

/// Constant image-plane velocity in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub vx: f64,
    pub vy: f64,
}

impl FlowParams {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.vx, self.vy]
    }
}

/// `x' = x + v t`.
#[inline]
pub fn warp_flow(p: Point2<f64>, t: f64, v: FlowParams) -> Point2<f64> {
    Point2::new(p.x + v.vx * t, p.y + v.vy * t)
}

/// Exact rectangle swept by `x + v t` for `v` in the box, `t >= 0`.
pub fn bbox_flow(p: Point2<f64>, t: f64, sbox: &SearchBox) -> PixelRect {
    let (lo, hi) = (sbox.lo(), sbox.hi());
    PixelRect::new(p.x + lo[0] * t, p.x + hi[0] * t, p.y + lo[1] * t, p.y + hi[1] * t)
}

/// Two-parameter optical flow `(vx, vy)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowModel;

impl WarpModel for FlowModel {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &'static str {
        "flow"
    }

    #[inline]
    fn warp(&self, x: f64, y: f64, dt: f64, theta: &[f64]) -> Option<Point2<f64>> {
        Some(warp_flow(Point2::new(x, y), dt, FlowParams { vx: theta[0], vy: theta[1] }))
    }

    #[inline]
    fn affine_last(&self, x: f64, y: f64, dt: f64, head: &[f64]) -> Option<[f64; 4]> {
        Some([x + head[0] * dt, y, 0.0, dt])
    }

    #[inline]
    fn bound(&self, x: f64, y: f64, dt: f64, sbox: &SearchBox) -> Option<PixelRect> {
        Some(bbox_flow(Point2::new(x, y), dt, sbox))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn warp_examples() {
        let w = warp_flow(Point2::new(10.0, 10.0), 0.1, FlowParams { vx: 5.0, vy: -2.0 });
        assert_relative_eq!(w.x, 10.5, epsilon = 1e-12);
        assert_relative_eq!(w.y, 9.8, epsilon = 1e-12);
        let p = Point2::new(3.3, 4.4);
        assert_eq!(warp_flow(p, 0.0, FlowParams { vx: 100.0, vy: 7.0 }), p);
        let w = warp_flow(Point2::new(0.0, 0.0), 0.04, FlowParams { vx: 25.0, vy: 25.0 });
        assert_relative_eq!(w.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bbox_examples() {
        let b = SearchBox::from_ranges(&[(1.0, 2.0), (-1.0, 0.0)]).unwrap();
        assert_eq!(bbox_flow(Point2::new(0.0, 0.0), 1.0, &b), PixelRect::new(1.0, 2.0, -1.0, 0.0));

        let v = FlowParams { vx: 3.0, vy: -4.0 };
        let p = Point2::new(7.0, 8.0);
        let r = bbox_flow(p, 0.3, &SearchBox::point(&v.to_vec()));
        assert_eq!(r, PixelRect::point(warp_flow(p, 0.3, v)));
    }

    #[test]
    fn affine_split_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let (x, y, t) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(0.0..0.1));
            let th = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            let [bx, by, dx, dy] = FlowModel.affine_last(x, y, t, &th[..1]).unwrap();
            let w = FlowModel.warp(x, y, t, &th).unwrap();
            assert_eq!((bx + th[1] * dx, by + th[1] * dy), (w.x, w.y));
        }
    }

    #[test]
    fn bbox_contains_sampled_warps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let t = rng.gen_range(0.0..0.1);
            let (a, b): (f64, f64) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let (c, d): (f64, f64) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let sbox = SearchBox::from_ranges(&[(a.min(b), a.max(b)), (c.min(d), c.max(d))]).unwrap();
            let rect = bbox_flow(p, t, &sbox);
            for _ in 0..500 {
                let th = sbox.sample(&mut rng);
                let w = warp_flow(p, t, FlowParams { vx: th[0], vy: th[1] });
                assert!(rect.contains(w, 1e-9));
            }
        }
    }
}
