//! Minimal outward-rounded interval arithmetic for bounding warps.
//!
//! Only the operations the Ackermann bound needs are provided. Trigonometric
//! enclosures assume arguments inside `(-pi/2, pi/2)`, where `sin` is monotone
//! and `cos` has its single maximum at zero.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(v: f64) -> f64 {
    v.next_down()
}

#[inline]
fn up(v: f64) -> f64 {
    v.next_up()
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn widen(lo: f64, hi: f64) -> Self {
        Self { lo: down(lo), hi: up(hi) }
    }

    pub fn scale(self, k: f64) -> Self {
        if k >= 0.0 {
            Self::widen(self.lo * k, self.hi * k)
        } else {
            Self::widen(self.hi * k, self.lo * k)
        }
    }

    pub fn sin(self) -> Self {
        debug_assert!(self.lo > -std::f64::consts::FRAC_PI_2 && self.hi < std::f64::consts::FRAC_PI_2);
        Self::widen(self.lo.sin(), self.hi.sin())
    }

    pub fn cos(self) -> Self {
        debug_assert!(self.lo > -std::f64::consts::FRAC_PI_2 && self.hi < std::f64::consts::FRAC_PI_2);
        let (a, b) = (self.lo.cos(), self.hi.cos());
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Self::widen(a.min(b), 1.0)
        } else {
            Self::widen(a.min(b), a.max(b))
        }
    }

    /// `sin(z) / z` with the removable singularity filled in; even and decreasing in `|z|` on `[0, pi]`.
    pub fn sinc(self) -> Self {
        let f = |z: f64| if z.abs() < 1e-8 { 1.0 - z * z / 6.0 } else { z.sin() / z };
        let (a, b) = (f(self.lo), f(self.hi));
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Self::widen(a.min(b), 1.0)
        } else {
            Self::widen(a.min(b), a.max(b))
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::widen(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::widen(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let c = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::widen(lo, hi)
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, rhs: f64) -> Interval {
        self + Interval::point(rhs)
    }
}
