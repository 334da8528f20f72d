//! Camera calibration files and radial-tangential undistortion.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IoError};
use crate::event::Event;
use crate::warp::{Intrinsics, RigConfig};

const MAX_ITERATIONS: usize = 8;
const STEP_TOL_PX: f64 = 1e-10;
/// Residual above which an inverted pixel counts as non-convergent.
const RESIDUAL_TOL_PX: f64 = 1e-6;

/// Pinhole intrinsics with radial-tangential distortion, plus an optional ground-plane rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
    pub width: usize,
    pub height: usize,
    /// Camera offset along the vehicle axis and height above ground (m).
    pub rig: Option<(f64, f64)>,
}

impl Calibration {
    pub fn pinhole(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self { fx: f, fy: f, cx, cy, k1: 0.0, k2: 0.0, p1: 0.0, p2: 0.0, k3: 0.0, width, height, rig: None }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Calibration(m));
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("sensor size must be positive, got {}x{}", self.width, self.height));
        }
        let all = [self.cx, self.cy, self.k1, self.k2, self.p1, self.p2, self.k3];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite principal point or distortion coefficient".into());
        }
        if let Some((l, d)) = self.rig {
            if !(l.is_finite() && d.is_finite() && d != 0.0) {
                return bad(format!("rig needs finite l and non-zero d, got l={l} d={d}"));
            }
        }
        Ok(())
    }

    /// Intrinsics of the undistorted pinhole (focal length `fx`).
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics { f: self.fx, cx: self.cx, cy: self.cy }
    }

    pub fn rig_config(&self) -> Option<RigConfig> {
        self.rig.map(|(l, d)| RigConfig { f: self.fx, u0: self.cx, v0: self.cy, l, d })
    }

    /// `key = value` text accepted by [`parse_calibration`].
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "fx = {:?}\nfy = {:?}\ncx = {:?}\ncy = {:?}\nk1 = {:?}\nk2 = {:?}\np1 = {:?}\np2 = {:?}\nk3 = {:?}\nwidth = {}\nheight = {}\n",
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2, self.k3, self.width, self.height
        );
        if let Some((l, d)) = self.rig {
            out.push_str(&format!("l = {l:?}\nd = {d:?}\n"));
        }
        out
    }

    pub fn has_distortion(&self) -> bool {
        [self.k1, self.k2, self.p1, self.p2, self.k3].iter().any(|&v| v != 0.0)
    }

    fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        (
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Forward model: ideal pinhole pixel (focal `fx`, `fy`) to distorted sensor pixel.
    pub fn distort(&self, u: f64, v: f64) -> (f64, f64) {
        let (x, y) = ((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        let (xd, yd) = self.distort_normalized(x, y);
        (self.cx + self.fx * xd, self.cy + self.fy * yd)
    }

    /// Normalized undistorted coordinates of a sensor pixel by Newton iteration.
    /// `None` if the iteration does not reproduce the pixel.
    pub fn undistort_normalized(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let (xd, yd) = ((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        let (mut x, mut y) = (xd, yd);
        for _ in 0..MAX_ITERATIONS {
            let (fx, fy) = self.distort_normalized(x, y);
            let (rx, ry) = (fx - xd, fy - yd);
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let d_radial = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
            let j11 = radial + 2.0 * x * x * d_radial + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
            let j12 = 2.0 * x * y * d_radial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let j22 = radial + 2.0 * y * y * d_radial + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
            let det = j11 * j22 - j12 * j12;
            if det.abs() < 1e-300 || !det.is_finite() {
                return None;
            }
            let dx = (j22 * rx - j12 * ry) / det;
            let dy = (j11 * ry - j12 * rx) / det;
            x -= dx;
            y -= dy;
            if dx.abs() * self.fx < STEP_TOL_PX && dy.abs() * self.fy < STEP_TOL_PX {
                break;
            }
        }
        let (fx, fy) = self.distort_normalized(x, y);
        let residual = ((fx - xd) * self.fx).hypot((fy - yd) * self.fy);
        (residual <= RESIDUAL_TOL_PX && x.is_finite() && y.is_finite()).then_some((x, y))
    }

    /// Undistorted pixel on the pinhole with focal `fx` and the original principal point.
    pub fn undistort_pixel(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        self.undistort_normalized(u, v).map(|(x, y)| (self.cx + self.fx * x, self.cy + self.fx * y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Undistorted {
    pub events: Vec<Event>,
    /// Events whose inversion did not converge.
    pub dropped: usize,
}

pub fn undistort(events: &[Event], calib: &Calibration) -> Undistorted {
    let mut out = Vec::with_capacity(events.len());
    let mut dropped = 0;
    for e in events {
        match calib.undistort_pixel(e.x, e.y) {
            Some((x, y)) => out.push(Event { x, y, ..*e }),
            None => dropped += 1,
        }
    }
    Undistorted { events: out, dropped }
}

pub fn read_calibration(path: &Path) -> Result<Calibration, IoError> {
    parse_calibration(BufReader::new(open(path)?))
}

/// Parses `key = value` lines. Distortion coefficients default to zero; `l` and `d`
/// must appear together.
pub fn parse_calibration<R: BufRead>(reader: R) -> Result<Calibration, IoError> {
    const KEYS: [&str; 13] = ["fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2", "k3", "width", "height", "l", "d"];
    let mut values: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(IoError::Parse { line: n, message: format!("expected key=value, got {body:?}") });
        };
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(IoError::Parse { line: n, message: format!("unknown key {key:?}") });
        };
        if values.insert(known, (n, value.trim().to_string())).is_some() {
            return Err(IoError::Parse { line: n, message: format!("duplicate key {key:?}") });
        }
    }
    let real = |key: &str, default: Option<f64>| -> Result<f64, IoError> {
        match values.get(key) {
            Some((n, v)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| IoError::Parse { line: *n, message: format!("bad value for {key}: {v:?}") }),
            None => default.ok_or_else(|| IoError::Calibration(format!("missing key {key}"))),
        }
    };
    let count = |key: &str| -> Result<usize, IoError> {
        match values.get(key) {
            Some((n, v)) => v
                .parse::<usize>()
                .map_err(|_| IoError::Parse { line: *n, message: format!("bad value for {key}: {v:?}") }),
            None => Err(IoError::Calibration(format!("missing key {key}"))),
        }
    };
    let rig = match (values.contains_key("l"), values.contains_key("d")) {
        (true, true) => Some((real("l", None)?, real("d", None)?)),
        (false, false) => None,
        _ => return Err(IoError::Calibration("rig needs both l and d".into())),
    };
    let calib = Calibration {
        fx: real("fx", None)?,
        fy: real("fy", None)?,
        cx: real("cx", None)?,
        cy: real("cy", None)?,
        k1: real("k1", Some(0.0))?,
        k2: real("k2", Some(0.0))?,
        p1: real("p1", Some(0.0))?,
        p2: real("p2", Some(0.0))?,
        k3: real("k3", Some(0.0))?,
        width: count("width")?,
        height: count("height")?,
        rig,
    };
    calib.validate()?;
    Ok(calib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;
    use proptest::prelude::*;

    const DAVIS: &str = "# DAVIS240\nfx = 199.09\nfy = 198.72\ncx = 132.19\ncy = 110.83\n\
        k1 = -0.368\nk2 = 0.150\np1 = -0.00029\np2 = -0.00030\nk3 = 0.0\nwidth = 240\nheight = 180\n";

    #[test]
    fn parses_key_values() {
        let c = parse_calibration(DAVIS.as_bytes()).unwrap();
        assert_eq!(c.fx, 199.09);
        assert_eq!(c.k2, 0.150);
        assert_eq!((c.width, c.height), (240, 180));
        assert_eq!(c.rig, None);
        let with_rig = format!("{DAVIS}l = -0.45\nd = 0.23\n");
        let c = parse_calibration(with_rig.as_bytes()).unwrap();
        assert_eq!(c.rig, Some((-0.45, 0.23)));
        let r = c.rig_config().unwrap();
        assert_eq!((r.f, r.u0, r.v0), (199.09, 132.19, 110.83));
    }

    #[test]
    fn text_round_trip() {
        let mut c = parse_calibration(DAVIS.as_bytes()).unwrap();
        c.rig = Some((-0.45, 0.23));
        assert_eq!(parse_calibration(c.to_text().as_bytes()).unwrap(), c);
    }

    #[test]
    fn distortion_defaults_to_zero() {
        let c = parse_calibration("fx=200\nfy=200\ncx=1\ncy=2\nwidth=10\nheight=10\n".as_bytes()).unwrap();
        assert!(!c.has_distortion());
    }

    #[test]
    fn rejects_bad_files() {
        let cases = [
            ("fx=200\n", "missing"),
            ("fx=200\nfx=100\n", "duplicate"),
            ("fz=1\n", "unknown"),
            ("fx 200\n", "key=value"),
            ("fx=-1\nfy=1\ncx=0\ncy=0\nwidth=1\nheight=1\n", "positive"),
            ("fx=1\nfy=1\ncx=0\ncy=0\nwidth=0\nheight=1\n", "size"),
            ("fx=1\nfy=1\ncx=0\ncy=0\nwidth=1\nheight=1\nl=0.1\n", "both"),
            ("fx=abc\n", "bad value"),
        ];
        for (text, needle) in cases {
            let err = parse_calibration(text.as_bytes()).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn zero_distortion_is_identity() {
        let c = Calibration::pinhole(200.0, 120.0, 90.0, 240, 180);
        for &(u, v) in &[(0.0, 0.0), (13.0, 170.0), (239.0, 5.0)] {
            let (x, y) = c.undistort_pixel(u, v).unwrap();
            assert!((x - u).abs() < 1e-12 && (y - v).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_point_is_fixed() {
        let c = parse_calibration(DAVIS.as_bytes()).unwrap();
        assert_eq!(c.undistort_pixel(c.cx, c.cy), Some((c.cx, c.cy)));
    }

    #[test]
    fn reprojects_with_fx() {
        let mut c = Calibration::pinhole(200.0, 100.0, 100.0, 200, 200);
        c.fy = 100.0;
        let (x, y) = c.undistort_pixel(110.0, 110.0).unwrap();
        assert!((x - 110.0).abs() < 1e-12);
        assert!((y - 120.0).abs() < 1e-12);
    }

    #[test]
    fn undistort_drops_nonconvergent_events() {
        let mut c = Calibration::pinhole(100.0, 50.0, 50.0, 100, 100);
        c.k1 = -2.0;
        // Beyond the fold of the radial model no undistorted point maps to the pixel.
        let events = [Event::new(50.0, 50.0, 0.0, Polarity::Positive), Event::new(150.0, 150.0, 0.1, Polarity::Positive)];
        let out = undistort(&events, &c);
        assert_eq!(out.dropped, 1);
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].t, 0.0);
    }

    #[test]
    fn every_sensor_pixel_inverts_under_strong_barrel() {
        let c = parse_calibration(DAVIS.as_bytes()).unwrap();
        for v in 0..c.height {
            for u in 0..c.width {
                let (u, v) = (u as f64, v as f64);
                let (x, y) = c.undistort_normalized(u, v).unwrap_or_else(|| panic!("({u}, {v})"));
                let (du, dv) = c.distort(c.cx + c.fx * x, c.cy + c.fy * y);
                assert!((du - u).abs() < 1e-6 && (dv - v).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn distort_inverts_undistort(
            k1 in -0.15f64..0.15, k2 in -0.05f64..0.05, k3 in -0.01f64..0.01,
            p1 in -0.002f64..0.002, p2 in -0.002f64..0.002,
            u in 0.0f64..240.0, v in 0.0f64..180.0,
        ) {
            let c = Calibration { fx: 200.0, fy: 198.0, cx: 120.0, cy: 90.0, k1, k2, p1, p2, k3, width: 240, height: 180, rig: None };
            let (x, y) = c.undistort_normalized(u, v).expect("converges inside the sensor");
            let (du, dv) = c.distort(c.cx + c.fx * x, c.cy + c.fy * y);
            prop_assert!((du - u).abs() < 1e-6 && (dv - v).abs() < 1e-6, "{du} {dv}");
        }
    }
}
