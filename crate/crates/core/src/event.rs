//! Events, time windows and the Image of Warped Events.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::warp::WarpModel;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("event {index} has non-finite or negative timestamp {t}")]
    BadTimestamp { index: usize, t: f64 },
    #[error("event {index} at t={t} precedes the previous event (t={previous})")]
    Unsorted { index: usize, t: f64, previous: f64 },
    #[error("event {index} at t={t} lies outside the window [{start}, {end}]")]
    OutsideWindow { index: usize, t: f64, start: f64, end: f64 },
    #[error("window duration must be finite and non-negative, got {0}")]
    BadDuration(f64),
    #[error("image geometry has zero size ({width}x{height})")]
    DegenerateGeometry { width: usize, height: usize },
    #[error("downsampling factor must be at least 1, got {0}")]
    BadFactor(i64),
    #[error("window length must be positive, got {0}")]
    BadWindowLength(f64),
}

/// Brightness-change direction. Stored with every event but unused by the losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// A single sensor activation in undistorted pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    /// Seconds.
    pub t: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: f64, y: f64, t: f64, polarity: Polarity) -> Self {
        Self { x, y, t, polarity }
    }
}

/// Temporally ordered events inside `[t_ref, t_ref + duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    events: Vec<Event>,
    t_ref: f64,
    duration: f64,
}

impl EventWindow {
    pub fn new(events: Vec<Event>, t_ref: f64, duration: f64) -> Result<Self, EventError> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(EventError::BadDuration(duration));
        }
        let end = t_ref + duration;
        let mut previous = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(EventError::BadTimestamp { index, t: e.t });
            }
            if e.t < previous {
                return Err(EventError::Unsorted { index, t: e.t, previous });
            }
            if e.t < t_ref || e.t > end {
                return Err(EventError::OutsideWindow { index, t: e.t, start: t_ref, end });
            }
            previous = e.t;
        }
        Ok(Self { events, t_ref, duration })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// `(x, y, t - t_ref)` triples in temporal order, the form every warp consumes.
    pub fn local(&self) -> Vec<[f64; 3]> {
        self.events.iter().map(|e| [e.x, e.y, e.t - self.t_ref]).collect()
    }
}

/// Sensor extent plus the padding margin added on every side of the IWE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub margin: usize,
}

impl ImageGeometry {
    pub fn new(width: usize, height: usize, margin: usize) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::DegenerateGeometry { width, height });
        }
        Ok(Self { width, height, margin })
    }

    pub fn padded_width(&self) -> usize {
        self.width + 2 * self.margin
    }

    pub fn padded_height(&self) -> usize {
        self.height + 2 * self.margin
    }

    /// Total number of accumulators, `N_p`.
    pub fn n_p(&self) -> usize {
        self.padded_width() * self.padded_height()
    }

    /// Linear index of accumulator `(ix, iy)` (sensor pixel coordinates), if inside the padded grid.
    #[inline]
    pub fn index(&self, ix: i64, iy: i64) -> Option<usize> {
        let m = self.margin as i64;
        let cx = ix + m;
        let cy = iy + m;
        if cx < 0 || cy < 0 || cx >= self.padded_width() as i64 || cy >= self.padded_height() as i64 {
            None
        } else {
            Some(cy as usize * self.padded_width() + cx as usize)
        }
    }

    /// Sensor pixel coordinates of a linear index.
    pub fn coords(&self, index: usize) -> (i64, i64) {
        let pw = self.padded_width();
        let m = self.margin as i64;
        ((index % pw) as i64 - m, (index / pw) as i64 - m)
    }

    /// Inclusive accumulator range `(x_lo, x_hi, y_lo, y_hi)` covered by the padded grid.
    pub fn cell_range(&self) -> (i64, i64, i64, i64) {
        let m = self.margin as i64;
        (-m, self.width as i64 + m - 1, -m, self.height as i64 + m - 1)
    }

    /// The rectangle of continuous positions that round into the padded grid.
    pub fn full_rect(&self) -> PixelRect {
        let (x0, x1, y0, y1) = self.cell_range();
        PixelRect::new(x0 as f64, x1 as f64, y0 as f64, y1 as f64)
    }
}

/// Axis-aligned rectangle in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PixelRect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max, "inverted rect");
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn point(p: Point2<f64>) -> Self {
        Self::new(p.x, p.x, p.y, p.y)
    }

    pub fn contains(&self, p: Point2<f64>, slack: f64) -> bool {
        p.x >= self.x_min - slack
            && p.x <= self.x_max + slack
            && p.y >= self.y_min - slack
            && p.y <= self.y_max + slack
    }

    pub fn contains_rect(&self, other: &PixelRect, slack: f64) -> bool {
        other.x_min >= self.x_min - slack
            && other.x_max <= self.x_max + slack
            && other.y_min >= self.y_min - slack
            && other.y_max <= self.y_max + slack
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        PixelRect::new(
            self.x_min.min(other.x_min),
            self.x_max.max(other.x_max),
            self.y_min.min(other.y_min),
            self.y_max.max(other.y_max),
        )
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

/// Integer count grid over the padded sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorImage {
    geometry: ImageGeometry,
    counts: Vec<u32>,
}

impl AccumulatorImage {
    pub fn zeros(geometry: ImageGeometry) -> Self {
        Self { geometry, counts: vec![0; geometry.n_p()] }
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn n_p(&self) -> usize {
        self.counts.len()
    }

    /// Row-major counts over the padded grid.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, ix: i64, iy: i64) -> u32 {
        self.geometry.index(ix, iy).map_or(0, |i| self.counts[i])
    }

    /// Increments the accumulator at `(ix, iy)`; returns false if it lies outside the padded grid.
    pub fn increment(&mut self, ix: i64, iy: i64) -> bool {
        match self.geometry.index(ix, iy) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Nearest accumulator to a warped position.
///
/// Each coordinate is rounded half away from zero, so `(-0.5, 2.5)` maps to `(-1, 3)`.
/// Every consumer (IWE accumulation, lower bound, oracles) must round through here.
#[inline]
pub fn round_to_accumulator(p: Point2<f64>) -> (i64, i64) {
    (round_half_away(p.x), round_half_away(p.y))
}

/// `v.round() as i64` without the libm call that baseline x86-64 emits for `round`.
#[inline]
pub(crate) fn round_half_away(v: f64) -> i64 {
    let t = v as i64;
    // Exact for |v| < 2^52; larger values are already integral.
    let frac = v - t as f64;
    t.saturating_add((frac >= 0.5) as i64 - (frac <= -0.5) as i64)
}

/// Result of [`accumulate`]: the IWE and the number of events that did not land in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulation {
    pub image: AccumulatorImage,
    /// Events that warped outside the padded grid or that the warp rejected.
    pub dropped: usize,
}

/// Builds the IWE of `window` under `warp` at parameters `theta`.
pub fn accumulate<W: WarpModel + ?Sized>(
    window: &EventWindow,
    warp: &W,
    theta: &[f64],
    geometry: ImageGeometry,
) -> Result<Accumulation, EventError> {
    let geometry = ImageGeometry::new(geometry.width, geometry.height, geometry.margin)?;
    let mut image = AccumulatorImage::zeros(geometry);
    let mut dropped = 0;
    for e in window.events() {
        let landed = warp
            .warp(e.x, e.y, e.t - window.t_ref(), theta)
            .map(round_to_accumulator)
            .is_some_and(|(ix, iy)| image.increment(ix, iy));
        if !landed {
            dropped += 1;
        }
    }
    Ok(Accumulation { image, dropped })
}

/// Partitions a sorted stream into consecutive half-open windows `[t0 + i*len, t0 + (i+1)*len)`.
///
/// `t0` is the first event's timestamp. Empty windows inside the stream span are kept so
/// window indices map directly to reference times.
pub fn slice_windows(stream: &[Event], window_len: f64) -> Result<Vec<EventWindow>, EventError> {
    if !(window_len > 0.0 && window_len.is_finite()) {
        return Err(EventError::BadWindowLength(window_len));
    }
    let Some(first) = stream.first() else {
        return Ok(Vec::new());
    };
    let start = first.t;
    let mut buckets: Vec<Vec<Event>> = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (index, e) in stream.iter().enumerate() {
        if e.t < previous {
            return Err(EventError::Unsorted { index, t: e.t, previous });
        }
        previous = e.t;
        let mut i = ((e.t - start) / window_len).floor() as usize;
        // Guard against floating-point drift at window edges.
        while start + (i as f64) * window_len > e.t && i > 0 {
            i -= 1;
        }
        while start + ((i + 1) as f64) * window_len <= e.t {
            i += 1;
        }
        if buckets.len() <= i {
            buckets.resize_with(i + 1, Vec::new);
        }
        buckets[i].push(*e);
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(i, events)| EventWindow::new(events, start + i as f64 * window_len, window_len))
        .collect()
}

/// Keeps every `m`-th event (indices 0, m, 2m, ...).
pub fn downsample(window: &EventWindow, m: i64) -> Result<EventWindow, EventError> {
    if m < 1 {
        return Err(EventError::BadFactor(m));
    }
    let events = window.events().iter().step_by(m as usize).copied().collect();
    EventWindow::new(events, window.t_ref(), window.duration())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::FlowModel;

    fn ev(x: f64, y: f64, t: f64) -> Event {
        Event::new(x, y, t, Polarity::Positive)
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_accumulator(Point2::new(10.4, 7.6)), (10, 8));
        assert_eq!(round_to_accumulator(Point2::new(3.0, 3.0)), (3, 3));
        // Scalar oracle for the tie rule: half away from zero.
        let oracle = |v: f64| if v >= 0.0 { (v + 0.5).floor() } else { -((-v + 0.5).floor()) };
        let p = Point2::new(-0.5, 2.5);
        let (ix, iy) = round_to_accumulator(p);
        assert_eq!((ix, iy), (oracle(p.x) as i64, oracle(p.y) as i64));
        assert_eq!((ix, iy), (-1, 3));
    }

    #[test]
    fn fast_rounding_matches_std() {
        let edge = [0.49999999999999994, -0.49999999999999994, 0.5, -0.5, 1.5, -2.5, 4503599627370495.5, 1e300, -1e300];
        for v in edge.into_iter().chain([f64::INFINITY, f64::NEG_INFINITY, f64::NAN]) {
            assert_eq!(round_half_away(v), v.round() as i64, "{v}");
        }
    }

    proptest::proptest! {
        #[test]
        fn fast_rounding_matches_std_random(v in -1e7f64..1e7, k in -2000i64..2000) {
            proptest::prop_assert_eq!(round_half_away(v), v.round() as i64);
            let tie = k as f64 + 0.5;
            proptest::prop_assert_eq!(round_half_away(tie), tie.round() as i64);
        }
    }

    #[test]
    fn window_rejects_unsorted_and_out_of_range() {
        assert!(matches!(
            EventWindow::new(vec![ev(0.0, 0.0, 0.2), ev(0.0, 0.0, 0.1)], 0.0, 1.0),
            Err(EventError::Unsorted { index: 1, .. })
        ));
        assert!(matches!(
            EventWindow::new(vec![ev(0.0, 0.0, 0.2)], 0.0, 0.1),
            Err(EventError::OutsideWindow { .. })
        ));
    }

    #[test]
    fn accumulate_empty_and_identity() {
        let g = ImageGeometry::new(10, 10, 2).unwrap();
        let empty = EventWindow::new(vec![], 0.0, 0.1).unwrap();
        let acc = accumulate(&empty, &FlowModel, &[0.0, 0.0], g).unwrap();
        assert_eq!(acc.dropped, 0);
        assert_eq!(acc.image.total(), 0);

        let one = EventWindow::new(vec![ev(5.0, 5.0, 0.05)], 0.0, 0.1).unwrap();
        let acc = accumulate(&one, &FlowModel, &[0.0, 0.0], g).unwrap();
        assert_eq!(acc.image.get(5, 5), 1);
        assert_eq!(acc.image.total(), 1);
    }

    #[test]
    fn accumulate_rejects_zero_geometry() {
        let g = ImageGeometry { width: 0, height: 4, margin: 0 };
        let w = EventWindow::new(vec![], 0.0, 0.1).unwrap();
        assert!(accumulate(&w, &FlowModel, &[0.0, 0.0], g).is_err());
    }

    #[test]
    fn accumulate_matches_brute_force_loop() {
        let g = ImageGeometry::new(20, 20, 3).unwrap();
        let events: Vec<Event> =
            (0..20).map(|k| ev(2.0 + 0.37 * k as f64, 9.0 + 0.11 * k as f64, 0.005 * k as f64)).collect();
        let w = EventWindow::new(events.clone(), 0.0, 0.1).unwrap();
        let acc = accumulate(&w, &FlowModel, &[10.0, 0.0], g).unwrap();
        let mut oracle = vec![vec![0u32; 26]; 26];
        for e in &events {
            let x = (e.x + 10.0 * e.t).round() as i64 + 3;
            let y = e.y.round() as i64 + 3;
            oracle[y as usize][x as usize] += 1;
        }
        for iy in -3..23 {
            for ix in -3..23 {
                assert_eq!(acc.image.get(ix, iy), oracle[(iy + 3) as usize][(ix + 3) as usize]);
            }
        }
        assert_eq!(acc.dropped, 0);
    }

    #[test]
    fn accumulate_counts_drops() {
        let g = ImageGeometry::new(4, 4, 0).unwrap();
        let w = EventWindow::new(vec![ev(1.0, 1.0, 0.0), ev(50.0, 1.0, 0.0)], 0.0, 0.1).unwrap();
        let acc = accumulate(&w, &FlowModel, &[0.0, 0.0], g).unwrap();
        assert_eq!(acc.dropped, 1);
        assert_eq!(acc.image.total() + acc.dropped as u64, 2);
    }

    #[test]
    fn slicing_partitions_the_stream() {
        let s = vec![ev(0.0, 0.0, 0.001), ev(0.0, 0.0, 0.009), ev(0.0, 0.0, 0.011)];
        let w = slice_windows(&s, 0.01).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].len(), 2);
        assert_eq!(w[1].len(), 1);

        let w = slice_windows(&s, 1.0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 3);

        assert!(slice_windows(&[], 0.01).unwrap().is_empty());
    }

    #[test]
    fn slicing_uniform_stream() {
        // 1 kHz for 0.1 s, timestamps on a half-millisecond offset to stay clear of edges.
        let s: Vec<Event> = (0..100).map(|k| ev(0.0, 0.0, 0.0005 + k as f64 * 0.001)).collect();
        let w = slice_windows(&s, 0.01).unwrap();
        assert_eq!(w.len(), 10);
        for (i, win) in w.iter().enumerate() {
            assert_eq!(win.len(), 10, "window {i}");
            assert!((win.t_ref() - (0.0005 + 0.01 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_keeps_every_mth() {
        let s: Vec<Event> = (0..10).map(|k| ev(k as f64, 0.0, k as f64 * 0.001)).collect();
        let w = EventWindow::new(s, 0.0, 0.01).unwrap();
        let d = downsample(&w, 2).unwrap();
        assert_eq!(d.events().iter().map(|e| e.x as i64).collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
        assert_eq!(downsample(&w, 1).unwrap(), w);
        let w7 = EventWindow::new(w.events()[..7].to_vec(), 0.0, 0.01).unwrap();
        let d = downsample(&w7, 3).unwrap();
        assert_eq!(d.events().iter().map(|e| e.x as i64).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(downsample(&w, 0), Err(EventError::BadFactor(0)));
    }
}
