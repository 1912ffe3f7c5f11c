//! Event data model: deterministic event generation from frame sequences and
//! log-intensity reconstruction by integrating polarities.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{LUMA_B, LUMA_G, LUMA_R};

/// Default offset added before taking the logarithm of an intensity.
pub const DEFAULT_LOG_EPS: f64 = 1e-3;

/// Slack on threshold comparisons so that an analytic rise of exactly `n·C`
/// still yields `n` events after `ln` rounding.
const CROSSING_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    pub fn from_sign(p: i8) -> Option<Self> {
        match p {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A single brightness change: pixel column `x`, row `y`, timestamp `t` in
/// microseconds and its polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }

    /// Canonical stream order: time, then row-major pixel, then positive first.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.t
            .cmp(&other.t)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
            .then(other.p.sign().cmp(&self.p.sign()))
    }
}

/// Time-sorted events from a `width`×`height` sensor covering
/// `[t_begin, t_end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    t_begin: u64,
    t_end: u64,
}

impl EventStream {
    /// Validates sortedness, coordinate bounds and the time span.
    pub fn new(events: Vec<Event>, width: u16, height: u16, t_begin: u64, t_end: u64) -> Result<Self> {
        if t_begin > t_end {
            return Err(Error::invalid(format!("t_begin {t_begin} > t_end {t_end}")));
        }
        let mut prev = t_begin;
        for (i, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::invalid(format!(
                    "event {i} at ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
            if e.t < prev || e.t > t_end {
                return Err(Error::invalid(format!(
                    "event {i} at t={} breaks ordering or span [{t_begin}, {t_end}]",
                    e.t
                )));
            }
            prev = e.t;
        }
        Ok(Self { events, width, height, t_begin, t_end })
    }

    pub fn empty(width: u16, height: u16, t_begin: u64, t_end: u64) -> Result<Self> {
        Self::new(Vec::new(), width, height, t_begin, t_end)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn t_begin(&self) -> u64 {
        self.t_begin
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    /// Events with `lo < t <= hi`, located by binary search.
    pub fn window_half_open(&self, lo: u64, hi: u64) -> &[Event] {
        let start = self.events.partition_point(|e| e.t <= lo);
        let end = self.events.partition_point(|e| e.t <= hi);
        &self.events[start..end.max(start)]
    }

    /// Events with `lo <= t <= hi`.
    pub fn window_closed(&self, lo: u64, hi: u64) -> &[Event] {
        let start = self.events.partition_point(|e| e.t < lo);
        let end = self.events.partition_point(|e| e.t <= hi);
        &self.events[start..end.max(start)]
    }

    /// Sum of polarities of all events.
    pub fn polarity_sum(&self) -> i64 {
        self.events.iter().map(|e| e.p.sign() as i64).sum()
    }
}

/// An intensity image with values in `[0, 1]`, stored row-major and
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    timestamp: u64,
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl IntensityFrame {
    pub fn new(timestamp: u64, width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("frames have 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be non-zero"));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel value {v}")));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { timestamp, width, height, channels, pixels })
    }

    pub fn filled(timestamp: u64, width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(timestamp, width, height, channels, vec![value; width * height * channels])
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Luma at `(x, y)`; BT.601 weights for RGB frames.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            self.pixels[i]
        } else {
            LUMA_R * self.pixels[i] + LUMA_G * self.pixels[i + 1] + LUMA_B * self.pixels[i + 2]
        }
    }
}

/// Per-pixel log intensity, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl LogField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("log field length does not match dimensions"));
        }
        Ok(Self { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Inverts [`log_view`]: `exp(L) - eps`, clamped to `[0, 1]`.
    pub fn to_intensity(&self, timestamp: u64, eps: f64) -> IntensityFrame {
        let pixels = self.data.iter().map(|l| (l.exp() - eps).clamp(0.0, 1.0)).collect();
        IntensityFrame { timestamp, width: self.width, height: self.height, channels: 1, pixels }
    }
}

/// `ln(luma + eps)` per pixel.
pub fn log_view(frame: &IntensityFrame, eps: f64) -> Result<LogField> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("log offset must be positive, got {eps}")));
    }
    let mut data = Vec::with_capacity(frame.width * frame.height);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let v = frame.luma(x, y);
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite pixel at ({x}, {y})")));
            }
            data.push((v + eps).ln());
        }
    }
    Ok(LogField { width: frame.width, height: frame.height, data })
}

/// Simulates events from a frame sequence by linear interpolation of the
/// per-pixel log intensity between consecutive frames.
pub fn simulate_events(frames: &[IntensityFrame], threshold: f64, eps: f64) -> Result<EventStream> {
    let fields = frames.iter().map(|f| log_view(f, eps)).collect::<Result<Vec<_>>>()?;
    let stamps: Vec<u64> = frames.iter().map(|f| f.timestamp).collect();
    simulate_events_from_log(&fields, &stamps, threshold)
}

/// Core of [`simulate_events`], operating directly on log fields.
///
/// Each pixel starts with the first sample as reference. Whenever the
/// interpolated signal reaches `reference ± C` an event is emitted and the
/// reference moves by exactly `±C`. Crossing times are rounded up to the
/// microsecond so every event produced between samples `k` and `k+1` lies in
/// `(t_k, t_{k+1}]`.
pub fn simulate_events_from_log(fields: &[LogField], timestamps: &[u64], threshold: f64) -> Result<EventStream> {
    if fields.len() < 2 {
        return Err(Error::invalid("event simulation needs at least two frames"));
    }
    if fields.len() != timestamps.len() {
        return Err(Error::invalid("one timestamp per frame is required"));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!("contrast threshold must be positive, got {threshold}")));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("frame timestamps must be strictly increasing"));
    }
    let (width, height) = (fields[0].width, fields[0].height);
    if fields.iter().any(|f| f.width != width || f.height != height) {
        return Err(Error::invalid("all frames must share the same dimensions"));
    }
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::invalid("frame dimensions exceed the u16 event coordinate range"));
    }
    if let Some(v) = fields.iter().flat_map(|f| f.data.iter()).find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite log value {v}")));
    }

    let mut events: Vec<Event> = (0..width * height)
        .into_par_iter()
        .flat_map_iter(|idx| {
            let samples: Vec<f64> = fields.iter().map(|f| f.data[idx]).collect();
            let (x, y) = ((idx % width) as u16, (idx / width) as u16);
            pixel_crossings(&samples, timestamps, threshold)
                .into_iter()
                .map(move |(t, p)| Event::new(x, y, t, p))
        })
        .collect();
    events.sort_by(Event::canonical_cmp);

    EventStream::new(
        events,
        width as u16,
        height as u16,
        timestamps[0],
        *timestamps.last().unwrap(),
    )
}

fn pixel_crossings(samples: &[f64], timestamps: &[u64], threshold: f64) -> Vec<(u64, Polarity)> {
    let mut out = Vec::new();
    let mut reference = samples[0];
    for k in 0..samples.len() - 1 {
        let (a, b) = (samples[k], samples[k + 1]);
        let slope = b - a;
        if slope == 0.0 {
            continue;
        }
        let (t_a, dt) = (timestamps[k], timestamps[k + 1] - timestamps[k]);
        let (step, polarity) = if slope > 0.0 {
            (threshold, Polarity::Positive)
        } else {
            (-threshold, Polarity::Negative)
        };
        loop {
            let level = reference + step;
            // Distance still to travel past `level` in the direction of motion.
            let remaining = (b - level) * step.signum();
            if remaining < -CROSSING_SLACK {
                break;
            }
            let frac = ((level - a) / slope).clamp(0.0, 1.0);
            let offset = ((frac * dt as f64 - 1e-9).ceil().max(1.0) as u64).min(dt);
            out.push((t_a + offset, polarity));
            reference = level;
        }
    }
    out
}

/// Sum of polarities at `(x, y)` over events with `t0 < t <= t1`.
pub fn polarity_integral(stream: &EventStream, x: u16, y: u16, t0: u64, t1: u64) -> Result<i64> {
    if x >= stream.width || y >= stream.height {
        return Err(Error::invalid(format!(
            "pixel ({x}, {y}) outside {}x{} sensor",
            stream.width, stream.height
        )));
    }
    if t0 > t1 {
        return Err(Error::invalid(format!("interval start {t0} after end {t1}")));
    }
    Ok(stream
        .window_half_open(t0, t1)
        .iter()
        .filter(|e| e.x == x && e.y == y)
        .map(|e| e.p.sign() as i64)
        .sum())
}

/// Per-pixel polarity sums over `(t0, t1]`, row-major.
pub fn polarity_integral_map(stream: &EventStream, t0: u64, t1: u64) -> Vec<i64> {
    let w = stream.width as usize;
    let mut acc = vec![0i64; w * stream.height as usize];
    for e in stream.window_half_open(t0, t1) {
        acc[e.y as usize * w + e.x as usize] += e.p.sign() as i64;
    }
    acc
}

/// Log intensity at time `t` from a frame at `t' <= t` and the events in
/// `(t', t]`: `ln(I + eps) + C · Σp`.
pub fn reconstruct_log_intensity(
    frame: &IntensityFrame,
    stream: &EventStream,
    t: u64,
    threshold: f64,
    eps: f64,
) -> Result<LogField> {
    let t_ref = frame.timestamp;
    if t < t_ref {
        return Err(Error::invalid(format!(
            "target time {t} precedes frame time {t_ref}; backward integration is unsupported"
        )));
    }
    if frame.width != stream.width as usize || frame.height != stream.height as usize {
        return Err(Error::invalid("frame and event stream dimensions differ"));
    }
    if t > t_ref && (stream.t_begin > t_ref || stream.t_end < t) {
        return Err(Error::invalid(format!(
            "event stream [{}, {}] does not cover ({t_ref}, {t}]",
            stream.t_begin, stream.t_end
        )));
    }
    let mut field = log_view(frame, eps)?;
    let counts = polarity_integral_map(stream, t_ref, t);
    for (l, n) in field.data.iter_mut().zip(counts) {
        *l += threshold * n as f64;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(t: u64, w: usize, h: usize, px: Vec<f64>) -> IntensityFrame {
        IntensityFrame::new(t, w, h, 1, px).unwrap()
    }

    #[test]
    fn log_view_values() {
        let f = IntensityFrame::filled(0, 3, 2, 1, 0.25).unwrap();
        let l = log_view(&f, 1e-3).unwrap();
        assert!(l.data.iter().all(|&v| v == (0.251f64).ln()));

        let zero = IntensityFrame::filled(0, 1, 1, 1, 0.0).unwrap();
        assert_eq!(log_view(&zero, 1e-3).unwrap().data[0], (1e-3f64).ln());

        let half = IntensityFrame::filled(0, 1, 1, 1, 0.5).unwrap();
        assert!((log_view(&half, 1e-3).unwrap().data[0] - (-0.691149)).abs() < 1e-6);
    }

    #[test]
    fn log_view_rejects_bad_eps() {
        let f = IntensityFrame::filled(0, 1, 1, 1, 0.5).unwrap();
        assert!(log_view(&f, 0.0).is_err());
        assert!(log_view(&f, -1.0).is_err());
    }

    #[test]
    fn frame_rejects_non_finite() {
        assert!(IntensityFrame::new(0, 1, 1, 1, vec![f64::NAN]).is_err());
        assert!(IntensityFrame::new(0, 1, 1, 1, vec![1.5]).is_err());
        assert!(IntensityFrame::new(0, 1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_video_has_no_events() {
        let frames: Vec<_> = (0..5).map(|k| IntensityFrame::filled(k * 100, 4, 3, 3, 0.4).unwrap()).collect();
        let s = simulate_events(&frames, 0.1, 1e-3).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.t_begin(), s.t_end()), (0, 400));
    }

    #[test]
    fn simulation_preconditions() {
        let a = IntensityFrame::filled(10, 2, 2, 1, 0.4).unwrap();
        let b = IntensityFrame::filled(10, 2, 2, 1, 0.5).unwrap();
        assert!(simulate_events(std::slice::from_ref(&a), 0.1, 1e-3).is_err());
        assert!(simulate_events(&[a.clone(), b.clone()], 0.1, 1e-3).is_err());
        let b = b.with_timestamp(20);
        assert!(simulate_events(&[a.clone(), b.clone()], 0.0, 1e-3).is_err());
        assert!(simulate_events(&[a.clone(), b.clone()], -0.2, 1e-3).is_err());
        let c = IntensityFrame::filled(30, 3, 2, 1, 0.5).unwrap();
        assert!(simulate_events(&[a, b, c], 0.1, 1e-3).is_err());
    }

    #[test]
    fn exact_double_threshold_rise() {
        let c = 0.25;
        let l0 = LogField::new(2, 1, vec![-1.0, -1.0]).unwrap();
        let l1 = LogField::new(2, 1, vec![-1.0 + 2.0 * c, -1.0]).unwrap();
        let s = simulate_events_from_log(&[l0, l1], &[7, 8], c).unwrap();
        let ev = s.events();
        assert_eq!(ev.len(), 2);
        // 50% of a 1 µs step rounds up to t=8, as does the 100% crossing.
        assert!(ev.iter().all(|e| e.x == 0 && e.y == 0 && e.t == 8 && e.p == Polarity::Positive));
    }

    #[test]
    fn canonical_tie_order() {
        // Pixel 1 rises, pixel 0 falls, both cross at the same microsecond.
        let l0 = LogField::new(2, 1, vec![0.0, 0.0]).unwrap();
        let l1 = LogField::new(2, 1, vec![-0.5, 0.5]).unwrap();
        let s = simulate_events_from_log(&[l0, l1], &[0, 10], 0.5).unwrap();
        let ev = s.events();
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].x, ev[0].p), (0, Polarity::Negative));
        assert_eq!((ev[1].x, ev[1].p), (1, Polarity::Positive));
        assert!(ev.iter().all(|e| e.t == 10));
    }

    #[test]
    fn stream_validation() {
        let e = |x, t| Event::new(x, 0, t, Polarity::Positive);
        assert!(EventStream::new(vec![e(0, 5), e(1, 4)], 2, 1, 0, 10).is_err());
        assert!(EventStream::new(vec![e(2, 5)], 2, 1, 0, 10).is_err());
        assert!(EventStream::new(vec![e(0, 11)], 2, 1, 0, 10).is_err());
        assert!(EventStream::new(vec![], 2, 1, 11, 10).is_err());
        assert!(EventStream::new(vec![e(0, 0), e(1, 0), e(0, 10)], 2, 1, 0, 10).is_ok());
    }

    #[test]
    fn polarity_integral_basics() {
        let pos = |t| Event::new(1, 1, t, Polarity::Positive);
        let neg = |t| Event::new(1, 1, t, Polarity::Negative);
        let other = Event::new(0, 0, 3, Polarity::Positive);
        let s = EventStream::new(vec![pos(1), other, pos(3), neg(4), pos(6), pos(9)], 2, 2, 0, 10).unwrap();
        assert_eq!(polarity_integral(&s, 1, 1, 5, 5).unwrap(), 0);
        // (0, 6]: +1 +1 -1 +1
        assert_eq!(polarity_integral(&s, 1, 1, 0, 6).unwrap(), 2);
        // the lower bound is exclusive
        assert_eq!(polarity_integral(&s, 1, 1, 1, 6).unwrap(), 1);
        assert!(polarity_integral(&s, 2, 0, 0, 1).is_err());
        assert!(polarity_integral(&s, 0, 0, 3, 1).is_err());
    }

    #[test]
    fn reconstruction_without_events_is_log_view() {
        let f = gray(100, 2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        let s = EventStream::empty(2, 2, 100, 200).unwrap();
        let r = reconstruct_log_intensity(&f, &s, 150, 0.2, 1e-3).unwrap();
        assert_eq!(r, log_view(&f, 1e-3).unwrap());
        assert!(reconstruct_log_intensity(&f, &s, 99, 0.2, 1e-3).is_err());
        assert!(reconstruct_log_intensity(&f, &s, 250, 0.2, 1e-3).is_err());
    }

    #[test]
    fn positive_events_scale_intensity() {
        let f = gray(0, 1, 1, vec![0.05]);
        let n = 3;
        let ev = (1..=n).map(|t| Event::new(0, 0, t, Polarity::Positive)).collect();
        let s = EventStream::new(ev, 1, 1, 0, 10).unwrap();
        let c = 0.3;
        let r = reconstruct_log_intensity(&f, &s, 10, c, 1e-3).unwrap();
        let ratio = r.data[0].exp() / 0.051;
        assert!((ratio - (n as f64 * c).exp()).abs() < 1e-12);
    }
}
