//! Holistic voxel grid and regional Temporal Pyramid Representation (TPR).
//!
//! Both accumulate signed polarities with a bilinear temporal kernel. A TPR
//! is a stack of `L` voxel grids centred on a timestamp, where level `ℓ`
//! (1-indexed) spans `[t - Δt/r^ℓ, t + Δt/r^ℓ]`. Its finest granularity is
//! `δ_t = 2Δt / (M_p · r^L)`.
//!
//! Note that some renderings label the pyramid layers `L_0..L_{L-1}`; the
//! indexing here is 1-based so that the finest level has half-window
//! `Δt/r^L`, matching `δ_t`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream};
use crate::tensor::Tensor;

/// Events per partial accumulation buffer. Fixed so that results do not
/// depend on the worker count.
const ACCUMULATE_CHUNK: usize = 1 << 16;

/// `M` temporal bins of signed polarity mass over `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    width: usize,
    height: usize,
    t0: f64,
    t1: f64,
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, bin: usize, x: usize, y: usize) -> f32 {
        self.data[(bin * self.height + y) * self.width + x]
    }

    /// Sum over all cells.
    pub fn mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(vec![self.bins, self.height, self.width], self.data.clone())
            .expect("voxel grid shape is consistent")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Closed,
    /// Excludes events at exactly `t1`.
    HalfOpen,
}

/// Voxelizes events in `[t0, t1]` into `bins` bilinear temporal bins.
///
/// An event at `τ = M·(t−t0)/(t1−t0) − 0.5` contributes `p·(1−|τ−k|)` to
/// the bins `k` with `|τ−k| < 1`. `τ` is clamped to `[0, M−1]` so events in
/// the outer half-bins fold fully into the edge bin and mass is conserved.
pub fn build_voxel_grid(stream: &EventStream, bins: usize, t0: u64, t1: u64) -> Result<VoxelGrid> {
    if t0 >= t1 {
        return Err(Error::invalid(format!("voxel window needs t0 < t1, got [{t0}, {t1}]")));
    }
    voxelize_span(stream, bins, t0 as f64, t1 as f64, Boundary::Closed)
}

/// Like [`build_voxel_grid`] but over `[t0, t1)`, used for consecutive
/// inter-frame segments that must not share boundary events.
pub fn build_segment_grid(stream: &EventStream, bins: usize, t0: u64, t1: u64) -> Result<VoxelGrid> {
    if t0 >= t1 {
        return Err(Error::invalid(format!("segment needs t0 < t1, got [{t0}, {t1}]")));
    }
    voxelize_span(stream, bins, t0 as f64, t1 as f64, Boundary::HalfOpen)
}

fn voxelize_span(stream: &EventStream, bins: usize, t0: f64, t1: f64, boundary: Boundary) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(Error::invalid("voxel grid needs at least one bin"));
    }
    if !(t0 < t1) {
        return Err(Error::invalid(format!("voxel window needs t0 < t1, got [{t0}, {t1}]")));
    }
    let (width, height) = (stream.width() as usize, stream.height() as usize);
    let lo = t0.ceil().max(0.0) as u64;
    let hi = t1.floor().max(0.0) as u64;
    let mut events = if t1 < 0.0 || lo > hi { &[][..] } else { stream.window_closed(lo, hi) };
    if boundary == Boundary::HalfOpen {
        let end = events.partition_point(|e| (e.t as f64) < t1);
        events = &events[..end];
    }
    let data = accumulate(events, bins, width, height, t0, t1);
    Ok(VoxelGrid { bins, width, height, t0, t1, data })
}

fn accumulate(events: &[Event], bins: usize, width: usize, height: usize, t0: f64, t1: f64) -> Vec<f32> {
    let cells = bins * height * width;
    let partials: Vec<Vec<f64>> = events
        .par_chunks(ACCUMULATE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0f64; cells];
            splat(chunk, &mut acc, bins, width, height, t0, t1);
            acc
        })
        .collect();
    let mut total = vec![0.0f64; cells];
    for part in &partials {
        for (a, b) in total.iter_mut().zip(part) {
            *a += b;
        }
    }
    total.into_iter().map(|v| v as f32).collect()
}

fn splat(events: &[Event], acc: &mut [f64], bins: usize, width: usize, height: usize, t0: f64, t1: f64) {
    let plane = width * height;
    let scale = bins as f64 / (t1 - t0);
    let max_tau = (bins - 1) as f64;
    for e in events {
        let p = e.p.sign() as f64;
        let tau = ((e.t as f64 - t0) * scale - 0.5).clamp(0.0, max_tau);
        let k = tau.floor();
        let frac = tau - k;
        let k = k as usize;
        let pix = e.y as usize * width + e.x as usize;
        acc[k * plane + pix] += p * (1.0 - frac);
        if frac > 0.0 && k + 1 < bins {
            acc[(k + 1) * plane + pix] += p * frac;
        }
    }
}

/// Stack of `L` voxel grids with `M_p` bins each over nested windows.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPyramid {
    levels: usize,
    moments: usize,
    attenuation: f64,
    center_t: f64,
    half_window: f64,
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl TemporalPyramid {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn moments(&self) -> usize {
        self.moments
    }

    pub fn attenuation(&self) -> f64 {
        self.attenuation
    }

    pub fn center(&self) -> f64 {
        self.center_t
    }

    pub fn half_window(&self) -> f64 {
        self.half_window
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `[L, M_p, H, W]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.levels, self.moments, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Closed window of level `level` (1-based).
    pub fn level_window(&self, level: usize) -> (f64, f64) {
        level_window(self.center_t, self.half_window, self.attenuation, level)
    }

    /// Cells of level `level` (1-based).
    pub fn level_data(&self, level: usize) -> &[f32] {
        let n = self.moments * self.height * self.width;
        &self.data[(level - 1) * n..level * n]
    }

    pub fn level_mass(&self, level: usize) -> f64 {
        self.level_data(level).iter().map(|&v| v as f64).sum()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.shape().to_vec(), self.data.clone()).expect("pyramid shape is consistent")
    }
}

fn level_window(center: f64, half_window: f64, r: f64, level: usize) -> (f64, f64) {
    let hw = half_window / r.powi(level as i32);
    (center - hw, center + hw)
}

/// Builds a TPR centred at `center_t` (µs) with half-window `half_window`
/// (µs), `levels` levels, `moments` bins per level and attenuation `r`.
pub fn build_tpr(
    stream: &EventStream,
    center_t: f64,
    half_window: f64,
    levels: usize,
    moments: usize,
    r: f64,
) -> Result<TemporalPyramid> {
    if levels == 0 || moments == 0 {
        return Err(Error::invalid("TPR needs at least one level and one moment"));
    }
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::invalid(format!("attenuation factor must exceed 1, got {r}")));
    }
    if !(half_window > 0.0) || !half_window.is_finite() || !center_t.is_finite() {
        return Err(Error::invalid(format!("half window must be positive, got {half_window}")));
    }
    let (finest_lo, finest_hi) = level_window(center_t, half_window, r, levels);
    if finest_hi - finest_lo < 1.0 {
        return Err(Error::invalid(format!(
            "level {levels} spans {:.3} µs, finer than the 1 µs timestamp clock",
            finest_hi - finest_lo
        )));
    }
    let grids = (1..=levels)
        .into_par_iter()
        .map(|level| {
            let (lo, hi) = level_window(center_t, half_window, r, level);
            voxelize_span(stream, moments, lo, hi, Boundary::Closed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(levels * moments * stream.width() as usize * stream.height() as usize);
    for g in grids {
        data.extend_from_slice(&g.data);
    }
    Ok(TemporalPyramid {
        levels,
        moments,
        attenuation: r,
        center_t,
        half_window,
        width: stream.width() as usize,
        height: stream.height() as usize,
        data,
    })
}

/// Finest time granularity of a TPR configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GranularitySpec {
    /// Seconds.
    pub delta_t: BigRational,
    /// Seconds.
    pub half_window: BigRational,
    pub levels: usize,
    pub moments: usize,
    pub attenuation: BigRational,
}

impl GranularitySpec {
    pub fn to_f64(&self) -> f64 {
        self.delta_t.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for GranularitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.delta_t.denom().is_one() {
            write!(f, "{} s", self.delta_t.numer())
        } else {
            write!(f, "{}/{} s", self.delta_t.numer(), self.delta_t.denom())
        }
    }
}

/// Exact `δ_t = 2Δt / (M_p · r^L)` for rational `Δt` (seconds) and `r`.
pub fn tpr_granularity(
    half_window: &BigRational,
    levels: usize,
    moments: usize,
    r: &BigRational,
) -> Result<GranularitySpec> {
    if !half_window.is_positive() {
        return Err(Error::invalid("half window must be positive"));
    }
    if levels == 0 || moments == 0 {
        return Err(Error::invalid("levels and moments must be positive"));
    }
    if *r <= BigRational::one() {
        return Err(Error::invalid("attenuation factor must exceed 1"));
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let denom = BigRational::from_integer(BigInt::from(moments)) * num_traits::pow(r.clone(), levels);
    Ok(GranularitySpec {
        delta_t: two * half_window / denom,
        half_window: half_window.clone(),
        levels,
        moments,
        attenuation: r.clone(),
    })
}

/// Floating-point `δ_t` for real-valued attenuation factors.
pub fn tpr_granularity_f64(half_window: f64, levels: usize, moments: usize, r: f64) -> Result<f64> {
    if !(half_window > 0.0) || levels == 0 || moments == 0 || !(r > 1.0) {
        return Err(Error::invalid("granularity parameters must be positive with r > 1"));
    }
    Ok(2.0 * half_window / (moments as f64 * r.powi(levels as i32)))
}

/// Parses an exact rational from `p/q`, an integer or a decimal literal.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::invalid(format!("not a rational number: {text:?}"));
    if let Some((p, q)) = text.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let value = BigRational::new(numer, denom);
    Ok(if neg { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::Polarity;

    fn stream(events: Vec<Event>, t_end: u64) -> EventStream {
        EventStream::new(events, 2, 1, 0, t_end).unwrap()
    }

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn event_at_bin_center_hits_one_bin() {
        // 4 bins over [0, 400]: bin 1 is centred at t=150.
        let s = stream(vec![Event::new(0, 0, 150, Polarity::Negative)], 400);
        let g = build_voxel_grid(&s, 4, 0, 400).unwrap();
        assert_eq!(g.get(1, 0, 0), -1.0);
        assert_eq!(g.mass(), -1.0);
        assert_eq!(g.data().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn midway_event_splits_evenly() {
        // Midway between centres of bins 1 (150) and 2 (250).
        let s = stream(vec![Event::new(1, 0, 200, Polarity::Positive)], 400);
        let g = build_voxel_grid(&s, 4, 0, 400).unwrap();
        assert_eq!(g.get(1, 1, 0), 0.5);
        assert_eq!(g.get(2, 1, 0), 0.5);
    }

    #[test]
    fn edge_events_fold_into_edge_bins() {
        let s = stream(
            vec![Event::new(0, 0, 0, Polarity::Positive), Event::new(0, 0, 400, Polarity::Positive)],
            400,
        );
        let g = build_voxel_grid(&s, 4, 0, 400).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);
        assert_eq!(g.get(3, 0, 0), 1.0);
    }

    #[test]
    fn voxel_ignores_out_of_window_and_checks_args() {
        let s = stream(
            vec![Event::new(0, 0, 5, Polarity::Positive), Event::new(0, 0, 500, Polarity::Positive)],
            1000,
        );
        let g = build_voxel_grid(&s, 3, 100, 400).unwrap();
        assert_eq!(g.mass(), 0.0);
        assert!(build_voxel_grid(&s, 0, 0, 10).is_err());
        assert!(build_voxel_grid(&s, 2, 10, 10).is_err());
    }

    #[test]
    fn segment_grid_excludes_right_edge() {
        let s = stream(
            vec![Event::new(0, 0, 0, Polarity::Positive), Event::new(0, 0, 100, Polarity::Positive)],
            100,
        );
        assert_eq!(build_segment_grid(&s, 2, 0, 100).unwrap().mass(), 1.0);
        assert_eq!(build_voxel_grid(&s, 2, 0, 100).unwrap().mass(), 2.0);
    }

    #[test]
    fn tpr_shape_and_membership() {
        let c = 500_000u64;
        let s = EventStream::new(
            vec![
                Event::new(0, 0, 100, Polarity::Positive),
                Event::new(1, 0, c, Polarity::Negative),
            ],
            2,
            1,
            0,
            1_000_000,
        )
        .unwrap();
        let p = build_tpr(&s, c as f64, 500_000.0, 7, 2, 3.0).unwrap();
        assert_eq!(p.shape(), [7, 2, 1, 2]);
        for level in 1..=7 {
            assert_eq!(p.level_mass(level), -1.0, "level {level}");
        }
        // The early event is outside even the coarsest window (Δt/3).
        assert!(p.data().iter().step_by(2).all(|v| *v == 0.0));
    }

    #[test]
    fn tpr_rejects_degenerate_levels() {
        let s = EventStream::empty(1, 1, 0, 100).unwrap();
        assert!(build_tpr(&s, 50.0, 50.0, 7, 2, 3.0).is_err());
        assert!(build_tpr(&s, 50.0, 50.0, 1, 2, 1.0).is_err());
        assert!(build_tpr(&s, 50.0, 50.0, 0, 2, 3.0).is_err());
        assert!(build_tpr(&s, 50.0, 50.0, 2, 2, 3.0).is_ok());
    }

    #[test]
    fn granularity_values() {
        let hw = rat("1/2");
        let three = rat("3");
        let g = tpr_granularity(&hw, 7, 2, &three).unwrap();
        assert_eq!(g.delta_t, rat("1/4374"));
        assert!(g.delta_t < rat("1/1000"));
        assert_eq!(g.to_string(), "1/4374 s");
        assert_eq!(tpr_granularity(&hw, 7, 9, &three).unwrap().to_string(), "1/19683 s");
        assert!(tpr_granularity(&hw, 7, 9, &rat("1")).is_err());
        let f = tpr_granularity_f64(0.5, 7, 3, 3.0).unwrap();
        assert!((f - 1.0 / 6561.0).abs() <= f64::EPSILON * f);
    }

    #[test]
    fn granularity_refines_by_r_per_level() {
        let hw = rat("1/2");
        let r = rat("5/2");
        for l in 1..10 {
            let a = tpr_granularity(&hw, l, 4, &r).unwrap().delta_t;
            let b = tpr_granularity(&hw, l + 1, 4, &r).unwrap().delta_t;
            assert_eq!(a, b * &r);
        }
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(rat("0.5"), rat("1/2"));
        assert_eq!(rat("2"), BigRational::from_integer(2.into()));
        assert_eq!(rat("-1.25"), rat("-5/4"));
        assert_eq!(rat(".5"), rat("1/2"));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational(".").is_err());
    }
}
