//! Training/evaluation sample construction: sliding windows over a video,
//! ground-truth selection, random crops at a random scale and bicubic
//! down-sampling of the inputs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::event_model::IntensityFrame;

/// Side of the square high-resolution crop.
pub const CROP_SIZE: usize = 512;
pub const MIN_SCALE: f64 = 1.0;
pub const MAX_SCALE: f64 = 8.0;

/// `W = (N_in − 1)·(S + 1) + 1`.
pub fn window_size(input_frames: usize, skip: usize) -> usize {
    (input_frames - 1) * (skip + 1) + 1
}

/// One window of `W` consecutive frames starting at frame `start` (1-based).
/// Indices inside the window are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub start: usize,
    pub window_size: usize,
    pub input_frames: usize,
    pub skip: usize,
    pub input_indices: Vec<usize>,
    pub gt_indices: Vec<usize>,
}

impl WindowPlan {
    pub fn new(start: usize, input_frames: usize, skip: usize) -> Result<Self> {
        if input_frames < 2 {
            return Err(Error::invalid(format!("need at least 2 input frames, got {input_frames}")));
        }
        if start == 0 {
            return Err(Error::invalid("window start is 1-based"));
        }
        let w = window_size(input_frames, skip);
        Ok(Self {
            start,
            window_size: w,
            input_frames,
            skip,
            input_indices: (0..input_frames).map(|k| 1 + k * (skip + 1)).collect(),
            gt_indices: (1..=w).collect(),
        })
    }

    /// Normalised time `(i − 1)/(W − 1)` of window index `i`, for uniformly
    /// spaced frames.
    pub fn uniform_time(&self, index: usize) -> f64 {
        (index - 1) as f64 / (self.window_size - 1) as f64
    }

    /// Ground-truth indices strictly between inputs.
    pub fn intermediate_indices(&self) -> Vec<usize> {
        self.gt_indices.iter().copied().filter(|i| !self.input_indices.contains(i)).collect()
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for WindowPlan {
    /// `start W N_in S inputs=i1,i2,... gts=g1,g2,...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} inputs={} gts={}",
            self.start,
            self.window_size,
            self.input_frames,
            self.skip,
            join(&self.input_indices),
            join(&self.gt_indices)
        )
    }
}

impl FromStr for WindowPlan {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::format(format!("manifest line {line:?}: {what}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let list = |s: &str, key: &str| -> Result<Vec<usize>> {
            let body = s.strip_prefix(key).ok_or_else(|| bad(&format!("missing {key}")))?;
            if body.is_empty() {
                return Ok(Vec::new());
            }
            body.split(',').map(num).collect()
        };
        let plan = WindowPlan {
            start: num(fields[0])?,
            window_size: num(fields[1])?,
            input_frames: num(fields[2])?,
            skip: num(fields[3])?,
            input_indices: list(fields[4], "inputs=")?,
            gt_indices: list(fields[5], "gts=")?,
        };
        if plan.input_frames < 2 || plan.window_size != window_size(plan.input_frames, plan.skip) {
            return Err(bad("window size inconsistent with N_in and S"));
        }
        if plan.input_indices.len() != plan.input_frames
            || plan.gt_indices.iter().any(|&g| g == 0 || g > plan.window_size)
        {
            return Err(bad("indices inconsistent with the window"));
        }
        Ok(plan)
    }
}

/// Windows starting at frames `1, 1+stride, ...` that fit in `total_frames`.
pub fn plan_windows(total_frames: usize, input_frames: usize, skip: usize, stride: usize) -> Result<Vec<WindowPlan>> {
    if input_frames < 2 {
        return Err(Error::invalid(format!("need at least 2 input frames, got {input_frames}")));
    }
    if stride == 0 {
        return Err(Error::invalid("window stride must be positive"));
    }
    let w = window_size(input_frames, skip);
    let mut plans = Vec::new();
    let mut start = 1;
    while start + w - 1 <= total_frames {
        plans.push(WindowPlan::new(start, input_frames, skip)?);
        start += stride;
    }
    Ok(plans)
}

pub fn write_manifest(plans: &[WindowPlan]) -> String {
    plans.iter().map(|p| format!("{p}\n")).collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<WindowPlan>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

/// `count` distinct window indices drawn uniformly without replacement,
/// sorted ascending.
pub fn select_gt_indices<R: Rng + ?Sized>(rng: &mut R, plan: &WindowPlan, count: usize) -> Result<Vec<usize>> {
    if count > plan.window_size {
        return Err(Error::invalid(format!("cannot pick {count} of {} frames", plan.window_size)));
    }
    let mut picked: Vec<usize> = sample(rng, plan.window_size, count).into_iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Upsampling scale drawn from `U(1, 8)`.
pub fn sample_scale<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(MIN_SCALE..=MAX_SCALE)
}

/// Rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropPlan {
    pub scale: f64,
    /// Ground-truth crop in the full-resolution frame.
    pub hr_rect: Rect,
    /// Matching crop in the down-sampled frame.
    pub lr_rect: Rect,
}

/// Crop side lengths `(lr, hr)` with `lr = ⌊side/s⌋` and `hr = ⌊lr·s⌋`.
pub fn crop_sides(side: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be >= 1, got {scale}")));
    }
    let lr = (side as f64 / scale + 1e-9).floor() as usize;
    if lr == 0 {
        return Err(Error::invalid(format!("scale {scale} leaves an empty {side}-pixel crop")));
    }
    let hr = (lr as f64 * scale + 1e-9).floor() as usize;
    Ok((lr, hr))
}

/// Random `512×512`-class crop at scale `s`.
pub fn plan_crop<R: Rng + ?Sized>(rng: &mut R, frame_h: usize, frame_w: usize, scale: f64) -> Result<CropPlan> {
    plan_crop_sized(rng, frame_h, frame_w, scale, CROP_SIZE)
}

/// [`plan_crop`] with an explicit nominal crop side.
pub fn plan_crop_sized<R: Rng + ?Sized>(
    rng: &mut R,
    frame_h: usize,
    frame_w: usize,
    scale: f64,
    side: usize,
) -> Result<CropPlan> {
    let (lr, hr) = crop_sides(side, scale)?;
    if frame_h < hr || frame_w < hr {
        return Err(Error::invalid(format!("{frame_w}x{frame_h} frame cannot hold a {hr}x{hr} crop")));
    }
    let top = rng.gen_range(0..=frame_h - hr);
    let left = rng.gen_range(0..=frame_w - hr);
    let lr_top = (top as f64 / scale + 1e-9).floor() as usize;
    let lr_left = (left as f64 / scale + 1e-9).floor() as usize;
    Ok(CropPlan {
        scale,
        hr_rect: Rect { top, left, height: hr, width: hr },
        lr_rect: Rect { top: lr_top, left: lr_left, height: lr, width: lr },
    })
}

/// Keys cubic kernel with `a = −0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// The four source taps `(index, weight)` for destination sample `dst`
/// at scale `s`, clamped to `[0, n)`.
fn taps(dst: usize, scale: f64, n: usize) -> [(usize, f64); 4] {
    let src = (dst as f64 + 0.5) * scale - 0.5;
    let base = src.floor();
    let frac = src - base;
    let mut out = [(0usize, 0.0f64); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let offset = k as isize - 1;
        let idx = (base as isize + offset).clamp(0, n as isize - 1) as usize;
        *slot = (idx, cubic_weight(frac - offset as f64));
    }
    out
}

/// Separable bicubic down-sampling by `s` to `⌊H/s⌋×⌊W/s⌋`, clamp-to-edge,
/// output clamped to `[0, 1]`.
pub fn downsample_bicubic(frame: &IntensityFrame, scale: f64) -> Result<IntensityFrame> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("down-sampling scale must be >= 1, got {scale}")));
    }
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let ow = (w as f64 / scale + 1e-9).floor() as usize;
    let oh = (h as f64 / scale + 1e-9).floor() as usize;
    if ow == 0 || oh == 0 {
        return Err(Error::invalid(format!("scale {scale} reduces {w}x{h} below 1x1")));
    }
    // Horizontal pass: h × ow × c.
    let mut tmp = vec![0.0f64; h * ow * c];
    for x in 0..ow {
        let tx = taps(x, scale, w);
        for y in 0..h {
            for ch in 0..c {
                tmp[(y * ow + x) * c + ch] = tx.iter().map(|&(i, wt)| wt * frame.get(i, y, ch)).sum();
            }
        }
    }
    let mut out = vec![0.0f64; oh * ow * c];
    for y in 0..oh {
        let ty = taps(y, scale, h);
        for x in 0..ow {
            for ch in 0..c {
                let v: f64 = ty.iter().map(|&(i, wt)| wt * tmp[(i * ow + x) * c + ch]).sum();
                out[(y * ow + x) * c + ch] = v.clamp(0.0, 1.0);
            }
        }
    }
    IntensityFrame::new(frame.timestamp(), ow, oh, c, out)
}

/// Times in `[0, 1]` of the window's frames, from the absolute timestamps
/// of the whole video (indexed from frame 1).
pub fn normalize_times(plan: &WindowPlan, frame_timestamps: &[u64]) -> Result<Vec<f64>> {
    let first = plan.start - 1;
    let last = first + plan.window_size - 1;
    if last >= frame_timestamps.len() {
        return Err(Error::invalid(format!(
            "window ends at frame {} but only {} timestamps were given",
            last + 1,
            frame_timestamps.len()
        )));
    }
    let stamps = &frame_timestamps[first..=last];
    if stamps.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("frame timestamps must be strictly increasing"));
    }
    let (t0, t1) = (stamps[0], stamps[stamps.len() - 1]);
    if t0 == t1 {
        return Err(Error::invalid("window endpoints share a timestamp"));
    }
    let span = (t1 - t0) as f64;
    Ok(stamps
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if i == 0 {
                0.0
            } else if i + 1 == stamps.len() {
                1.0
            } else {
                (t - t0) as f64 / span
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn windows_from_the_text_example() {
        let plans = plan_windows(25, 4, 7, 25).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].window_size, 25);
        assert_eq!(plans[0].input_indices, vec![1, 9, 17, 25]);
        assert_eq!(plans[0].gt_indices, (1..=25).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_and_small_windows() {
        let p = &plan_windows(2, 2, 0, 1).unwrap()[0];
        assert_eq!((p.window_size, p.input_indices.clone()), (2, vec![1, 2]));
        assert!(p.intermediate_indices().is_empty());
        let p = &plan_windows(5, 3, 1, 5).unwrap()[0];
        assert_eq!((p.window_size, p.input_indices.clone()), (5, vec![1, 3, 5]));
        assert!(plan_windows(10, 4, 7, 25).unwrap().is_empty());
        assert!(plan_windows(10, 1, 7, 25).is_err());
        assert!(plan_windows(10, 2, 0, 0).is_err());
    }

    #[test]
    fn stride_placement() {
        let plans = plan_windows(12, 2, 1, 4).unwrap();
        let starts: Vec<_> = plans.iter().map(|p| p.start).collect();
        assert_eq!(starts, vec![1, 5, 9]);
    }

    #[test]
    fn manifest_round_trip() {
        let plans = plan_windows(60, 4, 7, 10).unwrap();
        let text = write_manifest(&plans);
        assert!(text.starts_with("1 25 4 7 inputs=1,9,17,25 gts=1,2,3"));
        assert_eq!(parse_manifest(&text).unwrap(), plans);
        assert!(parse_manifest("1 24 4 7 inputs=1,9,17,25 gts=1").is_err());
        assert!(parse_manifest("1 25 4").is_err());
    }

    #[test]
    fn gt_selection_without_replacement() {
        let plan = WindowPlan::new(1, 4, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gt = select_gt_indices(&mut rng, &plan, 20).unwrap();
        assert_eq!(gt.len(), 20);
        assert!(gt.windows(2).all(|p| p[0] < p[1]));
        assert!(gt.iter().all(|&g| (1..=25).contains(&g)));
        assert!(select_gt_indices(&mut rng, &plan, 26).is_err());
    }

    #[test]
    fn scale_sampling_is_reproducible() {
        let a = sample_scale(&mut ChaCha8Rng::seed_from_u64(0));
        let b = sample_scale(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a, b);
        assert!((1.0..=8.0).contains(&a));
    }

    #[test]
    fn crop_arithmetic() {
        assert_eq!(crop_sides(512, 1.0).unwrap(), (512, 512));
        assert_eq!(crop_sides(512, 4.0).unwrap(), (128, 512));
        assert_eq!(crop_sides(512, 3.7).unwrap(), (138, 510));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = plan_crop(&mut rng, 512, 512, 1.0).unwrap();
        assert_eq!(c.hr_rect, c.lr_rect);
        assert_eq!(c.hr_rect, Rect { top: 0, left: 0, height: 512, width: 512 });
        assert!(plan_crop(&mut rng, 500, 900, 1.0).is_err());
        assert!(crop_sides(512, 0.5).is_err());
    }

    #[test]
    fn bicubic_identity_and_constant() {
        let px: Vec<f64> = (0..30).map(|i| (i as f64) / 40.0).collect();
        let f = IntensityFrame::new(3, 5, 6, 1, px).unwrap();
        assert_eq!(downsample_bicubic(&f, 1.0).unwrap(), f);
        let k = IntensityFrame::filled(0, 13, 9, 3, 0.37).unwrap();
        for s in [1.5, 2.0, 3.3] {
            let d = downsample_bicubic(&k, s).unwrap();
            assert!(d.pixels().iter().all(|v| (v - 0.37).abs() < 1e-12));
        }
        assert!(downsample_bicubic(&k, 10.0).is_err());
    }

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..50 {
            let f = i as f64 / 50.0;
            let s: f64 = (-1..=2).map(|o| cubic_weight(f - o as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
    }

    #[test]
    fn time_normalisation() {
        let plan = WindowPlan::new(2, 3, 1).unwrap();
        let stamps = [0, 100, 150, 300, 350, 600, 700];
        let t = normalize_times(&plan, &stamps).unwrap();
        // window frames 2..=6: 100, 150, 300, 350, 600
        assert_eq!(t, vec![0.0, 0.1, 0.4, 0.5, 1.0]);
        assert!(normalize_times(&plan, &stamps[..5]).is_err());
        assert!(normalize_times(&plan, &[0, 100, 100, 300, 350, 600]).is_err());
    }
}
