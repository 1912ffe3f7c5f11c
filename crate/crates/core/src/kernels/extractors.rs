use rand::Rng;

use super::attention::AttentionStats;
use super::conv::{conv2d, downsample_half, upsample_double, ConvParams};
use super::steb::{steb_forward_with_stats, StebParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Regional extractor: `1×1` lift from `M_p` to `C_r` channels followed by
/// encoder blocks alternating plain and shifted windows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalParams {
    pub lift: ConvParams,
    pub blocks: Vec<StebParams>,
}

impl RegionalParams {
    pub fn seeded<R: Rng + ?Sized>(
        rng: &mut R,
        moments: usize,
        channels: usize,
        heads: usize,
        mlp_ratio: usize,
        blocks: usize,
    ) -> Result<Self> {
        let lift = ConvParams::seeded(rng, moments, channels, 1, 1, 0);
        let blocks = (0..blocks)
            .map(|_| StebParams::seeded(rng, channels, heads, mlp_ratio))
            .collect::<Result<_>>()?;
        Ok(Self { lift, blocks })
    }
}

/// Maps a `[L, M_p, H, W]` pyramid to `[L, C_r, H, W]` features.
pub fn regional_extractor_forward(tpr: &Tensor, p: &RegionalParams, window: usize) -> Result<Tensor> {
    regional_extractor_forward_with_stats(tpr, p, window).map(|(t, _)| t)
}

pub fn regional_extractor_forward_with_stats(
    tpr: &Tensor,
    p: &RegionalParams,
    window: usize,
) -> Result<(Tensor, AttentionStats)> {
    if tpr.ndim() != 4 {
        return Err(Error::invalid(format!("regional extractor expects [L, M_p, H, W], got {:?}", tpr.shape())));
    }
    let mut x = conv2d(tpr, &p.lift)?;
    let mut stats = AttentionStats::default();
    for (i, block) in p.blocks.iter().enumerate() {
        let (y, s) = steb_forward_with_stats(&x, block, window, i % 2 == 1)?;
        x = y;
        stats = stats.merge(s);
    }
    Ok((x, stats))
}

/// Holistic extractor: a `3×3` lift of all frames and inter-frame event
/// segments, then a U-shaped stack of encoder blocks. The encoder has
/// `depth + 1` blocks with a down-sample after each of the first `depth`.
/// The decoder mirrors it: an up-sample after each of its first `depth`
/// blocks, each followed by adding the same-resolution encoder feature.
#[derive(Debug, Clone, PartialEq)]
pub struct HolisticParams {
    pub lift: ConvParams,
    pub encoder: Vec<StebParams>,
    pub down: Vec<ConvParams>,
    pub decoder: Vec<StebParams>,
    pub up: Vec<ConvParams>,
}

impl HolisticParams {
    #[allow(clippy::too_many_arguments)]
    pub fn seeded<R: Rng + ?Sized>(
        rng: &mut R,
        frames: usize,
        voxel_bins: usize,
        channels: usize,
        heads: usize,
        mlp_ratio: usize,
        depth: usize,
    ) -> Result<Self> {
        let in_ch = 3 * frames + voxel_bins * frames.saturating_sub(1);
        let lift = ConvParams::seeded(rng, in_ch, channels, 3, 1, 1);
        let mut encoder = Vec::new();
        let mut down = Vec::new();
        for _ in 0..depth {
            encoder.push(StebParams::seeded(rng, channels, heads, mlp_ratio)?);
            down.push(ConvParams::seeded(rng, channels, channels, 2, 2, 0));
        }
        encoder.push(StebParams::seeded(rng, channels, heads, mlp_ratio)?);
        let mut decoder = Vec::new();
        let mut up = Vec::new();
        for _ in 0..depth {
            decoder.push(StebParams::seeded(rng, channels, heads, mlp_ratio)?);
            up.push(ConvParams::seeded(rng, channels, channels, 3, 1, 1));
        }
        decoder.push(StebParams::seeded(rng, channels, heads, mlp_ratio)?);
        Ok(Self { lift, encoder, down, decoder, up })
    }

    pub fn depth(&self) -> usize {
        self.down.len()
    }

    pub fn channels(&self) -> usize {
        self.lift.outputs()
    }
}

/// Window size used at a `h×w` stage: `M`, shrunk to the map when the map
/// is smaller. Shifting is pointless once one window covers everything.
fn stage_window(window: usize, h: usize, w: usize) -> (usize, bool) {
    let m = window.min(h).min(w);
    (m, m < h.max(w))
}

fn block(x: &Tensor, p: &StebParams, window: usize, shifted: bool) -> Result<(Tensor, AttentionStats)> {
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let (m, can_shift) = stage_window(window, h, w);
    steb_forward_with_stats(x, p, m, shifted && can_shift)
}

/// Computes the holistic feature `[C, H, W]` from `N_in` frames `[3, H, W]`
/// and the `N_in − 1` inter-frame voxel grids `[M, H, W]`.
pub fn holistic_extractor_forward(
    frames: &[Tensor],
    segments: &[Tensor],
    p: &HolisticParams,
    window: usize,
) -> Result<Tensor> {
    holistic_extractor_forward_with_stats(frames, segments, p, window).map(|(t, _)| t)
}

pub fn holistic_extractor_forward_with_stats(
    frames: &[Tensor],
    segments: &[Tensor],
    p: &HolisticParams,
    window: usize,
) -> Result<(Tensor, AttentionStats)> {
    if frames.len() < 2 || segments.len() + 1 != frames.len() {
        return Err(Error::invalid(format!(
            "holistic extractor needs N_in >= 2 frames and N_in - 1 segments, got {} and {}",
            frames.len(),
            segments.len()
        )));
    }
    if p.encoder.len() != p.depth() + 1 || p.decoder.len() != p.depth() + 1 || p.up.len() != p.depth() {
        return Err(Error::invalid("holistic parameters have inconsistent depth"));
    }
    let (h, w) = match frames[0].shape() {
        &[_, h, w] => (h, w),
        s => return Err(Error::invalid(format!("frames must be [C, H, W], got {s:?}"))),
    };
    let scale = 1usize << p.depth();
    if h % scale != 0 || w % scale != 0 {
        return Err(Error::invalid(format!("{h}x{w} is not divisible by 2^{}", p.depth())));
    }
    let mut stacked = Vec::new();
    let mut channels = 0;
    for t in frames.iter().chain(segments) {
        match t.shape() {
            &[c, th, tw] if th == h && tw == w => {
                channels += c;
                stacked.extend_from_slice(t.data());
            }
            s => return Err(Error::invalid(format!("input {s:?} does not match {h}x{w}"))),
        }
    }
    let input = Tensor::from_vec(vec![1, channels, h, w], stacked)?;
    let mut x = conv2d(&input, &p.lift)?;
    let mut stats = AttentionStats::default();

    let mut skips = Vec::with_capacity(p.depth());
    for (i, enc) in p.encoder.iter().enumerate() {
        let (y, s) = block(&x, enc, window, i % 2 == 1)?;
        stats = stats.merge(s);
        if i < p.depth() {
            x = downsample_half(&y, &p.down[i])?;
            skips.push(y);
        } else {
            x = y;
        }
    }
    for (i, dec) in p.decoder.iter().enumerate() {
        let (y, s) = block(&x, dec, window, i % 2 == 1)?;
        stats = stats.merge(s);
        if i < p.depth() {
            let skip = skips.pop().expect("one skip per down-sample");
            x = upsample_double(&y, &p.up[i])?.add(&skip)?;
        } else {
            x = y;
        }
    }
    let c = x.shape()[1];
    Ok((x.reshape(&[c, h, w])?, stats))
}

/// `R_t = Conv1×1(F_g + F_t^l)`.
pub fn fuse_features(holistic: &Tensor, regional: &Tensor, conv: &ConvParams) -> Result<Tensor> {
    if holistic.shape() != regional.shape() || holistic.ndim() != 3 {
        return Err(Error::invalid(format!(
            "fusion needs matching [C, H, W] features, got {:?} and {:?}",
            holistic.shape(),
            regional.shape()
        )));
    }
    if conv.kernel() != 1 {
        return Err(Error::invalid("fusion uses a 1x1 convolution"));
    }
    conv2d(&holistic.add(regional)?, conv)
}
