use rand::Rng;
use rayon::prelude::*;

use super::attention::{attention_with_stats, AttentionParams, AttentionStats};
use super::linear::{layer_norm, mlp_forward, Activation, Dense, LayerNormParams, MlpParams};
use super::window::{cyclic_shift, window_partition, window_unpartition};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of one Swin-style transformer encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct StebParams {
    pub norm1: LayerNormParams,
    pub attention: AttentionParams,
    pub norm2: LayerNormParams,
    pub mlp: MlpParams,
}

impl StebParams {
    pub fn seeded<R: Rng + ?Sized>(rng: &mut R, channels: usize, heads: usize, mlp_ratio: usize) -> Result<Self> {
        let attention = AttentionParams::seeded(rng, channels, heads)?;
        let hidden = channels * mlp_ratio.max(1);
        let mlp = MlpParams::seeded(rng, &[channels, hidden, channels], Activation::Gelu);
        Ok(Self {
            norm1: LayerNormParams::identity(channels),
            attention,
            norm2: LayerNormParams::identity(channels),
            mlp,
        })
    }

    pub fn channels(&self) -> usize {
        self.attention.channels()
    }

    /// Zeroes the attention output projection and the last MLP layer, which
    /// turns the block into an identity map.
    pub fn zero_residual_branches(&mut self) {
        let c = self.channels();
        self.attention.output = Dense::zeros(c, c);
        let last = self.mlp.layers.last_mut().unwrap();
        last.0 = Dense::zeros(last.0.inputs(), last.0.outputs());
    }
}

/// One encoder block over `[L, C, H, W]`: optional cyclic shift by `M/2`,
/// window partition, `x + MHSA(LN(x))`, `x + MLP(LN(x))`, unpartition and
/// inverse shift. Shifted windows are not masked.
pub fn steb_forward(x: &Tensor, p: &StebParams, window: usize, shifted: bool) -> Result<Tensor> {
    steb_forward_with_stats(x, p, window, shifted).map(|(t, _)| t)
}

pub fn steb_forward_with_stats(
    x: &Tensor,
    p: &StebParams,
    window: usize,
    shifted: bool,
) -> Result<(Tensor, AttentionStats)> {
    let (levels, c, h, w) = match x.shape() {
        &[l, c, h, w] => (l, c, h, w),
        s => return Err(Error::invalid(format!("STEB expects [L, C, H, W], got {s:?}"))),
    };
    if c != p.channels() {
        return Err(Error::invalid(format!("STEB configured for {} channels, got {c}", p.channels())));
    }
    let shift = (window / 2) as isize;
    let input = if shifted { cyclic_shift(x, shift)? } else { x.clone() };
    let windows = window_partition(&input, window)?;
    let tokens = window * window;
    let per_window = tokens * c;

    let results: Vec<(Vec<f32>, AttentionStats)> = windows
        .data()
        .par_chunks(per_window)
        .map(|chunk| {
            let t = Tensor::from_vec(vec![tokens, c], chunk.to_vec())?;
            let (attn, stats) = attention_with_stats(&layer_norm(&t, &p.norm1)?, &p.attention)?;
            let y = t.add(&attn)?;
            let z = y.add(&mlp_forward(&layer_norm(&y, &p.norm2)?, &p.mlp)?)?;
            Ok((z.into_data(), stats))
        })
        .collect::<Result<_>>()?;

    let mut stats = AttentionStats::default();
    let mut data = Vec::with_capacity(windows.len());
    for (chunk, s) in results {
        data.extend_from_slice(&chunk);
        stats = stats.merge(s);
    }
    let merged = Tensor::from_vec(windows.shape().to_vec(), data)?;
    let out = window_unpartition(&merged, levels, h, w, window)?;
    let out = if shifted { cyclic_shift(&out, -shift)? } else { out };
    Ok((out, stats))
}
