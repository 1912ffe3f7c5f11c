//! Temporal embedding and the local implicit spatial decoder.

use rand::Rng;
use rayon::prelude::*;

use super::conv::{conv2d, ConvParams};
use super::linear::{Activation, MlpParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Two-layer MLP lifting `t` to a `C_t` channel-attention vector, and the
/// `1×1` compression from `C_t` to `C_ts` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalParams {
    pub mlp: MlpParams,
    pub compress: ConvParams,
}

impl TemporalParams {
    pub fn seeded<R: Rng + ?Sized>(rng: &mut R, temporal_dim: usize, compressed_dim: usize) -> Self {
        Self {
            mlp: MlpParams::seeded(rng, &[1, temporal_dim, temporal_dim], Activation::Gelu),
            compress: ConvParams::seeded(rng, temporal_dim, compressed_dim, 1, 1, 0),
        }
    }
}

/// Attention vector `a(t)` for `t ∈ [0, 1]`.
pub fn temporal_attention(t: f64, mlp: &MlpParams) -> Result<Vec<f32>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    if mlp.inputs() != 1 {
        return Err(Error::invalid("temporal MLP must take a scalar time"));
    }
    let a = mlp.forward_row(&[t]);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("temporal attention is non-finite".into()));
    }
    Ok(a.into_iter().map(|v| v as f32).collect())
}

/// Channel-wise `a ⊙ R` for `R` of shape `[C, H, W]`.
pub fn modulate_channels(features: &Tensor, attention: &[f32]) -> Result<Tensor> {
    let c = match features.shape() {
        &[c, _, _] => c,
        s => return Err(Error::invalid(format!("expected [C, H, W] features, got {s:?}"))),
    };
    if attention.len() != c {
        return Err(Error::invalid(format!("attention has {} channels, features have {c}", attention.len())));
    }
    let plane = features.len() / c.max(1);
    let data = features
        .data()
        .chunks(plane.max(1))
        .zip(attention)
        .flat_map(|(ch, &a)| ch.iter().map(move |&v| v * a))
        .collect();
    Tensor::from_vec(features.shape().to_vec(), data)
}

/// `R_ts = Conv1×1(a(t) ⊙ R_t)`.
pub fn temporal_embed(t: f64, params: &TemporalParams, fused: &Tensor) -> Result<Tensor> {
    let a = temporal_attention(t, &params.mlp)?;
    conv2d(&modulate_channels(fused, &a)?, &params.compress)
}

/// One of the four feature cells surrounding a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub col: usize,
    /// `(dx, dy)` from the cell centre to the query, in cell units.
    pub offset: (f64, f64),
    pub weight: f64,
}

/// The four cells around query `(x, y)` on an `h×w` grid whose cell
/// `(i, j)` is centred at `(j + 0.5, i + 0.5)`.
///
/// Each cell is weighted by the area of the rectangle spanned by the query
/// and the diagonally opposite cell centre; the weights sum to one. Near
/// the border the coordinate is clamped onto the outermost centres.
pub fn neighbor_weights(h: usize, w: usize, x: f64, y: f64) -> Result<[Neighbor; 4]> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("empty feature grid"));
    }
    if !(0.0..=w as f64).contains(&x) || !(0.0..=h as f64).contains(&y) {
        return Err(Error::invalid(format!("query ({x}, {y}) outside the {w}x{h} feature extent")));
    }
    let axis = |v: f64, n: usize| -> (usize, usize, f64) {
        let u = (v - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = (u.floor() as usize).min(n.saturating_sub(2));
        let hi = (lo + 1).min(n - 1);
        (lo, hi, (u - lo as f64).clamp(0.0, 1.0))
    };
    let (c0, c1, ax) = axis(x, w);
    let (r0, r1, ay) = axis(y, h);
    let cell = |row: usize, col: usize, weight: f64| Neighbor {
        row,
        col,
        offset: (x - (col as f64 + 0.5), y - (row as f64 + 0.5)),
        weight,
    };
    Ok([
        cell(r0, c0, (1.0 - ax) * (1.0 - ay)),
        cell(r0, c1, ax * (1.0 - ay)),
        cell(r1, c0, (1.0 - ax) * ay),
        cell(r1, c1, ax * ay),
    ])
}

/// Decodes one candidate `MLP(feature ∥ offset)` for cell `(row, col)`.
pub fn decode_candidate(
    features: &Tensor,
    row: usize,
    col: usize,
    offset: (f64, f64),
    decoder: &MlpParams,
) -> Result<[f64; 3]> {
    let (c, h, w) = feature_dims(features)?;
    if decoder.inputs() != c + 2 || decoder.outputs() != 3 {
        return Err(Error::invalid(format!(
            "decoder must map {} inputs to 3 outputs, got {} -> {}",
            c + 2,
            decoder.inputs(),
            decoder.outputs()
        )));
    }
    if row >= h || col >= w {
        return Err(Error::invalid(format!("cell ({row}, {col}) outside {h}x{w} grid")));
    }
    let mut input = Vec::with_capacity(c + 2);
    let plane = h * w;
    for ch in 0..c {
        input.push(features.data()[ch * plane + row * w + col] as f64);
    }
    // The offset enters at f32 precision like every other decoder input.
    input.push(offset.0 as f32 as f64);
    input.push(offset.1 as f32 as f64);
    let out = decoder.forward_row(&input);
    Ok([out[0], out[1], out[2]])
}

fn feature_dims(features: &Tensor) -> Result<(usize, usize, usize)> {
    match features.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::invalid(format!("expected [C, H, W] features, got {s:?}"))),
    }
}

/// RGB value at each continuous query: four decoded candidates blended by
/// their area weights.
pub fn spatial_decode(features: &Tensor, queries: &[(f64, f64)], decoder: &MlpParams) -> Result<Vec<[f32; 3]>> {
    let (_, h, w) = feature_dims(features)?;
    queries
        .par_iter()
        .map(|&(x, y)| {
            let mut rgb = [0.0f64; 3];
            for n in neighbor_weights(h, w, x, y)? {
                let cand = decode_candidate(features, n.row, n.col, n.offset, decoder)?;
                for (acc, v) in rgb.iter_mut().zip(cand) {
                    *acc += n.weight * v;
                }
            }
            if rgb.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("decoded value at ({x}, {y}) is non-finite")));
            }
            Ok([rgb[0] as f32, rgb[1] as f32, rgb[2] as f32])
        })
        .collect()
}

/// Output size `floor(s·h) × floor(s·w)` for scale `s`.
pub fn output_size(h: usize, w: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let oh = (scale * h as f64 + 1e-9).floor() as usize;
    let ow = (scale * w as f64 + 1e-9).floor() as usize;
    if oh == 0 || ow == 0 {
        return Err(Error::invalid(format!("scale {scale} yields an empty output")));
    }
    Ok((oh, ow))
}

/// Query coordinates (raster order) of the output pixel centres mapped
/// into feature-grid units.
pub fn query_grid(h: usize, w: usize, scale: f64) -> Result<(usize, usize, Vec<(f64, f64)>)> {
    let (oh, ow) = output_size(h, w, scale)?;
    let (sy, sx) = (h as f64 / oh as f64, w as f64 / ow as f64);
    let mut q = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            q.push(((j as f64 + 0.5) * sx, (i as f64 + 0.5) * sy));
        }
    }
    Ok((oh, ow, q))
}

/// Decodes a whole `[out_h, out_w, 3]` frame at scale `s`.
pub fn decode_frame(features: &Tensor, scale: f64, decoder: &MlpParams) -> Result<Tensor> {
    let (_, h, w) = feature_dims(features)?;
    let (oh, ow, queries) = query_grid(h, w, scale)?;
    let rgb = spatial_decode(features, &queries, decoder)?;
    Tensor::from_vec(vec![oh, ow, 3], rgb.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn weights_at_cell_centre() {
        let n = neighbor_weights(4, 4, 1.5, 2.5).unwrap();
        let hit: Vec<_> = n.iter().filter(|c| c.weight > 0.0).collect();
        assert_eq!(hit.len(), 1);
        assert_eq!((hit[0].row, hit[0].col, hit[0].weight), (2, 1, 1.0));
        assert_eq!(hit[0].offset, (0.0, 0.0));
    }

    #[test]
    fn weights_are_a_partition_of_unity() {
        for &(x, y) in &[(0.0, 0.0), (4.0, 3.0), (1.3, 2.9), (0.2, 2.2), (3.99, 0.01)] {
            let n = neighbor_weights(3, 4, x, y).unwrap();
            let s: f64 = n.iter().map(|c| c.weight).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let single = neighbor_weights(1, 1, 0.7, 0.2).unwrap();
        assert_eq!(single.iter().map(|c| c.weight).sum::<f64>(), 1.0);
        assert!(neighbor_weights(3, 4, 4.1, 0.0).is_err());
        assert!(neighbor_weights(3, 4, 0.0, -0.1).is_err());
    }

    #[test]
    fn output_sizes() {
        assert_eq!(output_size(16, 16, 3.5).unwrap(), (56, 56));
        assert_eq!(output_size(16, 12, 1.0).unwrap(), (16, 12));
        assert_eq!(output_size(10, 10, 1.7).unwrap(), (17, 17));
        assert!(output_size(4, 4, 0.1).is_err());
    }

    #[test]
    fn time_outside_unit_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let p = TemporalParams::seeded(&mut rng, 4, 2);
        assert!(temporal_attention(1.01, &p.mlp).is_err());
        assert!(temporal_attention(-0.01, &p.mlp).is_err());
        assert_eq!(temporal_attention(0.5, &p.mlp).unwrap().len(), 4);
    }
}
