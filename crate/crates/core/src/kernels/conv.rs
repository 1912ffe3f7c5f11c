use rand::Rng;
use rayon::prelude::*;

use super::init_uniform;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2-D convolution with a square `k×k` kernel, weight `[out, in, k, k]`,
/// zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let ok = weight.ndim() == 4 && weight.shape()[2] == weight.shape()[3] && bias.shape() == [weight.shape()[0]];
        if !ok || stride == 0 {
            return Err(Error::invalid(format!(
                "convolution needs weight [out, in, k, k], bias [out] and stride >= 1; got {:?}, {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias, stride, padding })
    }

    pub fn seeded<R: Rng + ?Sized>(
        rng: &mut R,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = inputs * kernel * kernel;
        Self {
            weight: init_uniform(rng, &[outputs, inputs, kernel, kernel], fan_in),
            bias: init_uniform(rng, &[outputs], fan_in),
            stride,
            padding,
        }
    }

    /// `1×1` convolution that copies its input.
    pub fn identity(channels: usize) -> Self {
        let mut w = Tensor::zeros(&[channels, channels, 1, 1]);
        for c in 0..channels {
            w.data_mut()[c * channels + c] = 1.0;
        }
        Self { weight: w, bias: Tensor::zeros(&[channels]), stride: 1, padding: 0 }
    }

    /// `k×k` convolution whose centre tap copies each channel.
    pub fn identity_kernel(channels: usize, kernel: usize) -> Self {
        let mut w = Tensor::zeros(&[channels, channels, kernel, kernel]);
        let mid = kernel / 2;
        for c in 0..channels {
            w.data_mut()[((c * channels + c) * kernel + mid) * kernel + mid] = 1.0;
        }
        Self { weight: w, bias: Tensor::zeros(&[channels]), stride: 1, padding: kernel / 2 }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

/// Convolves a `[B, C, H, W]` or `[C, H, W]` tensor.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let (batch, c, h, w, batched) = match x.shape() {
        &[b, c, h, w] => (b, c, h, w, true),
        &[c, h, w] => (1, c, h, w, false),
        s => return Err(Error::invalid(format!("convolution expects [B, C, H, W] or [C, H, W], got {s:?}"))),
    };
    if c != p.inputs() {
        return Err(Error::invalid(format!("convolution expects {} input channels, got {c}", p.inputs())));
    }
    let (k, s, pad) = (p.kernel(), p.stride, p.padding);
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::invalid(format!("{h}x{w} input is smaller than the {k}x{k} kernel")));
    }
    let oh = (h + 2 * pad - k) / s + 1;
    let ow = (w + 2 * pad - k) / s + 1;
    let co = p.outputs();
    let wt = p.weight.data();
    let bias = p.bias.data();
    let src = x.data();

    let planes: Vec<Vec<f32>> = (0..batch * co)
        .into_par_iter()
        .map(|job| {
            let (bi, o) = (job / co, job % co);
            let mut plane = vec![0.0f32; oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o] as f64;
                    for ci in 0..c {
                        let in_plane = &src[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                        let kern = &wt[(o * c + ci) * k * k..(o * c + ci + 1) * k * k];
                        for ky in 0..k {
                            let iy = (oy * s + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * s + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += kern[ky * k + kx] as f64 * in_plane[iy as usize * w + ix as usize] as f64;
                            }
                        }
                    }
                    plane[oy * ow + ox] = acc as f32;
                }
            }
            plane
        })
        .collect();
    let data: Vec<f32> = planes.into_iter().flatten().collect();
    let shape = if batched { vec![batch, co, oh, ow] } else { vec![co, oh, ow] };
    Tensor::from_vec(shape, data).map_err(|_| Error::Numeric("convolution produced a non-finite value".into()))
}

/// Strided `2×2` convolution that halves the resolution and keeps the
/// channel count.
pub fn downsample_half(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let nd = x.ndim();
    if nd < 3 {
        return Err(Error::invalid("downsample expects [.., C, H, W]"));
    }
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("downsample needs even dimensions, got {h}x{w}")));
    }
    if p.kernel() != 2 || p.stride != 2 || p.padding != 0 || p.inputs() != p.outputs() {
        return Err(Error::invalid("downsample needs a channel-preserving 2x2 stride-2 convolution"));
    }
    conv2d(x, p)
}

/// Nearest-neighbour ×2 on the trailing axes.
pub fn upsample_nearest(x: &Tensor) -> Result<Tensor> {
    let nd = x.ndim();
    if nd < 2 {
        return Err(Error::invalid("upsample expects at least two axes"));
    }
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    let mut out = Vec::with_capacity(x.len() * 4);
    for plane in x.data().chunks(h * w) {
        for y in 0..2 * h {
            let row = &plane[(y / 2) * w..(y / 2 + 1) * w];
            for xx in 0..2 * w {
                out.push(row[xx / 2]);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[nd - 2] *= 2;
    shape[nd - 1] *= 2;
    Tensor::from_vec(shape, out)
}

/// Nearest-neighbour ×2 followed by a channel-preserving `3×3` convolution.
pub fn upsample_double(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    if p.kernel() != 3 || p.stride != 1 || p.padding != 1 || p.inputs() != p.outputs() {
        return Err(Error::invalid("upsample needs a channel-preserving 3x3 convolution with padding 1"));
    }
    conv2d(&upsample_nearest(x)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = init_uniform(&mut rng, &[2, 3, 8, 8], 1);
        let down = ConvParams::seeded(&mut rng, 3, 3, 2, 2, 0);
        let up = ConvParams::seeded(&mut rng, 3, 3, 3, 1, 1);
        assert_eq!(downsample_half(&x, &down).unwrap().shape(), &[2, 3, 4, 4]);
        assert_eq!(upsample_double(&x, &up).unwrap().shape(), &[2, 3, 16, 16]);
        let mut y = x.clone();
        for _ in 0..3 {
            y = downsample_half(&y, &down).unwrap();
        }
        assert_eq!(y.shape(), &[2, 3, 1, 1]);
        assert!(downsample_half(&Tensor::zeros(&[3, 5, 4]), &down).is_err());
    }

    #[test]
    fn identity_upsample_keeps_constant_field() {
        let x = Tensor::filled(&[2, 3, 3], 0.75);
        let y = upsample_double(&x, &ConvParams::identity_kernel(2, 3)).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn one_by_one_matches_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ConvParams::seeded(&mut rng, 3, 2, 1, 1, 0);
        let x = init_uniform(&mut rng, &[3, 2, 2], 1);
        let y = conv2d(&x, &p).unwrap();
        for o in 0..2 {
            for px in 0..4 {
                let mut e = p.bias.data()[o] as f64;
                for c in 0..3 {
                    e += p.weight.data()[o * 3 + c] as f64 * x.data()[c * 4 + px] as f64;
                }
                assert!((y.data()[o * 4 + px] as f64 - e).abs() < 1e-6);
            }
        }
    }
}
