//! PSNR and SSIM evaluation, on luma or on all RGB channels.

use crate::error::{Error, Result};
use crate::event_model::IntensityFrame;

/// BT.601 luma weights.
pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    YOnly,
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub channel_mode: ChannelMode,
}

pub fn rgb_to_y(frame: &IntensityFrame) -> Result<IntensityFrame> {
    if frame.channels() != 3 {
        return Err(Error::invalid(format!("luma conversion needs 3 channels, got {}", frame.channels())));
    }
    let luma = frame
        .pixels()
        .chunks(3)
        .map(|p| (LUMA_R * p[0] + LUMA_G * p[1] + LUMA_B * p[2]).clamp(0.0, 1.0))
        .collect();
    IntensityFrame::new(frame.timestamp(), frame.width(), frame.height(), 1, luma)
}

/// `10·log10(peak² / MSE)` over two equally sized buffers.
pub fn psnr_slices(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!("PSNR inputs differ in size ({} vs {})", a.len(), b.len())));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("PSNR peak must be positive"));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr(a: &IntensityFrame, b: &IntensityFrame, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    psnr_slices(a.pixels(), b.pixels(), peak)
}

fn same_shape(a: &IntensityFrame, b: &IntensityFrame) -> Result<()> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.into_iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    w
}

/// Mean SSIM of two single-plane images (row-major, `w×h`) with an 11×11
/// Gaussian window (σ = 1.5), `K1 = 0.01`, `K2 = 0.03` and dynamic range 1.
/// Only fully covered window positions are used.
pub fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<f64> {
    if a.len() != w * h || b.len() != w * h {
        return Err(Error::invalid("SSIM plane sizes do not match dimensions"));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let g = win[ky * SSIM_WINDOW + kx];
                    let i = (y + ky) * w + x + kx;
                    let (va, vb) = (a[i], b[i]);
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// SSIM of two single-channel frames.
pub fn ssim(a: &IntensityFrame, b: &IntensityFrame) -> Result<f64> {
    same_shape(a, b)?;
    if a.channels() != 1 {
        return Err(Error::invalid("ssim expects single-channel frames; convert with rgb_to_y"));
    }
    ssim_plane(a.pixels(), b.pixels(), a.width(), a.height())
}

fn plane(frame: &IntensityFrame, c: usize, border: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (frame.width() - 2 * border, frame.height() - 2 * border);
    let mut out = Vec::with_capacity(w * h);
    for y in border..border + h {
        for x in border..border + w {
            out.push(frame.get(x, y, c));
        }
    }
    (out, w, h)
}

/// PSNR (peak 1) and SSIM of `pred` against `gt`, optionally on luma only
/// and after removing `border` pixels from every side.
pub fn evaluate(pred: &IntensityFrame, gt: &IntensityFrame, mode: ChannelMode, border: usize) -> Result<MetricReport> {
    same_shape(pred, gt)?;
    if 2 * border >= pred.width() || 2 * border >= pred.height() {
        return Err(Error::invalid(format!("border crop {border} removes the whole image")));
    }
    let (p, g) = match (mode, pred.channels()) {
        (ChannelMode::YOnly, 3) => (rgb_to_y(pred)?, rgb_to_y(gt)?),
        _ => (pred.clone(), gt.clone()),
    };
    let planes: Vec<_> = (0..p.channels()).map(|c| (plane(&p, c, border), plane(&g, c, border))).collect();
    let all_p: Vec<f64> = planes.iter().flat_map(|((v, _, _), _)| v.iter().copied()).collect();
    let all_g: Vec<f64> = planes.iter().flat_map(|(_, (v, _, _))| v.iter().copied()).collect();
    let psnr = psnr_slices(&all_p, &all_g, 1.0)?;
    let mut ssim_sum = 0.0;
    for ((pa, w, h), (ga, _, _)) in &planes {
        ssim_sum += ssim_plane(pa, ga, *w, *h)?;
    }
    Ok(MetricReport { psnr, ssim: ssim_sum / planes.len() as f64, channel_mode: mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(px: [f64; 3]) -> IntensityFrame {
        IntensityFrame::new(0, 1, 1, 3, px.to_vec()).unwrap()
    }

    #[test]
    fn luma_coefficients() {
        assert!((rgb_to_y(&rgb([0.4, 0.4, 0.4])).unwrap().pixels()[0] - 0.4).abs() < 1e-15);
        assert_eq!(rgb_to_y(&rgb([1.0, 0.0, 0.0])).unwrap().pixels()[0], 0.299);
        assert_eq!(rgb_to_y(&rgb([0.0, 0.0, 1.0])).unwrap().pixels()[0], 0.114);
        let gray = IntensityFrame::filled(0, 1, 1, 1, 0.2).unwrap();
        assert!(rgb_to_y(&gray).is_err());
    }

    #[test]
    fn psnr_basics() {
        let a = IntensityFrame::filled(0, 4, 4, 1, 0.5).unwrap();
        let b = IntensityFrame::filled(0, 4, 4, 1, 0.5 + 1.0 / 255.0).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 48.1308).abs() < 1e-3, "{v}");
        assert_eq!(v, psnr(&b, &a, 1.0).unwrap());
        let c = IntensityFrame::filled(0, 3, 4, 1, 0.5).unwrap();
        assert!(psnr(&a, &c, 1.0).is_err());
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = IntensityFrame::filled(0, 10, 12, 1, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn border_crop_bounds() {
        let a = IntensityFrame::filled(0, 12, 12, 1, 0.5).unwrap();
        assert!(evaluate(&a, &a, ChannelMode::YOnly, 6).is_err());
        let r = evaluate(&a, &a, ChannelMode::Rgb, 0).unwrap();
        assert_eq!(r.psnr, f64::INFINITY);
        assert!((r.ssim - 1.0).abs() < 1e-12);
    }
}
