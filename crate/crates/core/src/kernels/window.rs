use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Regroups `[L, C, H, W]` into `[L·(H/M)·(W/M), M·M, C]`.
///
/// Window `(l, wy, wx)` has index `(l·H/M + wy)·W/M + wx`; tokens inside a
/// window are in raster order.
pub fn window_partition(x: &Tensor, m: usize) -> Result<Tensor> {
    let [l, c, h, w] = dims4(x)?;
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::invalid(format!("window size {m} does not divide {h}x{w}")));
    }
    let (nh, nw) = (h / m, w / m);
    let src = x.data();
    let mut out = vec![0.0f32; x.len()];
    let mut o = 0;
    for li in 0..l {
        for wy in 0..nh {
            for wx in 0..nw {
                for iy in 0..m {
                    for ix in 0..m {
                        let (y, xx) = (wy * m + iy, wx * m + ix);
                        for ci in 0..c {
                            out[o] = src[((li * c + ci) * h + y) * w + xx];
                            o += 1;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![l * nh * nw, m * m, c], out)
}

/// Inverse of [`window_partition`].
pub fn window_unpartition(windows: &Tensor, levels: usize, h: usize, w: usize, m: usize) -> Result<Tensor> {
    if windows.ndim() != 3 || m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
        return Err(Error::invalid(format!("cannot unpartition {:?} into {h}x{w} with M={m}", windows.shape())));
    }
    let (nh, nw) = (h / m, w / m);
    let c = windows.shape()[2];
    if windows.shape()[0] != levels * nh * nw || windows.shape()[1] != m * m {
        return Err(Error::invalid(format!(
            "window tensor {:?} inconsistent with L={levels}, {h}x{w}, M={m}",
            windows.shape()
        )));
    }
    let src = windows.data();
    let mut out = vec![0.0f32; windows.len()];
    let mut o = 0;
    for li in 0..levels {
        for wy in 0..nh {
            for wx in 0..nw {
                for iy in 0..m {
                    for ix in 0..m {
                        let (y, xx) = (wy * m + iy, wx * m + ix);
                        for ci in 0..c {
                            out[((li * c + ci) * h + y) * w + xx] = src[o];
                            o += 1;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![levels, c, h, w], out)
}

/// Circular roll over the two trailing axes:
/// `out[.., i, j] = x[.., (i + offset) mod H, (j + offset) mod W]`.
pub fn cyclic_shift(x: &Tensor, offset: isize) -> Result<Tensor> {
    if x.ndim() < 2 {
        return Err(Error::invalid("cyclic shift needs at least two axes"));
    }
    let nd = x.ndim();
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    if h == 0 || w == 0 {
        return Ok(x.clone());
    }
    let dy = offset.rem_euclid(h as isize) as usize;
    let dx = offset.rem_euclid(w as isize) as usize;
    let mut out = Vec::with_capacity(x.len());
    for plane in x.data().chunks(h * w) {
        for i in 0..h {
            let row = &plane[((i + dy) % h) * w..((i + dy) % h + 1) * w];
            out.extend_from_slice(&row[dx..]);
            out.extend_from_slice(&row[..dx]);
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

fn dims4(x: &Tensor) -> Result<[usize; 4]> {
    match x.shape() {
        &[l, c, h, w] => Ok([l, c, h, w]),
        s => Err(Error::invalid(format!("expected a 4-D [L, C, H, W] tensor, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape.to_vec(), (0..n).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn single_window_is_raster_order() {
        let x = ramp(&[1, 1, 4, 4]);
        let p = window_partition(&x, 4).unwrap();
        assert_eq!(p.shape(), &[1, 16, 1]);
        assert_eq!(p.data(), x.data());
    }

    #[test]
    fn ramp_8x8_matches_index_map() {
        let x = ramp(&[1, 1, 8, 8]);
        let p = window_partition(&x, 4).unwrap();
        assert_eq!(p.shape(), &[4, 16, 1]);
        // Enumerate the index map independently: window (wy, wx), token (iy, ix).
        let mut expect = Vec::new();
        for wy in 0..2 {
            for wx in 0..2 {
                for iy in 0..4 {
                    for ix in 0..4 {
                        expect.push(((wy * 4 + iy) * 8 + wx * 4 + ix) as f32);
                    }
                }
            }
        }
        assert_eq!(p.data(), &expect[..]);
    }

    #[test]
    fn partition_round_trip() {
        let x = ramp(&[3, 5, 8, 12]);
        let p = window_partition(&x, 4).unwrap();
        assert_eq!(window_unpartition(&p, 3, 8, 12, 4).unwrap(), x);
        assert!(window_partition(&ramp(&[1, 1, 6, 8]), 4).is_err());
        assert!(window_unpartition(&p, 2, 8, 12, 4).is_err());
    }

    #[test]
    fn shift_matches_modular_oracle() {
        let x = ramp(&[4, 4]);
        let s = cyclic_shift(&x, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.data()[i * 4 + j], x.data()[((i + 2) % 4) * 4 + (j + 2) % 4]);
            }
        }
        assert_eq!(cyclic_shift(&x, 0).unwrap(), x);
        assert_eq!(cyclic_shift(&cyclic_shift(&x, 3).unwrap(), -3).unwrap(), x);
    }
}
