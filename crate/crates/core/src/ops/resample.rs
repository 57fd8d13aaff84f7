use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Nearest-neighbour upsampling: `out[y][x] = in[y / f][x / f]`.
pub fn upsample_nearest<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if factor == 0 {
        return Err(invalid!("upsample factor must be positive"));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (ho, wo) = (h * factor, w * factor);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        for y in 0..ho {
            let row = &s[(y / factor) * w..(y / factor + 1) * w];
            for x in 0..wo {
                out.push(row[x / factor]);
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

pub fn upsample_nearest_backward<T: Scalar>(grad_out: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (n, c, ho, wo) = grad_out.dims4()?;
    let (h, w) = (ho / factor, wo / factor);
    let g = grad_out.data();
    let mut out = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        for y in 0..ho {
            for x in 0..wo {
                out[plane * h * w + (y / factor) * w + x / factor] += g[plane * ho * wo + y * wo + x];
            }
        }
    }
    Tensor::new(&[n, c, h, w], out)
}

/// Nearest-neighbour resize to an arbitrary target size (not differentiable).
pub fn resize_nearest<T: Scalar>(input: &Tensor<T>, ho: usize, wo: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if ho == 0 || wo == 0 {
        return Err(invalid!("resize target must be non-empty"));
    }
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        for y in 0..ho {
            let sy = (y * h) / ho;
            for x in 0..wo {
                out.push(src[plane * h * w + sy * w + (x * w) / wo]);
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

/// Bilinear resize with half-pixel centres (not differentiable).
pub fn resize_bilinear<T: Scalar>(input: &Tensor<T>, ho: usize, wo: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if ho == 0 || wo == 0 {
        return Err(invalid!("resize target must be non-empty"));
    }
    let coords = |out_len: usize, in_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = in_len as f64 / out_len as f64;
        (0..out_len)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_len - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = coords(ho, h);
    let xs = coords(wo, w);
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let a = s[y0 * w + x0].as_f64();
                let b = s[y0 * w + x1].as_f64();
                let cc = s[y1 * w + x0].as_f64();
                let d = s[y1 * w + x1].as_f64();
                let top = a + (b - a) * fx;
                let bot = cc + (d - cc) * fx;
                out.push(T::of(top + (bot - top) * fy));
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}
