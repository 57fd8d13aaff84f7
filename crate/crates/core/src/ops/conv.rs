use rayon::prelude::*;

use super::pad::{reflect_pad, Pad4};
use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Reflect-pad by `(k - 1) / 2` on each side, then convolve without padding.
    SameReflect,
    Valid,
}

impl Padding {
    pub fn extents(self, kh: usize, kw: usize) -> Pad4 {
        match self {
            Padding::SameReflect => Pad4::symmetric((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => Pad4::default(),
        }
    }
}

/// Output spatial dims of a convolution, validating the geometry.
pub fn conv2d_output_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(invalid!("stride must be positive"));
    }
    if h == 0 || w == 0 {
        return Err(shape_err!("input spatial dims must be at least 1, got {}×{}", h, w));
    }
    if kh == 0 || kw == 0 {
        return Err(shape_err!("kernel spatial dims must be at least 1"));
    }
    let (hp, wp) = match padding {
        Padding::SameReflect => {
            if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
                return Err(invalid!(
                    "same-reflect padding needs odd kernel dims, got {}×{}",
                    kh,
                    kw
                ));
            }
            let p = padding.extents(kh, kw);
            if p.top >= h || p.left >= w {
                return Err(invalid!(
                    "kernel {}×{} needs reflect pad {}×{} which is not smaller than input {}×{}",
                    kh,
                    kw,
                    p.top,
                    p.left,
                    h,
                    w
                ));
            }
            (h + 2 * p.top, w + 2 * p.left)
        }
        Padding::Valid => (h, w),
    };
    if hp < kh || wp < kw {
        return Err(shape_err!(
            "kernel {}×{} larger than (padded) input {}×{}",
            kh,
            kw,
            hp,
            wp
        ));
    }
    Ok(((hp - kh) / stride + 1, (wp - kw) / stride + 1))
}

fn check_operands<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (_, c, _, _) = input.dims4()?;
    let (k, kc, kh, kw) = kernel.dims4()?;
    if kc != c {
        return Err(shape_err!("kernel expects {} input channels but input has {}", kc, c));
    }
    if bias.shape() != [k] {
        return Err(shape_err!(
            "bias shape {:?} does not match {} output channels",
            bias.shape(),
            k
        ));
    }
    Ok((k, kc, kh, kw))
}

/// 2-D cross-correlation, `input[N,C,H,W] * kernel[K,C,kh,kw] + bias[K]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (_, _, h, w) = input.dims4()?;
    let (_, _, kh, kw) = check_operands(input, kernel, bias)?;
    conv2d_output_dims(h, w, kh, kw, stride, padding)?;
    match padding {
        Padding::Valid => conv2d_valid(input, kernel, bias, stride),
        Padding::SameReflect => {
            let padded = reflect_pad(input, padding.extents(kh, kw))?;
            conv2d_valid(&padded, kernel, bias, stride)
        }
    }
}

/// Unpadded strided convolution.
pub fn conv2d_valid<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    let (k, _, kh, kw) = check_operands(input, kernel, bias)?;
    let (ho, wo) = conv2d_output_dims(h, w, kh, kw, stride, Padding::Valid)?;
    let src = input.data();
    let ker = kernel.data();
    let b = bias.data();
    let mut out = vec![T::zero(); n * k * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(plane, dst)| {
        let (ni, ki) = (plane / k, plane % k);
        dst.fill(b[ki]);
        for ci in 0..c {
            let s = &src[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            let kplane = &ker[(ki * c + ci) * kh * kw..(ki * c + ci + 1) * kh * kw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = kplane[ky * kw + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..ho {
                        let row = &s[(oy * stride + ky) * w + kx..];
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            for (d, &v) in drow.iter_mut().zip(&row[..wo]) {
                                *d += wv * v;
                            }
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new(&[n, k, ho, wo], out)
}

/// Gradients of [`conv2d_valid`] with respect to input, kernel and bias.
///
/// Input and kernel gradients are only computed when requested.
#[allow(clippy::type_complexity)]
pub fn conv2d_valid_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    need_input: bool,
    need_kernel: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Tensor<T>)> {
    let (n, c, h, w) = input.dims4()?;
    let (k, _, kh, kw) = kernel.dims4()?;
    let (_, _, ho, wo) = grad_out.dims4()?;
    let g = grad_out.data();
    let src = input.data();
    let ker = kernel.data();

    let mut db = vec![T::zero(); k];
    for ni in 0..n {
        for (ki, acc) in db.iter_mut().enumerate() {
            let plane = &g[(ni * k + ki) * ho * wo..(ni * k + ki + 1) * ho * wo];
            *acc += plane.iter().copied().sum::<T>();
        }
    }

    let dx = if need_input {
        let mut dx = vec![T::zero(); n * c * h * w];
        dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
            let (ni, ci) = (plane / c, plane % c);
            for ki in 0..k {
                let gp = &g[(ni * k + ki) * ho * wo..(ni * k + ki + 1) * ho * wo];
                let kplane = &ker[(ki * c + ci) * kh * kw..(ki * c + ci + 1) * kh * kw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = kplane[ky * kw + kx];
                        for oy in 0..ho {
                            let base = (oy * stride + ky) * w + kx;
                            let grow = &gp[oy * wo..(oy + 1) * wo];
                            for (ox, &gv) in grow.iter().enumerate() {
                                dst[base + ox * stride] += wv * gv;
                            }
                        }
                    }
                }
            }
        });
        Some(Tensor::new(&[n, c, h, w], dx)?)
    } else {
        None
    };

    let dk = if need_kernel {
        let mut dk = vec![T::zero(); k * c * kh * kw];
        dk.par_chunks_mut(c * kh * kw).enumerate().for_each(|(ki, dst)| {
            for ni in 0..n {
                let gp = &g[(ni * k + ki) * ho * wo..(ni * k + ki + 1) * ho * wo];
                for ci in 0..c {
                    let s = &src[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let mut acc = T::zero();
                            for oy in 0..ho {
                                let row = &s[(oy * stride + ky) * w + kx..];
                                let grow = &gp[oy * wo..(oy + 1) * wo];
                                for (ox, &gv) in grow.iter().enumerate() {
                                    acc += gv * row[ox * stride];
                                }
                            }
                            dst[(ci * kh + ky) * kw + kx] += acc;
                        }
                    }
                }
            }
        });
        Some(Tensor::new(kernel.shape(), dk)?)
    } else {
        None
    };

    Ok((dx, dk, Tensor::new(&[k], db)?))
}
