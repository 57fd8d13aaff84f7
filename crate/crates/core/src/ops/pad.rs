use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-side spatial extents: top, bottom, left, right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pad4 {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad4 {
    pub fn uniform(p: usize) -> Self {
        Pad4 {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    pub fn symmetric(py: usize, px: usize) -> Self {
        Pad4 {
            top: py,
            bottom: py,
            left: px,
            right: px,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Pad4::default()
    }
}

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

fn check_pad(h: usize, w: usize, pad: Pad4) -> Result<()> {
    if pad.top >= h || pad.bottom >= h {
        return Err(invalid!(
            "reflect pad {}/{} must be smaller than height {}",
            pad.top,
            pad.bottom,
            h
        ));
    }
    if pad.left >= w || pad.right >= w {
        return Err(invalid!(
            "reflect pad {}/{} must be smaller than width {}",
            pad.left,
            pad.right,
            w
        ));
    }
    Ok(())
}

pub fn reflect_pad<T: Scalar>(input: &Tensor<T>, pad: Pad4) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    check_pad(h, w, pad)?;
    if pad.is_zero() {
        return Ok(input.clone());
    }
    let ho = h + pad.top + pad.bottom;
    let wo = w + pad.left + pad.right;
    let src = input.data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    let cols: Vec<usize> = (0..wo)
        .map(|x| reflect_index(x as isize - pad.left as isize, w))
        .collect();
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
        for y in 0..ho {
            let sy = reflect_index(y as isize - pad.top as isize, h);
            let row = &s[sy * w..(sy + 1) * w];
            for (dst, &sx) in d[y * wo..(y + 1) * wo].iter_mut().zip(&cols) {
                *dst = row[sx];
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

/// Adjoint of [`reflect_pad`]: mirrored gradient contributions are summed back.
pub fn reflect_pad_backward<T: Scalar>(grad_out: &Tensor<T>, input_shape: &[usize], pad: Pad4) -> Result<Tensor<T>> {
    let (n, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (_, _, ho, wo) = grad_out.dims4()?;
    let g = grad_out.data();
    let mut out = vec![T::zero(); n * c * h * w];
    let cols: Vec<usize> = (0..wo)
        .map(|x| reflect_index(x as isize - pad.left as isize, w))
        .collect();
    for plane in 0..n * c {
        let s = &g[plane * ho * wo..(plane + 1) * ho * wo];
        let d = &mut out[plane * h * w..(plane + 1) * h * w];
        for y in 0..ho {
            let sy = reflect_index(y as isize - pad.top as isize, h);
            for (x, &sx) in cols.iter().enumerate() {
                d[sy * w + sx] += s[y * wo + x];
            }
        }
    }
    Tensor::new(input_shape, out)
}

/// Removes `pad` extents from each side; inverse of [`reflect_pad`] on the interior.
pub fn crop<T: Scalar>(input: &Tensor<T>, pad: Pad4) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if pad.top + pad.bottom > h || pad.left + pad.right > w {
        return Err(invalid!("crop {:?} exceeds spatial dims {}×{}", pad, h, w));
    }
    let ho = h - pad.top - pad.bottom;
    let wo = w - pad.left - pad.right;
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        for y in 0..ho {
            let start = plane * h * w + (y + pad.top) * w + pad.left;
            out.extend_from_slice(&src[start..start + wo]);
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}
