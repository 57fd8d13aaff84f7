use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-(sample, channel) spatial mean and population standard deviation.
pub fn spatial_moments<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = input.dims4()?;
    let hw = h * w;
    if hw == 0 {
        return Err(shape_err!("spatial moments need at least one position"));
    }
    let inv = T::one() / T::of(hw as f64);
    let mut mean = Vec::with_capacity(n * c);
    let mut std = Vec::with_capacity(n * c);
    for plane in input.data().chunks(hw) {
        let m = plane.iter().copied().sum::<T>() * inv;
        let var = plane.iter().map(|&v| (v - m) * (v - m)).sum::<T>() * inv;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok((Tensor::new(&[n, c], mean)?, Tensor::new(&[n, c], std)?))
}

pub fn spatial_mean<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    let hw = h * w;
    if hw == 0 {
        return Err(shape_err!("spatial mean needs at least one position"));
    }
    let inv = T::one() / T::of(hw as f64);
    let data = input
        .data()
        .chunks(hw)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new(&[n, c], data)
}

pub fn spatial_mean_backward<T: Scalar>(grad_out: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    let hw = input_shape[2] * input_shape[3];
    let inv = T::one() / T::of(hw as f64);
    let mut out = Vec::with_capacity(grad_out.len() * hw);
    for &g in grad_out.data() {
        out.extend(std::iter::repeat_n(g * inv, hw));
    }
    Tensor::new(input_shape, out)
}

/// Spatially averaged channel correlations: `G[i][j] = (1/HW) Σ_p f_i(p) f_j(p)`.
pub fn gram_matrix<T: Scalar>(features: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = features.dims4()?;
    let hw = h * w;
    if hw == 0 {
        return Err(shape_err!("gram matrix needs at least one position"));
    }
    let inv = T::one() / T::of(hw as f64);
    let f = features.data();
    let mut out = vec![T::zero(); n * c * c];
    for ni in 0..n {
        let base = ni * c * hw;
        for i in 0..c {
            let fi = &f[base + i * hw..base + (i + 1) * hw];
            for j in i..c {
                let fj = &f[base + j * hw..base + (j + 1) * hw];
                let dot: T = fi.iter().zip(fj).map(|(&a, &b)| a * b).sum();
                let v = dot * inv;
                out[ni * c * c + i * c + j] = v;
                out[ni * c * c + j * c + i] = v;
            }
        }
    }
    Tensor::new(&[n, c, c], out)
}

pub fn gram_backward<T: Scalar>(features: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = features.dims4()?;
    let hw = h * w;
    let inv = T::one() / T::of(hw as f64);
    let f = features.data();
    let g = grad_out.data();
    let mut out = vec![T::zero(); f.len()];
    for ni in 0..n {
        let base = ni * c * hw;
        for i in 0..c {
            let dst = &mut out[base + i * hw..base + (i + 1) * hw];
            for j in 0..c {
                let coef = (g[ni * c * c + i * c + j] + g[ni * c * c + j * c + i]) * inv;
                if coef == T::zero() {
                    continue;
                }
                let fj = &f[base + j * hw..base + (j + 1) * hw];
                for (d, &v) in dst.iter_mut().zip(fj) {
                    *d += coef * v;
                }
            }
        }
    }
    Tensor::new(features.shape(), out)
}

/// Dense layer `x[N,in] · weight[in,out] + bias[out]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, din) = x.dims2()?;
    let (win, dout) = weight.dims2()?;
    if win != din {
        return Err(shape_err!("linear layer expects {} inputs but got {}", win, din));
    }
    if bias.shape() != [dout] {
        return Err(shape_err!(
            "linear bias shape {:?} does not match {} outputs",
            bias.shape(),
            dout
        ));
    }
    let (xd, wd) = (x.data(), weight.data());
    let mut out = Vec::with_capacity(n * dout);
    for r in 0..n {
        let mut row = bias.data().to_vec();
        for (i, &xv) in xd[r * din..(r + 1) * din].iter().enumerate() {
            for (o, &wv) in row.iter_mut().zip(&wd[i * dout..(i + 1) * dout]) {
                *o += xv * wv;
            }
        }
        out.extend(row);
    }
    Tensor::new(&[n, dout], out)
}

/// Returns `(dx, dweight, dbias)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, din) = x.dims2()?;
    let (_, dout) = weight.dims2()?;
    let (xd, wd, g) = (x.data(), weight.data(), grad_out.data());
    let mut dx = vec![T::zero(); n * din];
    let mut dw = vec![T::zero(); din * dout];
    let mut db = vec![T::zero(); dout];
    for r in 0..n {
        let grow = &g[r * dout..(r + 1) * dout];
        for (b, &gv) in db.iter_mut().zip(grow) {
            *b += gv;
        }
        for i in 0..din {
            let wrow = &wd[i * dout..(i + 1) * dout];
            dx[r * din + i] = wrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
            let xv = xd[r * din + i];
            for (d, &gv) in dw[i * dout..(i + 1) * dout].iter_mut().zip(grow) {
                *d += xv * gv;
            }
        }
    }
    Ok((
        Tensor::new(&[n, din], dx)?,
        Tensor::new(&[din, dout], dw)?,
        Tensor::new(&[dout], db)?,
    ))
}
