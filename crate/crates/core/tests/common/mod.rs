//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nst_core::gradcheck::{grad_check, GradCheckReport};
use nst_core::ops::{Pad4, Padding};
use nst_core::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

/// Mirror index without repeating the edge: -1 -> 1, n -> n - 2.
pub fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Quadruple-loop cross-correlation reading padded samples through `mirror`.
pub fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize, padding: Padding) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let (ko, _, kh, kw) = k.dims4().unwrap();
    let (ph, pw) = match padding {
        Padding::SameReflect => ((kh - 1) / 2, (kw - 1) / 2),
        Padding::Valid => (0, 0),
    };
    let ho = (h + 2 * ph - kh) / stride + 1;
    let wo = (w + 2 * pw - kw) / stride + 1;
    let mut out = vec![0.0; n * ko * ho * wo];
    for ni in 0..n {
        for o in 0..ko {
            for y in 0..ho {
                for xo in 0..wo {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = mirror((y * stride + dy) as isize - ph as isize, h);
                                let ix = mirror((xo * stride + dx) as isize - pw as isize, w);
                                acc += x.at4(ni, ci, iy, ix) * k.at4(o, ci, dy, dx);
                            }
                        }
                    }
                    out[((ni * ko + o) * ho + y) * wo + xo] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, ko, ho, wo], out).unwrap()
}

/// Gram entries one pair at a time, accumulated in double-double.
pub fn pairwise_gram(f: &Tensor<f64>) -> Vec<Vec<Vec<f64>>> {
    let (n, c, h, w) = f.dims4().unwrap();
    (0..n)
        .map(|ni| {
            (0..c)
                .map(|i| {
                    (0..c)
                        .map(|j| {
                            let mut s = TwoFloat::from(0.0);
                            for y in 0..h {
                                for x in 0..w {
                                    s += TwoFloat::new_mul(f.at4(ni, i, y, x), f.at4(ni, j, y, x));
                                }
                            }
                            f64::from(s / (h * w) as f64)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Mean and population std of one plane, two passes in double-double.
pub fn plane_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut s = TwoFloat::from(0.0);
    for &v in values {
        s += v;
    }
    let m = s / n;
    let mut q = TwoFloat::from(0.0);
    for &v in values {
        let d = TwoFloat::from(v) - m;
        q += d * d;
    }
    (f64::from(m), f64::from(q / n).sqrt())
}

/// Planes of an `[N, C, H, W]` tensor in (n, c) order.
pub fn planes(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (_, _, h, w) = t.dims4().unwrap();
    t.data().chunks(h * w).map(|p| p.to_vec()).collect()
}

/// Logistic function evaluated in double-double. Only `exp` of a
/// non-negative argument is taken; twofloat's `exp` loses digits below zero.
pub fn sigmoid_dd(x: f64) -> f64 {
    let e = TwoFloat::from(x.abs()).exp();
    let one = TwoFloat::from(1.0);
    let s = if x >= 0.0 { e / (one + e) } else { one / (one + e) };
    f64::from(s)
}

/// One scalar Adam trajectory.
pub fn scalar_adam(p0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    let mut out = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
        out.push(p);
    }
    out
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-sided Student-t tail by quadrature. With `x = √ν tan θ` the density
/// becomes `C √ν cos^(ν-1) θ` on `[atan(|t|/√ν), π/2]`.
pub fn t_two_sided_quadrature(t: f64, nu: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let c = (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp() / (nu * std::f64::consts::PI).sqrt();
    let theta0 = (t.abs() / nu.sqrt()).atan();
    let f = |th: f64| th.cos().max(0.0).powf(nu - 1.0);
    2.0 * c * nu.sqrt() * integrate(&f, theta0, std::f64::consts::FRAC_PI_2, 1e-14)
}

/// Squared Pearson correlation.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - sx * sy / n;
    let sxx: f64 = x.iter().map(|a| a * a).sum::<f64>() - sx * sx / n;
    let syy: f64 = y.iter().map(|b| b * b).sum::<f64>() - sy * sy / n;
    sxy * sxy / (sxx * syy)
}

/// Linear interpolation between order statistics at rank `p/100 · (n − 1)`.
pub fn sorted_percentile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 {
        return v[lo];
    }
    v[lo] + (v[lo + 1] - v[lo]) * frac
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> nst_core::Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(Tensor::randn(&shape, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

pub fn away_from_zero(t: Tensor<f64>) -> Tensor<f64> {
    t.map(|v| if v.abs() < 0.05 { v + 0.1_f64.copysign(v) } else { v })
}

pub const PRIMITIVE_TOL: f64 = 1e-5;
/// Step for smooth nonlinear primitives.
pub const H: f64 = 1e-5;
/// Polynomial primitives (and ReLU away from its kink) have exact central
/// differences, so a large step only reduces roundoff.
pub const H_POLY: f64 = 1e-3;

/// Central-difference reports for every differentiable primitive at one seed.
pub fn primitive_checks(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut out = Vec::new();
    {
        let mut r = ChaCha8Rng::seed_from_u64(900 + seed);
        let x = Tensor::<f64>::randn(&[2, 2, 5, 6], 0.0, 1.0, &mut r);
        let k = Tensor::<f64>::randn(&[3, 2, 3, 3], 0.0, 0.5, &mut r);
        let b = Tensor::<f64>::randn(&[3], 0.0, 0.5, &mut r);
        let g = Tensor::<f64>::randn(&[2, 2], 1.0, 0.5, &mut r);
        let be = Tensor::<f64>::randn(&[2, 2], 0.0, 0.5, &mut r);
        let m = Tensor::<f64>::randn(&[4, 3], 0.0, 1.0, &mut r);
        let lw = Tensor::<f64>::randn(&[3, 5], 0.0, 1.0, &mut r);
        let lb = Tensor::<f64>::randn(&[5], 0.0, 1.0, &mut r);
        let s = seed;

        for stride in [1, 2] {
            for padding in [Padding::SameReflect, Padding::Valid] {
                let rep = grad_check(
                    |t, v| {
                        let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
                        weighted_sum(t, y, s)
                    },
                    &[x.clone(), k.clone(), b.clone()],
                    H_POLY,
                )
                .unwrap();
                out.push(("conv2d", rep));
            }
        }
        let pad = Pad4 {
            top: 1,
            bottom: 2,
            left: 3,
            right: 0,
        };
        let rep = grad_check(
            |t, v| {
                let y = t.reflect_pad(v[0], pad)?;
                weighted_sum(t, y, s)
            },
            std::slice::from_ref(&x),
            H_POLY,
        )
        .unwrap();
        out.push(("reflect_pad", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.upsample_nearest(v[0], 2)?;
                weighted_sum(t, y, s)
            },
            std::slice::from_ref(&x),
            H_POLY,
        )
        .unwrap();
        out.push(("upsample", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.relu(v[0]);
                weighted_sum(t, y, s)
            },
            &[away_from_zero(x.clone())],
            H_POLY,
        )
        .unwrap();
        out.push(("relu", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.sigmoid(v[0]);
                weighted_sum(t, y, s)
            },
            std::slice::from_ref(&x),
            H,
        )
        .unwrap();
        out.push(("sigmoid", rep));
        let y2 = x.map(|v| v * 0.7 - 0.2);
        let rep = grad_check(
            |t, v| {
                let a = t.add(v[0], v[1])?;
                let d = t.sub(a, v[1])?;
                let p = t.mul(d, v[1])?;
                let y = t.scale(p, 1.7);
                weighted_sum(t, y, s)
            },
            &[x.clone(), y2.clone()],
            H_POLY,
        )
        .unwrap();
        out.push(("pointwise", rep));
        for (gamma, beta) in [
            (g.clone(), be.clone()),
            (
                g.batch_item(0).reshape(&[2]).unwrap(),
                be.batch_item(1).reshape(&[2]).unwrap(),
            ),
        ] {
            let rep = grad_check(
                |t, v| {
                    let y = t.instance_norm(v[0], v[1], v[2], 1e-5)?;
                    weighted_sum(t, y, s)
                },
                &[x.clone(), gamma, beta],
                H,
            )
            .unwrap();
            out.push(("instance_norm", rep));
        }
        let rep = grad_check(
            |t, v| {
                let y = t.spatial_mean(v[0])?;
                weighted_sum(t, y, s)
            },
            std::slice::from_ref(&x),
            H_POLY,
        )
        .unwrap();
        out.push(("spatial_mean", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                weighted_sum(t, y, s)
            },
            &[m.clone(), lw.clone(), lb.clone()],
            H_POLY,
        )
        .unwrap();
        out.push(("linear", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.gram(v[0])?;
                weighted_sum(t, y, s)
            },
            std::slice::from_ref(&x),
            H_POLY,
        )
        .unwrap();
        out.push(("gram", rep));
        let rep = grad_check(
            |t, v| {
                let y = t.slice_cols(v[0], 1, 2)?;
                let q = t.sum_squares(y);
                let z = t.linear(v[0], v[1], v[2])?;
                let z = weighted_sum(t, z, s)?;
                t.add(q, z)
            },
            &[m.clone(), lw.clone(), lb.clone()],
            H_POLY,
        )
        .unwrap();
        out.push(("slice_cols/sum_squares", rep));
    }
    out
}
