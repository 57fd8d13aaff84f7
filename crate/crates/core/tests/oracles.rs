mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use nst_core::analysis::stats::{student_t_two_sided, Summary};
use nst_core::analysis::{linear_regression, paired_t_test, pca, percentile, BoxStats};
use nst_core::normalization::{adain_transfer, conditional_instance_norm, NormParams, NORM_EPS};
use nst_core::ops::{self, conv2d, gram_matrix, reflect_pad, spatial_moments, upsample_nearest, Pad4, Padding};
use nst_core::params::ParamSet;
use nst_core::training::{adam_update, AdamConfig, AdamState};
use nst_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn conv_matches_quadruple_loop() {
    let mut r = rng(1);
    let mut cases = 0;
    for &(h, w) in &[(5, 5), (6, 7), (9, 4), (8, 8)] {
        for &k in &[1, 3, 5] {
            for &stride in &[1, 2, 3] {
                for &padding in &[Padding::SameReflect, Padding::Valid] {
                    if padding == Padding::SameReflect && ((k - 1) / 2 >= h.min(w)) {
                        continue;
                    }
                    if padding == Padding::Valid && k > h.min(w) {
                        continue;
                    }
                    let (n, c, ko) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
                    let x = Tensor::<f64>::randn(&[n, c, h, w], 0.0, 1.0, &mut r);
                    let kt = Tensor::<f64>::randn(&[ko, c, k, k], 0.0, 1.0, &mut r);
                    let b = Tensor::<f64>::randn(&[ko], 0.0, 1.0, &mut r);
                    let got = conv2d(&x, &kt, &b, stride, padding).unwrap();
                    let want = naive_conv(&x, &kt, &b, stride, padding);
                    assert_eq!(got.shape(), want.shape());
                    let d = max_abs_diff(got.data(), want.data());
                    assert!(d <= 1e-12, "h={h} w={w} k={k} s={stride} {padding:?}: {d}");
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 60, "{cases}");
    for seed in 0..50 {
        let mut r = rng(100 + seed);
        let k = [1, 3][r.random_range(0..2)];
        let (h, w) = (r.random_range(k.max(2)..9), r.random_range(k.max(2)..9));
        let x = Tensor::<f64>::randn(&[2, 2, h, w], 0.0, 1.0, &mut r);
        let kt = Tensor::<f64>::randn(&[3, 2, k, k], 0.0, 1.0, &mut r);
        let b = Tensor::<f64>::zeros(&[3]);
        let s = r.random_range(1..3);
        let d = max_abs_diff(
            conv2d(&x, &kt, &b, s, Padding::SameReflect).unwrap().data(),
            naive_conv(&x, &kt, &b, s, Padding::SameReflect).data(),
        );
        assert!(d <= 1e-12);
    }
}

#[test]
fn reflect_pad_index_map() {
    let mut r = rng(2);
    for _ in 0..30 {
        let (h, w) = (r.random_range(2..7), r.random_range(2..7));
        let pad = Pad4 {
            top: r.random_range(0..h),
            bottom: r.random_range(0..h),
            left: r.random_range(0..w),
            right: r.random_range(0..w),
        };
        let x = Tensor::<f64>::randn(&[1, 2, h, w], 0.0, 1.0, &mut r);
        let y = reflect_pad(&x, pad).unwrap();
        let (_, _, ho, wo) = y.dims4().unwrap();
        assert_eq!((ho, wo), (h + pad.top + pad.bottom, w + pad.left + pad.right));
        for c in 0..2 {
            for yy in 0..ho {
                for xx in 0..wo {
                    let sy = mirror(yy as isize - pad.top as isize, h);
                    let sx = mirror(xx as isize - pad.left as isize, w);
                    assert_eq!(y.at4(0, c, yy, xx), x.at4(0, c, sy, sx));
                }
            }
        }
    }
}

#[test]
fn upsample_index_map() {
    let mut r = rng(3);
    for f in 1..4 {
        let x = Tensor::<f64>::randn(&[2, 3, 3, 4], 0.0, 1.0, &mut r);
        let y = upsample_nearest(&x, f).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3 * f, 4 * f]);
        for n in 0..2 {
            for c in 0..3 {
                for yy in 0..3 * f {
                    for xx in 0..4 * f {
                        assert_eq!(y.at4(n, c, yy, xx), x.at4(n, c, yy / f, xx / f));
                    }
                }
            }
        }
    }
}

#[test]
fn sigmoid_matches_double_double() {
    let mut r = rng(4);
    let mut xs: Vec<f64> = (0..2000).map(|_| r.random_range(-40.0..40.0)).collect();
    xs.extend([0.0, -0.0, 1e-300, -1e-300, 36.0, -36.0, -700.0, 700.0]);
    let t = Tensor::new(&[xs.len()], xs.clone()).unwrap();
    let got = ops::sigmoid(&t);
    for (x, g) in xs.iter().zip(got.data()) {
        let want = sigmoid_dd(*x);
        let rel = ((g - want) / want).abs();
        assert!(rel <= 4.0 * f64::EPSILON, "x={x}: {g} vs {want}");
    }
}

#[test]
fn moments_match_two_pass_oracle() {
    let mut r = rng(5);
    for _ in 0..50 {
        let x = Tensor::<f64>::randn(
            &[2, 3, 5, 6],
            r.random_range(-3.0..3.0),
            r.random_range(0.1..4.0),
            &mut r,
        );
        let (m, s) = spatial_moments(&x).unwrap();
        for (i, p) in planes(&x).iter().enumerate() {
            let (om, os) = plane_moments(p);
            assert!((m.data()[i] - om).abs() <= 1e-13);
            assert!((s.data()[i] - os).abs() <= 1e-13);
        }
    }
}

#[test]
fn gram_matches_pairwise_oracle() {
    for seed in 0..50 {
        let mut r = rng(600 + seed);
        let (n, c) = (r.random_range(1..3), r.random_range(1..6));
        let (h, w) = (r.random_range(1..8), r.random_range(1..8));
        let f = Tensor::<f64>::randn(&[n, c, h, w], 0.0, 1.0, &mut r);
        let g = gram_matrix(&f).unwrap();
        let want = pairwise_gram(&f);
        for ni in 0..n {
            for i in 0..c {
                for j in 0..c {
                    let v = g.data()[(ni * c + i) * c + j];
                    assert!((v - want[ni][i][j]).abs() <= 1e-10);
                    assert_eq!(v, g.data()[(ni * c + j) * c + i]);
                }
            }
            let m = DMatrix::from_fn(c, c, |i, j| g.data()[(ni * c + i) * c + j]);
            assert!(SymmetricEigen::new(m).eigenvalues.min() >= -1e-8);
        }
    }
}

#[test]
fn instance_norm_matches_moment_oracle() {
    let mut r = rng(7);
    for _ in 0..50 {
        let c = r.random_range(1..5);
        let x = Tensor::<f64>::randn(
            &[2, c, 4, 5],
            r.random_range(-2.0..2.0),
            r.random_range(0.05..3.0),
            &mut r,
        );
        let gamma = Tensor::<f64>::randn(&[c], 0.0, 2.0, &mut r);
        let beta = Tensor::<f64>::randn(&[c], 0.0, 2.0, &mut r);
        let p = NormParams::new(gamma.clone(), beta.clone(), "t").unwrap();
        let y = conditional_instance_norm(&x, &p, NORM_EPS).unwrap();
        for (i, (xp, yp)) in planes(&x).iter().zip(planes(&y)).enumerate() {
            let ci = i % c;
            let (_, sx) = plane_moments(xp);
            let (my, sy) = plane_moments(&yp);
            let want = gamma.data()[ci].abs() * sx / (sx * sx + NORM_EPS).sqrt();
            assert!((my - beta.data()[ci]).abs() <= 1e-12);
            assert!((sy - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn adain_carries_style_moments() {
    let mut r = rng(8);
    for _ in 0..50 {
        let c = r.random_range(1..5);
        let content = Tensor::<f64>::randn(&[1, c, 6, 6], 0.3, r.random_range(1.0..3.0), &mut r);
        let style = Tensor::<f64>::randn(&[1, c, 5, 7], -0.5, r.random_range(0.1..2.0), &mut r);
        let y = adain_transfer(&content, &style, NORM_EPS).unwrap();
        for ((yp, sp), cp) in planes(&y).iter().zip(planes(&style)).zip(planes(&content)) {
            let (my, sy) = plane_moments(yp);
            let (ms, ss) = plane_moments(&sp);
            let (_, sc) = plane_moments(&cp);
            assert!((my - ms).abs() <= 1e-12);
            assert!((sy - ss * sc / (sc * sc + NORM_EPS).sqrt()).abs() <= 1e-12);
            assert!((sy - ss).abs() <= 1e-5);
        }
    }
}

#[test]
fn primitive_gradients_match_central_differences() {
    for seed in 0..20u64 {
        for (name, rep) in primitive_checks(seed) {
            assert!(rep.max_rel_error <= PRIMITIVE_TOL, "{name} seed {seed}: {rep:?}");
        }
    }
}

#[test]
fn adam_matches_scalar_reference() {
    let mut r = rng(10);
    for _ in 0..20 {
        let cfg = AdamConfig {
            learning_rate: r.random_range(1e-4..1e-1),
            beta1: r.random_range(0.5..0.95),
            beta2: r.random_range(0.9..0.9999),
            eps: 1e-8,
        };
        let p0: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..15).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let mut params = ParamSet::new();
        params.insert("w", Tensor::new(&[4], p0.clone()).unwrap());
        let mut state = AdamState::new(&params, cfg);
        for step in 0..15 {
            let mut g = ParamSet::new();
            g.insert(
                "w",
                Tensor::new(&[4], grads.iter().map(|gs| gs[step]).collect()).unwrap(),
            );
            adam_update(&mut params, &g, &mut state).unwrap();
        }
        for i in 0..4 {
            let want = scalar_adam(p0[i], &grads[i], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
            let got = params.get("w").unwrap().data()[i];
            assert!(
                (got - want[14]).abs() <= 1e-14 * want[14].abs().max(1.0),
                "{got} vs {}",
                want[14]
            );
        }
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = ParamSet::new();
    params.insert("w", Tensor::new(&[3], vec![0.0, 1.0, -1.0]).unwrap());
    let mut state = AdamState::new(&params, AdamConfig::default());
    let mut g = ParamSet::new();
    g.insert("w", Tensor::new(&[3], vec![0.5, -3.0, 1e3]).unwrap());
    adam_update(&mut params, &g, &mut state).unwrap();
    let w = params.get("w").unwrap().data();
    for (got, want) in w.iter().zip([-0.001, 1.001, -1.001]) {
        assert!((got - want as f64).abs() < 1e-10);
    }
}

#[test]
fn t_test_matches_quadrature() {
    let mut r = rng(11);
    for case in 0..100 {
        let n = r.random_range(3..40);
        let shift = r.random_range(-1.0..1.0);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + shift + r.random_range(-1.0..1.0)).collect();
        let got = paired_t_test(&a, &b).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = m / (sd / (n as f64).sqrt());
        assert_eq!(got.dof, n - 1);
        assert!((got.t - t).abs() <= 1e-10 * t.abs().max(1.0));
        let want = t_two_sided_quadrature(t, (n - 1) as f64);
        assert!((got.p - want).abs() <= 1e-8, "case {case}: {} vs {want}", got.p);
    }
}

#[test]
fn t_distribution_reference_points() {
    // Two-sided critical values from standard tables.
    for (t, nu, p) in [
        (12.706, 1.0, 0.05),
        (2.228, 10.0, 0.05),
        (2.845, 20.0, 0.01),
        (1.96, 1e6, 0.05),
    ] {
        assert!((student_t_two_sided(t, nu) - p).abs() < 2e-4, "t={t} nu={nu}");
    }
    assert_eq!(student_t_two_sided(0.0, 5.0), 1.0);
}

#[test]
fn regression_matches_closed_form() {
    let mut r = rng(12);
    for _ in 0..100 {
        let n = r.random_range(3..30);
        let slope = r.random_range(-3.0..3.0);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| slope * v + 1.0 + r.random_range(-2.0..2.0)).collect();
        let reg = linear_regression(&x, &y).unwrap();
        assert!((reg.r2 - r_squared(&x, &y)).abs() <= 1e-10);
    }
    let reg = linear_regression(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
    assert_eq!((reg.slope, reg.intercept), (2.0, 1.0));
    assert!((reg.r2 - 1.0).abs() < 1e-15);
}

#[test]
fn percentiles_match_sorting() {
    let mut r = rng(13);
    for _ in 0..100 {
        let n = r.random_range(1..50);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        for p in [0.0, 10.0, 25.0, 50.0, 75.0, 90.0, 100.0, r.random_range(0.0..100.0)] {
            assert_eq!(percentile(&xs, p).unwrap(), sorted_percentile(&xs, p));
        }
        let b = BoxStats::of(&xs).unwrap();
        assert_eq!(b.q25, sorted_percentile(&xs, 25.0));
        assert_eq!(b.p90, sorted_percentile(&xs, 90.0));
    }
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((s.n, s.mean, s.median), (4, 2.5, 2.5));
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn pca_matches_covariance_eigendecomposition() {
    let mut r = rng(14);
    for _ in 0..20 {
        let (n, d) = (r.random_range(5..20), r.random_range(2..6));
        let scales: Vec<f64> = (0..d).map(|i| 3.0 / (i + 1) as f64).collect();
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| scales.iter().map(|s| r.random_range(-s..*s)).collect())
            .collect();
        let k = d.min(n - 1);
        let p = pca(&pts, k).unwrap();
        let mean: Vec<f64> = (0..d)
            .map(|j| pts.iter().map(|q| q[j]).sum::<f64>() / n as f64)
            .collect();
        let cov = DMatrix::from_fn(d, d, |i, j| {
            pts.iter().map(|q| (q[i] - mean[i]) * (q[j] - mean[j])).sum::<f64>() / (n - 1) as f64
        });
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        for (ci, &ei) in order.iter().take(k).enumerate() {
            assert!((p.explained_variance[ci] - eig.eigenvalues[ei]).abs() <= 1e-10);
            let v: Vec<f64> = eig.eigenvectors.column(ei).iter().copied().collect();
            let dot: f64 = v.iter().zip(&p.components[ci]).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() <= 1e-8, "component {ci}: |dot| = {}", dot.abs());
        }
        for (q, proj) in pts.iter().zip(&p.projections) {
            if k == d {
                assert!(max_abs_diff(&p.reconstruct(proj), q) <= 1e-10);
            }
        }
    }
}
