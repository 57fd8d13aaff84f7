//! Random flip, rescale-and-crop, hue rotation and contrast for style images.

use rand::Rng;

use crate::error::Result;
use crate::ops::{crop, reflect_pad, resize_bilinear, Pad4};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub flip_prob: f64,
    /// Uniform rescale factor range.
    pub rescale: (f64, f64),
    /// Maximum absolute hue rotation, radians.
    pub hue: f64,
    /// Uniform contrast factor range.
    pub contrast: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            flip_prob: 0.5,
            rescale: (0.8, 1.2),
            hue: 0.1,
            contrast: (0.8, 1.2),
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn flip_horizontal<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, _, _, w) = img.dims4()?;
    let mut out = img.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    Ok(out)
}

/// Rescales by `factor`, then reflect-pads or randomly crops back to the original size.
fn rescale_crop<T: Scalar, R: Rng + ?Sized>(img: &Tensor<T>, factor: f64, rng: &mut R) -> Result<Tensor<T>> {
    let (_, _, h, w) = img.dims4()?;
    let nh = ((h as f64 * factor).round() as usize).max(1);
    let nw = ((w as f64 * factor).round() as usize).max(1);
    let mut t = resize_bilinear(img, nh, nw)?;
    if nh < h || nw < w {
        let (dy, dx) = (h.saturating_sub(nh), w.saturating_sub(nw));
        t = reflect_pad(
            &t,
            Pad4 {
                top: dy / 2,
                bottom: dy - dy / 2,
                left: dx / 2,
                right: dx - dx / 2,
            },
        )?;
    }
    let (_, _, th, tw) = t.dims4()?;
    let oy = if th > h { rng.random_range(0..=th - h) } else { 0 };
    let ox = if tw > w { rng.random_range(0..=tw - w) } else { 0 };
    crop(
        &t,
        Pad4 {
            top: oy,
            bottom: th - h - oy,
            left: ox,
            right: tw - w - ox,
        },
    )
}

/// Rotation of RGB vectors about the gray axis by `angle` radians.
fn hue_matrix(angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let k = 1.0 / 3.0f64.sqrt();
    let t = 1.0 - c;
    // Rodrigues: c·I + s·[k]x + t·k kᵀ with k = (1,1,1)/√3
    let a = c + t * k * k;
    let b = t * k * k - s * k;
    let d = t * k * k + s * k;
    [[a, b, d], [d, a, b], [b, d, a]]
}

fn rotate_hue<T: Scalar>(img: &Tensor<T>, angle: f64) -> Result<Tensor<T>> {
    let (n, c, h, w) = img.dims4()?;
    if c != 3 {
        return Ok(img.clone());
    }
    let m = hue_matrix(angle);
    let hw = h * w;
    let src = img.data();
    let mut out = src.to_vec();
    for ni in 0..n {
        let base = ni * 3 * hw;
        for p in 0..hw {
            let rgb = [
                src[base + p].as_f64(),
                src[base + hw + p].as_f64(),
                src[base + 2 * hw + p].as_f64(),
            ];
            for (ch, row) in m.iter().enumerate() {
                out[base + ch * hw + p] = T::of(row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2]);
            }
        }
    }
    Tensor::new(img.shape(), out)
}

fn scale_contrast<T: Scalar>(img: &Tensor<T>, factor: f64) -> Result<Tensor<T>> {
    let (_, _, h, w) = img.dims4()?;
    let mut out = img.clone();
    let f = T::of(factor);
    for plane in out.data_mut().chunks_mut(h * w) {
        let mean = plane.iter().copied().sum::<T>() / T::of((h * w) as f64);
        for v in plane.iter_mut() {
            *v = (*v - mean) * f + mean;
        }
    }
    Ok(out)
}

/// Applies the enabled augmentations in a fixed order, then clamps to [0, 1].
pub fn augment_style<T: Scalar, R: Rng + ?Sized>(
    image: &Tensor<T>,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if !config.enabled {
        return Ok(image.clone());
    }
    let mut img = image.clone();
    if config.flip_prob > 0.0 && rng.random_bool(config.flip_prob.min(1.0)) {
        img = flip_horizontal(&img)?;
    }
    let factor = uniform(rng, config.rescale);
    if factor != 1.0 {
        img = rescale_crop(&img, factor, rng)?;
    }
    let angle = uniform(rng, (-config.hue, config.hue));
    if angle != 0.0 {
        img = rotate_hue(&img, angle)?;
    }
    let contrast = uniform(rng, config.contrast);
    if contrast != 1.0 {
        img = scale_contrast(&img, contrast)?;
    }
    Ok(img.map(|v| v.max(T::zero()).min(T::one())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image() -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Tensor::uniform(&[1, 3, 6, 5], 0.0, 1.0, &mut rng)
    }

    #[test]
    fn disabled_is_identity() {
        let img = image();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_style(&img, &AugmentConfig::disabled(), &mut rng).unwrap(), img);
        let neutral = AugmentConfig {
            enabled: true,
            flip_prob: 0.0,
            rescale: (1.0, 1.0),
            hue: 0.0,
            contrast: (1.0, 1.0),
        };
        assert_eq!(augment_style(&img, &neutral, &mut rng).unwrap(), img);
    }

    #[test]
    fn forced_flip_mirrors() {
        let img = image();
        let cfg = AugmentConfig {
            enabled: true,
            flip_prob: 1.0,
            rescale: (1.0, 1.0),
            hue: 0.0,
            contrast: (1.0, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment_style(&img, &cfg, &mut rng).unwrap();
        for c in 0..3 {
            for y in 0..6 {
                for x in 0..5 {
                    assert_eq!(out.at4(0, c, y, x), img.at4(0, c, y, 4 - x));
                }
            }
        }
    }

    #[test]
    fn hue_rotation_preserves_gray_and_is_orthogonal() {
        let m = hue_matrix(0.37);
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn output_keeps_size_and_range() {
        let img = image();
        let cfg = AugmentConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment_style(&img, &cfg, &mut rng).unwrap();
            assert_eq!(out.shape(), img.shape());
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
