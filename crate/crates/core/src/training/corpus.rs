//! Image corpora: directory loading and seeded synthetic textures/photos.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::io::{load_image, save_image};
use crate::ops::resize_bilinear;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Style,
    Content,
}

impl CorpusKind {
    fn prefix(self) -> &'static str {
        match self {
            CorpusKind::Style => "style",
            CorpusKind::Content => "content",
        }
    }
}

fn item_rng(seed: u64, index: usize, salt: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ salt;
    ChaCha8Rng::seed_from_u64(mixed)
}

fn color<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn render(size: usize, mut f: impl FnMut(f64, f64) -> [f64; 3]) -> Tensor<f64> {
    let hw = size * size;
    let mut data = vec![0.0; 3 * hw];
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64;
            let v = (y as f64 + 0.5) / size as f64;
            let rgb = f(u, v);
            for c in 0..3 {
                data[c * hw + y * size + x] = rgb[c].clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[1, 3, size, size], data).expect("shape matches data")
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

/// A seeded texture: oriented stripes, checks, rings or blobs in a two-colour
/// palette with a little pixel noise. Each index gives a distinct style.
pub fn synthetic_style(index: usize, seed: u64, size: usize) -> Tensor<f64> {
    let mut rng = item_rng(seed, index, 0x5151);
    let (a, b) = (color(&mut rng), color(&mut rng));
    let freq = rng.random_range(2.0..7.0);
    let angle = rng.random_range(0.0..PI);
    let (s, c) = angle.sin_cos();
    let noise = rng.random_range(0.0..0.08);
    let pattern = (index + rng.random_range(0..4usize)) % 4;
    let blobs: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (rng.random(), rng.random(), rng.random_range(0.05..0.2)))
        .collect();
    let mut noise_rng = item_rng(seed, index, 0xA0A0);
    render(size, |u, v| {
        let p = u * c + v * s;
        let q = -u * s + v * c;
        let t = match pattern {
            0 => 0.5 + 0.5 * (2.0 * PI * freq * p).sin(),
            1 => {
                let cell = ((freq * p).floor() + (freq * q).floor()) as i64;
                (cell.rem_euclid(2)) as f64
            }
            2 => {
                let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
                0.5 + 0.5 * (2.0 * PI * freq * r).cos()
            }
            _ => blobs
                .iter()
                .map(|&(bx, by, br)| (-((u - bx).powi(2) + (v - by).powi(2)) / (2.0 * br * br)).exp())
                .sum::<f64>()
                .min(1.0),
        };
        let rgb = mix(a, b, t);
        rgb.map(|x| x + noise * (noise_rng.random::<f64>() - 0.5))
    })
}

/// A seeded stand-in photograph: smooth gradient sky plus a few flat shapes.
pub fn synthetic_content(index: usize, seed: u64, size: usize) -> Tensor<f64> {
    let mut rng = item_rng(seed, index, 0xC0C0);
    let (top, bottom) = (color(&mut rng), color(&mut rng));
    let shapes: Vec<(bool, f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            (
                rng.random_bool(0.5),
                rng.random_range(0.15..0.85),
                rng.random_range(0.15..0.85),
                rng.random_range(0.1..0.3),
                color(&mut rng),
            )
        })
        .collect();
    render(size, |u, v| {
        let mut rgb = mix(top, bottom, v);
        for &(round, cx, cy, r, col) in &shapes {
            let inside = if round {
                (u - cx).powi(2) + (v - cy).powi(2) < r * r
            } else {
                (u - cx).abs() < r && (v - cy).abs() < r * 0.7
            };
            if inside {
                rgb = col;
            }
        }
        rgb
    })
}

/// Writes `count` synthetic images as `{style,content}_NNN.ppm` into `dir`.
pub fn write_synthetic_corpus(
    dir: &Path,
    kind: CorpusKind,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let img = match kind {
                CorpusKind::Style => synthetic_style(i, seed, size),
                CorpusKind::Content => synthetic_content(i, seed, size),
            };
            let path = dir.join(format!("{}_{:03}.ppm", kind.prefix(), i));
            save_image(&img, &path)?;
            Ok(path)
        })
        .collect()
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("ppm" | "png")
    )
}

/// Every PPM/PNG in `dir`, sorted by file name, resized to `size`×`size`.
pub fn load_corpus<T: Scalar>(dir: &Path, size: usize) -> Result<Vec<(PathBuf, Tensor<T>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(invalid!(
            "corpus directory {} contains no .ppm or .png images",
            dir.display()
        ));
    }
    paths
        .into_iter()
        .map(|p| {
            let img: Tensor<T> = load_image(&p)?;
            let (_, _, h, w) = img.dims4()?;
            let img = if h == size && w == size {
                img
            } else {
                resize_bilinear(&img, size, size)?
            };
            Ok((p, img))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_images_are_seeded_and_distinct() {
        let a = synthetic_style(3, 7, 16);
        assert_eq!(a, synthetic_style(3, 7, 16));
        assert_ne!(a, synthetic_style(4, 7, 16));
        assert_ne!(a, synthetic_style(3, 8, 16));
        let c = synthetic_content(0, 7, 16);
        assert_eq!(c.shape(), &[1, 3, 16, 16]);
        assert!(c.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn corpus_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_corpus(dir.path(), CorpusKind::Style, 3, 8, 1).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let loaded = load_corpus::<f64>(dir.path(), 8).unwrap();
        assert_eq!(loaded.len(), 3);
        assert!(loaded[0].0.ends_with("style_000.ppm"));
        let orig = synthetic_style(2, 1, 8);
        let err = loaded[2].1.zip_map(&orig, |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err <= 0.5 / 255.0 + 1e-12);
        let resized = load_corpus::<f32>(dir.path(), 4).unwrap();
        assert_eq!(resized[0].1.shape(), &[1, 3, 4, 4]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus::<f64>(dir.path(), 8),
            Err(Error::InvalidArgument(_))
        ));
    }
}
