//! Embedding-space operations and the quantitative studies.

mod pca;
pub mod stats;
mod studies;
mod tsne;

pub use pca::{pca, Pca};
pub use stats::{linear_regression, paired_t_test, percentile, BoxStats, Regression, Summary, TTest};
pub use studies::{
    comparison_study, cross_dataset_study, evaluate_pair, generalization_study, gram_distance, gram_proximity_study,
    image_hash, scaling_experiment, DirectStylizer, GroupSummary, ScalingPoint, StudyResult, StyleRecord,
};
pub use tsne::{silhouette, tsne, tsne_from, TsneConfig, TsneResult};

use crate::error::{invalid, Result};
use crate::networks::{StyleEmbedding, StyleModel};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `(1 − α)·a + α·b`; the endpoints return their argument unchanged.
pub fn interpolate_embedding<T: Scalar>(
    a: &StyleEmbedding<T>,
    b: &StyleEmbedding<T>,
    alpha: f64,
) -> Result<StyleEmbedding<T>> {
    if a.dim() != b.dim() {
        return Err(invalid!(
            "cannot interpolate embeddings of dims {} and {}",
            a.dim(),
            b.dim()
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid!("interpolation weight {} outside [0, 1]", alpha));
    }
    if alpha == 0.0 {
        return Ok(a.clone());
    }
    if alpha == 1.0 {
        return Ok(b.clone());
    }
    let (wa, wb) = (T::of(1.0 - alpha), T::of(alpha));
    Ok(StyleEmbedding::new(
        a.values.iter().zip(&b.values).map(|(&x, &y)| wa * x + wb * y).collect(),
    ))
}

/// The embedding a model predicts for a content photograph used as its own style.
pub fn identity_embedding<T: Scalar>(content: &Tensor<T>, model: &StyleModel<T>) -> Result<StyleEmbedding<T>> {
    model.embed(content)
}

/// `k+1` evenly spaced weights from 0 to 1 inclusive.
pub fn alpha_steps(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid!("alpha steps must be at least 1"));
    }
    Ok((0..=k)
        .map(|i| if i == k { 1.0 } else { i as f64 / k as f64 })
        .collect())
}

/// `n` evenly spaced offsets spanning ±`k_std`; a single offset is 0.
pub fn grid_offsets(k_std: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid!("grid size must be at least 1"));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    Ok((0..n)
        .map(|i| {
            let v = -k_std + 2.0 * k_std * i as f64 / (n - 1) as f64;
            if 2 * i == n - 1 {
                0.0
            } else {
                v
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct PcaGrid<T> {
    pub pca: Pca,
    pub offsets: Vec<f64>,
    /// `cells[i][j]` offsets the mean by `offsets[i]` σ₁ along PC₁ and `offsets[j]` σ₂ along PC₂.
    pub cells: Vec<Vec<Tensor<T>>>,
}

pub fn mean_embedding<T: Scalar>(embeddings: &[StyleEmbedding<T>]) -> Result<StyleEmbedding<T>> {
    let p = pca(&embeddings.iter().map(StyleEmbedding::to_f64).collect::<Vec<_>>(), 1)?;
    Ok(StyleEmbedding::new(p.mean.iter().map(|&v| T::of(v)).collect()))
}

/// Stylizes `content` on a grid in the plane of the first two principal
/// components of one artist's embeddings, centred on their mean.
pub fn pca_grid_stylize<T: Scalar>(
    embeddings: &[StyleEmbedding<T>],
    content: &Tensor<T>,
    k_std: f64,
    grid_n: usize,
    model: &StyleModel<T>,
) -> Result<PcaGrid<T>> {
    if embeddings.len() < 3 {
        return Err(invalid!(
            "a PCA grid needs at least 3 embeddings, got {}",
            embeddings.len()
        ));
    }
    let p = pca(&embeddings.iter().map(StyleEmbedding::to_f64).collect::<Vec<_>>(), 2)?;
    let offsets = grid_offsets(k_std, grid_n)?;
    let sd: Vec<f64> = p.explained_variance.iter().map(|v| v.sqrt()).collect();
    let mut cells = Vec::with_capacity(grid_n);
    for &a in &offsets {
        let mut row = Vec::with_capacity(grid_n);
        for &b in &offsets {
            let mut coords = p.mean.clone();
            for (axis, off) in [(0, a), (1, b)] {
                if off != 0.0 {
                    for (c, v) in coords.iter_mut().zip(&p.components[axis]) {
                        *c += off * sd[axis] * v;
                    }
                }
            }
            let e = StyleEmbedding::new(coords.into_iter().map(T::of).collect());
            row.push(model.render(content, &e)?);
        }
        cells.push(row);
    }
    Ok(PcaGrid { pca: p, offsets, cells })
}
