use nalgebra::DMatrix;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Orthonormal directions, one per row, in order of decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Sample variance (n − 1) along each component.
    pub explained_variance: Vec<f64>,
    /// Coordinates of each input along each component.
    pub projections: Vec<Vec<f64>>,
    /// Every input was identical; the components are then arbitrary.
    pub degenerate: bool,
}

impl Pca {
    /// `mean + Σ_k coords[k] · components[k]`.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, comp) in coords.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += c * v;
            }
        }
        out
    }
}

/// Principal components by SVD of the centred data matrix. Each component's
/// sign is fixed so that its largest-magnitude entry is positive.
pub fn pca(points: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = points.len();
    if n < 2 {
        return Err(invalid!("pca needs at least 2 samples, got {}", n));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(invalid!("pca samples must share a positive dimension"));
    }
    if k == 0 || k > d.min(n - 1) {
        return Err(invalid!(
            "pca can extract 1..={} components from {} samples of dim {}, asked for {}",
            d.min(n - 1),
            n,
            d,
            k
        ));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        let s = svd.singular_values[idx];
        explained_variance.push(s * s / (n - 1) as f64);
        components.push(row);
    }
    let projections = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().enumerate().map(|(j, v)| v * centred[(i, j)]).sum())
                .collect()
        })
        .collect();
    let degenerate = centred.iter().all(|&v| v == 0.0);
    Ok(Pca {
        mean,
        components,
        explained_variance,
        projections,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_x_axis() {
        let pts = vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![2.0, 0.0]];
        let p = pca(&pts, 2).unwrap();
        assert!((p.components[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(p.components[0][1].abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
        assert!(!p.degenerate);
    }

    #[test]
    fn identical_points_are_flagged() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 4];
        let p = pca(&pts, 2).unwrap();
        assert!(p.degenerate);
        assert!(p.explained_variance.iter().all(|&v| v == 0.0));
        let dot: f64 = p.components[0].iter().zip(&p.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn bad_k_is_rejected() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert!(pca(&pts, 2).is_err());
        assert!(pca(&pts[..1], 1).is_err());
    }
}
