//! Exact O(n²) t-SNE.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Iteration at which momentum rises from 0.5 to 0.8.
    pub momentum_switch: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 15.0,
            iters: 500,
            learning_rate: 100.0,
            exaggeration: 4.0,
            exaggeration_iters: 100,
            momentum_switch: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// KL(P‖Q) of the initial layout followed by the layout after each iteration.
    pub kl_trace: Vec<f64>,
}

pub const MAX_POINTS: usize = 2000;

fn sq_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional `p_{j|i}` with the Gaussian precision chosen by bisection so the
/// row entropy matches `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64, out: &mut [f64]) {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    // Shift by the nearest neighbour distance so exp() cannot underflow to all zeros.
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, &dj) in dist.iter().enumerate() {
            let p = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            out[j] = p;
            sum += p;
            weighted += (dj - dmin) * p;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        out.iter_mut().for_each(|p| *p /= sum);
        let diff = entropy - target;
        if diff.abs() < 1e-10 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
}

fn joint_probabilities(points: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = points.len();
    let dist = sq_distances(points);
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        conditional_row(&dist[i * n..(i + 1) * n], i, perplexity, &mut cond[i * n..(i + 1) * n]);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    p
}

/// Student-t affinities: returns unnormalized `1/(1+d²)` and their sum.
fn affinities(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    total
}

fn kl(p: &[f64], num: &[f64], total: f64, n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i * n + j] / total).max(1e-12);
                let pij = p[i * n + j];
                s += pij * (pij / q).ln();
            }
        }
    }
    s
}

/// t-SNE from a Gaussian initial layout with σ = 1e-4.
pub fn tsne<R: Rng + ?Sized>(points: &[Vec<f64>], config: &TsneConfig, rng: &mut R) -> Result<TsneResult> {
    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let init = (0..points.len())
        .map(|_| [normal.sample(rng), normal.sample(rng)])
        .collect();
    tsne_from(points, config, init)
}

/// t-SNE from a caller-chosen initial layout.
pub fn tsne_from(points: &[Vec<f64>], config: &TsneConfig, init: Vec<[f64; 2]>) -> Result<TsneResult> {
    let n = points.len();
    if init.len() != n {
        return Err(invalid!("initial layout has {} points, data has {}", init.len(), n));
    }
    if !(2..=MAX_POINTS).contains(&n) {
        return Err(invalid!("t-SNE supports 2..={} points, got {}", MAX_POINTS, n));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(invalid!("t-SNE points must share one dimension"));
    }
    let perp = config.perplexity;
    if !(perp >= 1.0 && perp < (n - 1) as f64) {
        return Err(invalid!(
            "perplexity {} is infeasible for {} points (need 1 <= perplexity < {})",
            perp,
            n,
            n - 1
        ));
    }
    let p = joint_probabilities(points, perp);
    let mut y = init;
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];

    let total = affinities(&y, &mut num);
    let mut kl_trace = Vec::with_capacity(config.iters + 1);
    kl_trace.push(kl(&p, &num, total, n));
    for it in 0..config.iters {
        let exag = if it < config.exaggeration_iters {
            config.exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.momentum_switch { 0.5 } else { 0.8 };
        let total = affinities(&y, &mut num);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let m = (exag * p[i * n + j] - (w / total).max(1e-12)) * w;
                g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                g[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            for a in 0..2 {
                let same = (g[a] > 0.0) == (update[i][a] > 0.0);
                gains[i][a] = if same { gains[i][a] * 0.8 } else { gains[i][a] + 0.2 };
                gains[i][a] = gains[i][a].max(0.01);
                update[i][a] = momentum * update[i][a] - config.learning_rate * gains[i][a] * g[a];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let mean = y.iter().fold([0.0; 2], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        for yi in y.iter_mut() {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
        let total = affinities(&y, &mut num);
        kl_trace.push(kl(&p, &num, total, n));
    }
    Ok(TsneResult { embedding: y, kl_trace })
}

/// Mean silhouette coefficient of a labelled 2-D layout.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(invalid!("silhouette needs one label per point"));
    }
    let n = points.len();
    let k = labels.iter().max().unwrap() + 1;
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perplexity_matches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let dist = sq_distances(&pts);
        let mut row = vec![0.0; 30];
        conditional_row(&dist[0..30], 0, 7.0, &mut row);
        let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        assert!((h.exp() - 7.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_perplexity_is_rejected() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = TsneConfig {
            perplexity: 5.0,
            ..TsneConfig::default()
        };
        assert!(tsne(&pts, &cfg, &mut rng).is_err());
    }

    #[test]
    fn silhouette_of_separated_pairs() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.85);
    }
}
