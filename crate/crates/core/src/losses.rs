//! Fixed stand-in loss network and the content, style and total objectives.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::ops::Padding;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub use crate::ops::gram_matrix;

/// Architecture of the fixed feature extractor. Layer numbers are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNetConfig {
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub style_layers: Vec<usize>,
    pub content_layers: Vec<usize>,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for LossNetConfig {
    fn default() -> Self {
        LossNetConfig {
            channels: vec![8, 16, 16, 32],
            kernels: vec![3, 3, 3, 3],
            strides: vec![1, 2, 1, 2],
            style_layers: vec![1, 2, 3],
            content_layers: vec![4],
            init_std: 0.3,
            seed: 1234,
        }
    }
}

impl LossNetConfig {
    pub fn validate(&self) -> Result<()> {
        let depth = self.channels.len();
        if depth == 0 || self.kernels.len() != depth || self.strides.len() != depth {
            return Err(invalid!(
                "loss network needs equal-length channel/kernel/stride lists, got {}/{}/{}",
                depth,
                self.kernels.len(),
                self.strides.len()
            ));
        }
        if self.style_layers.is_empty() || self.content_layers.is_empty() {
            return Err(invalid!("loss network needs at least one style and one content layer"));
        }
        for &l in self.style_layers.iter().chain(&self.content_layers) {
            if l == 0 || l > depth {
                return Err(invalid!("loss layer {} outside 1..={}", l, depth));
            }
        }
        let deepest_style = *self.style_layers.iter().max().unwrap();
        let shallowest_content = *self.content_layers.iter().min().unwrap();
        if deepest_style > shallowest_content {
            return Err(invalid!(
                "style layers must not be deeper than content layers ({} > {})",
                deepest_style,
                shallowest_content
            ));
        }
        if self.strides.contains(&0) || self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(invalid!("loss network kernels must be odd and strides positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer<T> {
    kernel: Tensor<T>,
    bias: Tensor<T>,
    stride: usize,
}

/// Non-trainable conv/ReLU feature extractor whose weights are a pure function of the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNetwork<T> {
    config: LossNetConfig,
    layers: Vec<ConvLayer<T>>,
}

/// Per-image targets precomputed from the content and style references.
#[derive(Debug, Clone)]
pub struct LossTargets<T> {
    /// Features at each content layer, batch-stacked.
    pub content: Vec<Tensor<T>>,
    /// Gram matrices at each style layer, batch-stacked.
    pub style: Vec<Tensor<T>>,
}

/// Loss terms recorded on a tape.
#[derive(Debug, Clone)]
pub struct LossVars {
    pub content: Var,
    pub style: Var,
    pub total: Var,
    pub per_layer: Vec<(String, Var)>,
}

/// Losses for one evaluation; batch evaluations report the batch mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub content_loss: f64,
    pub style_loss: f64,
    pub total: f64,
    pub per_layer: BTreeMap<String, f64>,
    pub lambda_s: f64,
}

impl<T: Scalar> LossNetwork<T> {
    pub fn new(config: LossNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut in_ch = 3;
        let mut layers = Vec::with_capacity(config.channels.len());
        for i in 0..config.channels.len() {
            let (out, k) = (config.channels[i], config.kernels[i]);
            let kernel: Tensor<f64> = Tensor::randn(&[out, in_ch, k, k], 0.0, config.init_std, &mut rng);
            layers.push(ConvLayer {
                kernel: kernel.cast(),
                bias: Tensor::zeros(&[out]),
                stride: config.strides[i],
            });
            in_ch = out;
        }
        Ok(LossNetwork { config, layers })
    }

    pub fn config(&self) -> &LossNetConfig {
        &self.config
    }

    fn depth_needed(&self) -> usize {
        self.config
            .style_layers
            .iter()
            .chain(&self.config.content_layers)
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Post-ReLU activations of layers `1..=depth` recorded on `tape`.
    pub fn features_on(&self, tape: &mut Tape<T>, x: Var, depth: usize) -> Result<Vec<Var>> {
        let mut feats = Vec::with_capacity(depth);
        let mut h = x;
        for layer in self.layers.iter().take(depth) {
            let k = tape.constant(layer.kernel.clone());
            let b = tape.constant(layer.bias.clone());
            let z = tape.conv2d(h, k, b, layer.stride, Padding::SameReflect)?;
            h = tape.relu(z);
            feats.push(h);
        }
        Ok(feats)
    }

    /// Activations of layers `1..=depth` for a batch of images.
    pub fn features(&self, images: &Tensor<T>, depth: usize) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let feats = self.features_on(&mut tape, x, depth)?;
        Ok(feats.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Gram matrices at the style layers.
    pub fn style_grams(&self, images: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let depth = *self.config.style_layers.iter().max().unwrap();
        let feats = self.features(images, depth)?;
        self.config
            .style_layers
            .iter()
            .map(|&l| gram_matrix(&feats[l - 1]))
            .collect()
    }

    /// Units per sample (C·H·W) of each style layer at the given input size.
    pub fn style_layer_units(&self, h: usize, w: usize) -> Result<Vec<usize>> {
        let probe = Tensor::<T>::zeros(&[1, 3, h, w]);
        let depth = *self.config.style_layers.iter().max().unwrap();
        let feats = self.features(&probe, depth)?;
        Ok(self.config.style_layers.iter().map(|&l| feats[l - 1].len()).collect())
    }

    pub fn targets(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<LossTargets<T>> {
        let depth = *self.config.content_layers.iter().max().unwrap();
        let feats = self.features(content, depth)?;
        let content_feats = self
            .config
            .content_layers
            .iter()
            .map(|&l| feats[l - 1].clone())
            .collect();
        Ok(LossTargets {
            content: content_feats,
            style: self.style_grams(style)?,
        })
    }

    /// Records `L_c(x, c) + lambda_s · L_s(x, s)` for the image batch `x`.
    pub fn objective_on(&self, tape: &mut Tape<T>, x: Var, targets: &LossTargets<T>, lambda_s: T) -> Result<LossVars> {
        let (n, _, _, _) = tape.value(x).dims4()?;
        let feats = self.features_on(tape, x, self.depth_needed())?;
        let mut per_layer = Vec::new();

        let mut content_terms = Vec::new();
        for (&l, target) in self.config.content_layers.iter().zip(&targets.content) {
            let f = feats[l - 1];
            if tape.value(f).shape() != target.shape() {
                return Err(invalid!(
                    "content layer {} features {:?} do not align with target {:?}",
                    l,
                    tape.value(f).shape(),
                    target.shape()
                ));
            }
            let units = tape.value(f).len() / n;
            let t = tape.constant(target.clone());
            let d = tape.sub(f, t)?;
            let ss = tape.sum_squares(d);
            let term = tape.scale(ss, T::one() / T::of((n * units) as f64));
            per_layer.push((format!("content/conv{}", l), term));
            content_terms.push(term);
        }

        let mut style_terms = Vec::new();
        for (&l, target) in self.config.style_layers.iter().zip(&targets.style) {
            let f = feats[l - 1];
            let units = tape.value(f).len() / n;
            let g = tape.gram(f)?;
            if tape.value(g).shape() != target.shape() {
                return Err(invalid!(
                    "style layer {} gram {:?} does not match target {:?}",
                    l,
                    tape.value(g).shape(),
                    target.shape()
                ));
            }
            let t = tape.constant(target.clone());
            let d = tape.sub(g, t)?;
            let ss = tape.sum_squares(d);
            let term = tape.scale(ss, T::one() / T::of((n * units) as f64));
            per_layer.push((format!("style/conv{}", l), term));
            style_terms.push(term);
        }

        let content = sum_vars(tape, &content_terms)?;
        let style = sum_vars(tape, &style_terms)?;
        let weighted = tape.scale(style, lambda_s);
        let total = tape.add(content, weighted)?;
        Ok(LossVars {
            content,
            style,
            total,
            per_layer,
        })
    }
}

fn sum_vars<T: Scalar>(tape: &mut Tape<T>, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(acc)
}

impl LossReport {
    pub fn from_vars<T: Scalar>(tape: &Tape<T>, vars: &LossVars, lambda_s: T) -> Self {
        LossReport {
            content_loss: tape.value(vars.content).item().as_f64(),
            style_loss: tape.value(vars.style).item().as_f64(),
            total: tape.value(vars.total).item().as_f64(),
            per_layer: vars
                .per_layer
                .iter()
                .map(|(name, v)| (name.clone(), tape.value(*v).item().as_f64()))
                .collect(),
            lambda_s: lambda_s.as_f64(),
        }
    }
}

fn check_images<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    let (an, ac, ah, aw) = a.dims4()?;
    let (bn, bc, bh, bw) = b.dims4()?;
    if an != bn || ac != bc || ah != bh || aw != bw {
        return Err(invalid!(
            "{} images must share batch and spatial dims: {:?} vs {:?}",
            what,
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

/// `Σ_{i∈S} (1/n_i) ‖G[f_i(x)] − G[f_i(s)]‖_F²`.
pub fn style_loss<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>, net: &LossNetwork<T>) -> Result<T> {
    let (xn, _, _, _) = x.dims4()?;
    let (sn, _, _, _) = s.dims4()?;
    if xn != sn {
        return Err(invalid!("batch sizes differ: {} vs {}", xn, sn));
    }
    let depth = *net.config.style_layers.iter().max().unwrap();
    let fx = net.features(x, depth)?;
    let fs = net.features(s, depth)?;
    let mut total = T::zero();
    for &l in &net.config.style_layers {
        let (a, b) = (&fx[l - 1], &fs[l - 1]);
        let units = T::of((a.len() / xn) as f64);
        let (ga, gb) = (gram_matrix(a)?, gram_matrix(b)?);
        let d: T = ga.data().iter().zip(gb.data()).map(|(&p, &q)| (p - q) * (p - q)).sum();
        total += d / (units * T::of(xn as f64));
    }
    Ok(total)
}

/// `Σ_{j∈C} (1/n_j) ‖f_j(x) − f_j(c)‖₂²`.
pub fn content_loss<T: Scalar>(x: &Tensor<T>, c: &Tensor<T>, net: &LossNetwork<T>) -> Result<T> {
    check_images(x, c, "content loss")?;
    let (n, _, _, _) = x.dims4()?;
    let depth = *net.config.content_layers.iter().max().unwrap();
    let fx = net.features(x, depth)?;
    let fc = net.features(c, depth)?;
    let mut total = T::zero();
    for &l in &net.config.content_layers {
        let (a, b) = (&fx[l - 1], &fc[l - 1]);
        let units = T::of((a.len() / n) as f64);
        let d: T = a.data().iter().zip(b.data()).map(|(&p, &q)| (p - q) * (p - q)).sum();
        total += d / (units * T::of(n as f64));
    }
    Ok(total)
}

/// Full objective for a stylized image `x`, content `c` and style `s`.
pub fn total_loss<T: Scalar>(
    x: &Tensor<T>,
    c: &Tensor<T>,
    s: &Tensor<T>,
    net: &LossNetwork<T>,
    lambda_s: T,
) -> Result<LossReport> {
    if !(lambda_s > T::zero()) {
        return Err(invalid!("lambda_s must be positive, got {}", lambda_s));
    }
    check_images(x, c, "content loss")?;
    let targets = net.targets(c, s)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let vars = net.objective_on(&mut tape, xv, &targets, lambda_s)?;
    Ok(LossReport::from_vars(&tape, &vars, lambda_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_puts_style_below_content() {
        let cfg = LossNetConfig::default();
        cfg.validate().unwrap();
        let bad = LossNetConfig {
            style_layers: vec![4],
            content_layers: vec![2],
            ..LossNetConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_lambda_is_rejected() {
        let net = LossNetwork::<f64>::new(LossNetConfig::default()).unwrap();
        let x = Tensor::full(&[1, 3, 8, 8], 0.5);
        assert!(matches!(
            total_loss(&x, &x, &x, &net, 0.0),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let net = LossNetwork::<f64>::new(LossNetConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[1, 3, 8, 8], 0.0, 1.0, &mut rng);
        let r = total_loss(&x, &x, &x, &net, 1.0).unwrap();
        assert_eq!((r.content_loss, r.style_loss, r.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn content_spatial_mismatch() {
        let net = LossNetwork::<f64>::new(LossNetConfig::default()).unwrap();
        let a = Tensor::full(&[1, 3, 8, 8], 0.5);
        let b = Tensor::full(&[1, 3, 16, 16], 0.5);
        assert!(matches!(
            content_loss(&a, &b, &net),
            Err(crate::Error::InvalidArgument(_))
        ));
        // style loss compares spatially averaged statistics, so sizes may differ
        assert!(style_loss(&a, &b, &net).is_ok());
    }
}
