//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossNetConfig;
use crate::networks::{embedding_dim, BackboneLayer, PredictionNetConfig, TransferNetConfig};
use crate::scalar::DType;
use crate::training::{AdamConfig, AugmentConfig, TrainConfig};

/// Every tunable of a run. Defaults are the desk-scale values; the optimizer
/// constants and initialization follow the published hyperparameter tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: DType,
    pub deterministic: bool,

    pub transfer_channels: [usize; 3],
    pub residual_blocks: usize,
    pub backbone_channels: Vec<usize>,
    pub backbone_kernel: usize,
    pub backbone_stride: usize,
    pub bottleneck: usize,
    pub init_std: f64,

    pub loss_channels: Vec<usize>,
    pub loss_kernels: Vec<usize>,
    pub loss_strides: Vec<usize>,
    pub style_layers: Vec<usize>,
    pub content_layers: Vec<usize>,
    pub loss_init_std: f64,
    pub loss_seed: u64,

    pub lambda_s: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub budget: usize,
    pub image_size: usize,
    pub report_every: usize,
    pub content_corpus: Option<PathBuf>,
    pub style_corpus: Option<PathBuf>,

    pub augment: bool,
    pub aug_flip_prob: f64,
    pub aug_rescale_min: f64,
    pub aug_rescale_max: f64,
    pub aug_hue: f64,
    pub aug_contrast_min: f64,
    pub aug_contrast_max: f64,

    pub direct_steps: usize,
    pub direct_lr: f64,

    pub study_photos: usize,
    pub tsne_perplexity: f64,
    pub tsne_iters: usize,
    pub tsne_learning_rate: f64,
    pub tsne_exaggeration: f64,
    pub tsne_exaggeration_iters: usize,
    pub tsne_momentum_switch: usize,
    pub pca_k_std: f64,
    pub pca_grid_n: usize,

    /// Free-form `meta.*` entries (provenance recorded in checkpoints).
    pub meta: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            precision: DType::F64,
            deterministic: true,
            transfer_channels: [8, 16, 32],
            residual_blocks: 2,
            backbone_channels: vec![8, 16, 32],
            backbone_kernel: 3,
            backbone_stride: 2,
            bottleneck: 16,
            init_std: crate::networks::INIT_STD,
            loss_channels: vec![8, 16, 16, 32],
            loss_kernels: vec![3, 3, 3, 3],
            loss_strides: vec![1, 2, 1, 2],
            style_layers: vec![1, 2, 3],
            content_layers: vec![4],
            loss_init_std: 0.3,
            loss_seed: 1234,
            lambda_s: 1.0,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            budget: 2000,
            image_size: 32,
            report_every: 50,
            content_corpus: None,
            style_corpus: None,
            augment: true,
            aug_flip_prob: 0.5,
            aug_rescale_min: 0.8,
            aug_rescale_max: 1.2,
            aug_hue: 0.1,
            aug_contrast_min: 0.8,
            aug_contrast_max: 1.2,
            direct_steps: 200,
            direct_lr: 0.02,
            study_photos: 2,
            tsne_perplexity: 15.0,
            tsne_iters: 500,
            tsne_learning_rate: 100.0,
            tsne_exaggeration: 4.0,
            tsne_exaggeration_iters: 100,
            tsne_momentum_switch: 250,
            pca_k_std: 4.0,
            pca_grid_n: 5,
            meta: BTreeMap::new(),
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> Option<Vec<T>> {
    if s.trim().is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_path(s: &str) -> Option<Option<PathBuf>> {
    Some(if s.is_empty() { None } else { Some(PathBuf::from(s)) })
}

/// Declares the scalar keys once for both parsing and serialization.
macro_rules! scalar_keys {
    ($mac:ident) => {
        $mac!(seed, |s: &str| s.parse().ok(), |v: &u64| v.to_string());
        $mac!(precision, DType::parse, |v: &DType| v.name().to_string());
        $mac!(deterministic, parse_bool, |v: &bool| v.to_string());
        $mac!(
            transfer_channels,
            |s: &str| parse_list::<usize>(s).and_then(|v| <[usize; 3]>::try_from(v).ok()),
            |v: &[usize; 3]| list(v)
        );
        $mac!(residual_blocks, |s: &str| s.parse().ok(), |v: &usize| v
            .to_string());
        $mac!(backbone_channels, parse_list, |v: &Vec<usize>| list(v));
        $mac!(backbone_kernel, |s: &str| s.parse().ok(), |v: &usize| v
            .to_string());
        $mac!(backbone_stride, |s: &str| s.parse().ok(), |v: &usize| v
            .to_string());
        $mac!(bottleneck, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(init_std, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(loss_channels, parse_list, |v: &Vec<usize>| list(v));
        $mac!(loss_kernels, parse_list, |v: &Vec<usize>| list(v));
        $mac!(loss_strides, parse_list, |v: &Vec<usize>| list(v));
        $mac!(style_layers, parse_list, |v: &Vec<usize>| list(v));
        $mac!(content_layers, parse_list, |v: &Vec<usize>| list(v));
        $mac!(loss_init_std, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(loss_seed, |s: &str| s.parse().ok(), |v: &u64| v.to_string());
        $mac!(lambda_s, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(learning_rate, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(adam_beta1, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(adam_beta2, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(adam_eps, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(batch_size, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(budget, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(image_size, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(report_every, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(content_corpus, parse_path, |v: &Option<PathBuf>| v
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default());
        $mac!(style_corpus, parse_path, |v: &Option<PathBuf>| v
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default());
        $mac!(augment, parse_bool, |v: &bool| v.to_string());
        $mac!(aug_flip_prob, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(aug_rescale_min, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(aug_rescale_max, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(aug_hue, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(aug_contrast_min, |s: &str| s.parse().ok(), |v: &f64| v
            .to_string());
        $mac!(aug_contrast_max, |s: &str| s.parse().ok(), |v: &f64| v
            .to_string());
        $mac!(direct_steps, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(direct_lr, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(study_photos, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(tsne_perplexity, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(tsne_iters, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
        $mac!(tsne_learning_rate, |s: &str| s.parse().ok(), |v: &f64| v
            .to_string());
        $mac!(tsne_exaggeration, |s: &str| s.parse().ok(), |v: &f64| v
            .to_string());
        $mac!(tsne_exaggeration_iters, |s: &str| s.parse().ok(), |v: &usize| v
            .to_string());
        $mac!(tsne_momentum_switch, |s: &str| s.parse().ok(), |v: &usize| v
            .to_string());
        $mac!(pca_k_std, |s: &str| s.parse().ok(), |v: &f64| v.to_string());
        $mac!(pca_grid_n, |s: &str| s.parse().ok(), |v: &usize| v.to_string());
    };
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{}`", line),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(meta_key) = key.strip_prefix("meta.") {
                cfg.meta.insert(meta_key.to_string(), value.to_string());
                continue;
            }
            let bad = || Error::Config {
                line: line_no,
                message: format!("invalid value `{}` for `{}`", value, key),
            };
            macro_rules! try_key {
                ($name:ident, $parse:expr, $fmt:expr) => {
                    if key == stringify!($name) {
                        cfg.$name = ($parse)(value).ok_or_else(bad)?;
                        continue;
                    }
                };
            }
            scalar_keys!(try_key);
            return Err(Error::Config {
                line: line_no,
                message: format!("unknown key `{}`", key),
            });
        }
        Ok(cfg)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($name:ident, $parse:expr, $fmt:expr) => {
                let _ = writeln!(out, "{} = {}", stringify!($name), ($fmt)(&self.$name));
            };
        }
        scalar_keys!(emit);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta.{} = {}", k, v);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn transfer_config(&self) -> TransferNetConfig {
        TransferNetConfig::standard(self.transfer_channels, self.residual_blocks)
    }

    pub fn prediction_config(&self) -> PredictionNetConfig {
        PredictionNetConfig {
            input_channels: 3,
            backbone: self
                .backbone_channels
                .iter()
                .map(|&channels| BackboneLayer {
                    channels,
                    kernel: self.backbone_kernel,
                    stride: self.backbone_stride,
                })
                .collect(),
            bottleneck: self.bottleneck,
            output_dim: embedding_dim(&self.transfer_config()),
        }
    }

    pub fn loss_config(&self) -> LossNetConfig {
        LossNetConfig {
            channels: self.loss_channels.clone(),
            kernels: self.loss_kernels.clone(),
            strides: self.loss_strides.clone(),
            style_layers: self.style_layers.clone(),
            content_layers: self.content_layers.clone(),
            init_std: self.loss_init_std,
            seed: self.loss_seed,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            enabled: self.augment,
            flip_prob: self.aug_flip_prob,
            rescale: (self.aug_rescale_min, self.aug_rescale_max),
            hue: self.aug_hue,
            contrast: (self.aug_contrast_min, self.aug_contrast_max),
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            transfer: self.transfer_config(),
            prediction: self.prediction_config(),
            loss_net: self.loss_config(),
            batch_size: self.batch_size,
            budget: self.budget,
            lambda_s: self.lambda_s,
            seed: self.seed,
            precision: self.precision,
            init_std: self.init_std,
            image_size: self.image_size,
            report_every: self.report_every,
            augment: self.augment_config(),
            adam: self.adam_config(),
            content_corpus: self.content_corpus.clone(),
            style_corpus: self.style_corpus.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = RunConfig::parse("# desk run\nseed = 7 # trailing\n\nlambda_s=0.5\nmeta.note = hi\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lambda_s, 0.5);
        assert_eq!(cfg.meta["note"], "hi");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse("seed = 1\n\nwarp_factor = 9\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = RunConfig::parse("seed = x\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = RunConfig::parse("seed\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }
}
