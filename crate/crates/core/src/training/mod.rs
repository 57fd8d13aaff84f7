//! Optimization: Adam, style augmentation, corpora, the joint P/T training
//! loop and the two baselines (pixel optimization and an AdaIN decoder).

mod adain;
mod adam;
mod augment;
mod corpus;
mod direct;
mod joint;

use std::path::PathBuf;

pub use adain::{train_adain, train_adain_on, AdainModel, DecoderConfig};
pub use adam::{adam_update, AdamConfig, AdamState};
pub use augment::{augment_style, AugmentConfig};
pub use corpus::{load_corpus, synthetic_content, synthetic_style, write_synthetic_corpus, CorpusKind};
pub use direct::{direct_optimize, DirectResult};
pub use joint::{train_joint, train_joint_on, TrainOutput};

use crate::error::{invalid, Result};
use crate::losses::LossNetConfig;
use crate::networks::{PredictionNetConfig, TransferNetConfig};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub transfer: TransferNetConfig,
    pub prediction: PredictionNetConfig,
    pub loss_net: LossNetConfig,
    pub batch_size: usize,
    /// Number of parameter updates.
    pub budget: usize,
    pub lambda_s: f64,
    pub seed: u64,
    pub precision: DType,
    pub init_std: f64,
    /// Side length every corpus image is resized to.
    pub image_size: usize,
    pub report_every: usize,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
    pub content_corpus: Option<PathBuf>,
    pub style_corpus: Option<PathBuf>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid!("training budget must be at least 1 update"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if !(self.lambda_s > 0.0) {
            return Err(invalid!("lambda_s must be positive, got {}", self.lambda_s));
        }
        self.transfer.validate()?;
        self.prediction.validate()?;
        self.loss_net.validate()
    }
}

/// One line of a loss trace, measured before the update at `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub content_loss: f64,
    pub style_loss: f64,
    pub total: f64,
}

pub fn trace_table(trace: &[TraceRow]) -> crate::io::CsvTable {
    use crate::io::fmt_f64;
    let mut t = crate::io::CsvTable::new(&["step", "content_loss", "style_loss", "total"]);
    for r in trace {
        t.push(vec![
            r.step.to_string(),
            fmt_f64(r.content_loss),
            fmt_f64(r.style_loss),
            fmt_f64(r.total),
        ]);
    }
    t
}

/// Anything that renders a content image in the manner of a style image.
pub trait Stylizer<T: Scalar> {
    fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Scalar> Stylizer<T> for crate::networks::StyleModel<T> {
    fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        crate::networks::StyleModel::stylize(self, content, style)
    }
}

impl<T: Scalar> Stylizer<T> for AdainModel<T> {
    fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        AdainModel::stylize(self, content, style)
    }
}
