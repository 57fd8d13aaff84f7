use crate::error::{invalid, Result};
use crate::networks::TransferNetConfig;
use crate::normalization::NormParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Concatenated `(gamma, beta)` of every normalized convolution, in depth order.
/// Each layer contributes its `gamma` block followed by its `beta` block.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEmbedding<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> StyleEmbedding<T> {
    pub fn new(values: Vec<T>) -> Self {
        StyleEmbedding { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `[1, D]` row tensor.
    pub fn to_row(&self) -> Tensor<T> {
        Tensor::new(&[1, self.values.len()], self.values.clone()).expect("row shape")
    }

    /// Splits an `[N, D]` batch into one embedding per row.
    pub fn from_batch(t: &Tensor<T>) -> Result<Vec<Self>> {
        let (_, d) = t.dims2()?;
        Ok(t.data().chunks(d).map(|r| StyleEmbedding::new(r.to_vec())).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }
}

/// `2 · Σ` output channels over all normalized convolutions.
pub fn embedding_dim(config: &TransferNetConfig) -> usize {
    2 * config.normalized_layers().iter().map(|(_, c)| c).sum::<usize>()
}

pub fn slice_embedding<T: Scalar>(
    embedding: &StyleEmbedding<T>,
    config: &TransferNetConfig,
) -> Result<Vec<NormParams<T>>> {
    let expected = embedding_dim(config);
    if embedding.dim() != expected {
        return Err(invalid!(
            "embedding dimension {} does not match the configuration's {}",
            embedding.dim(),
            expected
        ));
    }
    let mut out = Vec::new();
    let mut off = 0;
    for (id, c) in config.normalized_layers() {
        let gamma = Tensor::new(&[c], embedding.values[off..off + c].to_vec())?;
        let beta = Tensor::new(&[c], embedding.values[off + c..off + 2 * c].to_vec())?;
        out.push(NormParams::new(gamma, beta, id)?);
        off += 2 * c;
    }
    Ok(out)
}

/// Inverse of [`slice_embedding`].
pub fn concat_norm_params<T: Scalar>(params: &[NormParams<T>]) -> StyleEmbedding<T> {
    let mut values = Vec::new();
    for p in params {
        values.extend_from_slice(p.gamma.data());
        values.extend_from_slice(p.beta.data());
    }
    StyleEmbedding::new(values)
}
