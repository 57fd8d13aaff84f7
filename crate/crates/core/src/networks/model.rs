use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::networks::{
    embedding_dim, predict_embedding, transfer_forward, PredictionNet, PredictionNetConfig, StyleEmbedding,
    TransferNet, TransferNetConfig,
};
use crate::params::{ParamSet, ParamVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Prediction and transfer networks with their joint parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleModel<T> {
    pub transfer: TransferNetConfig,
    pub prediction: PredictionNetConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> StyleModel<T> {
    pub fn init(transfer: TransferNetConfig, prediction: PredictionNetConfig, seed: u64, std: f64) -> Result<Self> {
        let t = TransferNet::new(transfer.clone())?;
        let p = PredictionNet::new(prediction.clone())?;
        check_dims(&transfer, &prediction)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = t.init_params(std, &mut rng);
        params.extend(p.init_params(std, &transfer.normalized_layers(), &mut rng));
        Ok(StyleModel {
            transfer,
            prediction,
            params,
        })
    }

    /// Wraps existing parameters after checking them against both architectures.
    pub fn from_parts(
        transfer: TransferNetConfig,
        prediction: PredictionNetConfig,
        params: ParamSet<T>,
    ) -> Result<Self> {
        TransferNet::new(transfer.clone())?;
        PredictionNet::new(prediction.clone())?;
        check_dims(&transfer, &prediction)?;
        let model = StyleModel {
            transfer,
            prediction,
            params,
        };
        let out_w = model.params.get("predict.output.weight")?;
        let d = model.embedding_dim();
        if out_w.rank() != 2 || out_w.shape()[1] != d {
            return Err(invalid!(
                "prediction network emits {} values but the transfer network expects an embedding of {}",
                out_w.shape().last().copied().unwrap_or(0),
                d
            ));
        }
        let expected = Self::init(model.transfer.clone(), model.prediction.clone(), 0, 0.0)?;
        for (name, t) in expected.params.iter() {
            let got = model.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(invalid!(
                    "parameter '{}' has shape {:?}, architecture expects {:?}",
                    name,
                    got.shape(),
                    t.shape()
                ));
            }
        }
        Ok(model)
    }

    pub fn embedding_dim(&self) -> usize {
        embedding_dim(&self.transfer)
    }

    pub fn embed(&self, style: &Tensor<T>) -> Result<StyleEmbedding<T>> {
        predict_embedding(style, &self.params, &self.prediction)
    }

    pub fn render(&self, content: &Tensor<T>, embedding: &StyleEmbedding<T>) -> Result<Tensor<T>> {
        transfer_forward(content, embedding, &self.params, &self.transfer)
    }

    /// `T(c, P(s))`.
    pub fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        let e = self.embed(style)?;
        self.render(content, &e)
    }

    /// Records `S = P(style)` and `T(content, S)`; returns `(S, output)`.
    pub fn forward_on(&self, tape: &mut Tape<T>, vars: &ParamVars, content: Var, style: Var) -> Result<(Var, Var)> {
        let p = PredictionNet::new(self.prediction.clone())?;
        let t = TransferNet::new(self.transfer.clone())?;
        let s = p.forward_on(tape, vars, style)?;
        let out = t.forward_on(tape, vars, content, s)?;
        Ok((s, out))
    }
}

fn check_dims(transfer: &TransferNetConfig, prediction: &PredictionNetConfig) -> Result<()> {
    let d = embedding_dim(transfer);
    if prediction.output_dim != d {
        return Err(invalid!(
            "prediction network emits {} values but the transfer network expects an embedding of {}",
            prediction.output_dim,
            d
        ));
    }
    Ok(())
}
