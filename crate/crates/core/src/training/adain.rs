//! AdaIN baseline: fixed encoder statistics instead of predicted ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::losses::{LossNetConfig, LossNetwork, LossReport};
use crate::networks::Activation;
use crate::normalization::{adain_transfer, NORM_EPS};
use crate::ops::Padding;
use crate::params::{ParamSet, ParamVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::joint::{check_corpora, collect_grads, load_corpora, row, sample_batch, TrainOutput};
use super::{adam_update, AdamState, TraceRow, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderLayer {
    /// Nearest-neighbour factor applied before the conv (1 = none).
    pub upsample: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub activation: Activation,
}

/// Mirror image of the encoder: one conv per encoder layer in reverse order,
/// upsampling wherever the encoder strided, ending in a sigmoid RGB conv.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub layers: Vec<DecoderLayer>,
}

impl DecoderConfig {
    pub fn mirror(encoder: &LossNetConfig) -> Result<Self> {
        encoder.validate()?;
        let depth = encoder_depth(encoder);
        let layers = (0..depth)
            .rev()
            .map(|i| DecoderLayer {
                upsample: encoder.strides[i],
                in_channels: encoder.channels[i],
                out_channels: if i == 0 { 3 } else { encoder.channels[i - 1] },
                kernel: encoder.kernels[i],
                activation: if i == 0 { Activation::Sigmoid } else { Activation::Relu },
            })
            .collect();
        Ok(DecoderConfig { layers })
    }

    fn weight(i: usize) -> String {
        format!("adain.decoder{}.weight", i)
    }

    fn bias(i: usize) -> String {
        format!("adain.decoder{}.bias", i)
    }
}

fn encoder_depth(config: &LossNetConfig) -> usize {
    config.style_layers.iter().copied().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdainModel<T> {
    pub encoder: LossNetConfig,
    pub decoder: DecoderConfig,
    pub params: ParamSet<T>,
}

impl<T: Scalar> AdainModel<T> {
    /// He-initialized decoder with zero biases.
    pub fn init(encoder: LossNetConfig, seed: u64) -> Result<Self> {
        let decoder = DecoderConfig::mirror(&encoder)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (i, l) in decoder.layers.iter().enumerate() {
            let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
            let w: Tensor<f64> = Tensor::randn(
                &[l.out_channels, l.in_channels, l.kernel, l.kernel],
                0.0,
                (2.0 / fan_in).sqrt(),
                &mut rng,
            );
            params.insert(DecoderConfig::weight(i), w.cast());
            params.insert(DecoderConfig::bias(i), Tensor::zeros(&[l.out_channels]));
        }
        Ok(AdainModel {
            encoder,
            decoder,
            params,
        })
    }

    pub fn from_parts(encoder: LossNetConfig, params: ParamSet<T>) -> Result<Self> {
        let fresh = Self::init(encoder, 0)?;
        for (name, t) in fresh.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(invalid!(
                    "parameter '{}' has shape {:?}, decoder expects {:?}",
                    name,
                    got.shape(),
                    t.shape()
                ));
            }
        }
        Ok(AdainModel { params, ..fresh })
    }

    fn network(&self) -> Result<LossNetwork<T>> {
        LossNetwork::new(self.encoder.clone())
    }

    /// Content features re-normalized to the style features' channel moments, per sample.
    pub fn transfer_features(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        let net = self.network()?;
        let depth = encoder_depth(&self.encoder);
        let fc = net.features(content, depth)?.pop().expect("depth >= 1");
        let fs = net.features(style, depth)?.pop().expect("depth >= 1");
        let (n, _, _, _) = fc.dims4()?;
        let (ns, _, _, _) = fs.dims4()?;
        if n != ns {
            return Err(invalid!("content batch {} and style batch {} differ", n, ns));
        }
        let items = (0..n)
            .map(|i| adain_transfer(&fc.batch_item(i), &fs.batch_item(i), T::of(NORM_EPS)))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack_batch(&items)
    }

    pub fn decode_on(&self, tape: &mut Tape<T>, vars: &ParamVars, features: Var) -> Result<Var> {
        let mut h = features;
        for (i, l) in self.decoder.layers.iter().enumerate() {
            if l.upsample > 1 {
                h = tape.upsample_nearest(h, l.upsample)?;
            }
            let w = vars.get(&DecoderConfig::weight(i))?;
            let b = vars.get(&DecoderConfig::bias(i))?;
            h = tape.conv2d(h, w, b, 1, Padding::SameReflect)?;
            h = match l.activation {
                Activation::Relu => tape.relu(h),
                Activation::Sigmoid => tape.sigmoid(h),
                Activation::Linear => h,
            };
        }
        Ok(h)
    }

    pub fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.transfer_features(content, style)?;
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false);
        let f = tape.constant(t);
        let out = self.decode_on(&mut tape, &vars, f)?;
        Ok(tape.value(out).clone())
    }
}

pub fn train_adain<T: Scalar>(
    config: &TrainConfig,
    on_report: &mut dyn FnMut(&TraceRow),
) -> Result<TrainOutput<AdainModel<T>, T>> {
    config.validate()?;
    let (contents, styles) = load_corpora(config)?;
    train_adain_on(config, &contents, &styles, on_report)
}

/// Trains only the decoder; the encoder is the loss network truncated at its
/// deepest style layer and stays fixed.
pub fn train_adain_on<T: Scalar>(
    config: &TrainConfig,
    contents: &[Tensor<T>],
    styles: &[Tensor<T>],
    on_report: &mut dyn FnMut(&TraceRow),
) -> Result<TrainOutput<AdainModel<T>, T>> {
    config.validate()?;
    check_corpora(contents, styles)?;
    let mut model = AdainModel::<T>::init(config.loss_net.clone(), config.seed)?;
    let net = LossNetwork::<T>::new(config.loss_net.clone())?;
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let lambda = T::of(config.lambda_s);
    let mut trace = Vec::with_capacity(config.budget);

    for step in 0..config.budget {
        let (c, s) = sample_batch(&mut rng, contents, styles, config.batch_size, &config.augment)?;
        let targets = net.targets(&c, &s)?;
        let t = model.transfer_features(&c, &s)?;
        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape, true);
        let tv = tape.constant(t);
        let out = model.decode_on(&mut tape, &vars, tv)?;
        let loss = net.objective_on(&mut tape, out, &targets, lambda)?;
        let report = LossReport::from_vars(&tape, &loss, lambda);
        if !report.total.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {}", step)));
        }
        let r = row(step, &report);
        if config.report_every > 0 && step % config.report_every == 0 || step + 1 == config.budget {
            on_report(&r);
        }
        trace.push(r);
        let mut grads = tape.backward(loss.total)?;
        let grads = collect_grads(&model.params, &vars, &mut grads)?;
        adam_update(&mut model.params, &grads, &mut adam)?;
    }
    Ok(TrainOutput { model, adam, trace })
}
