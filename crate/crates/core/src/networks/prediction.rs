use rand::Rng;

use crate::error::{invalid, Result};
use crate::networks::StyleEmbedding;
use crate::ops::Padding;
use crate::params::{ParamSet, ParamVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Backbone convs (ReLU) → per-channel spatial mean → bottleneck → embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionNetConfig {
    pub input_channels: usize,
    pub backbone: Vec<BackboneLayer>,
    pub bottleneck: usize,
    pub output_dim: usize,
}

impl PredictionNetConfig {
    /// Three strided 3×3 convs (8, 16, 32 channels), 16-unit bottleneck.
    pub fn desk(output_dim: usize) -> Self {
        let layer = |channels| BackboneLayer {
            channels,
            kernel: 3,
            stride: 2,
        };
        PredictionNetConfig {
            input_channels: 3,
            backbone: vec![layer(8), layer(16), layer(32)],
            bottleneck: 16,
            output_dim,
        }
    }

    /// 768 pooled features and a 100-unit bottleneck.
    pub fn full(output_dim: usize) -> Self {
        let layer = |channels| BackboneLayer {
            channels,
            kernel: 3,
            stride: 2,
        };
        PredictionNetConfig {
            input_channels: 3,
            backbone: vec![layer(64), layer(192), layer(768)],
            bottleneck: 100,
            output_dim,
        }
    }

    pub fn pooled_dim(&self) -> usize {
        self.backbone.last().map_or(self.input_channels, |l| l.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck == 0 || self.bottleneck >= self.output_dim {
            return Err(invalid!(
                "bottleneck {} must be positive and smaller than the embedding dimension {}",
                self.bottleneck,
                self.output_dim
            ));
        }
        if self
            .backbone
            .iter()
            .any(|l| l.kernel % 2 == 0 || l.stride == 0 || l.channels == 0)
        {
            return Err(invalid!("backbone kernels must be odd, strides and channels positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PredictionNet {
    config: PredictionNetConfig,
}

impl PredictionNet {
    pub fn new(config: PredictionNetConfig) -> Result<Self> {
        config.validate()?;
        Ok(PredictionNet { config })
    }

    pub fn config(&self) -> &PredictionNetConfig {
        &self.config
    }

    /// Gaussian weights, zero biases, except the output bias which starts at
    /// `gamma = 1, beta = 0` for every normalized layer in `layout`.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(
        &self,
        std: f64,
        layout: &[(String, usize)],
        rng: &mut R,
    ) -> ParamSet<T> {
        let mut p = ParamSet::new();
        let mut cin = self.config.input_channels;
        for (i, l) in self.config.backbone.iter().enumerate() {
            let w: Tensor<f64> = Tensor::randn(&[l.channels, cin, l.kernel, l.kernel], 0.0, std, rng);
            p.insert(format!("predict.backbone{}.weight", i + 1), w.cast());
            p.insert(format!("predict.backbone{}.bias", i + 1), Tensor::zeros(&[l.channels]));
            cin = l.channels;
        }
        let pooled = self.config.pooled_dim();
        let w: Tensor<f64> = Tensor::randn(&[pooled, self.config.bottleneck], 0.0, std, rng);
        p.insert("predict.bottleneck.weight", w.cast());
        p.insert("predict.bottleneck.bias", Tensor::zeros(&[self.config.bottleneck]));
        let w: Tensor<f64> = Tensor::randn(&[self.config.bottleneck, self.config.output_dim], 0.0, std, rng);
        p.insert("predict.output.weight", w.cast());
        let mut bias = Vec::with_capacity(self.config.output_dim);
        for (_, c) in layout {
            bias.extend(std::iter::repeat_n(T::one(), *c));
            bias.extend(std::iter::repeat_n(T::zero(), *c));
        }
        bias.resize(self.config.output_dim, T::zero());
        p.insert(
            "predict.output.bias",
            Tensor::new(&[self.config.output_dim], bias).expect("bias length"),
        );
        p
    }

    /// Channel-mean pooled backbone features `[N, pooled]`.
    pub fn pooled_on<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamVars, style: Var) -> Result<Var> {
        let mut h = style;
        for (i, l) in self.config.backbone.iter().enumerate() {
            let w = params.get(&format!("predict.backbone{}.weight", i + 1))?;
            let b = params.get(&format!("predict.backbone{}.bias", i + 1))?;
            let z = tape.conv2d(h, w, b, l.stride, Padding::SameReflect)?;
            h = tape.relu(z);
        }
        tape.spatial_mean(h)
    }

    /// Records `P(s)` for a style batch, returning `[N, output_dim]`.
    pub fn forward_on<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamVars, style: Var) -> Result<Var> {
        let pooled = self.pooled_on(tape, params, style)?;
        let bw = params.get("predict.bottleneck.weight")?;
        let bb = params.get("predict.bottleneck.bias")?;
        let z = tape.linear(pooled, bw, bb)?;
        let ow = params.get("predict.output.weight")?;
        let ob = params.get("predict.output.bias")?;
        tape.linear(z, ow, ob)
    }
}

/// Predicts the style embedding of a single style image.
pub fn predict_embedding<T: Scalar>(
    style: &Tensor<T>,
    params: &ParamSet<T>,
    config: &PredictionNetConfig,
) -> Result<StyleEmbedding<T>> {
    let net = PredictionNet::new(config.clone())?;
    let (n, _, _, _) = style.dims4()?;
    if n != 1 {
        return Err(invalid!("predict_embedding takes one style image, got batch {}", n));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let s = tape.constant(style.clone());
    let e = net.forward_on(&mut tape, &vars, s)?;
    Ok(StyleEmbedding::new(tape.value(e).data().to_vec()))
}
