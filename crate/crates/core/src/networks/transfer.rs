use rand::Rng;

use crate::error::{invalid, Result};
use crate::networks::StyleEmbedding;
use crate::normalization::NORM_EPS;
use crate::ops::Padding;
use crate::params::{ParamSet, ParamVars};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

/// One row of the transfer network plan. Every convolution is followed by
/// conditional instance normalization, then its activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    /// conv/ReLU then conv/linear, plus the block input.
    Residual { channels: usize, kernel: usize },
    /// Nearest-neighbour upsampling followed by conv/ReLU.
    Upsample {
        factor: usize,
        channels: usize,
        kernel: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferNetConfig {
    pub input_channels: usize,
    pub stages: Vec<Stage>,
}

impl TransferNetConfig {
    /// Encoder (9×9/1, 3×3/2, 3×3/2), residual blocks, two ×2 upsampling
    /// convs mirroring the encoder, and a 9×9 sigmoid output conv.
    pub fn standard(channels: [usize; 3], residual_blocks: usize) -> Self {
        let mut stages = vec![
            Stage::Conv {
                channels: channels[0],
                kernel: 9,
                stride: 1,
                activation: Activation::Relu,
            },
            Stage::Conv {
                channels: channels[1],
                kernel: 3,
                stride: 2,
                activation: Activation::Relu,
            },
            Stage::Conv {
                channels: channels[2],
                kernel: 3,
                stride: 2,
                activation: Activation::Relu,
            },
        ];
        stages.extend((0..residual_blocks).map(|_| Stage::Residual {
            channels: channels[2],
            kernel: 3,
        }));
        stages.push(Stage::Upsample {
            factor: 2,
            channels: channels[1],
            kernel: 3,
        });
        stages.push(Stage::Upsample {
            factor: 2,
            channels: channels[0],
            kernel: 3,
        });
        stages.push(Stage::Conv {
            channels: 3,
            kernel: 9,
            stride: 1,
            activation: Activation::Sigmoid,
        });
        TransferNetConfig {
            input_channels: 3,
            stages,
        }
    }

    pub fn desk() -> Self {
        Self::standard([8, 16, 32], 2)
    }

    pub fn full() -> Self {
        Self::standard([32, 64, 128], 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(invalid!("transfer network needs at least one stage"));
        }
        let mut down = 1;
        let mut up = 1;
        let mut prev = self.input_channels;
        for stage in &self.stages {
            let (kernel, channels) = match *stage {
                Stage::Conv {
                    channels,
                    kernel,
                    stride,
                    ..
                } => {
                    if stride == 0 {
                        return Err(invalid!("stride must be positive"));
                    }
                    down *= stride;
                    (kernel, channels)
                }
                Stage::Residual { channels, kernel } => {
                    if channels != prev {
                        return Err(invalid!(
                            "residual block of {} channels follows a {}-channel layer",
                            channels,
                            prev
                        ));
                    }
                    (kernel, channels)
                }
                Stage::Upsample {
                    factor,
                    channels,
                    kernel,
                } => {
                    if factor == 0 {
                        return Err(invalid!("upsample factor must be positive"));
                    }
                    up *= factor;
                    (kernel, channels)
                }
            };
            if kernel % 2 == 0 || channels == 0 {
                return Err(invalid!("kernels must be odd and channel counts positive"));
            }
            prev = channels;
        }
        if down != up {
            return Err(invalid!(
                "total downsampling {} differs from total upsampling {}",
                down,
                up
            ));
        }
        Ok(())
    }

    /// Product of encoder strides; input dims must be multiples of it.
    pub fn stride_product(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match *s {
                Stage::Conv { stride, .. } => stride,
                _ => 1,
            })
            .product()
    }

    /// Every normalized convolution as `(layer id, in channels, out channels, kernel)`, in depth order.
    pub fn conv_layers(&self) -> Vec<(String, usize, usize, usize)> {
        let mut out = Vec::new();
        let mut prev = self.input_channels;
        let (mut nc, mut nr, mut nu) = (0, 0, 0);
        for stage in &self.stages {
            match *stage {
                Stage::Conv { channels, kernel, .. } => {
                    nc += 1;
                    out.push((format!("conv{}", nc), prev, channels, kernel));
                    prev = channels;
                }
                Stage::Residual { channels, kernel } => {
                    nr += 1;
                    out.push((format!("res{}a", nr), channels, channels, kernel));
                    out.push((format!("res{}b", nr), channels, channels, kernel));
                }
                Stage::Upsample { channels, kernel, .. } => {
                    nu += 1;
                    out.push((format!("up{}", nu), prev, channels, kernel));
                    prev = channels;
                }
            }
        }
        out
    }

    /// `(layer id, channels)` of every normalized convolution, in depth order.
    pub fn normalized_layers(&self) -> Vec<(String, usize)> {
        self.conv_layers().into_iter().map(|(id, _, c, _)| (id, c)).collect()
    }
}

/// Transfer network bound to a configuration.
#[derive(Debug, Clone)]
pub struct TransferNet {
    config: TransferNetConfig,
}

impl TransferNet {
    pub fn new(config: TransferNetConfig) -> Result<Self> {
        config.validate()?;
        Ok(TransferNet { config })
    }

    pub fn config(&self) -> &TransferNetConfig {
        &self.config
    }

    pub fn weight_name(layer: &str) -> String {
        format!("transfer.{}.weight", layer)
    }

    /// Gaussian-initialized convolution kernels. Convolutions carry no bias:
    /// the following normalization removes any per-channel offset.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> ParamSet<T> {
        let mut p = ParamSet::new();
        for (id, cin, cout, k) in self.config.conv_layers() {
            let w: Tensor<f64> = Tensor::randn(&[cout, cin, k, k], 0.0, std, rng);
            p.insert(Self::weight_name(&id), w.cast());
        }
        p
    }

    /// Records `T(x, S)` for a content batch `x` and embedding batch `embedding` `[N, D]`.
    pub fn forward_on<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamVars, x: Var, embedding: Var) -> Result<Var> {
        let (n, c, h, w) = tape.value(x).dims4()?;
        let sp = self.config.stride_product();
        if h % sp != 0 || w % sp != 0 {
            return Err(invalid!(
                "input {}×{} is not divisible by the stride product {}",
                h,
                w,
                sp
            ));
        }
        if c != self.config.input_channels {
            return Err(invalid!(
                "transfer network expects {} input channels, got {}",
                self.config.input_channels,
                c
            ));
        }
        let expected = super::embedding_dim(&self.config);
        let (en, ed) = tape.value(embedding).dims2()?;
        if ed != expected {
            return Err(invalid!(
                "style embedding has dimension {} but the transfer network expects {}",
                ed,
                expected
            ));
        }
        if en != n {
            return Err(invalid!("{} embeddings for a batch of {} images", en, n));
        }

        let eps = T::of(NORM_EPS);
        let mut offset = 0;
        let mut norm_conv = |tape: &mut Tape<T>, h: Var, id: &str, stride: usize| -> Result<Var> {
            let k = params.get(&Self::weight_name(id))?;
            let cout = tape.value(k).shape()[0];
            let bias = tape.constant(Tensor::zeros(&[cout]));
            let z = tape.conv2d(h, k, bias, stride, Padding::SameReflect)?;
            let gamma = tape.slice_cols(embedding, offset, cout)?;
            let beta = tape.slice_cols(embedding, offset + cout, cout)?;
            offset += 2 * cout;
            tape.instance_norm(z, gamma, beta, eps)
        };

        let mut h = x;
        let (mut nc, mut nr, mut nu) = (0, 0, 0);
        for stage in &self.config.stages {
            match *stage {
                Stage::Conv { stride, activation, .. } => {
                    nc += 1;
                    let z = norm_conv(tape, h, &format!("conv{}", nc), stride)?;
                    h = match activation {
                        Activation::Relu => tape.relu(z),
                        Activation::Sigmoid => tape.sigmoid(z),
                        Activation::Linear => z,
                    };
                }
                Stage::Residual { .. } => {
                    nr += 1;
                    let a = norm_conv(tape, h, &format!("res{}a", nr), 1)?;
                    let a = tape.relu(a);
                    let b = norm_conv(tape, a, &format!("res{}b", nr), 1)?;
                    h = tape.add(h, b)?;
                }
                Stage::Upsample { factor, .. } => {
                    nu += 1;
                    let u = tape.upsample_nearest(h, factor)?;
                    let z = norm_conv(tape, u, &format!("up{}", nu), 1)?;
                    h = tape.relu(z);
                }
            }
        }
        Ok(h)
    }
}

/// Renders one content image under one style embedding.
pub fn transfer_forward<T: Scalar>(
    content: &Tensor<T>,
    embedding: &StyleEmbedding<T>,
    params: &ParamSet<T>,
    config: &TransferNetConfig,
) -> Result<Tensor<T>> {
    let net = TransferNet::new(config.clone())?;
    let expected = super::embedding_dim(config);
    if embedding.dim() != expected {
        return Err(invalid!(
            "style embedding has dimension {} but the transfer network expects {}",
            embedding.dim(),
            expected
        ));
    }
    let (n, _, _, _) = content.dims4()?;
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let x = tape.constant(content.clone());
    let rows: Vec<Tensor<T>> = (0..n).map(|_| embedding.to_row()).collect();
    let e = tape.constant(Tensor::stack_batch(&rows)?);
    let y = net.forward_on(&mut tape, &vars, x, e)?;
    Ok(tape.value(y).clone())
}
