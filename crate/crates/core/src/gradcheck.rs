//! Central-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::losses::{LossNetConfig, LossNetwork};
use crate::networks::{embedding_dim, BackboneLayer, PredictionNetConfig, StyleModel, TransferNet, TransferNetConfig};
use crate::params::ParamVars;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over checked entries of |analytic − central| / max(|analytic|, |central|, 1e−8).
    pub max_rel_error: f64,
    /// (parameter, flat element) of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Finite-difference gradient checker.
///
/// `max_per_param` limits how many elements of each parameter are perturbed;
/// the subset is drawn from `seed`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            max_per_param: None,
            seed: 0,
        }
    }
}

/// Checks all elements of every parameter with step `h`.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    GradCheck {
        step: h,
        ..GradCheck::default()
    }
    .run(f, params)
}

impl GradCheck {
    pub fn run<F>(&self, f: F, params: &[Tensor<f64>]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let h = self.step;
        if !(1e-7..=1e-3).contains(&h) {
            return Err(invalid!("finite-difference step {} outside [1e-7, 1e-3]", h));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).item().is_finite() {
            return Err(Error::NonFinite("objective at the unperturbed point".into()));
        }
        let grads = tape.backward(out)?;
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .zip(params)
            .map(|(&v, p)| grads.get_or_zeros(v, p))
            .collect();
        drop(tape);

        let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
            let mut t = Tape::new();
            let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
            let o = f(&mut t, &vs)?;
            Ok(t.value(o).item())
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut work: Vec<Tensor<f64>> = params.to_vec();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: (0, 0),
            checked: 0,
        };
        for pi in 0..params.len() {
            let n = params[pi].len();
            let indices: Vec<usize> = match self.max_per_param {
                Some(m) if m < n => {
                    let mut v = sample(&mut rng, n, m).into_vec();
                    v.sort_unstable();
                    v
                }
                _ => (0..n).collect(),
            };
            for ei in indices {
                let orig = work[pi].data()[ei];
                work[pi].data_mut()[ei] = orig + h;
                let fp = eval(&work)?;
                work[pi].data_mut()[ei] = orig - h;
                let fm = eval(&work)?;
                work[pi].data_mut()[ei] = orig;
                if !fp.is_finite() || !fm.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "objective at perturbed parameter {} element {}",
                        pi, ei
                    )));
                }
                let central = (fp - fm) / (2.0 * h);
                let a = analytic[pi].data()[ei];
                let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = (pi, ei);
                }
            }
        }
        Ok(report)
    }
}

/// Smallest end-to-end configuration: transfer network, prediction network,
/// stand-in loss network and a content/style pair, all drawn from `seed`.
#[derive(Debug, Clone)]
pub struct TinyProblem {
    pub model: StyleModel<f64>,
    pub net: LossNetwork<f64>,
    pub content: Tensor<f64>,
    pub style: Tensor<f64>,
    pub lambda_s: f64,
}

impl TinyProblem {
    pub fn new(seed: u64, residual_blocks: usize) -> Result<Self> {
        let transfer = TransferNetConfig::standard([2, 3, 4], residual_blocks);
        let prediction = PredictionNetConfig {
            input_channels: 3,
            backbone: vec![BackboneLayer {
                channels: 3,
                kernel: 3,
                stride: 2,
            }],
            bottleneck: 2,
            output_dim: embedding_dim(&transfer),
        };
        let model = StyleModel::init(transfer, prediction, seed, 0.2)?;
        let net = LossNetwork::new(LossNetConfig {
            channels: vec![3, 4],
            kernels: vec![3, 3],
            strides: vec![1, 2],
            style_layers: vec![1, 2],
            content_layers: vec![2],
            init_std: 0.5,
            seed: seed ^ 0xABCD,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
        Ok(TinyProblem {
            model,
            net,
            content: Tensor::uniform(&[1, 3, 16, 16], 0.0, 1.0, &mut rng),
            style: Tensor::uniform(&[1, 3, 16, 16], 0.0, 1.0, &mut rng),
            lambda_s: 1.0,
        })
    }

    /// Checks the total loss of `T(c, P(s))` against every model parameter
    /// whose name starts with `prefix`; the rest are held constant.
    pub fn check_params(&self, checker: &GradCheck, prefix: &str) -> Result<GradCheckReport> {
        let checked = self.model.params.filter_prefix(prefix);
        let names: Vec<String> = checked.names().cloned().collect();
        let values: Vec<Tensor<f64>> = checked.iter().map(|(_, t)| t.clone()).collect();
        let targets = self.net.targets(&self.content, &self.style)?;
        checker.run(
            |tape, vars| {
                let fixed = self.model.params.register(tape, false);
                let pv = ParamVars::from_pairs(
                    fixed
                        .iter()
                        .filter(|(k, _)| !k.starts_with(prefix))
                        .map(|(k, v)| (k.clone(), *v))
                        .chain(names.iter().cloned().zip(vars.iter().copied())),
                );
                let c = tape.constant(self.content.clone());
                let s = tape.constant(self.style.clone());
                let (_, out) = self.model.forward_on(tape, &pv, c, s)?;
                Ok(self.net.objective_on(tape, out, &targets, self.lambda_s)?.total)
            },
            &values,
        )
    }

    /// Checks the total loss of `T(c, S)` against the embedding `S = P(s)`.
    pub fn check_embedding(&self, checker: &GradCheck) -> Result<GradCheckReport> {
        let s = self.model.embed(&self.style)?.to_row();
        let targets = self.net.targets(&self.content, &self.style)?;
        let transfer = TransferNet::new(self.model.transfer.clone())?;
        checker.run(
            |tape, vars| {
                let pv = self.model.params.register(tape, false);
                let c = tape.constant(self.content.clone());
                let out = transfer.forward_on(tape, &pv, c, vars[0])?;
                Ok(self.net.objective_on(tape, out, &targets, self.lambda_s)?.total)
            },
            &[s],
        )
    }
}
