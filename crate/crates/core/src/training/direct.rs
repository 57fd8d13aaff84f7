use crate::error::{invalid, Result};
use crate::losses::{LossNetwork, LossReport};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::{adam_update, AdamConfig, AdamState};

#[derive(Debug, Clone)]
pub struct DirectResult<T> {
    /// Lowest-loss iterate seen.
    pub image: Tensor<T>,
    pub best_step: usize,
    pub best: LossReport,
    /// Loss of iterate `i` at index `i`; iterate 0 is the content image.
    pub trace: Vec<LossReport>,
    /// Set when a non-finite loss stopped the run early; the trace ends before it.
    pub aborted_at: Option<usize>,
}

impl<T> DirectResult<T> {
    /// Best total loss up to and including each iterate.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|r| {
                best = best.min(r.total);
                best
            })
            .collect()
    }
}

/// Minimizes the style objective directly over the pixels of an image that
/// starts as the content image. Adam on the pixels, clamped to [0, 1] after
/// every step.
pub fn direct_optimize<T: Scalar>(
    content: &Tensor<T>,
    style: &Tensor<T>,
    net: &LossNetwork<T>,
    lambda_s: f64,
    steps: usize,
    optimizer: AdamConfig,
) -> Result<DirectResult<T>> {
    if steps == 0 {
        return Err(invalid!("direct optimization needs at least one step"));
    }
    if !(lambda_s > 0.0) {
        return Err(invalid!("lambda_s must be positive, got {}", lambda_s));
    }
    let (n, _, _, _) = content.dims4()?;
    if n != 1 {
        return Err(invalid!("direct optimization works on one image, got a batch of {}", n));
    }
    let targets = net.targets(content, style)?;
    let lambda = T::of(lambda_s);
    let mut params = ParamSet::new();
    params.insert("pixels", content.clone());
    let mut adam = AdamState::new(&params, optimizer);

    let mut trace = Vec::with_capacity(steps + 1);
    let mut best: Option<(usize, Tensor<T>, LossReport)> = None;
    let mut aborted_at = None;
    for i in 0..=steps {
        let x = params.get("pixels")?.clone();
        let mut tape = Tape::new();
        let xv = tape.param(x.clone());
        let loss = net.objective_on(&mut tape, xv, &targets, lambda)?;
        let report = LossReport::from_vars(&tape, &loss, lambda);
        if !report.total.is_finite() {
            aborted_at = Some(i);
            break;
        }
        if best.as_ref().is_none_or(|(_, _, b)| report.total < b.total) {
            best = Some((i, x, report.clone()));
        }
        trace.push(report);
        if i == steps {
            break;
        }
        let mut grads = tape.backward(loss.total)?;
        let mut g = ParamSet::new();
        g.insert("pixels", grads.take(xv).expect("pixels are differentiable"));
        adam_update(&mut params, &g, &mut adam)?;
        let px = params.get_mut("pixels").expect("inserted above");
        for v in px.data_mut() {
            *v = v.max(T::zero()).min(T::one());
        }
    }
    let (best_step, image, best) =
        best.ok_or_else(|| crate::error::Error::NonFinite("initial direct-optimization loss".into()))?;
    Ok(DirectResult {
        image,
        best_step,
        best,
        trace,
        aborted_at,
    })
}
