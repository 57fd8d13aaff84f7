use crate::error::{shape_err, Error, Result};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring the parameter set, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first: ParamSet<T>,
    pub second: ParamSet<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros: ParamSet<T> = params
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam step over every parameter that has a gradient.
///
/// All gradients are validated before anything is modified, so a non-finite
/// gradient leaves parameters and state untouched.
pub fn adam_update<T: Scalar>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut AdamState<T>) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(shape_err!(
                "gradient for '{}' has shape {:?}, parameter has {:?}",
                name,
                g.shape(),
                p.shape()
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter '{}'", name)));
        }
        if !state.first.contains(name) {
            return Err(shape_err!("optimizer state has no moments for '{}'", name));
        }
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.eps);
    for (name, g) in grads.iter() {
        let m = state.first.get_mut(name).expect("checked above");
        let v = state.second.get_mut(name).expect("checked above");
        let p = params.get_mut(name).expect("checked above");
        for (((pv, mv), vv), &gv) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mv = b1 * *mv + one_b1 * gv;
            *vv = b2 * *vv + one_b2 * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
