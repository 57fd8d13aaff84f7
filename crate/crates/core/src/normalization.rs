//! Conditional instance normalization and the AdaIN statistics mapping.

use crate::error::{shape_err, Result};
use crate::ops::spatial_moments;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Variance offset inside every normalization.
pub const NORM_EPS: f64 = 1e-5;

/// Per-channel scale and shift applied after one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub layer_id: String,
}

impl<T: Scalar> NormParams<T> {
    pub fn new(gamma: Tensor<T>, beta: Tensor<T>, layer_id: impl Into<String>) -> Result<Self> {
        if gamma.rank() != 1 || gamma.shape() != beta.shape() {
            return Err(shape_err!(
                "gamma {:?} and beta {:?} must be equal-length vectors",
                gamma.shape(),
                beta.shape()
            ));
        }
        Ok(NormParams {
            gamma,
            beta,
            layer_id: layer_id.into(),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// `gamma * (x - mu) / sqrt(sigma^2 + eps) + beta` with per-(sample, channel) spatial statistics.
pub fn conditional_instance_norm<T: Scalar>(x: &Tensor<T>, params: &NormParams<T>, eps: T) -> Result<Tensor<T>> {
    let (_, c, _, _) = x.dims4()?;
    if params.channels() != c {
        return Err(crate::error::invalid!(
            "norm params for layer '{}' have {} channels but input has {}",
            params.layer_id,
            params.channels(),
            c
        ));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let g = tape.constant(params.gamma.clone());
    let b = tape.constant(params.beta.clone());
    let y = tape.instance_norm(xv, g, b, eps)?;
    Ok(tape.value(y).clone())
}

/// Fixed heuristic mapping: beta = spatial mean, gamma = population spatial std.
pub fn adain_params<T: Scalar>(style_features: &Tensor<T>) -> Result<NormParams<T>> {
    let (n, c, _, _) = style_features.dims4()?;
    if n != 1 {
        return Err(shape_err!(
            "adain statistics take a single style sample, got batch {}",
            n
        ));
    }
    let (mean, std) = spatial_moments(style_features)?;
    NormParams::new(std.reshape(&[c])?, mean.reshape(&[c])?, "adain")
}

/// Re-normalizes content features to carry the style features' channel statistics.
pub fn adain_transfer<T: Scalar>(content: &Tensor<T>, style: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let (_, cc, _, _) = content.dims4()?;
    let (_, sc, _, _) = style.dims4()?;
    if cc != sc {
        return Err(crate::error::invalid!(
            "content has {} channels but style has {}",
            cc,
            sc
        ));
    }
    conditional_instance_norm(content, &adain_params(style)?, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64, b: f64) -> NormParams<f64> {
        NormParams::new(Tensor::full(&[1], g), Tensor::full(&[1], b), "t").unwrap()
    }

    #[test]
    fn hand_computed_two_by_two() {
        let x = Tensor::from_f64(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conditional_instance_norm(&x, &params(2.0, 0.0), 1e-5).unwrap();
        let d = (1.25f64 + 1e-5).sqrt();
        for (out, z) in y.data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((out - 2.0 * (z - 2.5) / d).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_reparameterization() {
        let x = Tensor::from_f64(&[1, 1, 2, 3], &[0.3, -1.0, 2.0, 5.0, 0.1, 0.0]).unwrap();
        let y = conditional_instance_norm(&x, &params(3.0, -1.0), 1e-5).unwrap();
        let (m, s) = spatial_moments(&y).unwrap();
        assert!((m.item() + 1.0).abs() < 1e-12);
        assert!((s.item() - 3.0).abs() < 1e-4);
    }

    #[test]
    fn channel_mismatch_is_invalid() {
        let x = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        assert!(matches!(
            conditional_instance_norm(&x, &params(1.0, 0.0), 1e-5),
            Err(crate::Error::InvalidArgument(_))
        ));
        let s = Tensor::<f64>::zeros(&[1, 3, 2, 2]);
        assert!(adain_transfer(&x, &s, 1e-5).is_err());
    }

    #[test]
    fn adain_statistics() {
        let s = Tensor::<f64>::full(&[1, 1, 2, 2], 0.7);
        let p = adain_params(&s).unwrap();
        assert_eq!((p.beta.item(), p.gamma.item()), (0.7, 0.0));
        let s = Tensor::<f64>::from_f64(&[1, 1, 1, 2], &[0.0, 2.0]).unwrap();
        let p = adain_params(&s).unwrap();
        assert_eq!((p.beta.item(), p.gamma.item()), (1.0, 1.0));
    }

    #[test]
    fn constant_style_collapses_content() {
        let c = Tensor::from_f64(&[1, 1, 2, 2], &[0.1, 0.9, 0.4, 0.2]).unwrap();
        let s = Tensor::<f64>::full(&[1, 1, 2, 2], 0.3);
        let y = adain_transfer(&c, &s, 1e-5).unwrap();
        assert!(y.data().iter().all(|v: &f64| (v - 0.3).abs() < 1e-15));
    }
}
