use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::losses::{LossNetwork, LossReport};
use crate::networks::StyleModel;
use crate::params::{ParamSet, ParamVars};
use crate::scalar::Scalar;
use crate::tape::{Gradients, Tape};
use crate::tensor::Tensor;

use super::{adam_update, augment_style, load_corpus, AdamState, AugmentConfig, TraceRow, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainOutput<M, T> {
    pub model: M,
    pub adam: AdamState<T>,
    pub trace: Vec<TraceRow>,
}

/// Draws a content batch and an augmented style batch in a fixed rng order.
pub(crate) fn sample_batch<T: Scalar, R: Rng>(
    rng: &mut R,
    contents: &[Tensor<T>],
    styles: &[Tensor<T>],
    batch: usize,
    augment: &AugmentConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut cs = Vec::with_capacity(batch);
    let mut ss = Vec::with_capacity(batch);
    for _ in 0..batch {
        cs.push(contents[rng.random_range(0..contents.len())].clone());
        let s = &styles[rng.random_range(0..styles.len())];
        ss.push(augment_style(s, augment, rng)?);
    }
    Ok((Tensor::stack_batch(&cs)?, Tensor::stack_batch(&ss)?))
}

pub(crate) fn collect_grads<T: Scalar>(
    params: &ParamSet<T>,
    vars: &ParamVars,
    grads: &mut Gradients<T>,
) -> Result<ParamSet<T>> {
    let mut out = ParamSet::new();
    for (name, p) in params.iter() {
        let v = vars.get(name)?;
        let g = grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape()));
        out.insert(name.clone(), g);
    }
    Ok(out)
}

pub(crate) fn check_corpora<T>(contents: &[Tensor<T>], styles: &[Tensor<T>]) -> Result<()> {
    if contents.is_empty() || styles.is_empty() {
        return Err(invalid!(
            "training needs at least one content and one style image (got {} and {})",
            contents.len(),
            styles.len()
        ));
    }
    Ok(())
}

pub(crate) fn row(step: usize, report: &LossReport) -> TraceRow {
    TraceRow {
        step,
        content_loss: report.content_loss,
        style_loss: report.style_loss,
        total: report.total,
    }
}

pub(crate) fn load_corpora<T: Scalar>(config: &TrainConfig) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>)> {
    let content_dir = config
        .content_corpus
        .as_ref()
        .ok_or_else(|| invalid!("content_corpus is not set"))?;
    let style_dir = config
        .style_corpus
        .as_ref()
        .ok_or_else(|| invalid!("style_corpus is not set"))?;
    let contents = load_corpus(content_dir, config.image_size)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let styles = load_corpus(style_dir, config.image_size)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    Ok((contents, styles))
}

/// Joint training with corpora read from the configured directories.
pub fn train_joint<T: Scalar>(
    config: &TrainConfig,
    on_report: &mut dyn FnMut(&TraceRow),
) -> Result<TrainOutput<StyleModel<T>, T>> {
    config.validate()?;
    let (contents, styles) = load_corpora(config)?;
    train_joint_on(config, &contents, &styles, on_report)
}

/// Trains `P` and `T` together. Each update samples a batch, predicts `S = P(s)`
/// for the augmented styles, renders `T(c, S)` and descends the combined loss
/// through both networks. `on_report` sees every `report_every`-th row and the last.
pub fn train_joint_on<T: Scalar>(
    config: &TrainConfig,
    contents: &[Tensor<T>],
    styles: &[Tensor<T>],
    on_report: &mut dyn FnMut(&TraceRow),
) -> Result<TrainOutput<StyleModel<T>, T>> {
    config.validate()?;
    check_corpora(contents, styles)?;
    let mut model = StyleModel::<T>::init(
        config.transfer.clone(),
        config.prediction.clone(),
        config.seed,
        config.init_std,
    )?;
    let net = LossNetwork::<T>::new(config.loss_net.clone())?;
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let lambda = T::of(config.lambda_s);
    let mut trace = Vec::with_capacity(config.budget);

    for step in 0..config.budget {
        let (c, s) = sample_batch(&mut rng, contents, styles, config.batch_size, &config.augment)?;
        let targets = net.targets(&c, &s)?;
        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape, true);
        let cv = tape.constant(c);
        let sv = tape.constant(s);
        let (_, out) = model.forward_on(&mut tape, &vars, cv, sv)?;
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
