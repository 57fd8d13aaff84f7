use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::losses::{style_loss, total_loss, LossNetwork, LossReport};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::training::{direct_optimize, train_joint_on, AdamConfig, AugmentConfig, Stylizer, TrainConfig};

use super::stats::{linear_regression, paired_t_test, BoxStats, Regression, Summary, TTest};

/// Loss of one stylization; for aggregated records the losses are means over contents.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleRecord {
    pub group: String,
    pub style_id: String,
    pub content_id: String,
    pub min_gram_distance: Option<f64>,
    pub content_loss: f64,
    pub style_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub content: Summary,
    pub style: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyResult {
    pub records: Vec<StyleRecord>,
    pub summaries: Vec<GroupSummary>,
    pub regression: Option<Regression>,
    pub tests: Vec<(String, TTest)>,
}

impl StudyResult {
    fn summarize(records: Vec<StyleRecord>) -> Result<Self> {
        let mut groups: Vec<String> = Vec::new();
        for r in &records {
            if !groups.contains(&r.group) {
                groups.push(r.group.clone());
            }
        }
        let summaries = groups
            .into_iter()
            .map(|g| {
                let (c, s): (Vec<f64>, Vec<f64>) = records
                    .iter()
                    .filter(|r| r.group == g)
                    .map(|r| (r.content_loss, r.style_loss))
                    .unzip();
                Ok(GroupSummary {
                    group: g,
                    content: Summary::of(&c)?,
                    style: Summary::of(&s)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(StudyResult {
            records,
            summaries,
            regression: None,
            tests: Vec::new(),
        })
    }

    pub fn records_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "group",
            "style",
            "content",
            "min_gram_distance",
            "content_loss",
            "style_loss",
            "total",
        ]);
        for r in &self.records {
            t.push(vec![
                r.group.clone(),
                r.style_id.clone(),
                r.content_id.clone(),
                r.min_gram_distance.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.content_loss),
                fmt_f64(r.style_loss),
                fmt_f64(r.total),
            ]);
        }
        t
    }

    /// Long-format `group, metric, value` rows for every summary statistic.
    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["group", "metric", "value"]);
        let mut put = |g: &str, m: &str, v: String| t.push(vec![g.to_string(), m.to_string(), v]);
        for s in &self.summaries {
            put(&s.group, "n", s.content.n.to_string());
            for (name, sum) in [("content", &s.content), ("style", &s.style)] {
                put(&s.group, &format!("{}_mean", name), fmt_f64(sum.mean));
                put(&s.group, &format!("{}_median", name), fmt_f64(sum.median));
                put(&s.group, &format!("{}_std", name), fmt_f64(sum.std));
            }
        }
        if let Some(r) = &self.regression {
            put("regression", "slope", fmt_f64(r.slope));
            put("regression", "intercept", fmt_f64(r.intercept));
            put("regression", "r2", fmt_f64(r.r2));
        }
        for (name, tt) in &self.tests {
            put(name, "t", fmt_f64(tt.t));
            put(name, "p", fmt_f64(tt.p));
            put(name, "dof", tt.dof.to_string());
        }
        t
    }
}

type Named<T> = (String, Tensor<T>);

/// Losses of `model.stylize(content, style)` against that content and style.
pub fn evaluate_pair<T: Scalar, M: Stylizer<T> + ?Sized>(
    model: &M,
    net: &LossNetwork<T>,
    lambda_s: f64,
    style: &Tensor<T>,
    content: &Tensor<T>,
) -> Result<LossReport> {
    let x = model.stylize(content, style)?;
    total_loss(&x, content, style, net, T::of(lambda_s))
}

fn evaluate_group<T: Scalar, M: Stylizer<T> + Sync + ?Sized>(
    model: &M,
    net: &LossNetwork<T>,
    lambda_s: f64,
    group: &str,
    styles: &[Named<T>],
    contents: &[Named<T>],
) -> Result<Vec<StyleRecord>> {
    let pairs: Vec<(usize, usize)> = (0..styles.len())
        .flat_map(|s| (0..contents.len()).map(move |c| (s, c)))
        .collect();
    pairs
        .par_iter()
        .map(|&(si, ci)| {
            let r = evaluate_pair(model, net, lambda_s, &styles[si].1, &contents[ci].1)?;
            Ok(StyleRecord {
                group: group.to_string(),
                style_id: styles[si].0.clone(),
                content_id: contents[ci].0.clone(),
                min_gram_distance: None,
                content_loss: r.content_loss,
                style_loss: r.style_loss,
                total: r.total,
            })
        })
        .collect()
}

fn non_empty<T>(what: &str, items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Err(invalid!("{} must not be empty", what));
    }
    Ok(())
}

/// Loss distributions of `T(c, P(s))` for styles seen and not seen in training.
pub fn generalization_study<T: Scalar, M: Stylizer<T> + Sync + ?Sized>(
    model: &M,
    net: &LossNetwork<T>,
    lambda_s: f64,
    observed: &[Named<T>],
    unobserved: &[Named<T>],
    contents: &[Named<T>],
) -> Result<StudyResult> {
    non_empty("observed styles", observed)?;
    non_empty("unobserved styles", unobserved)?;
    non_empty("contents", contents)?;
    let mut records = evaluate_group(model, net, lambda_s, "observed", observed, contents)?;
    records.extend(evaluate_group(
        model,
        net,
        lambda_s,
        "unobserved",
        unobserved,
        contents,
    )?);
    StudyResult::summarize(records)
}

/// Two methods on identical (style, content) pairs, with paired t-tests on
/// style and content loss (method `a` minus method `b`).
pub fn comparison_study<T: Scalar, A, B>(
    (name_a, a): (&str, &A),
    (name_b, b): (&str, &B),
    net: &LossNetwork<T>,
    lambda_s: f64,
    styles: &[Named<T>],
    contents: &[Named<T>],
) -> Result<StudyResult>
where
    A: Stylizer<T> + Sync + ?Sized,
    B: Stylizer<T> + Sync + ?Sized,
{
    non_empty("styles", styles)?;
    non_empty("contents", contents)?;
    let ra = evaluate_group(a, net, lambda_s, name_a, styles, contents)?;
    let rb = evaluate_group(b, net, lambda_s, name_b, styles, contents)?;
    let col = |rs: &[StyleRecord], f: fn(&StyleRecord) -> f64| rs.iter().map(f).collect::<Vec<_>>();
    let tests = if ra.len() >= 2 {
        vec![
            (
                "t_test_style".to_string(),
                paired_t_test(&col(&ra, |r| r.style_loss), &col(&rb, |r| r.style_loss))?,
            ),
            (
                "t_test_content".to_string(),
                paired_t_test(&col(&ra, |r| r.content_loss), &col(&rb, |r| r.content_loss))?,
            ),
        ]
    } else {
        Vec::new()
    };
    let mut records = ra;
    records.extend(rb);
    let mut result = StudyResult::summarize(records)?;
    result.tests = tests;
    Ok(result)
}

/// `sqrt(Σ_i (1/n_i) ‖G_i(a) − G_i(b)‖²)` over the style layers: the style
/// loss metric, as a distance.
pub fn gram_distance<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, net: &LossNetwork<T>) -> Result<f64> {
    Ok(style_loss(a, b, net)?.as_f64().max(0.0).sqrt())
}

/// Per test style: distance to the nearest training style (ties go to the
/// lowest index) against the mean style loss over contents, with a
/// least-squares fit of loss on distance.
pub fn gram_proximity_study<T: Scalar, M: Stylizer<T> + Sync + ?Sized>(
    model: &M,
    net: &LossNetwork<T>,
    lambda_s: f64,
    train_styles: &[Named<T>],
    test_styles: &[Named<T>],
    contents: &[Named<T>],
) -> Result<StudyResult> {
    non_empty("training styles", train_styles)?;
    non_empty("test styles", test_styles)?;
    non_empty("contents", contents)?;
    let mut records = Vec::with_capacity(test_styles.len());
    for (id, style) in test_styles {
        let dists = train_styles
            .par_iter()
            .map(|(_, t)| gram_distance(style, t, net))
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (i, &d) in dists.iter().enumerate() {
            if d < dists[best] {
                best = i;
            }
        }
        let per = evaluate_group(model, net, lambda_s, "test", &[(id.clone(), style.clone())], contents)?;
        let n = per.len() as f64;
        records.push(StyleRecord {
            group: "test".into(),
            style_id: id.clone(),
            content_id: format!("nearest:{}", train_styles[best].0),
            min_gram_distance: Some(dists[best]),
            content_loss: per.iter().map(|r| r.content_loss).sum::<f64>() / n,
            style_loss: per.iter().map(|r| r.style_loss).sum::<f64>() / n,
            total: per.iter().map(|r| r.total).sum::<f64>() / n,
        });
    }
    let x: Vec<f64> = records.iter().map(|r| r.min_gram_distance.unwrap()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.style_loss).collect();
    let regression = if records.len() >= 2 {
        Some(linear_regression(&x, &y)?)
    } else {
        None
    };
    let mut result = StudyResult::summarize(records)?;
    result.regression = regression;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub count: usize,
    pub result: StudyResult,
    pub style_box: BoxStats,
    pub content_box: BoxStats,
}

/// Trains one model per style count on the first `count` styles of the pool,
/// without augmentation, and evaluates each on held-out styles.
pub fn scaling_experiment<T: Scalar>(
    base: &TrainConfig,
    counts: &[usize],
    style_pool: &[Named<T>],
    train_contents: &[Tensor<T>],
    eval_styles: &[Named<T>],
    eval_contents: &[Named<T>],
) -> Result<Vec<ScalingPoint>> {
    non_empty("style counts", counts)?;
    if counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
        return Err(invalid!(
            "style counts must be positive and strictly ascending, got {:?}",
            counts
        ));
    }
    if *counts.last().unwrap() > style_pool.len() {
        return Err(invalid!(
            "largest style count {} exceeds the pool of {} styles",
            counts.last().unwrap(),
            style_pool.len()
        ));
    }
    let mut config = base.clone();
    config.augment = AugmentConfig::disabled();
    let net = LossNetwork::<T>::new(config.loss_net.clone())?;
    counts
        .iter()
        .map(|&count| {
            let styles: Vec<Tensor<T>> = style_pool[..count].iter().map(|(_, t)| t.clone()).collect();
            let out = train_joint_on(&config, train_contents, &styles, &mut |_| {})?;
            let mut records = evaluate_group(
                &out.model,
                &net,
                config.lambda_s,
                &format!("count_{}", count),
                eval_styles,
                eval_contents,
            )?;
            records.iter_mut().for_each(|r| r.group = format!("count_{}", count));
            let style: Vec<f64> = records.iter().map(|r| r.style_loss).collect();
            let content: Vec<f64> = records.iter().map(|r| r.content_loss).collect();
            Ok(ScalingPoint {
                count,
                style_box: BoxStats::of(&style)?,
                content_box: BoxStats::of(&content)?,
                result: StudyResult::summarize(records)?,
            })
        })
        .collect()
}

/// Hex SHA-256 of an image's shape and 8-bit quantized pixels.
pub fn image_hash<T: Scalar>(image: &Tensor<T>) -> String {
    let mut h = Sha256::new();
    for &d in image.shape() {
        h.update((d as u64).to_le_bytes());
    }
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    h.update(&bytes);
    h.finalize().iter().map(|b| format!("{:02x}", b)).collect()
}

/// Both models on both domains' test styles. Fails if any test style also
/// occurs (by pixel hash) in either model's training corpus.
#[allow(clippy::too_many_arguments)]
pub fn cross_dataset_study<T: Scalar, A, B>(
    model_a: &A,
    model_b: &B,
    net: &LossNetwork<T>,
    lambda_s: f64,
    test_a: &[Named<T>],
    test_b: &[Named<T>],
    contents: &[Named<T>],
    train_hashes: &[String],
) -> Result<(StudyResult, StudyResult)>
where
    A: Stylizer<T> + Sync + ?Sized,
    B: Stylizer<T> + Sync + ?Sized,
{
    non_empty("domain A test styles", test_a)?;
    non_empty("domain B test styles", test_b)?;
    non_empty("contents", contents)?;
    for (id, img) in test_a.iter().chain(test_b) {
        if train_hashes.contains(&image_hash(img)) {
            return Err(invalid!("evaluation style '{}' also appears in a training corpus", id));
        }
    }
    let run = |m: &dyn Fn(&str, &[Named<T>]) -> Result<Vec<StyleRecord>>| -> Result<StudyResult> {
        let mut r = m("domain_a", test_a)?;
        r.extend(m("domain_b", test_b)?);
        StudyResult::summarize(r)
    };
    let a = run(&|g, s| evaluate_group(model_a, net, lambda_s, g, s, contents))?;
    let b = run(&|g, s| evaluate_group(model_b, net, lambda_s, g, s, contents))?;
    Ok((a, b))
}

/// Per-pair pixel optimization, so the direct baseline can sit in any study.
#[derive(Debug, Clone)]
pub struct DirectStylizer<T> {
    pub net: LossNetwork<T>,
    pub lambda_s: f64,
    pub steps: usize,
    pub optimizer: AdamConfig,
}

impl<T: Scalar> Stylizer<T> for DirectStylizer<T> {
    fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(direct_optimize(content, style, &self.net, self.lambda_s, self.steps, self.optimizer)?.image)
    }
}
