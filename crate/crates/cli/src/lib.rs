//! Command-line front end for `nst-core`.
//!
//! [`cli_dispatch`] parses an argument vector, runs one subcommand and returns
//! the process exit code: 0 on success, 2 on usage errors, 1 on runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use nst_core::analysis::{
    self, alpha_steps, comparison_study, cross_dataset_study, generalization_study, gram_proximity_study,
    identity_embedding, image_hash, interpolate_embedding, pca_grid_stylize, scaling_experiment, StudyResult,
    TsneConfig,
};
use nst_core::gradcheck::{GradCheck, TinyProblem};
use nst_core::io::{fmt_f64, load_image, save_image, write_csv, Checkpoint, CsvTable, RunConfig, TrainedState};
use nst_core::losses::LossNetwork;
use nst_core::networks::{StyleEmbedding, StyleModel};
use nst_core::training::{
    direct_optimize, load_corpus, trace_table, train_adain, train_joint, AdainModel, Stylizer, TraceRow,
};
use nst_core::{DType, Error, Scalar, Tensor};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "NST_CONFIG";

/// End-to-end gradient tolerance used by `grad-check`.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "nst",
    version,
    about = "Arbitrary style transfer with predicted normalization embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Run configuration (`key = value` lines). Falls back to $NST_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    content_dir: Option<PathBuf>,
    #[arg(long)]
    style_dir: Option<PathBuf>,
    /// Number of parameter updates.
    #[arg(long)]
    budget: Option<usize>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV (step, content_loss, style_loss, total).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jointly train the style prediction and transfer networks.
    Train(TrainArgs),
    /// Train the AdaIN encoder/decoder baseline.
    TrainAdain(TrainArgs),
    /// Render a content image in the style of a style image (or a saved embedding).
    Stylize {
        #[arg(long)]
        content: PathBuf,
        #[arg(long, required_unless_present = "embedding", conflicts_with = "embedding")]
        style: Option<PathBuf>,
        /// Embedding CSV written by `embed`.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the predicted style embedding of an image as CSV.
    Embed {
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Images along the line from the content's identity embedding to a style's embedding.
    Interpolate {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of intervals; writes k+1 images.
        #[arg(long, default_value_t = 4)]
        alpha_steps: usize,
        #[arg(long, default_value = "ppm")]
        format: String,
    },
    /// Optimize the pixels of one image directly against the style objective.
    Optimize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Loss distributions on observed versus unobserved styles.
    StudyGeneralization {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        observed_dir: PathBuf,
        #[arg(long)]
        unobserved_dir: PathBuf,
        #[arg(long)]
        content_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Second checkpoint (e.g. the AdaIN baseline) compared pairwise on the unobserved styles.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Style loss against Gram distance to the nearest training style.
    StudyProximity {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train_dir: PathBuf,
        #[arg(long)]
        test_dir: PathBuf,
        #[arg(long)]
        content_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model per style count and evaluate on held-out styles.
    StudyScaling {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        style_dir: PathBuf,
        #[arg(long)]
        content_dir: PathBuf,
        #[arg(long)]
        eval_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        counts: Vec<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate two models trained on different style corpora on each other's test styles.
    StudyCross {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint_a: PathBuf,
        #[arg(long)]
        checkpoint_b: PathBuf,
        #[arg(long)]
        test_a_dir: PathBuf,
        #[arg(long)]
        test_b_dir: PathBuf,
        #[arg(long)]
        content_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Stylize on a grid spanning the two principal components of one artist's embeddings.
    PcaGrid {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        style_dir: PathBuf,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        k_std: Option<f64>,
        #[arg(long)]
        grid_n: Option<usize>,
    },
    /// 2-D t-SNE map of the embeddings of a directory of styles.
    Tsne {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        style_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        perplexity: Option<f64>,
    },
    /// Finite-difference check of the end-to-end objective gradient.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 3e-6)]
        step: f64,
    },
}

type Res<T> = nst_core::Result<T>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn cli_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{}", e);
                return 0;
            }
            eprint!("{}", e);
            eprintln!();
            eprintln!("{}", usage_for(&args));
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            1
        }
    }
}

/// Help text of the subcommand named in `args`, or the top-level help.
fn usage_for(args: &[OsString]) -> String {
    let mut root = Cli::command();
    let name = args.get(1).and_then(|a| a.to_str()).unwrap_or("");
    match root.find_subcommand_mut(name) {
        Some(sub) => sub.render_help().to_string(),
        None => root.render_help().to_string(),
    }
}

fn load_config(args: &ConfigArgs) -> Res<RunConfig> {
    let path = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let base = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    apply_overrides(base, &args.set)
}

fn apply_overrides(base: RunConfig, set: &[String]) -> Res<RunConfig> {
    if set.is_empty() {
        return Ok(base);
    }
    let mut text = base.serialize();
    for s in set {
        if !s.contains('=') {
            return Err(Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{}`", s)));
        }
        text.push_str(s);
        text.push('\n');
    }
    RunConfig::parse(&text)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Refuses to write any output onto an input file.
fn guard(inputs: &[&Path], outputs: &[&Path]) -> Res<()> {
    for o in outputs {
        if let Some(i) = inputs.iter().find(|i| same_file(i, o)) {
            return Err(Error::InvalidArgument(format!(
                "output {} would overwrite input {}",
                o.display(),
                i.display()
            )));
        }
    }
    Ok(())
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default()
}

/// Like [`guard`] for outputs placed inside `out_dir` next to inputs from `in_dirs`.
fn guard_dir(in_dirs: &[&Path], in_files: &[&Path], out_dir: &Path, names: &[String]) -> Res<()> {
    let mut inputs: Vec<PathBuf> = in_files.iter().map(|p| p.to_path_buf()).collect();
    for d in in_dirs {
        inputs.extend(files_in(d));
    }
    let outs: Vec<PathBuf> = names.iter().map(|n| out_dir.join(n)).collect();
    guard(
        &inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
        &outs.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
    )
}

fn mkdir(dir: &Path) -> Res<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Train(a) => {
            let cfg = train_config(&a)?;
            match cfg.precision {
                DType::F32 => train::<f32>(&a, cfg, false),
                DType::F64 => train::<f64>(&a, cfg, false),
            }
        }
        Command::TrainAdain(a) => {
            let cfg = train_config(&a)?;
            match cfg.precision {
                DType::F32 => train::<f32>(&a, cfg, true),
                DType::F64 => train::<f64>(&a, cfg, true),
            }
        }
        Command::GradCheck { seeds, step } => grad_check(seeds, step),
        other => {
            let precision = match &other {
                Command::Optimize { cfg, .. } | Command::StudyScaling { cfg, .. } => load_config(cfg)?.precision,
                _ => DType::F64,
            };
            match precision {
                DType::F32 => run_typed::<f32>(other),
                DType::F64 => run_typed::<f64>(other),
            }
        }
    }
}

fn train_config(a: &TrainArgs) -> Res<RunConfig> {
    let mut cfg = load_config(&a.cfg)?;
    if let Some(d) = &a.content_dir {
        cfg.content_corpus = Some(d.clone());
    }
    if let Some(d) = &a.style_dir {
        cfg.style_corpus = Some(d.clone());
    }
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    Ok(cfg)
}

fn report(r: &TraceRow) {
    eprintln!(
        "step {:>6}  content {:.6e}  style {:.6e}  total {:.6e}",
        r.step, r.content_loss, r.style_loss, r.total
    );
}

fn train<T: Scalar>(a: &TrainArgs, mut cfg: RunConfig, adain: bool) -> Res<()> {
    let tc = cfg.train_config();
    let mut inputs = Vec::new();
    for d in [&tc.content_corpus, &tc.style_corpus].into_iter().flatten() {
        inputs.extend(files_in(d));
    }
    let mut outs = vec![a.out.as_path()];
    if let Some(t) = &a.trace {
        outs.push(t);
    }
    guard(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &outs)?;

    if let Some(dir) = &tc.style_corpus {
        let styles = load_corpus::<T>(dir, tc.image_size)?;
        let hashes: Vec<String> = styles.iter().map(|(_, t)| image_hash(t)).collect();
        cfg.meta.insert("train_style_hashes".into(), hashes.join(","));
    }
    cfg.meta
        .insert("model".into(), if adain { "adain" } else { "joint" }.into());
    let (params, adam, trace) = if adain {
        let out = train_adain::<T>(&tc, &mut report)?;
        (out.model.params, out.adam, out.trace)
    } else {
        let out = train_joint::<T>(&tc, &mut report)?;
        (out.model.params, out.adam, out.trace)
    };
    TrainedState {
        params,
        adam: Some(adam),
        config: cfg,
    }
    .to_checkpoint()
    .save(&a.out)?;
    if let Some(t) = &a.trace {
        write_csv(&trace_table(&trace), t)?;
    }
    Ok(())
}

/// A trained model of either kind, rebuilt from a checkpoint.
enum Loaded<T> {
    Joint(StyleModel<T>),
    Adain(AdainModel<T>),
}

struct LoadedRun<T> {
    model: Loaded<T>,
    config: RunConfig,
}

impl<T: Scalar> Stylizer<T> for Loaded<T> {
    fn stylize(&self, content: &Tensor<T>, style: &Tensor<T>) -> Res<Tensor<T>> {
        match self {
            Loaded::Joint(m) => m.stylize(content, style),
            Loaded::Adain(m) => m.stylize(content, style),
        }
    }
}

impl<T: Scalar> Loaded<T> {
    fn joint(&self) -> Res<&StyleModel<T>> {
        match self {
            Loaded::Joint(m) => Ok(m),
            Loaded::Adain(_) => Err(Error::InvalidArgument(
                "this command needs a jointly trained checkpoint, not the AdaIN baseline".into(),
            )),
        }
    }
}

fn load_run<T: Scalar>(path: &Path, overrides: &[String]) -> Res<LoadedRun<T>> {
    let ck = Checkpoint::load(path)?;
    let state = TrainedState::<T>::from_checkpoint(&ck)?;
    let config = apply_overrides(state.config.clone(), overrides)?;
    let model = match config.meta.get("model").map(String::as_str) {
        Some("adain") => Loaded::Adain(AdainModel::from_parts(config.loss_config(), state.params)?),
        _ => Loaded::Joint(StyleModel::from_parts(
            config.transfer_config(),
            config.prediction_config(),
            state.params,
        )?),
    };
    Ok(LoadedRun { model, config })
}

fn named_corpus<T: Scalar>(dir: &Path, size: usize) -> Res<Vec<(String, Tensor<T>)>> {
    Ok(load_corpus::<T>(dir, size)?
        .into_iter()
        .map(|(p, t)| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (id, t)
        })
        .collect())
}

fn photos<T: Scalar>(dir: &Path, cfg: &RunConfig) -> Res<Vec<(String, Tensor<T>)>> {
    let mut c = named_corpus(dir, cfg.image_size)?;
    c.truncate(cfg.study_photos.max(1));
    Ok(c)
}

fn write_study(result: &StudyResult, dir: &Path, prefix: &str) -> Res<()> {
    write_csv(&result.records_table(), &dir.join(format!("{}records.csv", prefix)))?;
    write_csv(&result.summary_table(), &dir.join(format!("{}summary.csv", prefix)))
}

fn embedding_table(e: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["index", "value"]);
    for (i, v) in e.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*v)]);
    }
    t
}

fn read_embedding<T: Scalar>(path: &Path) -> Res<StyleEmbedding<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let v = line
            .split(',')
            .nth(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected `index,value`, got `{}`", line),
            })?;
        values.push(T::of(v));
    }
    Ok(StyleEmbedding::new(values))
}

fn run_typed<T: Scalar>(cmd: Command) -> Res<()> {
    match cmd {
        Command::Stylize {
            content,
            style,
            embedding,
            checkpoint,
            out,
        } => {
            let mut inputs = vec![content.as_path(), checkpoint.as_path()];
            inputs.extend(style.as_deref());
            inputs.extend(embedding.as_deref());
            guard(&inputs, &[&out])?;
            let run = load_run::<T>(&checkpoint, &[])?;
            let c: Tensor<T> = load_image(&content)?;
            let img = match (&style, &embedding) {
                (_, Some(e)) => run.model.joint()?.render(&c, &read_embedding(e)?)?,
                (Some(s), None) => run.model.stylize(&c, &load_image(s)?)?,
                (None, None) => unreachable!("clap requires one of --style/--embedding"),
            };
            save_image(&img, &out)
        }
        Command::Embed { style, checkpoint, out } => {
            guard(&[&style, &checkpoint], &[&out])?;
            let run = load_run::<T>(&checkpoint, &[])?;
            let e = run.model.joint()?.embed(&load_image(&style)?)?;
            write_csv(&embedding_table(&e.to_f64()), &out)
        }
        Command::Interpolate {
            content,
            style,
            checkpoint,
            out_dir,
            alpha_steps: k,
            format,
        } => {
            if format != "ppm" && format != "png" {
                return Err(Error::InvalidArgument(format!(
                    "--format must be ppm or png, got `{}`",
                    format
                )));
            }
            let alphas = alpha_steps(k)?;
            let names: Vec<String> = (0..alphas.len())
                .map(|i| format!("interp_{:03}.{}", i, format))
                .collect();
            guard_dir(&[], &[&content, &style, &checkpoint], &out_dir, &names)?;
            let run = load_run::<T>(&checkpoint, &[])?;
            let model = run.model.joint()?;
            let c: Tensor<T> = load_image(&content)?;
            let from = identity_embedding(&c, model)?;
            let to = model.embed(&load_image(&style)?)?;
            mkdir(&out_dir)?;
            let mut table = CsvTable::new(&["index", "alpha", "file"]);
            for (i, (&a, name)) in alphas.iter().zip(&names).enumerate() {
                let e = interpolate_embedding(&from, &to, a)?;
                save_image(&model.render(&c, &e)?, &out_dir.join(name))?;
                table.push(vec![i.to_string(), fmt_f64(a), name.clone()]);
            }
            write_csv(&table, &out_dir.join("alphas.csv"))
        }
        Command::Optimize {
            cfg,
            content,
            style,
            out,
            trace,
            steps,
            lambda,
        } => {
            let mut outs = vec![out.as_path()];
            outs.extend(trace.as_deref());
            guard(&[&content, &style], &outs)?;
            let cfg = load_config(&cfg)?;
            let net = LossNetwork::<T>::new(cfg.loss_config())?;
            let mut adam = cfg.adam_config();
            adam.learning_rate = cfg.direct_lr;
            let r = direct_optimize(
                &load_image::<T>(&content)?,
                &load_image::<T>(&style)?,
                &net,
                lambda.unwrap_or(cfg.lambda_s),
                steps.unwrap_or(cfg.direct_steps),
                adam,
            )?;
            save_image(&r.image, &out)?;
            if let Some(t) = &trace {
                let rows: Vec<TraceRow> = r
                    .trace
                    .iter()
                    .enumerate()
                    .map(|(i, l)| TraceRow {
                        step: i,
                        content_loss: l.content_loss,
                        style_loss: l.style_loss,
                        total: l.total,
                    })
                    .collect();
                write_csv(&trace_table(&rows), t)?;
            }
            if let Some(step) = r.aborted_at {
                return Err(Error::NonFinite(format!("direct optimization loss at step {}", step)));
            }
            eprintln!(
                "best total {:.6e} at step {} (initial {:.6e})",
                r.best.total, r.best_step, r.trace[0].total
            );
            Ok(())
        }
        Command::StudyGeneralization {
            cfg,
            checkpoint,
            observed_dir,
            unobserved_dir,
            content_dir,
            out_dir,
            baseline,
        } => {
            let names = [
                "records.csv",
                "summary.csv",
                "comparison_records.csv",
                "comparison_summary.csv",
            ]
            .map(String::from);
            let mut files = vec![checkpoint.as_path()];
            files.extend(baseline.as_deref());
            guard_dir(
                &[&observed_dir, &unobserved_dir, &content_dir],
                &files,
                &out_dir,
                &names,
            )?;
            let run = load_run::<T>(&checkpoint, &cfg.set)?;
            let c = &run.config;
            let net = LossNetwork::<T>::new(c.loss_config())?;
            let observed = named_corpus(&observed_dir, c.image_size)?;
            let unobserved = named_corpus(&unobserved_dir, c.image_size)?;
            let contents = photos(&content_dir, c)?;
            let result = generalization_study(&run.model, &net, c.lambda_s, &observed, &unobserved, &contents)?;
            mkdir(&out_dir)?;
            write_study(&result, &out_dir, "")?;
            if let Some(b) = &baseline {
                let other = load_run::<T>(b, &[])?;
                let cmp = comparison_study(
                    ("model", &run.model),
                    ("baseline", &other.model),
                    &net,
                    c.lambda_s,
                    &unobserved,
                    &contents,
                )?;
                write_study(&cmp, &out_dir, "comparison_")?;
            }
            Ok(())
        }
        Command::StudyProximity {
            cfg,
            checkpoint,
            train_dir,
            test_dir,
            content_dir,
            out_dir,
        } => {
            let names = ["records.csv", "summary.csv"].map(String::from);
            guard_dir(&[&train_dir, &test_dir, &content_dir], &[&checkpoint], &out_dir, &names)?;
            let run = load_run::<T>(&checkpoint, &cfg.set)?;
            let c = &run.config;
            let net = LossNetwork::<T>::new(c.loss_config())?;
            let result = gram_proximity_study(
                &run.model,
                &net,
                c.lambda_s,
                &named_corpus(&train_dir, c.image_size)?,
                &named_corpus(&test_dir, c.image_size)?,
                &photos(&content_dir, c)?,
            )?;
            mkdir(&out_dir)?;
            write_study(&result, &out_dir, "")
        }
        Command::StudyScaling {
            cfg,
            style_dir,
            content_dir,
            eval_dir,
            counts,
            out_dir,
        } => {
            let names = ["records.csv", "summary.csv", "box.csv"].map(String::from);
            guard_dir(&[&style_dir, &content_dir, &eval_dir], &[], &out_dir, &names)?;
            let c = load_config(&cfg)?;
            let tc = c.train_config();
            let pool = named_corpus::<T>(&style_dir, c.image_size)?;
            let train_contents: Vec<Tensor<T>> = named_corpus::<T>(&content_dir, c.image_size)?
                .into_iter()
                .map(|(_, t)| t)
                .collect();
            let eval = named_corpus(&eval_dir, c.image_size)?;
            let eval_contents = photos(&content_dir, &c)?;
            let points = scaling_experiment(&tc, &counts, &pool, &train_contents, &eval, &eval_contents)?;
            let mut records = StudyResult::default();
            let mut boxes = CsvTable::new(&["count", "loss", "p10", "q25", "median", "q75", "p90"]);
            for p in &points {
                records.records.extend(p.result.records.iter().cloned());
                records.summaries.extend(p.result.summaries.iter().cloned());
                for (kind, b) in [("style", &p.style_box), ("content", &p.content_box)] {
                    boxes.push(vec![
                        p.count.to_string(),
                        kind.to_string(),
                        fmt_f64(b.p10),
                        fmt_f64(b.q25),
                        fmt_f64(b.median),
                        fmt_f64(b.q75),
                        fmt_f64(b.p90),
                    ]);
                }
            }
            mkdir(&out_dir)?;
            write_study(&records, &out_dir, "")?;
            write_csv(&boxes, &out_dir.join("box.csv"))
        }
        Command::StudyCross {
            cfg,
            checkpoint_a,
            checkpoint_b,
            test_a_dir,
            test_b_dir,
            content_dir,
            out_dir,
        } => {
            let names = [
                "model_a_records.csv",
                "model_a_summary.csv",
                "model_b_records.csv",
                "model_b_summary.csv",
            ]
            .map(String::from);
            guard_dir(
                &[&test_a_dir, &test_b_dir, &content_dir],
                &[&checkpoint_a, &checkpoint_b],
                &out_dir,
                &names,
            )?;
            let a = load_run::<T>(&checkpoint_a, &cfg.set)?;
            let b = load_run::<T>(&checkpoint_b, &cfg.set)?;
            let c = &a.config;
            let net = LossNetwork::<T>::new(c.loss_config())?;
            let hashes: Vec<String> = [&a.config, &b.config]
                .iter()
                .filter_map(|cfg| cfg.meta.get("train_style_hashes"))
                .flat_map(|s| s.split(',').filter(|h| !h.is_empty()).map(String::from))
                .collect();
            let (ra, rb) = cross_dataset_study(
                &a.model,
                &b.model,
                &net,
                c.lambda_s,
                &named_corpus(&test_a_dir, c.image_size)?,
                &named_corpus(&test_b_dir, c.image_size)?,
                &photos(&content_dir, c)?,
                &hashes,
            )?;
            mkdir(&out_dir)?;
            write_study(&ra, &out_dir, "model_a_")?;
            write_study(&rb, &out_dir, "model_b_")
        }
        Command::PcaGrid {
            cfg,
            checkpoint,
            style_dir,
            content,
            out_dir,
            k_std,
            grid_n,
        } => {
            let run = load_run::<T>(&checkpoint, &cfg.set)?;
            let c = &run.config;
            let n = grid_n.unwrap_or(c.pca_grid_n);
            let mut names: Vec<String> = (0..n)
                .flat_map(|i| (0..n).map(move |j| format!("grid_{:02}_{:02}.ppm", i, j)))
                .collect();
            names.push("grid.csv".into());
            guard_dir(&[&style_dir], &[&checkpoint, &content], &out_dir, &names)?;
            let model = run.model.joint()?;
            let styles = named_corpus::<T>(&style_dir, c.image_size)?;
            let embeddings = styles.iter().map(|(_, s)| model.embed(s)).collect::<Res<Vec<_>>>()?;
            let grid = pca_grid_stylize(
                &embeddings,
                &load_image(&content)?,
                k_std.unwrap_or(c.pca_k_std),
                n,
                model,
            )?;
            mkdir(&out_dir)?;
            let mut table = CsvTable::new(&["row", "col", "pc1_offset_std", "pc2_offset_std", "file"]);
            for (i, row) in grid.cells.iter().enumerate() {
                for (j, img) in row.iter().enumerate() {
                    let name = format!("grid_{:02}_{:02}.ppm", i, j);
                    save_image(img, &out_dir.join(&name))?;
                    table.push(vec![
                        i.to_string(),
                        j.to_string(),
                        fmt_f64(grid.offsets[i]),
                        fmt_f64(grid.offsets[j]),
                        name,
                    ]);
                }
            }
            write_csv(&table, &out_dir.join("grid.csv"))
        }
        Command::Tsne {
            cfg,
            checkpoint,
            style_dir,
            out,
            perplexity,
        } => {
            let mut inputs = files_in(&style_dir);
            inputs.push(checkpoint.clone());
            guard(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &[&out])?;
            let run = load_run::<T>(&checkpoint, &cfg.set)?;
            let c = &run.config;
            let model = run.model.joint()?;
            let styles = named_corpus::<T>(&style_dir, c.image_size)?;
            let points = styles
                .iter()
                .map(|(_, s)| model.embed(s).map(|e| e.to_f64()))
                .collect::<Res<Vec<_>>>()?;
            let config = TsneConfig {
                perplexity: perplexity.unwrap_or(c.tsne_perplexity),
                iters: c.tsne_iters,
                learning_rate: c.tsne_learning_rate,
                exaggeration: c.tsne_exaggeration,
                exaggeration_iters: c.tsne_exaggeration_iters,
                momentum_switch: c.tsne_momentum_switch,
            };
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(c.seed);
            let r = analysis::tsne(&points, &config, &mut rng)?;
            let mut table = CsvTable::new(&["style", "x", "y"]);
            for ((id, _), y) in styles.iter().zip(&r.embedding) {
                table.push(vec![id.clone(), fmt_f64(y[0]), fmt_f64(y[1])]);
            }
            write_csv(&table, &out)?;
            eprintln!("KL {:.6e} -> {:.6e}", r.kl_trace[0], r.kl_trace[r.kl_trace.len() - 1]);
            Ok(())
        }
        Command::Train(_) | Command::TrainAdain(_) | Command::GradCheck { .. } => unreachable!("handled in run"),
    }
}

fn grad_check(seeds: u64, step: f64) -> Res<()> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let checker = GradCheck {
            step,
            max_per_param: Some(8),
            seed,
        };
        let flat = TinyProblem::new(seed, 0)?;
        let residual = TinyProblem::new(seed, 1)?;
        let errs = [
            flat.check_params(&checker, "")?.max_rel_error,
            flat.check_embedding(&checker)?.max_rel_error,
            residual.check_params(&checker, "transfer.")?.max_rel_error,
        ];
        let m = errs.iter().copied().fold(0.0, f64::max);
        println!(
            "seed {:>3}  params {:.3e}  embedding {:.3e}  residual {:.3e}",
            seed, errs[0], errs[1], errs[2]
        );
        worst = worst.max(m);
    }
    println!("max relative error {:.3e} (tolerance {:.0e})", worst, GRAD_TOLERANCE);
    if worst > GRAD_TOLERANCE {
        return Err(Error::NonFinite(format!(
            "gradient check exceeded tolerance: {:.3e} > {:.0e}",
            worst, GRAD_TOLERANCE
        )));
    }
    Ok(())
}
