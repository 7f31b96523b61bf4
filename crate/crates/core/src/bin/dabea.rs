use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dabea::basemodels::{
    load_labels, load_predictions, save_labels, save_predictions, split_90_10, stub_fit,
    stub_predict, synth_generate, synth_labels, LabelSet, StubFitConfig, StubModel,
};
use dabea::config::PipelineConfig;
use dabea::ensemble::{
    bag, fuse_train, fusion_forward, load_bag, load_pooled, load_slot_probs, pool, predict,
    save_bag, save_pooled, save_slot_probs, FuseConfig, FusionArtifact, FusionLayout,
    PoolStrategy,
};
use dabea::imageio::{read_image, write_image};
use dabea::metrics::{confusion, report, ZeroSupport};
use dabea::pipeline::{cmd_pipeline, flatten_training_copies, load_images, prepare_images};
use dabea::preprocess::{augment, augment_batch, AugmentConfig, NormalizeMode};
use dabea::{Error, ExitKind, Result};

#[derive(Parser, Debug)]
#[command(name = "dabea", version, about = "Augmentation and bagging ensemble with 1x1-conv fusion")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core; 1 = bitwise-reproducible mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write k augmented copies of one image.
    Augment(AugmentCmd),
    /// Stratified 90:10 train/validation split of a labels file.
    Split(SplitCmd),
    /// Train a stub base model on augmented images.
    StubTrain(StubTrainCmd),
    /// Predict k augmented views per image with a stub model.
    StubPredict(StubPredictCmd),
    /// Generate synthetic predictions (and optionally labels).
    Synth(SynthCmd),
    /// Draw n bagging slots per image from per-model predictions.
    Bag(BagCmd),
    /// Train the fusion layer on a bag.
    FuseTrain(FuseTrainCmd),
    /// Apply trained fusion weights to a bag.
    FusePredict(FusePredictCmd),
    /// Pool slot predictions to one row per image.
    Pool(PoolCmd),
    /// Score pooled predictions against labels.
    Evaluate(EvaluateCmd),
    /// Run the full pipeline from a config file; any config key can follow as `--key value`.
    Pipeline(PipelineCmd),
}

#[derive(Args, Debug, Clone)]
struct AugArgs {
    /// Augmented copies per image (copy 0 is the center crop).
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.875)]
    crop_fraction: f64,
    #[arg(long, default_value_t = 32.0)]
    brightness_delta_max: f64,
    #[arg(long, default_value_t = 0.5)]
    saturation_lo: f64,
    #[arg(long, default_value_t = 1.5)]
    saturation_hi: f64,
    #[arg(long, default_value_t = 0.5)]
    flip_prob: f64,
    /// Subtract the per-image mean before augmenting.
    #[arg(long)]
    normalize: bool,
    /// scalar or per_channel.
    #[arg(long, default_value = "scalar", value_parser = parse_normalize_mode)]
    normalize_mode: NormalizeMode,
}

impl AugArgs {
    fn config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            k: self.k,
            crop_fraction: self.crop_fraction,
            brightness_delta_max: self.brightness_delta_max,
            saturation_range: (self.saturation_lo, self.saturation_hi),
            flip_prob: self.flip_prob,
            seed,
        }
    }
}

fn parse_normalize_mode(s: &str) -> std::result::Result<NormalizeMode, String> {
    match s {
        "scalar" => Ok(NormalizeMode::Scalar),
        "per_channel" | "per-channel" => Ok(NormalizeMode::PerChannel),
        _ => Err(format!("expected scalar or per_channel, got {s:?}")),
    }
}

#[derive(Args, Debug)]
struct AugmentCmd {
    /// Input image (binary PPM or DAT1).
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Position of the image in its dataset; selects the random substream.
    #[arg(long, default_value_t = 0)]
    index: u64,
    /// Output format: dat or ppm (ppm only for un-normalized images).
    #[arg(long, default_value = "dat")]
    format: String,
    #[command(flatten)]
    aug: AugArgs,
}

#[derive(Args, Debug)]
struct SplitCmd {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    val_out: PathBuf,
}

#[derive(Args, Debug)]
struct StubTrainCmd {
    #[arg(long)]
    images_dir: PathBuf,
    /// Training labels; image `i` of this file uses augmentation index `i`.
    #[arg(long)]
    labels: PathBuf,
    /// Feature grid extent (grid x grid cells).
    #[arg(long, default_value_t = 8)]
    grid: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    aug: AugArgs,
}

#[derive(Args, Debug)]
struct StubPredictCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    images_dir: PathBuf,
    /// Images to predict, in order; image `i` uses augmentation index `i`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model_id: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    aug: AugArgs,
}

#[derive(Args, Debug)]
struct SynthCmd {
    /// Labels to generate predictions for.
    #[arg(long, required_unless_present = "make_labels")]
    labels: Option<PathBuf>,
    /// Generate this many uniformly labelled images instead of reading labels.
    #[arg(long, requires = "labels_out")]
    make_labels: Option<usize>,
    /// Image id prefix for generated labels.
    #[arg(long, default_value = "img")]
    prefix: String,
    /// Where to write generated labels.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Logit boost of the true class.
    #[arg(long, default_value_t = 1.2)]
    strength: f64,
    /// Standard deviation of the logit noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value = "synth")]
    model_id: String,
    /// Predictions output; omit to only generate labels.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BagCmd {
    /// Prediction CSVs, one per channel, in channel order.
    #[arg(long, value_delimiter = ',', required = true)]
    predictions: Vec<PathBuf>,
    /// Restrict and order images by this labels file.
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Rescale prediction rows that do not sum to 1.
    #[arg(long)]
    renormalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseTrainCmd {
    #[arg(long)]
    bag: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// shared (M weights + 1 bias) or per_class.
    #[arg(long, default_value = "shared")]
    layout: String,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of the loss after each epoch.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FusePredictCmd {
    #[arg(long)]
    bag: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PoolCmd {
    #[arg(long)]
    slots: PathBuf,
    /// avg, max or extreme.
    #[arg(long, default_value = "avg")]
    pool: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateCmd {
    /// Pooled predictions CSV.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// exclude or zero.
    #[arg(long, default_value = "exclude")]
    zero_support: String,
    /// Key-value report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineCmd {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_augment(cmd: &AugmentCmd, seed: u64) -> Result<()> {
    let ext = match cmd.format.as_str() {
        "dat" | "ppm" => cmd.format.as_str(),
        other => return Err(Error::invalid(format!("unknown format {other:?} (expected dat or ppm)"))),
    };
    if ext == "ppm" && cmd.aug.normalize {
        return Err(Error::invalid("normalized images can only be written as dat"));
    }
    let img = read_image(&cmd.image)?;
    let img = prepare_images(&[img], cmd.aug.normalize, cmd.aug.normalize_mode).remove(0);
    let copies = augment(&img, cmd.index, &cmd.aug.config(seed))?;
    std::fs::create_dir_all(&cmd.out_dir).map_err(|e| Error::io(&cmd.out_dir, e))?;
    let stem = cmd
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    for (a, copy) in copies.iter().enumerate() {
        write_image(&cmd.out_dir.join(format!("{stem}_aug{a}.{ext}")), copy)?;
    }
    Ok(())
}

fn run_split(cmd: &SplitCmd, seed: u64) -> Result<()> {
    let labels = load_labels(&cmd.labels)?;
    let (train, val) = split_90_10(&labels, seed)?;
    save_labels(&train, &cmd.train_out)?;
    save_labels(&val, &cmd.val_out)
}

fn run_stub_train(cmd: &StubTrainCmd, seed: u64) -> Result<()> {
    let labels = load_labels(&cmd.labels)?;
    let raw = load_images(&cmd.images_dir, labels.image_ids())?;
    let prepared = prepare_images(&raw, cmd.aug.normalize, cmd.aug.normalize_mode);
    let augmented = augment_batch(&prepared, 0, &cmd.aug.config(seed))?;
    let (images, ys) = flatten_training_copies(augmented, labels.labels());
    let fit = stub_fit(
        &images,
        &ys,
        &StubFitConfig {
            grid: (cmd.grid, cmd.grid),
            epochs: cmd.epochs,
            lr0: cmd.lr,
        },
    )?;
    log::info!(
        "stub loss {:.6} -> {:.6}",
        fit.loss_history.first().copied().unwrap_or(f64::NAN),
        fit.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    fit.model.save(&cmd.out)
}

fn run_stub_predict(cmd: &StubPredictCmd, seed: u64) -> Result<()> {
    let model = StubModel::load(&cmd.model)?;
    let labels = load_labels(&cmd.labels)?;
    let raw = load_images(&cmd.images_dir, labels.image_ids())?;
    let prepared = prepare_images(&raw, cmd.aug.normalize, cmd.aug.normalize_mode);
    let augmented = augment_batch(&prepared, 0, &cmd.aug.config(seed))?;
    let set = stub_predict(&model, &augmented, labels.image_ids(), &cmd.model_id)?;
    save_predictions(&set, &cmd.out)
}

fn run_synth(cmd: &SynthCmd, seed: u64) -> Result<()> {
    let labels: LabelSet = match (cmd.make_labels, &cmd.labels) {
        (Some(n), _) => {
            let l = synth_labels(n, &cmd.prefix, seed)?;
            let out = cmd.labels_out.as_ref().expect("clap requires labels_out");
            save_labels(&l, out)?;
            l
        }
        (None, Some(p)) => load_labels(p)?,
        (None, None) => return Err(Error::invalid("give --labels or --make-labels")),
    };
    if let Some(out) = &cmd.out {
        let set = synth_generate(&labels, cmd.k, cmd.strength, cmd.noise, seed, &cmd.model_id)?;
        save_predictions(&set, out)?;
    }
    Ok(())
}

fn run_bag(cmd: &BagCmd, seed: u64) -> Result<()> {
    let mut sets = cmd
        .predictions
        .iter()
        .map(|p| load_predictions(p, cmd.renormalize))
        .collect::<Result<Vec<_>>>()?;
    if let Some(ids) = &cmd.ids {
        let labels = load_labels(ids)?;
        sets = sets
            .iter()
            .map(|s| s.subset(labels.image_ids()))
            .collect::<Result<_>>()?;
    }
    save_bag(&bag(&sets, cmd.n, seed)?, &cmd.out)
}

fn run_fuse_train(cmd: &FuseTrainCmd, seed: u64) -> Result<()> {
    let b = load_bag(&cmd.bag)?;
    let labels = load_labels(&cmd.labels)?;
    let rep = fuse_train(
        &b,
        &labels,
        &FuseConfig {
            epochs: cmd.epochs,
            lr: cmd.lr,
            layout: FusionLayout::parse(&cmd.layout)?,
            seed,
            ..FuseConfig::default()
        },
    )?;
    if let Some(p) = &cmd.loss_out {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in rep.loss_history.iter().enumerate() {
            s.push_str(&format!("{e},{l}\n"));
        }
        write_text(p, &s)?;
    }
    FusionArtifact {
        weights: rep.weights,
        source_model_ids: b.source_model_ids().to_vec(),
        meta: Some(rep.meta),
    }
    .save(&cmd.out)
}

fn run_fuse_predict(cmd: &FusePredictCmd) -> Result<()> {
    let b = load_bag(&cmd.bag)?;
    let art = FusionArtifact::load(&cmd.weights)?;
    if art.source_model_ids != b.source_model_ids() {
        log::warn!(
            "weights were trained on channels {:?}, bag has {:?}",
            art.source_model_ids,
            b.source_model_ids()
        );
    }
    save_slot_probs(&fusion_forward(&b, &art.weights)?, &cmd.out)
}

fn run_pool(cmd: &PoolCmd) -> Result<()> {
    let strategy: PoolStrategy = cmd.pool.parse()?;
    let slots = load_slot_probs(&cmd.slots)?;
    save_pooled(&pool(&slots, strategy)?, &cmd.out)
}

fn run_evaluate(cmd: &EvaluateCmd) -> Result<()> {
    let policy = ZeroSupport::parse(&cmd.zero_support)?;
    let pooled = load_pooled(&cmd.predictions)?;
    let labels = load_labels(&cmd.labels)?;
    let preds = predict(&pooled);
    let cm = confusion(&preds.image_ids, &preds.classes, &labels)?;
    let rep = report(&cm, labels.class_names(), policy)?;
    match &cmd.out {
        Some(p) => {
            write_text(p, &rep.to_kv_text())?;
            println!("balanced_accuracy = {}", rep.balanced_accuracy);
        }
        None => print!("{}", rep.to_kv_text()),
    }
    if let Some(p) = &cmd.json_out {
        let json = serde_json::to_string_pretty(&rep.to_json()).expect("report serializes");
        write_text(p, &(json + "\n"))?;
    }
    Ok(())
}

/// Splits `--key value` / `--key=value` tokens into pairs.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(Error::invalid(format!("unexpected argument {tok:?}; overrides look like --key value")));
        };
        match flag.split_once('=') {
            Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::invalid(format!("--{flag} needs a value")))?;
                pairs.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(pairs)
}

fn run_pipeline_cmd(cmd: &PipelineCmd, seed: Option<u64>, threads: Option<usize>) -> Result<()> {
    let mut cfg = match &cmd.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for (k, v) in parse_overrides(&cmd.overrides)? {
        if PipelineConfig::canonical_key(&k) == "config" {
            return Err(Error::invalid("--config must come before the overrides"));
        }
        cfg.set(&k, &v)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let out = cmd_pipeline(&cfg)?;
    println!("balanced_accuracy = {}", out.report.balanced_accuracy);
    println!("output_dir = {}", out.output_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    if let Command::Pipeline(cmd) = &cli.command {
        return run_pipeline_cmd(cmd, cli.seed, cli.threads);
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot configure threads: {e}")))?;
    }
    match &cli.command {
        Command::Augment(c) => run_augment(c, seed),
        Command::Split(c) => run_split(c, seed),
        Command::StubTrain(c) => run_stub_train(c, seed),
        Command::StubPredict(c) => run_stub_predict(c, seed),
        Command::Synth(c) => run_synth(c, seed),
        Command::Bag(c) => run_bag(c, seed),
        Command::FuseTrain(c) => run_fuse_train(c, seed),
        Command::FusePredict(c) => run_fuse_predict(c),
        Command::Pool(c) => run_pool(c),
        Command::Evaluate(c) => run_evaluate(c),
        Command::Pipeline(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitKind::Usage as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_kind() as u8)
        }
    }
}
