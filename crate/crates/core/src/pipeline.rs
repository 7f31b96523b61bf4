//! End-to-end run: normalize → augment → base models → bag → fuse → pool →
//! predict → evaluate.
//!
//! The fusion layer is trained on the validation part of a stratified 90:10
//! split of the development labels and applied to the test labels. Without
//! test labels it is scored in-sample on the validation split, with a warning.

use std::fs;
use std::path::{Path, PathBuf};

use crate::basemodels::{
    save_labels, save_predictions, split_90_10, stub_fit, stub_predict, synth_generate,
    synth_labels, load_labels, load_predictions, LabelSet, PredictionSet, StubFitConfig,
};
use crate::config::{PipelineConfig, Source};
use crate::ensemble::{
    bag, fuse_train, fusion_forward, pool, predict, save_pooled, FuseConfig, FuseReport,
    FusionArtifact,
};
use crate::error::{Error, Result, StageExt};
use crate::imageio::read_image;
use crate::metrics::{confusion, report, Report};
use crate::preprocess::{augment_batch, per_image_normalize, ImageTensor, MIN_AUGMENT_EXTENT};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const TRAIN_LABELS_FILE: &str = "train_labels.csv";
pub const VAL_LABELS_FILE: &str = "val_labels.csv";
pub const EVAL_LABELS_FILE: &str = "eval_labels.csv";
/// Validation ids followed by evaluation ids; the rows of every channel file.
pub const PREDICT_LABELS_FILE: &str = "predict_labels.csv";
pub const CHANNELS_DIR: &str = "channels";
pub const MODELS_DIR: &str = "models";
/// Present while a run is in progress or after it failed; removed on success.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Which images the reported scores refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Test,
    /// No test labels were available; scored on the fusion training images.
    Validation,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: Report,
    pub fuse: FuseReport,
    pub eval_set: EvalSet,
    pub source_model_ids: Vec<String>,
    pub output_dir: PathBuf,
}

/// Validates the configuration and runs the pipeline on a thread pool of
/// `cfg.threads` workers (0 = rayon default).
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_pipeline(cfg))
}

/// Runs the pipeline in the current thread pool. Artifacts go to
/// `cfg.output_dir`; on failure the `INCOMPLETE` marker names the stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join(CHANNELS_DIR)).map_err(|e| Error::io(out, e))?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, "running\n").map_err(|e| Error::io(&marker, e))?;
    match stages(cfg) {
        Ok(outcome) => {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            Ok(outcome)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("failed: {e}\n"));
            Err(e)
        }
    }
}

struct Splits {
    train: LabelSet,
    val: LabelSet,
    eval: LabelSet,
    eval_set: EvalSet,
}

fn load_splits(cfg: &PipelineConfig) -> Result<Splits> {
    let dev = match &cfg.labels {
        Some(p) => load_labels(p)?,
        None => synth_labels(cfg.synth_images, "dev", cfg.seed)?,
    };
    let test = match (&cfg.test_labels, cfg.source, &cfg.labels) {
        (Some(p), _, _) => Some(load_labels(p)?),
        (None, Source::Synth, None) if cfg.synth_test_images > 0 => {
            Some(synth_labels(cfg.synth_test_images, "test", cfg.seed)?)
        }
        _ => None,
    };
    let (train, val) = split_90_10(&dev, cfg.seed)?;
    let (eval, eval_set) = match test {
        Some(t) => {
            if let Some(id) = t.image_ids().iter().find(|id| dev.position(id).is_some()) {
                return Err(Error::validation(format!(
                    "test image {id:?} also appears in the development labels"
                )));
            }
            (t, EvalSet::Test)
        }
        None => {
            log::warn!("no test labels; scoring in-sample on the validation split");
            (val.clone(), EvalSet::Validation)
        }
    };
    Ok(Splits {
        train,
        val,
        eval,
        eval_set,
    })
}

/// Rows of every channel: validation images, then test images if any.
fn predict_labels(s: &Splits) -> Result<LabelSet> {
    match s.eval_set {
        EvalSet::Test => s.val.concat(&s.eval),
        EvalSet::Validation => Ok(s.val.clone()),
    }
}

fn find_image(dir: &Path, id: &str) -> Result<PathBuf> {
    for ext in ["ppm", "dat", "dat1"] {
        let p = dir.join(format!("{id}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    let p = dir.join(id);
    if p.is_file() {
        return Ok(p);
    }
    Err(Error::validation(format!(
        "no image file for {id:?} in {} (tried .ppm, .dat, .dat1)",
        dir.display()
    )))
}

/// Loads the images of `ids` and checks they are large enough to augment.
pub fn load_images(dir: &Path, ids: &[String]) -> Result<Vec<ImageTensor>> {
    use rayon::prelude::*;
    ids.par_iter()
        .map(|id| {
            let path = find_image(dir, id)?;
            let img = read_image(&path)?;
            if img.height() < MIN_AUGMENT_EXTENT || img.width() < MIN_AUGMENT_EXTENT {
                return Err(Error::validation(format!(
                    "{}: image is {}x{}, at least {MIN_AUGMENT_EXTENT}x{MIN_AUGMENT_EXTENT} required",
                    path.display(),
                    img.height(),
                    img.width()
                )));
            }
            Ok(img)
        })
        .collect()
}

/// Normalizes each image when `normalized` is set, otherwise copies it.
pub fn prepare_images(
    images: &[ImageTensor],
    normalized: bool,
    mode: crate::preprocess::NormalizeMode,
) -> Vec<ImageTensor> {
    if normalized {
        images.iter().map(|img| per_image_normalize(img, mode)).collect()
    } else {
        images.to_vec()
    }
}

/// Flattens `k` augmented copies per image into one training sample each.
pub fn flatten_training_copies(
    augmented: Vec<Vec<ImageTensor>>,
    labels: &[usize],
) -> (Vec<ImageTensor>, Vec<usize>) {
    let mut images = Vec::new();
    let mut ys = Vec::new();
    for (copies, &y) in augmented.into_iter().zip(labels) {
        ys.extend(std::iter::repeat_n(y, copies.len()));
        images.extend(copies);
    }
    (images, ys)
}

fn channel_predictions(
    cfg: &PipelineConfig,
    splits: &Splits,
    rows: &LabelSet,
) -> Result<Vec<PredictionSet>> {
    let channels = cfg.model_set.channels();
    match cfg.source {
        Source::Synth => channels
            .iter()
            .enumerate()
            .map(|(m, ch)| {
                let strength =
                    PipelineConfig::per_channel(&cfg.synth_strength, m, channels.len(), "synth_strength")?;
                let noise =
                    PipelineConfig::per_channel(&cfg.synth_noise, m, channels.len(), "synth_noise")?;
                synth_generate(rows, cfg.k, strength, noise, cfg.seed.wrapping_add(m as u64), &ch.model_id)
            })
            .collect(),
        Source::Predictions => {
            if cfg.predictions.len() != channels.len() {
                return Err(Error::invalid(format!(
                    "model set {} needs {} prediction files, got {}",
                    cfg.model_set.as_str(),
                    channels.len(),
                    cfg.predictions.len()
                )));
            }
            cfg.predictions
                .iter()
                .map(|p| load_predictions(p, cfg.renormalize)?.subset(rows.image_ids()))
                .collect()
        }
        Source::Images => {
            let dir = cfg
                .images_dir
                .as_deref()
                .ok_or_else(|| Error::invalid("source = images needs images_dir"))?;
            let aug = cfg.augment_config();
            let train_raw = load_images(dir, splits.train.image_ids())?;
            let rows_raw = load_images(dir, rows.image_ids())?;
            let models_dir = cfg.output_dir.join(MODELS_DIR);
            fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
            let mut sets = Vec::with_capacity(channels.len());
            for normalized in [false, true] {
                let group: Vec<_> = channels.iter().filter(|c| c.normalized == normalized).collect();
                if group.is_empty() {
                    continue;
                }
                let train_aug =
                    augment_batch(&prepare_images(&train_raw, normalized, cfg.normalize_mode), 0, &aug)?;
                let rows_aug =
                    augment_batch(&prepare_images(&rows_raw, normalized, cfg.normalize_mode), 0, &aug)?;
                let (train_images, train_y) = flatten_training_copies(train_aug, splits.train.labels());
                for ch in group {
                    let g = cfg.stub_grids[ch.arch.min(cfg.stub_grids.len() - 1)];
                    let fit = stub_fit(
                        &train_images,
                        &train_y,
                        &StubFitConfig {
                            grid: (g, g),
                            epochs: cfg.stub_epochs,
                            lr0: cfg.stub_lr,
                        },
                    )?;
                    fit.model.save(&models_dir.join(format!("{}.txt", ch.model_id)))?;
                    sets.push((
                        ch.model_id.clone(),
                        stub_predict(&fit.model, &rows_aug, rows.image_ids(), &ch.model_id)?,
                    ));
                }
            }
            // Restore model-set channel order.
            Ok(channels
                .iter()
                .map(|ch| {
                    let pos = sets.iter().position(|(id, _)| *id == ch.model_id).expect("channel trained");
                    sets[pos].1.clone()
                })
                .collect())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stages(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let out = &cfg.output_dir;
    write_text(&out.join(CONFIG_FILE), &cfg.to_text()).stage("load")?;

    let splits = load_splits(cfg).stage("split")?;
    let rows = predict_labels(&splits).stage("split")?;
    save_labels(&splits.train, &out.join(TRAIN_LABELS_FILE)).stage("split")?;
    save_labels(&splits.val, &out.join(VAL_LABELS_FILE)).stage("split")?;
    save_labels(&splits.eval, &out.join(EVAL_LABELS_FILE)).stage("split")?;
    save_labels(&rows, &out.join(PREDICT_LABELS_FILE)).stage("split")?;

    let sets = channel_predictions(cfg, &splits, &rows).stage("base-models")?;
    for s in &sets {
        save_predictions(s, &out.join(CHANNELS_DIR).join(format!("{}.csv", s.model_id())))
            .stage("base-models")?;
    }
    let source_model_ids: Vec<String> = sets.iter().map(|s| s.model_id().to_string()).collect();
    let subset = |ids: &[String]| -> Result<Vec<PredictionSet>> {
        sets.iter().map(|s| s.subset(ids)).collect()
    };

    let val_bag = bag(&subset(splits.val.image_ids()).stage("bag")?, cfg.n, cfg.seed).stage("bag")?;
    let fuse = fuse_train(
        &val_bag,
        &splits.val,
        &FuseConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            layout: cfg.fusion_layout,
            seed: cfg.seed,
            ..FuseConfig::default()
        },
    )
    .stage("fuse-train")?;
    drop(val_bag);
    let artifact = FusionArtifact {
        weights: fuse.weights.clone(),
        source_model_ids: source_model_ids.clone(),
        meta: Some(fuse.meta.clone()),
    };
    artifact.save(&out.join(WEIGHTS_FILE)).stage("fuse-train")?;

    let eval_bag = bag(&subset(splits.eval.image_ids()).stage("bag")?, cfg.n, cfg.seed).stage("bag")?;
    let slots = fusion_forward(&eval_bag, &fuse.weights).stage("fuse-predict")?;
    let pooled = pool(&slots, cfg.pool).stage("pool")?;
    save_pooled(&pooled, &out.join(PREDICTIONS_FILE)).stage("pool")?;

    let preds = predict(&pooled);
    let cm = confusion(&preds.image_ids, &preds.classes, &splits.eval).stage("evaluate")?;
    let rep = report(&cm, splits.eval.class_names(), cfg.zero_support).stage("evaluate")?;
    write_text(&out.join(REPORT_FILE), &rep.to_kv_text()).stage("evaluate")?;
    let json = serde_json::to_string_pretty(&rep.to_json()).expect("report serializes");
    write_text(&out.join(REPORT_JSON_FILE), &(json + "\n")).stage("evaluate")?;

    log::info!(
        "balanced accuracy {:.4} on {} {} images; fusion loss {:.6} -> {:.6}",
        rep.balanced_accuracy,
        rep.samples,
        match splits.eval_set {
            EvalSet::Test => "test",
            EvalSet::Validation => "validation (in-sample)",
        },
        fuse.loss_history.first().copied().unwrap_or(f64::NAN),
        fuse.loss_history.last().copied().unwrap_or(f64::NAN),
    );
    Ok(PipelineOutcome {
        report: rep,
        fuse,
        eval_set: splits.eval_set,
        source_model_ids,
        output_dir: out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelSet;

    fn small(dir: &Path) -> PipelineConfig {
        PipelineConfig {
            output_dir: dir.to_path_buf(),
            synth_images: 140,
            synth_test_images: 60,
            n: 8,
            k: 4,
            epochs: 5,
            threads: 1,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn synthetic_run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_pipeline(&small(dir.path())).unwrap();
        assert_eq!(out.eval_set, EvalSet::Test);
        assert_eq!(out.report.samples, 60);
        for f in [PREDICTIONS_FILE, WEIGHTS_FILE, REPORT_FILE, REPORT_JSON_FILE, CONFIG_FILE] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        assert!(dir.path().join(CHANNELS_DIR).join("iv4-norm.csv").is_file());
    }

    #[test]
    fn zero_epochs_keeps_equal_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.epochs = 0;
        cfg.model_set = ModelSet::Both;
        let out = cmd_pipeline(&cfg).unwrap();
        assert_eq!(out.fuse.weights.weights(), &[0.25; 4]);
        assert_eq!(out.fuse.loss_history.len(), 1);
    }

    #[test]
    fn failure_leaves_marker_with_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.synth_strength = vec![1.0, 2.0, 3.0];
        // Bypass validation to exercise the in-run failure path.
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().contains("base-models"));
        let marker = fs::read_to_string(dir.path().join(INCOMPLETE_MARKER)).unwrap();
        assert!(marker.contains("base-models"));
    }

    #[test]
    fn in_sample_fallback_without_test_labels() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.synth_test_images = 0;
        let out = cmd_pipeline(&cfg).unwrap();
        assert_eq!(out.eval_set, EvalSet::Validation);
        assert_eq!(out.report.samples, 14);
    }
}
