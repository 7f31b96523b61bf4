//! Flat `key = value` documents and the pipeline configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Every pipeline key can also be given on the command line as
//! `--key value` (underscores and dashes are interchangeable).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::ensemble::{FusionLayout, PoolStrategy, PAPER_FUSION_EPOCHS, PAPER_FUSION_LR};
use crate::error::{Error, Result};
use crate::metrics::ZeroSupport;
use crate::preprocess::{AugmentConfig, NormalizeMode};

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::validation(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::validation(format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::validation(format!(
                "line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Where base-model predictions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Source {
    /// Synthetic predictions from labels.
    #[default]
    Synth,
    /// Stub models trained on images.
    Images,
    /// Prediction CSV files, one per channel.
    Predictions,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Synth => "synth",
            Source::Images => "images",
            Source::Predictions => "predictions",
        }
    }
}

/// Which base-model outputs feed the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelSet {
    /// Two models on un-normalized images.
    Unnorm,
    /// Two models on per-image normalized images.
    #[default]
    Norm,
    /// All four (both architectures, both preprocessing variants).
    Both,
}

/// One fusion input channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub model_id: String,
    /// 0 for the first architecture, 1 for the second.
    pub arch: usize,
    pub normalized: bool,
}

impl ModelSet {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSet::Unnorm => "unnorm",
            ModelSet::Norm => "norm",
            ModelSet::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "unnorm" => Ok(ModelSet::Unnorm),
            "norm" => Ok(ModelSet::Norm),
            "both" => Ok(ModelSet::Both),
            other => Err(Error::invalid(format!(
                "unknown model set {other:?} (expected unnorm, norm or both)"
            ))),
        }
    }

    pub fn channels(self) -> Vec<ChannelSpec> {
        let spec = |arch: usize, normalized: bool| ChannelSpec {
            model_id: format!(
                "{}-{}",
                ["iv4", "irv2"][arch],
                if normalized { "norm" } else { "unnorm" }
            ),
            arch,
            normalized,
        };
        match self {
            ModelSet::Unnorm => vec![spec(0, false), spec(1, false)],
            ModelSet::Norm => vec![spec(0, true), spec(1, true)],
            ModelSet::Both => vec![spec(0, false), spec(1, false), spec(0, true), spec(1, true)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: Source,
    pub labels: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub predictions: Vec<PathBuf>,
    pub renormalize: bool,
    pub output_dir: PathBuf,

    pub k: usize,
    pub n: usize,
    pub epochs: usize,
    pub lr: f64,
    pub pool: PoolStrategy,
    pub seed: u64,
    pub model_set: ModelSet,
    pub threads: usize,
    pub fusion_layout: FusionLayout,
    pub zero_support: ZeroSupport,

    pub normalize_mode: NormalizeMode,
    pub crop_fraction: f64,
    pub brightness_delta_max: f64,
    pub saturation_lo: f64,
    pub saturation_hi: f64,
    pub flip_prob: f64,

    pub synth_images: usize,
    pub synth_test_images: usize,
    pub synth_strength: Vec<f64>,
    pub synth_noise: Vec<f64>,

    pub stub_epochs: usize,
    pub stub_lr: f64,
    pub stub_grids: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let aug = AugmentConfig::default();
        PipelineConfig {
            source: Source::Synth,
            labels: None,
            test_labels: None,
            images_dir: None,
            predictions: Vec::new(),
            renormalize: false,
            output_dir: PathBuf::from("dabea-out"),
            k: aug.k,
            n: 100,
            epochs: PAPER_FUSION_EPOCHS,
            lr: PAPER_FUSION_LR,
            pool: PoolStrategy::Avg,
            seed: 0,
            model_set: ModelSet::Norm,
            threads: 0,
            fusion_layout: FusionLayout::Shared,
            zero_support: ZeroSupport::Exclude,
            normalize_mode: NormalizeMode::Scalar,
            crop_fraction: aug.crop_fraction,
            brightness_delta_max: aug.brightness_delta_max,
            saturation_lo: aug.saturation_range.0,
            saturation_hi: aug.saturation_range.1,
            flip_prob: aug.flip_prob,
            synth_images: 700,
            synth_test_images: 300,
            synth_strength: vec![1.2],
            synth_noise: vec![1.0],
            stub_epochs: 200,
            stub_lr: 0.01,
            stub_grids: vec![8, 6],
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`].
pub const PIPELINE_KEYS: &[&str] = &[
    "source",
    "labels",
    "test_labels",
    "images_dir",
    "predictions",
    "renormalize",
    "output_dir",
    "k",
    "n",
    "epochs",
    "lr",
    "pool",
    "seed",
    "model_set",
    "threads",
    "fusion_layout",
    "zero_support",
    "normalize_mode",
    "crop_fraction",
    "brightness_delta_max",
    "saturation_lo",
    "saturation_hi",
    "flip_prob",
    "synth_images",
    "synth_test_images",
    "synth_strength",
    "synth_noise",
    "stub_epochs",
    "stub_lr",
    "stub_grids",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean {value:?} for {key}"))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Canonical key name for a flag or config key (`model-set` → `model_set`).
    pub fn canonical_key(key: &str) -> String {
        key.trim().trim_start_matches("--").replace('-', "_")
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = Self::canonical_key(key);
        let path = |v: &str| Some(PathBuf::from(v.trim()));
        match key.as_str() {
            "source" => {
                self.source = match value.trim() {
                    "synth" => Source::Synth,
                    "images" => Source::Images,
                    "predictions" => Source::Predictions,
                    other => {
                        return Err(Error::invalid(format!(
                            "unknown source {other:?} (expected synth, images or predictions)"
                        )))
                    }
                }
            }
            "labels" => self.labels = path(value),
            "test_labels" => self.test_labels = path(value),
            "images_dir" => self.images_dir = path(value),
            "predictions" => {
                self.predictions = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| PathBuf::from(s.trim()))
                    .collect()
            }
            "renormalize" => self.renormalize = parse_bool(&key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "k" => self.k = parse_num(&key, value)?,
            "n" => self.n = parse_num(&key, value)?,
            "epochs" => self.epochs = parse_num(&key, value)?,
            "lr" => self.lr = parse_num(&key, value)?,
            "pool" => self.pool = value.parse()?,
            "seed" => self.seed = parse_num(&key, value)?,
            "model_set" => self.model_set = ModelSet::parse(value)?,
            "threads" => self.threads = parse_num(&key, value)?,
            "fusion_layout" => self.fusion_layout = FusionLayout::parse(value)?,
            "zero_support" => self.zero_support = ZeroSupport::parse(value)?,
            "normalize_mode" => {
                self.normalize_mode = match value.trim() {
                    "scalar" => NormalizeMode::Scalar,
                    "per_channel" | "per-channel" => NormalizeMode::PerChannel,
                    other => {
                        return Err(Error::invalid(format!(
                            "unknown normalize mode {other:?} (expected scalar or per_channel)"
                        )))
                    }
                }
            }
            "crop_fraction" => self.crop_fraction = parse_num(&key, value)?,
            "brightness_delta_max" => self.brightness_delta_max = parse_num(&key, value)?,
            "saturation_lo" => self.saturation_lo = parse_num(&key, value)?,
            "saturation_hi" => self.saturation_hi = parse_num(&key, value)?,
            "flip_prob" => self.flip_prob = parse_num(&key, value)?,
            "synth_images" => self.synth_images = parse_num(&key, value)?,
            "synth_test_images" => self.synth_test_images = parse_num(&key, value)?,
            "synth_strength" => self.synth_strength = parse_list(&key, value)?,
            "synth_noise" => self.synth_noise = parse_list(&key, value)?,
            "stub_epochs" => self.stub_epochs = parse_num(&key, value)?,
            "stub_lr" => self.stub_lr = parse_num(&key, value)?,
            "stub_grids" => self.stub_grids = parse_list(&key, value)?,
            _ => return Err(Error::invalid(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in parse_key_values(text).map_err(|e| Error::invalid(e.to_string()))? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// Serializes every key; [`PipelineConfig::from_text`] reads it back.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("source", self.source.as_str().into());
        if let Some(v) = opt(&self.labels) {
            put("labels", v);
        }
        if let Some(v) = opt(&self.test_labels) {
            put("test_labels", v);
        }
        if let Some(v) = opt(&self.images_dir) {
            put("images_dir", v);
        }
        if !self.predictions.is_empty() {
            put(
                "predictions",
                self.predictions.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
            );
        }
        put("renormalize", self.renormalize.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("k", self.k.to_string());
        put("n", self.n.to_string());
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("pool", self.pool.to_string());
        put("seed", self.seed.to_string());
        put("model_set", self.model_set.as_str().into());
        put("threads", self.threads.to_string());
        put("fusion_layout", self.fusion_layout.as_str().into());
        put("zero_support", self.zero_support.as_str().into());
        put(
            "normalize_mode",
            match self.normalize_mode {
                NormalizeMode::Scalar => "scalar",
                NormalizeMode::PerChannel => "per_channel",
            }
            .into(),
        );
        put("crop_fraction", self.crop_fraction.to_string());
        put("brightness_delta_max", self.brightness_delta_max.to_string());
        put("saturation_lo", self.saturation_lo.to_string());
        put("saturation_hi", self.saturation_hi.to_string());
        put("flip_prob", self.flip_prob.to_string());
        put("synth_images", self.synth_images.to_string());
        put("synth_test_images", self.synth_test_images.to_string());
        put("synth_strength", join(&self.synth_strength));
        put("synth_noise", join(&self.synth_noise));
        put("stub_epochs", self.stub_epochs.to_string());
        put("stub_lr", self.stub_lr.to_string());
        put("stub_grids", join(&self.stub_grids));
        s
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            k: self.k,
            crop_fraction: self.crop_fraction,
            brightness_delta_max: self.brightness_delta_max,
            saturation_range: (self.saturation_lo, self.saturation_hi),
            flip_prob: self.flip_prob,
            seed: self.seed,
        }
    }

    /// Per-channel value from a list holding one shared value or one per channel.
    pub fn per_channel(list: &[f64], channel: usize, channels: usize, key: &str) -> Result<f64> {
        match list.len() {
            1 => Ok(list[0]),
            l if l == channels => Ok(list[channel]),
            l => Err(Error::invalid(format!(
                "{key} has {l} values; give 1 or one per channel ({channels})"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be finite and >= 0"));
        }
        self.augment_config().validate()?;
        let must_exist = |p: &Path, what: &str| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} {} does not exist", p.display())))
            }
        };
        if let Some(p) = &self.labels {
            must_exist(p, "labels file")?;
        }
        if let Some(p) = &self.test_labels {
            must_exist(p, "test labels file")?;
        }
        let channels = self.model_set.channels().len();
        match self.source {
            Source::Synth => {
                if self.labels.is_none() && self.synth_images < 10 {
                    return Err(Error::invalid("synth_images must be at least 10"));
                }
                Self::per_channel(&self.synth_strength, 0, channels, "synth_strength")?;
                Self::per_channel(&self.synth_noise, 0, channels, "synth_noise")?;
            }
            Source::Images => {
                let dir = self
                    .images_dir
                    .as_ref()
                    .ok_or_else(|| Error::invalid("source = images needs images_dir"))?;
                must_exist(dir, "images directory")?;
                if self.labels.is_none() {
                    return Err(Error::invalid("source = images needs a labels file"));
                }
                if self.stub_grids.is_empty() || self.stub_grids.len() > 2 || self.stub_grids.contains(&0) {
                    return Err(Error::invalid("stub_grids needs one or two positive extents"));
                }
            }
            Source::Predictions => {
                if self.labels.is_none() {
                    return Err(Error::invalid("source = predictions needs a labels file"));
                }
                if self.predictions.is_empty() {
                    return Err(Error::invalid("source = predictions needs prediction files"));
                }
                for p in &self.predictions {
                    must_exist(p, "prediction file")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_with_comments() {
        let kv = parse_key_values("# header\n a = 1 \n\nb=two words\n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two words");
        assert!(parse_key_values("novalue\n").is_err());
        assert!(parse_key_values("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("model-set", "both").unwrap();
        cfg.set("--pool", "extreme").unwrap();
        cfg.set("synth_strength", "1.2,1.5,0.8,2").unwrap();
        cfg.set("labels", "/tmp/labels.csv").unwrap();
        cfg.set("lr", "0.0001").unwrap();
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("k", "ten").is_err());
        assert!(cfg.set("pool", "median").is_err());
        assert!(cfg.set("model_set", "all").is_err());
    }

    #[test]
    fn model_sets() {
        assert_eq!(ModelSet::Unnorm.channels().len(), 2);
        assert_eq!(ModelSet::Norm.channels().len(), 2);
        let both = ModelSet::Both.channels();
        assert_eq!(both.len(), 4);
        assert_eq!(both[3].model_id, "irv2-norm");
        assert!(both[3].normalized && !both[0].normalized);
    }

    #[test]
    fn validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.k = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.labels = Some("/definitely/not/here.csv".into());
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.synth_strength = vec![1.0, 2.0, 3.0];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.source = Source::Predictions;
        assert!(cfg.validate().is_err());
    }
}
