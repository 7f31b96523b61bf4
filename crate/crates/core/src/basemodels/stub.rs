//! Multinomial logistic regression over downsampled pixels, standing in for
//! a deep backbone so the ensemble can be exercised end to end.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::PredictionSet;
use crate::error::{Error, Result};
use crate::preprocess::{ImageTensor, CHANNELS, PIXEL_MAX};
use crate::tensor::{nll, softmax_into, ClassIndex, NUM_CLASSES};

pub const DEFAULT_GRID: (usize, usize) = (8, 8);

/// Multiplicative learning-rate decay applied every [`LR_DECAY_EPOCHS`].
pub const LR_DECAY_RATE: f64 = 0.94;
pub const LR_DECAY_EPOCHS: usize = 2;

const STUB_FORMAT: &str = "dabea-stub-model/1";

/// Staircase exponential decay: `lr0 · 0.94^floor(epoch / 2)`.
pub fn lr_schedule(epoch: usize, lr0: f64) -> f64 {
    lr0 * LR_DECAY_RATE.powi((epoch / LR_DECAY_EPOCHS) as i32)
}

/// Bilinear resample of `img` to `grid` (align-corners off), flattened
/// row-major with interleaved channels and scaled by 1/255.
pub fn downsample_features(img: &ImageTensor, grid: (usize, usize)) -> Vec<f64> {
    let (gh, gw) = grid;
    let (h, w) = (img.height(), img.width());
    let sample_axis = |o: usize, out_len: usize, in_len: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5)
            .clamp(0.0, (in_len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(in_len - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(gh * gw * CHANNELS);
    for oy in 0..gh {
        let (y0, y1, fy) = sample_axis(oy, gh, h);
        for ox in 0..gw {
            let (x0, x1, fx) = sample_axis(ox, gw, w);
            for c in 0..CHANNELS {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) / PIXEL_MAX);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubModel {
    grid: (usize, usize),
    /// `[d × 7]`, row-major.
    weights: Vec<f64>,
    bias: [f64; NUM_CLASSES],
}

impl StubModel {
    pub fn new(grid: (usize, usize), weights: Vec<f64>, bias: [f64; NUM_CLASSES]) -> Result<Self> {
        if grid.0 == 0 || grid.1 == 0 {
            return Err(Error::invalid("stub feature grid must be non-empty"));
        }
        let d = grid.0 * grid.1 * CHANNELS;
        if weights.len() != d * NUM_CLASSES {
            return Err(Error::validation(format!(
                "feature dimension mismatch: grid {}x{} needs {} weights, got {}",
                grid.0,
                grid.1,
                d * NUM_CLASSES,
                weights.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite stub model parameter"));
        }
        Ok(StubModel { grid, weights, bias })
    }

    pub fn zeros(grid: (usize, usize)) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.0 * grid.1 * CHANNELS * NUM_CLASSES], [0.0; NUM_CLASSES])
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn feature_dim(&self) -> usize {
        self.grid.0 * self.grid.1 * CHANNELS
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64; NUM_CLASSES] {
        &self.bias
    }

    fn logits(&self, features: &[f64], out: &mut [f64; NUM_CLASSES]) {
        *out = self.bias;
        for (x, wrow) in features.iter().zip(self.weights.chunks_exact(NUM_CLASSES)) {
            for (o, w) in out.iter_mut().zip(wrow) {
                *o += x * w;
            }
        }
    }

    /// Class probabilities for a precomputed feature vector.
    pub fn predict_features(&self, features: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        if features.len() != self.feature_dim() {
            return Err(Error::validation(format!(
                "feature dimension mismatch: model expects {}, got {}",
                self.feature_dim(),
                features.len()
            )));
        }
        let mut z = [0.0; NUM_CLASSES];
        self.logits(features, &mut z);
        let mut p = [0.0; NUM_CLASSES];
        softmax_into(&z, &mut p)?;
        Ok(p)
    }

    pub fn predict_image(&self, img: &ImageTensor) -> Result<[f64; NUM_CLASSES]> {
        self.predict_features(&downsample_features(img, self.grid))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "format = {STUB_FORMAT}");
        let _ = writeln!(s, "grid = {},{}", self.grid.0, self.grid.1);
        let _ = writeln!(s, "bias = {}", join(&self.bias));
        let _ = writeln!(s, "weights = {}", join(&self.weights));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = crate::config::parse_key_values(text)?;
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::validation(format!("stub model file missing key {k:?}")))
        };
        if get("format")? != STUB_FORMAT {
            return Err(Error::validation(format!("unsupported stub model format {:?}", kv["format"])));
        }
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::validation(format!("bad number {t:?} in {k}")))
                })
                .collect()
        };
        let grid: Vec<usize> = get("grid")?
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::validation(format!("bad grid {t:?}"))))
            .collect::<Result<_>>()?;
        if grid.len() != 2 {
            return Err(Error::validation("grid must have two extents"));
        }
        let bias: [f64; NUM_CLASSES] = floats("bias")?
            .try_into()
            .map_err(|_| Error::validation(format!("bias must have {NUM_CLASSES} values")))?;
        StubModel::new((grid[0], grid[1]), floats("weights")?, bias)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubFitConfig {
    pub grid: (usize, usize),
    pub epochs: usize,
    pub lr0: f64,
}

impl Default for StubFitConfig {
    fn default() -> Self {
        StubFitConfig {
            grid: DEFAULT_GRID,
            epochs: 200,
            lr0: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: StubModel,
    /// Mean training cross-entropy before the first step and after every epoch.
    pub loss_history: Vec<f64>,
}

fn mean_loss_and_grad(
    model: &StubModel,
    features: &[Vec<f64>],
    labels: &[ClassIndex],
    grad: Option<(&mut [f64], &mut [f64; NUM_CLASSES])>,
) -> Result<f64> {
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut z = [0.0; NUM_CLASSES];
    let mut p = [0.0; NUM_CLASSES];
    match grad {
        None => {
            for (x, &y) in features.iter().zip(labels) {
                model.logits(x, &mut z);
                softmax_into(&z, &mut p)?;
                loss += nll(p[y]);
            }
        }
        Some((gw, gb)) => {
            gw.fill(0.0);
            gb.fill(0.0);
            for (x, &y) in features.iter().zip(labels) {
                model.logits(x, &mut z);
                softmax_into(&z, &mut p)?;
                loss += nll(p[y]);
                p[y] -= 1.0;
                for (xi, grow) in x.iter().zip(gw.chunks_exact_mut(NUM_CLASSES)) {
                    for (g, r) in grow.iter_mut().zip(&p) {
                        *g += xi * r;
                    }
                }
                for (g, r) in gb.iter_mut().zip(&p) {
                    *g += r;
                }
            }
            gw.iter_mut().for_each(|g| *g /= n);
            gb.iter_mut().for_each(|g| *g /= n);
        }
    }
    Ok(loss / n)
}

/// Full-batch gradient descent from zero weights with [`lr_schedule`].
///
/// `images[s]` has label `labels[s]`. With zero weights the initial model is
/// uniform, so `loss_history[0] == ln 7`.
pub fn stub_fit(images: &[ImageTensor], labels: &[ClassIndex], cfg: &StubFitConfig) -> Result<FitReport> {
    if images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if images.len() < NUM_CLASSES {
        return Err(Error::validation(format!(
            "stub training needs at least {NUM_CLASSES} samples, got {}",
            images.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::validation(format!("label {bad} out of range")));
    }
    if !(cfg.lr0 > 0.0 && cfg.lr0.is_finite()) {
        return Err(Error::invalid(format!("lr0 must be positive, got {}", cfg.lr0)));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        log::warn!("stub training data contains a single class ({})", labels[0]);
    }

    let features: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| downsample_features(img, cfg.grid))
        .collect();
    let mut model = StubModel::zeros(cfg.grid)?;
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = [0.0; NUM_CLASSES];
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    for epoch in 0..cfg.epochs {
        let loss = mean_loss_and_grad(&model, &features, labels, Some((&mut gw, &mut gb)))?;
        history.push(loss);
        let lr = lr_schedule(epoch, cfg.lr0);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
        if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("stub training diverged at epoch {epoch}")));
        }
    }
    history.push(mean_loss_and_grad(&model, &features, labels, None)?);
    Ok(FitReport {
        model,
        loss_history: history,
    })
}

/// Runs the model on `k` augmented views of each image.
pub fn stub_predict(
    model: &StubModel,
    augmented: &[Vec<ImageTensor>],
    image_ids: &[String],
    model_id: &str,
) -> Result<PredictionSet> {
    if augmented.len() != image_ids.len() {
        return Err(Error::invalid(format!(
            "{} augmented groups but {} image ids",
            augmented.len(),
            image_ids.len()
        )));
    }
    let k = augmented.first().map(Vec::len).unwrap_or(0);
    if let Some((i, g)) = augmented.iter().enumerate().find(|(_, g)| g.len() != k) {
        return Err(Error::validation(format!(
            "image {:?} has {} augmented views, expected {k}",
            image_ids[i],
            g.len()
        )));
    }
    let rows: Vec<Vec<f64>> = augmented
        .par_iter()
        .map(|views| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(views.len() * NUM_CLASSES);
            for v in views {
                out.extend_from_slice(&model.predict_image(v)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    PredictionSet::new(model_id, image_ids.to_vec(), k, rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 0.01), 0.01);
        assert_eq!(lr_schedule(1, 0.01), 0.01);
        assert!((lr_schedule(2, 0.01) - 0.0094).abs() < 1e-12);
        assert!((lr_schedule(5, 0.01) - 0.008836).abs() < 1e-12);
    }

    #[test]
    fn downsample_of_constant_image_is_constant() {
        let img = ImageTensor::new(13, 9, vec![51.0; 13 * 9 * 3]).unwrap();
        let f = downsample_features(&img, (8, 8));
        assert_eq!(f.len(), 192);
        for v in f {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn downsample_identity_when_grid_matches() {
        let img = ImageTensor::from_fn(4, 4, |y, x, c| (y * 16 + x * 4 + c) as f64).unwrap();
        let f = downsample_features(&img, (4, 4));
        for (a, b) in f.iter().zip(img.pixels()) {
            assert_abs_diff_eq!(*a, b / 255.0, epsilon = 1e-12);
        }
    }

    /// Two Gaussian blobs in image space: class 0 dark-red, class 3 bright-blue.
    pub(crate) fn blobs(n: usize, seed: u64) -> (Vec<ImageTensor>, Vec<ClassIndex>) {
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let mut rng = substream(seed, Domain::Synth, &[i as u64]);
            let label = if i % 2 == 0 { 0 } else { 3 };
            let base: [f64; 3] = if label == 0 { [150.0, 60.0, 60.0] } else { [80.0, 90.0, 170.0] };
            let img = ImageTensor::from_fn(10, 10, |_, _, c| {
                let noise: f64 = rng.sample(StandardNormal);
                (base[c] + 25.0 * noise).clamp(0.0, 255.0)
            })
            .unwrap();
            imgs.push(img);
            labels.push(label);
        }
        (imgs, labels)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (imgs, labels) = blobs(40, 11);
        let cfg = StubFitConfig::default();
        let report = stub_fit(&imgs, &labels, &cfg).unwrap();
        let correct = imgs
            .iter()
            .zip(&labels)
            .filter(|(img, &l)| crate::tensor::argmax(&report.model.predict_image(img).unwrap()) == l)
            .count();
        assert!(correct as f64 / 40.0 >= 0.95, "accuracy {correct}/40");
        let h = &report.loss_history;
        assert_eq!(h.len(), 201);
        assert!(h[200] <= h[0]);
        for w in h.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_epochs_is_uniform() {
        let (imgs, labels) = blobs(8, 1);
        let cfg = StubFitConfig { epochs: 0, ..Default::default() };
        let report = stub_fit(&imgs, &labels, &cfg).unwrap();
        assert_eq!(report.loss_history.len(), 1);
        assert_abs_diff_eq!(report.loss_history[0], 7f64.ln(), epsilon = 1e-12);
        for p in report.model.predict_image(&imgs[0]).unwrap() {
            assert_abs_diff_eq!(p, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (imgs, labels) = blobs(20, 5);
        let cfg = StubFitConfig { epochs: 30, ..Default::default() };
        let a = stub_fit(&imgs, &labels, &cfg).unwrap();
        let b = stub_fit(&imgs, &labels, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn fit_rejects_tiny_sets() {
        let (imgs, labels) = blobs(6, 5);
        assert!(stub_fit(&imgs, &labels, &StubFitConfig::default()).is_err());
    }

    #[test]
    fn predict_shapes_and_uniform_zero_model() {
        let img = ImageTensor::new(8, 8, vec![100.0; 192]).unwrap();
        let groups: Vec<Vec<ImageTensor>> = (0..3).map(|_| vec![img.clone(); 10]).collect();
        let ids: Vec<String> = (0..3).map(|i| format!("i{i}")).collect();
        let model = StubModel::zeros(DEFAULT_GRID).unwrap();
        let set = stub_predict(&model, &groups, &ids, "stub").unwrap();
        assert_eq!((set.num_images(), set.k()), (3, 10));
        assert_eq!(set.probs().len(), 3 * 10 * 7);
        for &p in set.probs() {
            assert_abs_diff_eq!(p, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identical_views_give_identical_rows() {
        let (imgs, labels) = blobs(14, 2);
        let model = stub_fit(&imgs, &labels, &StubFitConfig { epochs: 5, ..Default::default() })
            .unwrap()
            .model;
        let set = stub_predict(&model, &[vec![imgs[0].clone(); 4]], &["x".into()], "m").unwrap();
        for a in 1..4 {
            assert_eq!(set.row(0, a), set.row(0, 0));
        }
    }

    #[test]
    fn feature_dimension_mismatch() {
        assert!(StubModel::new((8, 8), vec![0.0; 10], [0.0; 7]).is_err());
        let model = StubModel::zeros((8, 8)).unwrap();
        assert!(model.predict_features(&[0.0; 12]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let (imgs, labels) = blobs(14, 3);
        let model = stub_fit(&imgs, &labels, &StubFitConfig { epochs: 3, grid: (4, 5), lr0: 0.01 })
            .unwrap()
            .model;
        assert_eq!(StubModel::from_text(&model.to_text()).unwrap(), model);
    }
}
