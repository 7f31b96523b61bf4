//! The 1×1-convolution meta-learner.
//!
//! At every (image `i`, class `c`, slot `j`) the layer computes
//! `z = Σ_m w[m]·x[i,c,j,m] + b` and applies softmax over `c`. In the
//! default [`FusionLayout::Shared`] layout one weight per input channel and
//! one bias are shared across all classes and slots, i.e. `M + 1` parameters.
//! [`FusionLayout::PerClass`] gives every class its own channel weights and
//! bias (`7·M + 7` parameters).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{BagTensor, SlotProbs};
use crate::basemodels::LabelSet;
use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::tensor::{nll, softmax_into, ClassIndex, DenseArray, NUM_CLASSES};

/// Fusion-layer training length used for the challenge submission.
pub const PAPER_FUSION_EPOCHS: usize = 100;
/// Constant Adam learning rate of the fusion layer.
pub const PAPER_FUSION_LR: f64 = 1e-4;

const FUSION_FORMAT: &str = "dabea-fusion/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionLayout {
    #[default]
    Shared,
    PerClass,
}

impl FusionLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionLayout::Shared => "shared",
            FusionLayout::PerClass => "per_class",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "shared" => Ok(FusionLayout::Shared),
            "per_class" | "per-class" => Ok(FusionLayout::PerClass),
            other => Err(Error::invalid(format!(
                "unknown fusion layout {other:?} (expected shared or per_class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    layout: FusionLayout,
    channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl FusionWeights {
    /// Shared-layout weights `w` (one per channel) and bias `b`.
    pub fn shared(w: Vec<f64>, b: f64) -> Result<Self> {
        let channels = w.len();
        Self::from_parts(FusionLayout::Shared, channels, w, vec![b])
    }

    /// Per-class weights `w[c·M + m]` and biases `b[c]`.
    pub fn per_class(channels: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Self::from_parts(FusionLayout::PerClass, channels, w, b)
    }

    fn from_parts(
        layout: FusionLayout,
        channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("fusion layer needs at least one channel"));
        }
        let (nw, nb) = match layout {
            FusionLayout::Shared => (channels, 1),
            FusionLayout::PerClass => (NUM_CLASSES * channels, NUM_CLASSES),
        };
        if weights.len() != nw || bias.len() != nb {
            return Err(Error::invalid(format!(
                "{} fusion layer with {channels} channels needs {nw} weights and {nb} biases, got {} and {}",
                layout.as_str(),
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite fusion parameter"));
        }
        Ok(FusionWeights {
            layout,
            channels,
            weights,
            bias,
        })
    }

    /// Equal channel weights `1/M` and zero bias.
    pub fn init(layout: FusionLayout, channels: usize) -> Result<Self> {
        let per = 1.0 / channels.max(1) as f64;
        let (nw, nb) = match layout {
            FusionLayout::Shared => (channels, 1),
            FusionLayout::PerClass => (NUM_CLASSES * channels, NUM_CLASSES),
        };
        Self::from_parts(layout, channels, vec![per; nw], vec![0.0; nb])
    }

    pub fn layout(&self) -> FusionLayout {
        self.layout
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, class: ClassIndex, channel: usize) -> f64 {
        match self.layout {
            FusionLayout::Shared => self.weights[channel],
            FusionLayout::PerClass => self.weights[class * self.channels + channel],
        }
    }

    #[inline]
    pub fn bias(&self, class: ClassIndex) -> f64 {
        match self.layout {
            FusionLayout::Shared => self.bias[0],
            FusionLayout::PerClass => self.bias[class],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights followed by biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} fusion parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let (w, b) = params.split_at(self.weights.len());
        Self::from_parts(self.layout, self.channels, w.to_vec(), b.to_vec())
    }

    fn check_bag(&self, bag: &BagTensor) -> Result<()> {
        if bag.channels() != self.channels {
            return Err(Error::validation(format!(
                "fusion layer has {} channels but bag has {}",
                self.channels,
                bag.channels()
            )));
        }
        Ok(())
    }

    /// Fused probabilities for every slot of image `i`, written as `[n × 7]`.
    fn forward_image(&self, bag: &BagTensor, i: usize, out: &mut [f64]) -> Result<()> {
        let (n, m) = (bag.slots(), bag.channels());
        let block = bag.image_block(i);
        let mut z = [0.0; NUM_CLASSES];
        for (j, row) in out.chunks_exact_mut(NUM_CLASSES).enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                let x = &block[(c * n + j) * m..(c * n + j + 1) * m];
                *zc = x
                    .iter()
                    .enumerate()
                    .fold(self.bias(c), |acc, (ch, &v)| acc + self.weight(c, ch) * v);
            }
            softmax_into(&z, row)?;
        }
        Ok(())
    }
}

/// Applies the fusion layer to every (image, slot) of the bag.
pub fn fusion_forward(bag: &BagTensor, fw: &FusionWeights) -> Result<SlotProbs> {
    fw.check_bag(bag)?;
    let n = bag.slots();
    let mut out = vec![0.0; bag.num_images() * n * NUM_CLASSES];
    out.par_chunks_mut(n * NUM_CLASSES)
        .enumerate()
        .try_for_each(|(i, chunk)| fw.forward_image(bag, i, chunk))?;
    SlotProbs::new(
        bag.image_ids().to_vec(),
        DenseArray::new(vec![bag.num_images(), n, NUM_CLASSES], out)?,
    )
}

/// Mean cross-entropy and (optionally) its gradient over all N·n
/// (image, slot) pairs. Per-image partial sums are reduced in image order,
/// so results do not depend on the thread count.
fn loss_and_grad(
    bag: &BagTensor,
    labels: &[ClassIndex],
    fw: &FusionWeights,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    fw.check_bag(bag)?;
    if labels.len() != bag.num_images() {
        return Err(Error::invalid(format!(
            "{} labels for {} bagged images",
            labels.len(),
            bag.num_images()
        )));
    }
    let (n, m) = (bag.slots(), bag.channels());
    let n_weights = fw.weights.len();
    let partials: Vec<(f64, Vec<f64>)> = (0..bag.num_images())
        .into_par_iter()
        .map(|i| -> Result<(f64, Vec<f64>)> {
            let mut probs = vec![0.0; n * NUM_CLASSES];
            fw.forward_image(bag, i, &mut probs)?;
            let y = labels[i];
            let block = bag.image_block(i);
            let mut loss = 0.0;
            let mut grad = if want_grad { vec![0.0; fw.num_params()] } else { Vec::new() };
            for (j, p) in probs.chunks_exact(NUM_CLASSES).enumerate() {
                loss += nll(p[y]);
                if !want_grad {
                    continue;
                }
                for (c, &pc) in p.iter().enumerate() {
                    let r = pc - if c == y { 1.0 } else { 0.0 };
                    let x = &block[(c * n + j) * m..(c * n + j + 1) * m];
                    match fw.layout {
                        FusionLayout::Shared => {
                            for (g, &v) in grad[..m].iter_mut().zip(x) {
                                *g += r * v;
                            }
                        }
                        FusionLayout::PerClass => {
                            for (g, &v) in grad[c * m..(c + 1) * m].iter_mut().zip(x) {
                                *g += r * v;
                            }
                            grad[n_weights + c] += r;
                        }
                    }
                }
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;

    let count = (bag.num_images() * n) as f64;
    let mut loss = 0.0;
    let mut grad = if want_grad { vec![0.0; fw.num_params()] } else { Vec::new() };
    for (l, g) in partials {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= count);
    // Shared bias: Σ_c (p_c − onehot_c) = 1 − 1 = 0 for every sample.
    if want_grad && fw.layout == FusionLayout::Shared {
        grad[n_weights] = 0.0;
    }
    Ok((loss / count, grad))
}

/// Mean cross-entropy of the fused slot predictions against the labels.
pub fn fusion_loss(bag: &BagTensor, labels: &LabelSet, fw: &FusionWeights) -> Result<f64> {
    let y = labels.aligned_to(bag.image_ids())?;
    Ok(loss_and_grad(bag, &y, fw, false)?.0)
}

/// Analytic gradient of [`fusion_loss`], ordered like [`FusionWeights::params`].
pub fn fusion_grad(bag: &BagTensor, labels: &LabelSet, fw: &FusionWeights) -> Result<Vec<f64>> {
    let y = labels.aligned_to(bag.image_ids())?;
    Ok(loss_and_grad(bag, &y, fw, true)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseConfig {
    pub epochs: usize,
    pub lr: f64,
    pub layout: FusionLayout,
    pub adam: AdamConfig,
    /// Recorded in [`TrainingMeta`]; training itself draws no randomness.
    pub seed: u64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig {
            epochs: PAPER_FUSION_EPOCHS,
            lr: PAPER_FUSION_LR,
            layout: FusionLayout::Shared,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FuseReport {
    pub weights: FusionWeights,
    /// Loss before the first step and after every epoch (`epochs + 1` values).
    pub loss_history: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Full-batch Adam on the mean fusion cross-entropy, starting from equal
/// channel weights and zero bias.
pub fn fuse_train(bag: &BagTensor, labels: &LabelSet, cfg: &FuseConfig) -> Result<FuseReport> {
    if bag.num_images() == 0 {
        return Err(Error::validation("cannot train the fusion layer on an empty bag"));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate {} must be finite and >= 0", cfg.lr)));
    }
    let y = labels.aligned_to(bag.image_ids())?;
    let mut weights = FusionWeights::init(cfg.layout, bag.channels())?;
    let mut params = weights.params();
    let mut state = AdamState::new(params.len(), cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = loss_and_grad(bag, &y, &weights, true)?;
        history.push(loss);
        adam_step(&mut state, &mut params, &grad, cfg.lr)?;
        weights = weights
            .with_params(&params)
            .map_err(|e| Error::numeric(format!("fusion training diverged at epoch {epoch}: {e}")))?;
    }
    history.push(loss_and_grad(bag, &y, &weights, false)?.0);
    Ok(FuseReport {
        weights,
        loss_history: history,
        meta: TrainingMeta {
            epochs: cfg.epochs,
            lr: cfg.lr,
            seed: cfg.seed,
        },
    })
}

/// Trained fusion layer together with the provenance written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionArtifact {
    pub weights: FusionWeights,
    pub source_model_ids: Vec<String>,
    pub meta: Option<TrainingMeta>,
}

impl FusionArtifact {
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "format = {FUSION_FORMAT}");
        let _ = writeln!(s, "channels = {}", self.weights.channels());
        let _ = writeln!(s, "layout = {}", self.weights.layout().as_str());
        let _ = writeln!(s, "source_model_ids = {}", self.source_model_ids.join(","));
        let _ = writeln!(s, "w = {}", join(self.weights.weights()));
        let _ = writeln!(s, "b = {}", join(self.weights.biases()));
        if let Some(meta) = &self.meta {
            let _ = writeln!(s, "epochs = {}", meta.epochs);
            let _ = writeln!(s, "lr = {}", meta.lr);
            let _ = writeln!(s, "seed = {}", meta.seed);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::validation(format!("fusion weights file missing key {k:?}")))
        };
        if get("format")? != FUSION_FORMAT {
            return Err(Error::validation(format!(
                "unsupported fusion weights format {:?}",
                get("format")?
            )));
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
        let channels: usize = get("channels")?
            .parse()
            .map_err(|_| Error::validation("bad channel count"))?;
        let layout = FusionLayout::parse(get("layout")?)?;
        let source_model_ids: Vec<String> =
            get("source_model_ids")?.split(',').map(|s| s.trim().to_string()).collect();
        if source_model_ids.len() != channels {
            return Err(Error::validation(format!(
                "{} source model ids for {channels} channels",
                source_model_ids.len()
            )));
        }
        let weights = FusionWeights::from_parts(layout, channels, floats("w")?, floats("b")?)?;
        let meta = match (kv.get("epochs"), kv.get("lr"), kv.get("seed")) {
            (Some(e), Some(l), Some(s)) => Some(TrainingMeta {
                epochs: e.parse().map_err(|_| Error::validation("bad epochs"))?,
                lr: l.parse().map_err(|_| Error::validation("bad lr"))?,
                seed: s.parse().map_err(|_| Error::validation("bad seed"))?,
            }),
            (None, None, None) => None,
            _ => return Err(Error::validation("incomplete training metadata")),
        };
        Ok(FusionArtifact {
            weights,
            source_model_ids,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self
            .source_model_ids
            .iter()
            .any(|id| id.contains(',') || id.contains('\n'))
        {
            return Err(Error::invalid("model ids may not contain commas or newlines"));
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basemodels::{synth_generate, synth_labels, PredictionSet};
    use crate::ensemble::bag;
    use crate::tensor::argmax;
    use approx::assert_abs_diff_eq;

    fn one_image_bag(x: &[[f64; NUM_CLASSES]]) -> BagTensor {
        let sets: Vec<PredictionSet> = x
            .iter()
            .enumerate()
            .map(|(m, row)| PredictionSet::new(format!("m{m}"), vec!["a".into()], 1, row.to_vec()).unwrap())
            .collect();
        bag(&sets, 1, 0).unwrap()
    }

    #[test]
    fn hand_computed_cell() {
        let x0 = [0.8, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025];
        let x1 = [0.6, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05];
        let b = one_image_bag(&[x0, x1]);
        let fw = FusionWeights::shared(vec![2.0, 1.0], 0.0).unwrap();
        let out = fusion_forward(&b, &fw).unwrap();

        // Scalar oracle: z_c = 2·x0_c + x1_c, then softmax.
        let z: Vec<f64> = (0..7).map(|c| 2.0 * x0[c] + x1[c]).collect();
        assert_abs_diff_eq!(z[0], 2.2, epsilon = 1e-15);
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        for c in 0..7 {
            assert_abs_diff_eq!(out.row(0, 0)[c], z[c].exp() / denom, epsilon = 1e-15);
        }

        let labels = LabelSet::new(vec!["a".into()], vec![0]).unwrap();
        let loss = fusion_loss(&b, &labels, &fw).unwrap();
        assert_abs_diff_eq!(loss, -(z[0].exp() / denom).ln(), epsilon = 1e-14);
    }

    fn synth_bag(n_images: usize, n: usize, m: usize, seed: u64) -> (BagTensor, LabelSet) {
        let labels = synth_labels(n_images, "f", seed).unwrap();
        let sets: Vec<_> = (0..m)
            .map(|c| synth_generate(&labels, 5, 1.0, 1.0, seed * 10 + c as u64, &format!("m{c}")).unwrap())
            .collect();
        (bag(&sets, n, seed).unwrap(), labels)
    }

    #[test]
    fn zero_weights_are_uniform() {
        let (b, labels) = synth_bag(6, 4, 2, 1);
        let fw = FusionWeights::shared(vec![0.0, 0.0], 3.7).unwrap();
        let out = fusion_forward(&b, &fw).unwrap();
        for &p in out.probs().data() {
            assert_abs_diff_eq!(p, 1.0 / 7.0, epsilon = 1e-15);
        }
        let fw0 = FusionWeights::shared(vec![0.0, 0.0], 0.0).unwrap();
        assert_abs_diff_eq!(fusion_loss(&b, &labels, &fw0).unwrap(), 7f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn channel_selection_preserves_argmax() {
        let (b, _) = synth_bag(10, 6, 2, 2);
        let fw = FusionWeights::shared(vec![1.0, 0.0], 0.0).unwrap();
        let out = fusion_forward(&b, &fw).unwrap();
        for i in 0..10 {
            for j in 0..6 {
                let model0: Vec<f64> = (0..7).map(|c| b.value(i, c, j, 0)).collect();
                assert_eq!(argmax(out.row(i, j)), argmax(&model0));
            }
        }
    }

    #[test]
    fn shared_bias_gradient_is_exactly_zero() {
        let (b, labels) = synth_bag(5, 3, 2, 3);
        let fw = FusionWeights::shared(vec![0.3, -1.2], 0.4).unwrap();
        let g = fusion_grad(&b, &labels, &fw).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn identical_channels_have_identical_gradients() {
        let labels = synth_labels(6, "f", 4).unwrap();
        let s = synth_generate(&labels, 5, 1.0, 1.0, 9, "m").unwrap();
        let s2 = PredictionSet::new("m2", s.image_ids().to_vec(), s.k(), s.probs().to_vec()).unwrap();
        let b = bag(&[s, s2], 1, 0).unwrap();
        let fw = FusionWeights::shared(vec![0.7, 0.7], 0.0).unwrap();
        let g = fusion_grad(&b, &labels, &fw).unwrap();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn per_class_layout_gradients_match_finite_differences() {
        let (b, labels) = synth_bag(4, 3, 2, 5);
        let init = FusionWeights::init(FusionLayout::PerClass, 2).unwrap();
        let params: Vec<f64> = init.params().iter().enumerate().map(|(i, v)| v + 0.1 * (i as f64).sin()).collect();
        let fw = init.with_params(&params).unwrap();
        let g = fusion_grad(&b, &labels, &fw).unwrap();
        assert_eq!(g.len(), 7 * 2 + 7);
        let h = 1e-5;
        for p in 0..params.len() {
            let mut plus = params.clone();
            plus[p] += h;
            let mut minus = params.clone();
            minus[p] -= h;
            let lp = fusion_loss(&b, &labels, &fw.with_params(&plus).unwrap()).unwrap();
            let lm = fusion_loss(&b, &labels, &fw.with_params(&minus).unwrap()).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g[p]).abs() <= 1e-4 * fd.abs().max(1e-6) + 1e-9, "param {p}: fd {fd} vs {}", g[p]);
        }
    }

    #[test]
    fn loss_is_slot_permutation_invariant() {
        let (b, labels) = synth_bag(3, 4, 2, 6);
        let fw = FusionWeights::shared(vec![1.3, 0.4], 0.0).unwrap();
        let base = fusion_loss(&b, &labels, &fw).unwrap();

        let perm = [2usize, 0, 3, 1];
        let mut vals = b.values().clone();
        let mut augs = Vec::new();
        for i in 0..3 {
            for (j, &pj) in perm.iter().enumerate() {
                for m in 0..2 {
                    for c in 0..7 {
                        vals.set(&[i, c, j, m], b.value(i, c, pj, m));
                    }
                    augs.push(b.aug_index(i, pj, m));
                }
            }
        }
        let permuted = BagTensor::new(
            b.image_ids().to_vec(),
            b.source_model_ids().to_vec(),
            4,
            vals,
            augs,
        )
        .unwrap();
        assert_abs_diff_eq!(fusion_loss(&permuted, &labels, &fw).unwrap(), base, epsilon = 1e-14);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (b, labels) = synth_bag(5, 2, 2, 7);
        let cfg = FuseConfig { epochs: 0, ..Default::default() };
        let r = fuse_train(&b, &labels, &cfg).unwrap();
        assert_eq!(r.weights, FusionWeights::shared(vec![0.5, 0.5], 0.0).unwrap());
        assert_eq!(r.loss_history.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let (b, labels) = synth_bag(40, 5, 2, 8);
        let cfg = FuseConfig { epochs: 50, lr: 1e-2, ..Default::default() };
        let r1 = fuse_train(&b, &labels, &cfg).unwrap();
        let r2 = fuse_train(&b, &labels, &cfg).unwrap();
        assert_eq!(r1.weights, r2.weights);
        assert_eq!(r1.loss_history, r2.loss_history);
        assert!(r1.loss_history.last().unwrap() <= &r1.loss_history[0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (b, labels) = synth_bag(3, 2, 2, 9);
        let fw = FusionWeights::shared(vec![1.0, 1.0, 1.0], 0.0).unwrap();
        assert!(fusion_forward(&b, &fw).is_err());
        assert!(fusion_grad(&b, &labels, &fw).is_err());
        let other = synth_labels(3, "zzz", 1).unwrap();
        assert!(fusion_loss(&b, &other, &FusionWeights::init(FusionLayout::Shared, 2).unwrap()).is_err());
    }

    #[test]
    fn artifact_text_round_trip() {
        let art = FusionArtifact {
            weights: FusionWeights::shared(vec![0.123_456_789_012_345_67, -2.5], 1e-17).unwrap(),
            source_model_ids: vec!["iv4".into(), "irv2".into()],
            meta: Some(TrainingMeta { epochs: 100, lr: 1e-4, seed: 42 }),
        };
        assert_eq!(FusionArtifact::from_text(&art.to_text()).unwrap(), art);

        let pc = FusionArtifact {
            weights: FusionWeights::init(FusionLayout::PerClass, 3).unwrap(),
            source_model_ids: vec!["a".into(), "b".into(), "c".into()],
            meta: None,
        };
        assert_eq!(FusionArtifact::from_text(&pc.to_text()).unwrap(), pc);
        assert!(FusionArtifact::from_text("format = other\n").is_err());
    }
}
