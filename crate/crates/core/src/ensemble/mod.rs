//! Bagging of per-model output vectors, the 1×1-convolution fusion layer and
//! post-pooling.
//!
//! Data flow: `M` [`PredictionSet`]s (one per base model, `k` augmented
//! views per image) are bagged into an `[N × 7 × n × M]` [`BagTensor`].
//! The fusion layer mixes the `M` channels at every (image, class, slot)
//! position with shared weights and applies softmax over classes, giving
//! `[N × n × 7]` [`SlotProbs`]. Pooling reduces the `n` slots per image to
//! one probability row.

mod adam;
mod fusion;
mod io;
mod pool;

use rand::Rng;
use rayon::prelude::*;

use crate::basemodels::PredictionSet;
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::tensor::{DenseArray, NUM_CLASSES};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fusion::{
    fuse_train, fusion_forward, fusion_grad, fusion_loss, FuseConfig, FuseReport, FusionArtifact,
    FusionLayout, FusionWeights, TrainingMeta, PAPER_FUSION_EPOCHS, PAPER_FUSION_LR,
};
pub use io::{
    export_bag_dat1, import_bag_dat1, load_bag, load_pooled, load_slot_probs, save_bag,
    save_pooled, save_slot_probs,
};
pub use pool::{pool, predict, PoolStrategy, PooledOutput, Predictions, BINARY_THRESHOLD};

/// Bagged probabilities `[N × 7 × n × M]` plus the augmentation index each
/// slot was drawn from (`[N × n × M]`).
#[derive(Debug, Clone, PartialEq)]
pub struct BagTensor {
    image_ids: Vec<String>,
    source_model_ids: Vec<String>,
    n: usize,
    values: DenseArray,
    aug_indices: Vec<usize>,
}

impl BagTensor {
    pub fn new(
        image_ids: Vec<String>,
        source_model_ids: Vec<String>,
        n: usize,
        values: DenseArray,
        aug_indices: Vec<usize>,
    ) -> Result<Self> {
        let m = source_model_ids.len();
        if m == 0 || n == 0 || image_ids.is_empty() {
            return Err(Error::validation("bag needs at least one image, slot and channel"));
        }
        let expected = [image_ids.len(), NUM_CLASSES, n, m];
        if values.shape() != expected {
            return Err(Error::validation(format!(
                "bag values have shape {:?}, expected {expected:?}",
                values.shape()
            )));
        }
        if aug_indices.len() != image_ids.len() * n * m {
            return Err(Error::validation("bag augmentation index table has wrong length"));
        }
        let bag = BagTensor {
            image_ids,
            source_model_ids,
            n,
            values,
            aug_indices,
        };
        bag.check_slices()?;
        Ok(bag)
    }

    fn check_slices(&self) -> Result<()> {
        for i in 0..self.num_images() {
            for j in 0..self.n {
                for m in 0..self.channels() {
                    let mut sum = 0.0;
                    for c in 0..NUM_CLASSES {
                        let v = self.value(i, c, j, m);
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::validation(format!(
                                "bag value {v} at image {i}, class {c}, slot {j}, channel {m} outside [0, 1]"
                            )));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > crate::basemodels::ROW_SUM_TOL {
                        return Err(Error::validation(format!(
                            "bag slice (image {i}, slot {j}, channel {m}) sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn source_model_ids(&self) -> &[String] {
        &self.source_model_ids
    }

    pub fn num_images(&self) -> usize {
        self.image_ids.len()
    }

    /// Bag size `n`.
    pub fn slots(&self) -> usize {
        self.n
    }

    /// Model-channel count `M`.
    pub fn channels(&self) -> usize {
        self.source_model_ids.len()
    }

    pub fn values(&self) -> &DenseArray {
        &self.values
    }

    #[inline]
    pub fn value(&self, i: usize, c: usize, j: usize, m: usize) -> f64 {
        let (n, mm) = (self.n, self.channels());
        self.values.data()[((i * NUM_CLASSES + c) * n + j) * mm + m]
    }

    /// Augmentation index that filled slot `j` of channel `m` for image `i`.
    pub fn aug_index(&self, i: usize, j: usize, m: usize) -> usize {
        self.aug_indices[(i * self.n + j) * self.channels() + m]
    }

    /// Values for one image, laid out `[7 × n × M]`.
    pub(crate) fn image_block(&self, i: usize) -> &[f64] {
        let len = NUM_CLASSES * self.n * self.channels();
        &self.values.data()[i * len..(i + 1) * len]
    }
}

/// Samples `n` output vectors per image from each model's `k` augmented
/// predictions and stacks the models along the channel axis.
///
/// Slot 0 always holds augmentation 0 (the clean view). Every other slot
/// `(i, j, m)` draws its augmentation uniformly with replacement from the
/// substream `(seed, i, j, m)`.
pub fn bag(sets: &[PredictionSet], n: usize, seed: u64) -> Result<BagTensor> {
    let first = sets
        .first()
        .ok_or_else(|| Error::invalid("bagging needs at least one prediction set"))?;
    if n == 0 {
        return Err(Error::invalid("bag size n must be at least 1"));
    }
    let k = first.k();
    for s in &sets[1..] {
        if s.image_ids() != first.image_ids() {
            return Err(Error::validation(format!(
                "prediction sets {:?} and {:?} cover different images",
                first.model_id(),
                s.model_id()
            )));
        }
        if s.k() != k {
            return Err(Error::validation(format!(
                "prediction sets {:?} (k={k}) and {:?} (k={}) differ in k",
                first.model_id(),
                s.model_id(),
                s.k()
            )));
        }
    }
    let m_count = sets.len();
    let n_images = first.num_images();
    let block = NUM_CLASSES * n * m_count;

    let per_image: Vec<(Vec<f64>, Vec<usize>)> = (0..n_images)
        .into_par_iter()
        .map(|i| {
            let mut vals = vec![0.0; block];
            let mut augs = vec![0; n * m_count];
            for j in 0..n {
                for (m, set) in sets.iter().enumerate() {
                    let a = if j == 0 {
                        0
                    } else {
                        substream(seed, Domain::Bag, &[i as u64, j as u64, m as u64])
                            .random_range(0..k)
                    };
                    augs[j * m_count + m] = a;
                    for (c, &p) in set.row(i, a).iter().enumerate() {
                        vals[(c * n + j) * m_count + m] = p;
                    }
                }
            }
            (vals, augs)
        })
        .collect();

    let mut values = Vec::with_capacity(n_images * block);
    let mut aug_indices = Vec::with_capacity(n_images * n * m_count);
    for (v, a) in per_image {
        values.extend(v);
        aug_indices.extend(a);
    }
    BagTensor::new(
        first.image_ids().to_vec(),
        sets.iter().map(|s| s.model_id().to_string()).collect(),
        n,
        DenseArray::new(vec![n_images, NUM_CLASSES, n, m_count], values)?,
        aug_indices,
    )
}

/// Fused probabilities per (image, slot): `[N × n × 7]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotProbs {
    image_ids: Vec<String>,
    probs: DenseArray,
}

impl SlotProbs {
    pub fn new(image_ids: Vec<String>, probs: DenseArray) -> Result<Self> {
        let shape = probs.shape();
        if shape.len() != 3 || shape[0] != image_ids.len() || shape[2] != NUM_CLASSES {
            return Err(Error::validation(format!(
                "slot probabilities have shape {shape:?}, expected [{}, n, {NUM_CLASSES}]",
                image_ids.len()
            )));
        }
        Ok(SlotProbs { image_ids, probs })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn num_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn slots(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn probs(&self) -> &DenseArray {
        &self.probs
    }

    /// Probability row of image `i`, slot `j`.
    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.slots() + j) * NUM_CLASSES;
        &self.probs.data()[start..start + NUM_CLASSES]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basemodels::{synth_generate, synth_labels};

    fn sets(n_images: usize, k: usize, m: usize) -> Vec<PredictionSet> {
        let labels = synth_labels(n_images, "b", 1).unwrap();
        (0..m)
            .map(|c| synth_generate(&labels, k, 1.0, 1.0, 100 + c as u64, &format!("m{c}")).unwrap())
            .collect()
    }

    #[test]
    fn single_slot_bag_is_the_clean_view() {
        let s = sets(4, 6, 2);
        let b = bag(&s, 1, 77).unwrap();
        for i in 0..4 {
            for m in 0..2 {
                assert_eq!(b.aug_index(i, 0, m), 0);
                for c in 0..7 {
                    assert_eq!(b.value(i, c, 0, m), s[m].row(i, 0)[c]);
                }
            }
        }
    }

    #[test]
    fn paper_shape() {
        let b = bag(&sets(5, 10, 2), 100, 3).unwrap();
        assert_eq!(b.values().shape(), &[5, 7, 100, 2]);
    }

    #[test]
    fn slots_copy_the_sampled_augmentation() {
        let s = sets(3, 5, 2);
        let b = bag(&s, 20, 9).unwrap();
        for i in 0..3 {
            for j in 0..20 {
                for m in 0..2 {
                    let a = b.aug_index(i, j, m);
                    assert!(a < 5);
                    for c in 0..7 {
                        assert_eq!(b.value(i, c, j, m), s[m].row(i, a)[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn bagging_is_seeded_and_thread_independent() {
        let s = sets(6, 10, 2);
        let a = bag(&s, 30, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| bag(&s, 30, 5)).unwrap();
        assert_eq!(a, b);
        let c = bag(&s, 30, 6).unwrap();
        assert_ne!(a, c);
        for i in 0..6 {
            for m in 0..2 {
                assert_eq!(a.aug_index(i, 0, m), c.aug_index(i, 0, m));
            }
        }
    }

    #[test]
    fn mismatched_sets_rejected() {
        let mut s = sets(3, 4, 1);
        let other_labels = synth_labels(3, "other", 1).unwrap();
        s.push(synth_generate(&other_labels, 4, 1.0, 1.0, 0, "x").unwrap());
        assert!(bag(&s, 2, 0).is_err());

        let mut s = sets(3, 4, 1);
        let labels = synth_labels(3, "b", 1).unwrap();
        s.push(synth_generate(&labels, 5, 1.0, 1.0, 0, "x").unwrap());
        assert!(bag(&s, 2, 0).is_err());

        assert!(bag(&[], 2, 0).is_err());
        assert!(bag(&sets(2, 2, 1), 0, 0).is_err());
    }
}
