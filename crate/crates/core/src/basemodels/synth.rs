//! Controlled stand-in for base-model outputs.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabelSet, PredictionSet};
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::tensor::{softmax_into, NUM_CLASSES};

/// For every image `i` and augmentation `a`, draws
/// `logits = strength·onehot(label_i) + N(0, noise_sd²)` from the substream
/// `(seed, i, a)` and applies softmax.
pub fn synth_generate(
    labels: &LabelSet,
    k: usize,
    strength: f64,
    noise_sd: f64,
    seed: u64,
    model_id: &str,
) -> Result<PredictionSet> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::invalid(format!("accuracy strength {strength} must be finite and >= 0")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!("noise sd {noise_sd} must be finite and >= 0")));
    }
    let mut probs = vec![0.0; labels.len() * k * NUM_CLASSES];
    let mut z = [0.0; NUM_CLASSES];
    for (i, &label) in labels.labels().iter().enumerate() {
        for a in 0..k {
            let mut rng = substream(seed, Domain::Synth, &[i as u64, a as u64]);
            for (c, zc) in z.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                *zc = noise_sd * noise + if c == label { strength } else { 0.0 };
            }
            let start = (i * k + a) * NUM_CLASSES;
            softmax_into(&z, &mut probs[start..start + NUM_CLASSES])?;
        }
    }
    PredictionSet::new(model_id, labels.image_ids().to_vec(), k, probs)
}

/// `n` images named `{prefix}{index:05}` with labels drawn uniformly over the
/// seven classes. Different prefixes give independent label streams.
pub fn synth_labels(n: usize, prefix: &str, seed: u64) -> Result<LabelSet> {
    let tag = prefix
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut rng = substream(seed, Domain::SynthLabels, &[tag]);
    let ids = (0..n).map(|i| format!("{prefix}{i:05}")).collect();
    let labels = (0..n).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
    LabelSet::new(ids, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accuracy(set: &PredictionSet, labels: &LabelSet) -> f64 {
        let mut correct = 0;
        for i in 0..set.num_images() {
            for a in 0..set.k() {
                if crate::tensor::argmax(set.row(i, a)) == labels.labels()[i] {
                    correct += 1;
                }
            }
        }
        correct as f64 / (set.num_images() * set.k()) as f64
    }

    #[test]
    fn zero_strength_is_chance() {
        let labels = synth_labels(1000, "s", 1).unwrap();
        let set = synth_generate(&labels, 1, 0.0, 1.0, 2, "m").unwrap();
        // Binomial sd at p = 1/7, N = 1000 is about 0.011; 0.04 is > 3.5 sd.
        let acc = accuracy(&set, &labels);
        assert!((acc - 1.0 / 7.0).abs() <= 0.04, "accuracy {acc}");
    }

    #[test]
    fn noiseless_strong_signal_is_perfect() {
        let labels = synth_labels(200, "s", 3).unwrap();
        let set = synth_generate(&labels, 3, 10.0, 0.0, 4, "m").unwrap();
        assert_eq!(accuracy(&set, &labels), 1.0);
    }

    #[test]
    fn moderate_signal_is_between_chance_and_perfect() {
        let labels = synth_labels(1000, "s", 5).unwrap();
        let set = synth_generate(&labels, 1, 1.5, 1.0, 6, "m").unwrap();
        let acc = accuracy(&set, &labels);
        assert!(acc > 1.0 / 7.0 + 0.05 && acc < 0.95, "accuracy {acc}");
    }

    #[test]
    fn accuracy_grows_with_strength() {
        let labels = synth_labels(1000, "s", 7).unwrap();
        let accs: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&s| accuracy(&synth_generate(&labels, 2, s, 1.0, 8, "m").unwrap(), &labels))
            .collect();
        assert!(accs.windows(2).all(|w| w[1] > w[0]), "{accs:?}");
    }

    #[test]
    fn seeds_are_reproducible() {
        let labels = synth_labels(20, "s", 9).unwrap();
        let a = synth_generate(&labels, 4, 1.0, 1.0, 10, "m").unwrap();
        let b = synth_generate(&labels, 4, 1.0, 1.0, 10, "m").unwrap();
        let c = synth_generate(&labels, 4, 1.0, 1.0, 11, "m").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.probs(), c.probs());
    }

    #[test]
    fn invalid_parameters() {
        let labels = synth_labels(5, "s", 0).unwrap();
        assert!(synth_generate(&labels, 0, 1.0, 1.0, 0, "m").is_err());
        assert!(synth_generate(&labels, 1, -1.0, 1.0, 0, "m").is_err());
        assert!(synth_generate(&labels, 1, 1.0, -1.0, 0, "m").is_err());
    }
}
