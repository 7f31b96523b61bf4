use rand::seq::SliceRandom;

use super::LabelSet;
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::tensor::NUM_CLASSES;

/// Stratified 90:10 train/validation split.
///
/// Class `c` with `N_c` samples sends `round(0.1·N_c)` of them to
/// validation, at least one when `N_c >= 2`. Both halves keep the input order.
pub fn split_90_10(labels: &LabelSet, seed: u64) -> Result<(LabelSet, LabelSet)> {
    if labels.len() < 10 {
        return Err(Error::validation(format!(
            "too few samples to split ({} < 10)",
            labels.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in labels.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut is_val = vec![false; labels.len()];
    for (c, members) in by_class.iter_mut().enumerate() {
        let n_c = members.len();
        let mut n_val = (0.1 * n_c as f64).round() as usize;
        if n_c >= 2 {
            n_val = n_val.max(1);
        }
        let mut rng = substream(seed, Domain::Split, &[c as u64]);
        members.shuffle(&mut rng);
        for &i in &members[..n_val] {
            is_val[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| is_val[i]);
    Ok((labels.select(&train)?, labels.select(&val)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn balanced(n: usize) -> LabelSet {
        LabelSet::new((0..n).map(|i| format!("x{i}")).collect(), (0..n).map(|i| i % 7).collect())
            .unwrap()
    }

    #[test]
    fn balanced_hundred() {
        // Counts are 15,15,14,14,14,14,14 -> round(1.5)=2 twice, round(1.4)=1 five times.
        let (train, val) = split_90_10(&balanced(100), 1).unwrap();
        assert_eq!(val.len(), 9);
        assert_eq!(train.len(), 91);
        assert!(val.class_counts().iter().all(|&c| c >= 1));
    }

    #[test]
    fn two_member_class_contributes_one() {
        let mut labels: Vec<usize> = vec![0; 30];
        labels[3] = 5;
        labels[17] = 5;
        let set = LabelSet::new((0..30).map(|i| format!("x{i}")).collect(), labels).unwrap();
        let (_, val) = split_90_10(&set, 2).unwrap();
        assert_eq!(val.class_counts()[5], 1);
        // 28 samples of class 0 -> round(2.8) = 3.
        assert_eq!(val.class_counts()[0], 3);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let set = balanced(57);
        let (train, val) = split_90_10(&set, 3).unwrap();
        let t: HashSet<_> = train.image_ids().iter().collect();
        let v: HashSet<_> = val.image_ids().iter().collect();
        assert!(t.is_disjoint(&v));
        assert_eq!(t.len() + v.len(), set.len());
        for id in set.image_ids() {
            assert!(t.contains(id) || v.contains(id));
        }
        let (train2, val2) = split_90_10(&set, 3).unwrap();
        assert_eq!((train, val), (train2, val2));
    }

    #[test]
    fn too_few_samples() {
        let err = split_90_10(&balanced(9), 0).unwrap_err();
        assert!(err.to_string().contains("too few samples to split"));
    }
}
