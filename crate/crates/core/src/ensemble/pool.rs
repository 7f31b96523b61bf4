use std::fmt;
use std::str::FromStr;

use super::SlotProbs;
use crate::error::{Error, Result};
use crate::tensor::{argmax, ClassIndex, DenseArray, NUM_CLASSES};

/// Score at or above which a class is reported positive in the hard binary output.
pub const BINARY_THRESHOLD: f64 = 0.5;

/// How the `n` slot predictions of an image are reduced to one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolStrategy {
    /// Per-class mean over slots.
    #[default]
    Avg,
    /// Per-class maximum over slots, then row renormalization.
    Max,
    /// Per class, the slot value farthest from the uniform prior 1/7
    /// (ties to the lowest slot), then row renormalization.
    ///
    /// This is one concrete reading of "extreme-probability pooling"; other
    /// definitions exist.
    Extreme,
}

impl PoolStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolStrategy::Avg => "avg",
            PoolStrategy::Max => "max",
            PoolStrategy::Extreme => "extreme",
        }
    }
}

impl fmt::Display for PoolStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "avg" => Ok(PoolStrategy::Avg),
            "max" => Ok(PoolStrategy::Max),
            "extreme" => Ok(PoolStrategy::Extreme),
            other => Err(Error::invalid(format!(
                "unknown pooling strategy {other:?} (expected avg, max or extreme)"
            ))),
        }
    }
}

/// One class-probability row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledOutput {
    pub image_ids: Vec<String>,
    /// `[N × 7]`.
    pub probs: DenseArray,
    pub strategy: PoolStrategy,
}

impl PooledOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs.data()[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }

    pub fn num_images(&self) -> usize {
        self.image_ids.len()
    }
}

fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Reduces slot predictions to one row per image.
///
/// Average pooling sums each class's slot values in ascending order, so the
/// result is bitwise independent of slot order.
pub fn pool(slots: &SlotProbs, strategy: PoolStrategy) -> Result<PooledOutput> {
    let n = slots.slots();
    if n == 0 {
        return Err(Error::invalid("cannot pool zero slots"));
    }
    let prior = 1.0 / NUM_CLASSES as f64;
    let mut out = Vec::with_capacity(slots.num_images() * NUM_CLASSES);
    let mut column = vec![0.0; n];
    for i in 0..slots.num_images() {
        let mut row = [0.0; NUM_CLASSES];
        for (c, r) in row.iter_mut().enumerate() {
            for (j, v) in column.iter_mut().enumerate() {
                *v = slots.row(i, j)[c];
            }
            *r = match strategy {
                PoolStrategy::Avg => {
                    column.sort_by(f64::total_cmp);
                    column.iter().sum::<f64>() / n as f64
                }
                PoolStrategy::Max => column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                PoolStrategy::Extreme => {
                    let mut best = 0;
                    for j in 1..n {
                        if (column[j] - prior).abs() > (column[best] - prior).abs() {
                            best = j;
                        }
                    }
                    column[best]
                }
            };
        }
        if strategy != PoolStrategy::Avg {
            let sum: f64 = row.iter().sum();
            if sum.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::numeric(format!(
                    "pooled row of image {:?} sums to {sum}",
                    slots.image_ids()[i]
                )));
            }
            renormalize(&mut row);
        }
        out.extend_from_slice(&row);
    }
    Ok(PooledOutput {
        image_ids: slots.image_ids().to_vec(),
        probs: DenseArray::new(vec![slots.num_images(), NUM_CLASSES], out)?,
        strategy,
    })
}

/// Per-image class decision plus the seven per-class binary scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub image_ids: Vec<String>,
    pub classes: Vec<ClassIndex>,
    /// `[N × 7]` pooled probabilities used as binary scores.
    pub scores: Vec<[f64; NUM_CLASSES]>,
}

impl Predictions {
    /// Hard binary decision per class: `score >= 0.5`.
    pub fn binary(&self, i: usize) -> [bool; NUM_CLASSES] {
        self.scores[i].map(|s| s >= BINARY_THRESHOLD)
    }
}

pub fn predict(pooled: &PooledOutput) -> Predictions {
    let mut classes = Vec::with_capacity(pooled.num_images());
    let mut scores = Vec::with_capacity(pooled.num_images());
    for i in 0..pooled.num_images() {
        let row = pooled.row(i);
        classes.push(argmax(row));
        let mut s = [0.0; NUM_CLASSES];
        s.copy_from_slice(row);
        scores.push(s);
    }
    Predictions {
        image_ids: pooled.image_ids.clone(),
        classes,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn slots_from(rows: &[Vec<[f64; 7]>]) -> SlotProbs {
        let n = rows[0].len();
        let data: Vec<f64> = rows.iter().flatten().flatten().copied().collect();
        SlotProbs::new(
            (0..rows.len()).map(|i| format!("i{i}")).collect(),
            DenseArray::new(vec![rows.len(), n, 7], data).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_slots_pool_to_the_slice() {
        let r = [0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1];
        let s = slots_from(&[vec![r; 5]]);
        for strat in [PoolStrategy::Avg, PoolStrategy::Max, PoolStrategy::Extreme] {
            let p = pool(&s, strat).unwrap();
            for c in 0..7 {
                assert_abs_diff_eq!(p.row(0)[c], r[c], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn average_of_two_slots() {
        let a = [0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1];
        let b = [0.6, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05];
        let p = pool(&slots_from(&[vec![a, b]]), PoolStrategy::Avg).unwrap();
        assert_abs_diff_eq!(p.row(0)[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn extreme_pooling_hand_case() {
        let a = [0.10, 0.30, 0.20, 0.10, 0.10, 0.10, 0.10];
        let b = [0.90, 0.02, 0.02, 0.02, 0.02, 0.01, 0.01];
        let p = pool(&slots_from(&[vec![a, b]]), PoolStrategy::Extreme).unwrap();
        // Farthest from 1/7 per class: 0.90, 0.30, 0.02, 0.02, 0.02, 0.01, 0.01.
        let picked = [0.90, 0.30, 0.02, 0.02, 0.02, 0.01, 0.01];
        let sum: f64 = picked.iter().sum();
        assert_abs_diff_eq!(sum, 1.28, epsilon = 1e-12);
        for c in 0..7 {
            assert_abs_diff_eq!(p.row(0)[c], picked[c] / 1.28, epsilon = 1e-12);
        }
    }

    #[test]
    fn max_pooling_renormalizes() {
        let a = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        let p = pool(&slots_from(&[vec![a, b]]), PoolStrategy::Max).unwrap();
        for (c, v) in [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0].iter().enumerate() {
            assert_abs_diff_eq!(p.row(0)[c], *v, epsilon = 1e-15);
        }
    }

    #[test]
    fn predictions_and_binary_scores() {
        let rows = [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [1.0 / 7.0; 7],
            [0.05, 0.05, 0.6, 0.1, 0.1, 0.05, 0.05],
        ];
        let s = slots_from(&rows.iter().map(|r| vec![*r]).collect::<Vec<_>>());
        let pred = predict(&pool(&s, PoolStrategy::Avg).unwrap());
        assert_eq!(pred.classes, vec![0, 0, 2]);
        assert_eq!(pred.binary(0), [true, false, false, false, false, false, false]);
        assert_eq!(pred.binary(1), [false; 7]);
        assert!(pred.binary(2)[2]);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("extreme".parse::<PoolStrategy>().unwrap(), PoolStrategy::Extreme);
        assert!("median".parse::<PoolStrategy>().is_err());
    }
}
