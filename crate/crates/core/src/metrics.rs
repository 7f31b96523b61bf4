//! Confusion matrix, per-class recall and balanced multiclass accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::basemodels::LabelSet;
use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::tensor::{ClassIndex, NUM_CLASSES};

/// Treatment of classes with no true samples in [`balanced_accuracy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroSupport {
    /// Leave the class out of the mean.
    #[default]
    Exclude,
    /// Count the class with recall 0.
    Zero,
}

impl ZeroSupport {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroSupport::Exclude => "exclude",
            ZeroSupport::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "exclude" => Ok(ZeroSupport::Exclude),
            "zero" => Ok(ZeroSupport::Zero),
            other => Err(Error::invalid(format!(
                "unknown zero-support policy {other:?} (expected exclude or zero)"
            ))),
        }
    }
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassIndex, ClassIndex)>) -> Result<Self> {
        let mut cm = ConfusionMatrix::default();
        for (t, p) in pairs {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::validation(format!("class pair ({t}, {p}) out of range")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: ClassIndex) -> u64 {
        self.counts[class].iter().sum()
    }

    /// `None` when the class has no true samples.
    pub fn recall(&self, class: ClassIndex) -> Option<f64> {
        let s = self.support(class);
        (s > 0).then(|| self.counts[class][class] as f64 / s as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        let correct: u64 = (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum();
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

/// Builds the confusion matrix of `predicted[i]` for `image_ids[i]` against
/// the ground truth.
pub fn confusion(
    image_ids: &[String],
    predicted: &[ClassIndex],
    truth: &LabelSet,
) -> Result<ConfusionMatrix> {
    if image_ids.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} image ids but {} predictions",
            image_ids.len(),
            predicted.len()
        )));
    }
    if image_ids.is_empty() {
        return Err(Error::validation("no predictions to score"));
    }
    let labels = truth.aligned_to(image_ids)?;
    ConfusionMatrix::from_pairs(labels.into_iter().zip(predicted.iter().copied()))
}

/// Mean per-class recall.
pub fn balanced_accuracy(cm: &ConfusionMatrix, policy: ZeroSupport) -> Result<f64> {
    let mut sum = 0.0;
    let mut classes = 0usize;
    for c in 0..NUM_CLASSES {
        match (cm.recall(c), policy) {
            (Some(r), _) => {
                sum += r;
                classes += 1;
            }
            (None, ZeroSupport::Zero) => classes += 1,
            (None, ZeroSupport::Exclude) => {}
        }
    }
    if cm.total() == 0 {
        return Err(Error::validation("confusion matrix is empty"));
    }
    Ok(sum / classes as f64)
}

/// Scoring summary with stable key-value and JSON renderings.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub recall: [Option<f64>; NUM_CLASSES],
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub samples: u64,
    pub zero_support: ZeroSupport,
}

pub fn report(cm: &ConfusionMatrix, class_names: &[String], policy: ZeroSupport) -> Result<Report> {
    if class_names.len() != NUM_CLASSES {
        return Err(Error::invalid(format!("expected {NUM_CLASSES} class names")));
    }
    Ok(Report {
        class_names: class_names.to_vec(),
        confusion: cm.clone(),
        recall: std::array::from_fn(|c| cm.recall(c)),
        balanced_accuracy: balanced_accuracy(cm, policy)?,
        accuracy: cm.accuracy().unwrap_or(0.0),
        samples: cm.total(),
        zero_support: policy,
    })
}

const NA: &str = "n/a";

impl Report {
    /// `key = value` lines; floats in shortest round-trip form, zero-support
    /// recall as `n/a`.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "balanced_accuracy = {}", self.balanced_accuracy);
        let _ = writeln!(s, "accuracy = {}", self.accuracy);
        let _ = writeln!(s, "zero_support = {}", self.zero_support.as_str());
        for (c, name) in self.class_names.iter().enumerate() {
            let _ = writeln!(s, "class.{name}.support = {}", self.confusion.support(c));
            match self.recall[c] {
                Some(r) => {
                    let _ = writeln!(s, "class.{name}.recall = {r}");
                }
                None => {
                    let _ = writeln!(s, "class.{name}.recall = {NA}");
                }
            }
        }
        for (c, name) in self.class_names.iter().enumerate() {
            let row: Vec<String> = self.confusion.counts[c].iter().map(u64::to_string).collect();
            let _ = writeln!(s, "confusion.{name} = {}", row.join(","));
        }
        s
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::validation(format!("report missing key {k:?}")))
        };
        let float = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::validation(format!("bad value for {k}")))
        };
        // Class order follows the confusion rows as written.
        let class_names: Vec<String> = text
            .lines()
            .filter_map(|l| l.trim().strip_prefix("confusion."))
            .filter_map(|l| l.split('=').next())
            .map(|n| n.trim().to_string())
            .collect();
        if class_names.len() != NUM_CLASSES {
            return Err(Error::validation("report must list 7 confusion rows"));
        }
        let mut confusion = ConfusionMatrix::default();
        let mut recall = [None; NUM_CLASSES];
        for (c, name) in class_names.iter().enumerate() {
            let row: Vec<u64> = get(&format!("confusion.{name}"))?
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| Error::validation("bad confusion count")))
                .collect::<Result<_>>()?;
            if row.len() != NUM_CLASSES {
                return Err(Error::validation("confusion row must have 7 counts"));
            }
            confusion.counts[c].copy_from_slice(&row);
            let r = get(&format!("class.{name}.recall"))?;
            recall[c] = if r == NA {
                None
            } else {
                Some(r.parse().map_err(|_| Error::validation("bad recall"))?)
            };
        }
        Ok(Report {
            class_names,
            confusion,
            recall,
            balanced_accuracy: float("balanced_accuracy")?,
            accuracy: float("accuracy")?,
            samples: get("samples")?.parse().map_err(|_| Error::validation("bad samples"))?,
            zero_support: ZeroSupport::parse(get("zero_support")?)?,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut classes = BTreeMap::new();
        for (c, name) in self.class_names.iter().enumerate() {
            let recall = match self.recall[c] {
                Some(r) => json!(r),
                None => json!(NA),
            };
            classes.insert(
                name.clone(),
                json!({
                    "index": c,
                    "support": self.confusion.support(c),
                    "recall": recall,
                }),
            );
        }
        json!({
            "samples": self.samples,
            "balanced_accuracy": self.balanced_accuracy,
            "accuracy": self.accuracy,
            "zero_support": self.zero_support.as_str(),
            "class_order": self.class_names,
            "classes": classes,
            "confusion": self.confusion.counts.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basemodels::DEFAULT_CLASS_NAMES;

    fn names() -> Vec<String> {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn diag(n: u64) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for c in 0..NUM_CLASSES {
            cm.counts[c][c] = n;
        }
        cm
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let ids: Vec<String> = (0..14).map(|i| format!("x{i}")).collect();
        let labels: Vec<usize> = (0..14).map(|i| i % 7).collect();
        let truth = LabelSet::new(ids.clone(), labels.clone()).unwrap();
        let cm = confusion(&ids, &labels, &truth).unwrap();
        assert_eq!(cm, diag(2));
        assert_eq!(balanced_accuracy(&cm, ZeroSupport::Exclude).unwrap(), 1.0);
    }

    #[test]
    fn misclassified_class_counts() {
        let ids: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
        let truth = LabelSet::new(ids.clone(), vec![0, 0, 0]).unwrap();
        let cm = confusion(&ids, &[1, 1, 1], &truth).unwrap();
        assert_eq!(cm.counts[0][1], 3);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn empty_and_unknown_inputs_rejected() {
        let truth = LabelSet::new(vec!["a".into()], vec![0]).unwrap();
        assert!(confusion(&[], &[], &truth).is_err());
        let err = confusion(&["zz".into()], &[0], &truth).unwrap_err();
        assert!(err.to_string().contains("zz"));
        assert!(balanced_accuracy(&ConfusionMatrix::default(), ZeroSupport::Exclude).is_err());
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let mut cm = ConfusionMatrix::default();
        for c in 0..NUM_CLASSES {
            cm.counts[c][0] = 10;
        }
        let ba = balanced_accuracy(&cm, ZeroSupport::Exclude).unwrap();
        assert!((ba - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn two_supported_classes() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 8;
        cm.counts[0][2] = 2;
        cm.counts[3][3] = 3;
        cm.counts[3][1] = 2;
        // Recalls 0.8 and 0.6.
        assert!((balanced_accuracy(&cm, ZeroSupport::Exclude).unwrap() - 0.7).abs() < 1e-15);
        assert!((balanced_accuracy(&cm, ZeroSupport::Zero).unwrap() - 1.4 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn report_round_trip_and_na() {
        let mut cm = diag(3);
        cm.counts[4] = [0; 7];
        cm.counts[2][5] = 1;
        let r = report(&cm, &names(), ZeroSupport::Exclude).unwrap();
        let text = r.to_kv_text();
        assert!(text.contains("class.BKL.recall = n/a"));
        assert!(text.contains("class.MEL.recall = 1\n"));
        assert_eq!(Report::from_kv_text(&text).unwrap(), r);

        let j = r.to_json();
        assert_eq!(j["classes"]["BKL"]["recall"], "n/a");
        assert_eq!(j["balanced_accuracy"].as_f64().unwrap(), r.balanced_accuracy);
    }
}
