//! Sources of per-model, per-augmentation class probabilities: a trainable
//! stub classifier, a synthetic generator, and CSV ingestion of predictions
//! produced elsewhere.

mod io;
mod split;
mod stub;
mod synth;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{argmax, check_probability_row, ClassIndex, NUM_CLASSES};

pub use io::{load_labels, load_predictions, save_labels, save_predictions};
pub use split::split_90_10;
pub use stub::{
    downsample_features, lr_schedule, stub_fit, stub_predict, FitReport, StubFitConfig, StubModel,
    DEFAULT_GRID, LR_DECAY_EPOCHS, LR_DECAY_RATE,
};
pub use synth::{synth_generate, synth_labels};

/// Tolerance on row sums for probabilities ingested from files.
pub const ROW_SUM_TOL: f64 = 1e-6;

pub const DEFAULT_CLASS_NAMES: [&str; NUM_CLASSES] =
    ["MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"];

fn index_ids(ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::validation(format!("duplicate image_id {id:?}")));
        }
    }
    Ok(index)
}

fn missing_ids_error<'a>(missing: impl Iterator<Item = &'a String>, what: &str) -> Error {
    let missing: Vec<&str> = missing.map(String::as_str).collect();
    let shown = missing.iter().take(10).copied().collect::<Vec<_>>().join(", ");
    let more = if missing.len() > 10 {
        format!(" (and {} more)", missing.len() - 10)
    } else {
        String::new()
    };
    Error::validation(format!(
        "{} image_id(s) not found in {what}: {shown}{more}",
        missing.len()
    ))
}

/// Ground-truth class per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    image_ids: Vec<String>,
    labels: Vec<ClassIndex>,
    class_names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(image_ids: Vec<String>, labels: Vec<ClassIndex>) -> Result<Self> {
        let names = DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        Self::with_class_names(image_ids, labels, names)
    }

    pub fn with_class_names(
        image_ids: Vec<String>,
        labels: Vec<ClassIndex>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if image_ids.len() != labels.len() {
            return Err(Error::validation(format!(
                "{} image ids but {} labels",
                image_ids.len(),
                labels.len()
            )));
        }
        if class_names.len() != NUM_CLASSES {
            return Err(Error::validation(format!(
                "expected {NUM_CLASSES} class names, got {}",
                class_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::validation(format!(
                "label {bad} out of range 0..{NUM_CLASSES}"
            )));
        }
        let index = index_ids(&image_ids)?;
        Ok(LabelSet {
            image_ids,
            labels,
            class_names,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn labels(&self) -> &[ClassIndex] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn label_of(&self, image_id: &str) -> Option<ClassIndex> {
        self.index.get(image_id).map(|&i| self.labels[i])
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    /// Labels for `ids` in that order; errors listing every unknown id.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Vec<ClassIndex>> {
        let missing: Vec<&String> = ids.iter().filter(|id| !self.index.contains_key(*id)).collect();
        if !missing.is_empty() {
            return Err(missing_ids_error(missing.into_iter(), "label set"));
        }
        Ok(ids.iter().map(|id| self.labels[self.index[id]]).collect())
    }

    /// Rows at `positions`, in that order.
    pub fn select(&self, positions: &[usize]) -> Result<LabelSet> {
        LabelSet::with_class_names(
            positions.iter().map(|&i| self.image_ids[i].clone()).collect(),
            positions.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )
    }

    /// Concatenation of two disjoint label sets.
    pub fn concat(&self, other: &LabelSet) -> Result<LabelSet> {
        let mut ids = self.image_ids.clone();
        ids.extend_from_slice(&other.image_ids);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabelSet::with_class_names(ids, labels, self.class_names.clone())
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Parses a class given either as an index or as a (case-insensitive) name.
    pub fn parse_class(&self, token: &str) -> Option<ClassIndex> {
        parse_class_token(token, &self.class_names)
    }
}

pub(crate) fn parse_class_token(token: &str, names: &[String]) -> Option<ClassIndex> {
    let token = token.trim();
    if let Ok(i) = token.parse::<usize>() {
        return (i < NUM_CLASSES).then_some(i);
    }
    names.iter().position(|n| n.eq_ignore_ascii_case(token))
}

/// Class probabilities of one model for `k` augmented views of each of `N`
/// images, stored as `[N × k × 7]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    model_id: String,
    image_ids: Vec<String>,
    k: usize,
    probs: Vec<f64>,
}

impl PredictionSet {
    pub fn new(
        model_id: impl Into<String>,
        image_ids: Vec<String>,
        k: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("prediction set needs k >= 1"));
        }
        if image_ids.is_empty() {
            return Err(Error::validation("prediction set has no images"));
        }
        if probs.len() != image_ids.len() * k * NUM_CLASSES {
            return Err(Error::validation(format!(
                "{} images x k={k} x {NUM_CLASSES} classes needs {} values, got {}",
                image_ids.len(),
                image_ids.len() * k * NUM_CLASSES,
                probs.len()
            )));
        }
        index_ids(&image_ids)?;
        for (r, row) in probs.chunks_exact(NUM_CLASSES).enumerate() {
            check_probability_row(row, ROW_SUM_TOL).map_err(|e| {
                Error::validation(format!(
                    "image {:?} augmentation {}: {e}",
                    image_ids[r / k],
                    r % k
                ))
            })?;
        }
        Ok(PredictionSet {
            model_id: model_id.into(),
            image_ids,
            k,
            probs,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn num_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probabilities for image `i`, augmentation `a`.
    #[inline]
    pub fn row(&self, i: usize, a: usize) -> &[f64] {
        let start = (i * self.k + a) * NUM_CLASSES;
        &self.probs[start..start + NUM_CLASSES]
    }

    /// Restricts to `ids` (in that order).
    pub fn subset(&self, ids: &[String]) -> Result<PredictionSet> {
        let index = index_ids(&self.image_ids)?;
        let missing: Vec<&String> = ids.iter().filter(|id| !index.contains_key(*id)).collect();
        if !missing.is_empty() {
            return Err(missing_ids_error(
                missing.into_iter(),
                &format!("predictions of model {:?}", self.model_id),
            ));
        }
        let mut probs = Vec::with_capacity(ids.len() * self.k * NUM_CLASSES);
        for id in ids {
            let i = index[id];
            probs.extend_from_slice(&self.probs[i * self.k * NUM_CLASSES..(i + 1) * self.k * NUM_CLASSES]);
        }
        PredictionSet::new(self.model_id.clone(), ids.to_vec(), self.k, probs)
    }

    /// Argmax of the clean view (augmentation 0) of every image.
    pub fn clean_view_predictions(&self) -> Vec<ClassIndex> {
        (0..self.num_images()).map(|i| argmax(self.row(i, 0))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i}")).collect()
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(ids(3), vec![0, 6, 2]).is_ok());
        assert!(LabelSet::new(ids(3), vec![0, 7, 2]).is_err());
        assert!(LabelSet::new(vec!["a".into(), "a".into()], vec![0, 1]).is_err());
        assert!(LabelSet::new(ids(2), vec![0]).is_err());
    }

    #[test]
    fn aligned_labels_report_missing_ids() {
        let set = LabelSet::new(ids(3), vec![4, 5, 6]).unwrap();
        assert_eq!(set.aligned_to(&["img2".into(), "img0".into()]).unwrap(), vec![6, 4]);
        let err = set.aligned_to(&["img9".into(), "imgX".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("img9") && msg.contains("imgX"), "{msg}");
    }

    #[test]
    fn class_tokens_accept_names_and_indices() {
        let set = LabelSet::new(ids(1), vec![0]).unwrap();
        assert_eq!(set.parse_class("3"), Some(3));
        assert_eq!(set.parse_class("vasc"), Some(6));
        assert_eq!(set.parse_class("NV"), Some(1));
        assert_eq!(set.parse_class("7"), None);
        assert_eq!(set.parse_class("XYZ"), None);
    }

    #[test]
    fn prediction_rows_validated() {
        let mut probs = vec![1.0 / 7.0; 2 * 2 * 7];
        assert!(PredictionSet::new("m", ids(2), 2, probs.clone()).is_ok());
        probs[7] = 0.5;
        let err = PredictionSet::new("m", ids(2), 2, probs).unwrap_err();
        assert!(err.to_string().contains("augmentation 1"));
        assert!(PredictionSet::new("m", ids(2), 2, vec![1.0 / 7.0; 7]).is_err());
    }

    #[test]
    fn subset_reorders_rows() {
        let mut probs = Vec::new();
        for i in 0..3 {
            for _ in 0..2 {
                let mut row = [0.0; 7];
                row[i] = 1.0;
                probs.extend_from_slice(&row);
            }
        }
        let set = PredictionSet::new("m", ids(3), 2, probs).unwrap();
        let sub = set.subset(&["img2".into(), "img0".into()]).unwrap();
        assert_eq!(sub.clean_view_predictions(), vec![2, 0]);
        assert!(set.subset(&["nope".into()]).is_err());
    }
}
