//! Dense row-major arrays and the small set of classification primitives
//! (softmax, cross-entropy, argmax) shared by every other module.

use crate::error::{Error, Result};

/// Number of lesion classes scored by the pipeline.
pub const NUM_CLASSES: usize = 7;

/// Lower clamp applied to a probability before taking its logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Tolerance on `sum(p) == 1` for a [`ProbabilityVector`].
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Index of a class in `0..NUM_CLASSES`.
pub type ClassIndex = usize;

/// N-dimensional array of finite `f64` values stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!(
                "shape extents must be positive, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} elements, buffer has {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(DenseArray { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        DenseArray::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the flat buffer. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A distribution over the seven classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityVector([f64; NUM_CLASSES]);

impl ProbabilityVector {
    pub fn new(p: [f64; NUM_CLASSES]) -> Result<Self> {
        check_probability_row(&p, PROB_SUM_TOL)?;
        Ok(ProbabilityVector(p))
    }

    pub fn uniform() -> Self {
        ProbabilityVector([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: ClassIndex) -> f64 {
        self.0[class]
    }
}

impl AsRef<[f64]> for ProbabilityVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that every entry lies in `[0, 1]` and the row sums to one within `tol`.
pub fn check_probability_row(p: &[f64], tol: f64) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
        return Err(Error::validation(format!(
            "probability {v} outside [0, 1]"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::validation(format!(
            "probabilities sum to {sum}, expected 1 within {tol:e}"
        )));
    }
    Ok(())
}

/// Numerically stable softmax of seven logits.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> Result<ProbabilityVector> {
    let mut out = [0.0; NUM_CLASSES];
    softmax_into(logits, &mut out)?;
    Ok(ProbabilityVector(out))
}

/// Softmax of an arbitrary-length slice written into `out`.
///
/// The maximum logit is subtracted before exponentiation, so inputs of any
/// finite magnitude produce a row that sums to one.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) -> Result<()> {
    assert_eq!(logits.len(), out.len(), "softmax buffer length mismatch");
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

/// `-ln(p[label])` with `p[label]` clamped below at [`LOG_CLAMP`].
pub fn cross_entropy(p: &ProbabilityVector, label: ClassIndex) -> Result<f64> {
    if label >= NUM_CLASSES {
        return Err(Error::invalid(format!(
            "label {label} out of range 0..{NUM_CLASSES}"
        )));
    }
    Ok(nll(p.get(label)))
}

#[inline]
pub(crate) fn nll(p: f64) -> f64 {
    // -ln(1) is -0.0; normalize so a perfect prediction reports +0.
    -(p.max(LOG_CLAMP).ln()) + 0.0
}

/// Index of the largest value; ties resolve to the lowest index.
///
/// Returns 0 for an empty slice.
pub fn argmax(values: &[f64]) -> ClassIndex {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
