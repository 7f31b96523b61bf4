//! CSV schemas for prediction and label files.
//!
//! Predictions: `image_id,model_id,aug_index,p0,...,p6`, one model per file,
//! rows of one image contiguous and ordered by `aug_index` from 0.
//! Labels: `image_id,label` where `label` is a class index or class name.

use std::collections::HashSet;
use std::path::Path;

use super::{parse_class_token, LabelSet, PredictionSet, ROW_SUM_TOL, DEFAULT_CLASS_NAMES};
use crate::csvutil::{column, csv_error, open_reader, open_writer, record_line};
use crate::error::{Error, Result};
use crate::tensor::NUM_CLASSES;

const PROB_COLUMNS: [&str; NUM_CLASSES] = ["p0", "p1", "p2", "p3", "p4", "p5", "p6"];

/// Reads one model's predictions.
///
/// Rows whose probabilities do not sum to 1 within 1e-6 are rejected unless
/// `renormalize` is set, in which case they are divided by their sum.
pub fn load_predictions(path: &Path, renormalize: bool) -> Result<PredictionSet> {
    let mut reader = open_reader(path)?;
    let headers = crate::csvutil::headers(&mut reader, path)?;
    let id_col = column(&headers, "image_id", path)?;
    let model_col = column(&headers, "model_id", path)?;
    let aug_col = column(&headers, "aug_index", path)?;
    let prob_cols = PROB_COLUMNS
        .iter()
        .map(|c| column(&headers, c, path))
        .collect::<Result<Vec<_>>>()?;

    let mut model_id: Option<String> = None;
    let mut image_ids: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut k: Option<usize> = None;
    let mut rows_in_group = 0usize;
    let mut group_start_line = 0u64;

    let close_group = |rows: usize, k: &mut Option<usize>, id: &str, line: u64| -> Result<()> {
        match *k {
            None => *k = Some(rows),
            Some(expected) if expected != rows => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("image {id:?} has {rows} augmentations, expected k={expected}"),
                ))
            }
            _ => {}
        }
        Ok(())
    };

    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let field = |i: usize| rec.get(i).unwrap_or("");

        let mid = field(model_col);
        match &model_id {
            None => model_id = Some(mid.to_string()),
            Some(m) if m != mid => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("model_id {mid:?} differs from {m:?}; one model per file"),
                ))
            }
            _ => {}
        }

        let id = field(id_col);
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty image_id"));
        }
        if image_ids.last().map(String::as_str) != Some(id) {
            if let Some(prev) = image_ids.last() {
                close_group(rows_in_group, &mut k, prev, group_start_line)?;
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("rows for image {id:?} are not contiguous"),
                ));
            }
            image_ids.push(id.to_string());
            rows_in_group = 0;
            group_start_line = line;
        }

        let aug: usize = field(aug_col).parse().map_err(|_| {
            Error::parse(path, line, format!("bad aug_index {:?}", field(aug_col)))
        })?;
        if aug != rows_in_group {
            return Err(Error::parse(
                path,
                line,
                format!("aug_index {aug} out of order for image {id:?}, expected {rows_in_group}"),
            ));
        }
        if let Some(expected) = k {
            if aug >= expected {
                return Err(Error::parse(
                    path,
                    line,
                    format!("aug_index {aug} exceeds k={expected} for image {id:?}"),
                ));
            }
        }

        let mut row = [0.0f64; NUM_CLASSES];
        for (v, &col) in row.iter_mut().zip(&prob_cols) {
            let tok = field(col);
            *v = tok
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad probability {tok:?}")))?;
            if !v.is_finite() || *v < 0.0 || (*v > 1.0 && !renormalize) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("probability {tok} outside [0, 1]"),
                ));
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            if !renormalize || sum <= 0.0 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("probabilities sum to {sum}, expected 1 within {ROW_SUM_TOL:e}"),
                ));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        probs.extend_from_slice(&row);
        rows_in_group += 1;
    }

    let Some(last) = image_ids.last() else {
        return Err(Error::parse(path, 1, "prediction file has no rows"));
    };
    close_group(rows_in_group, &mut k, last, group_start_line)?;
    let k = k.unwrap_or(rows_in_group);
    PredictionSet::new(model_id.unwrap_or_default(), image_ids, k, probs)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

pub fn save_predictions(set: &PredictionSet, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["image_id", "model_id", "aug_index"];
    header.extend_from_slice(&PROB_COLUMNS);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, id) in set.image_ids().iter().enumerate() {
        for a in 0..set.k() {
            let mut rec = vec![id.clone(), set.model_id().to_string(), a.to_string()];
            rec.extend(set.row(i, a).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    let mut reader = open_reader(path)?;
    let headers = crate::csvutil::headers(&mut reader, path)?;
    let id_col = column(&headers, "image_id", path)?;
    let label_col = column(&headers, "label", path)?;
    let names: Vec<String> = DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = rec.get(id_col).unwrap_or("");
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty image_id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, line, format!("duplicate image_id {id:?}")));
        }
        let tok = rec.get(label_col).unwrap_or("");
        let label = parse_class_token(tok, &names)
            .ok_or_else(|| Error::parse(path, line, format!("unknown class {tok:?}")))?;
        ids.push(id.to_string());
        labels.push(label);
    }
    if ids.is_empty() {
        return Err(Error::parse(path, 1, "label file has no rows"));
    }
    LabelSet::new(ids, labels)
}

pub fn save_labels(labels: &LabelSet, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["image_id", "label"]).map_err(|e| csv_error(path, e))?;
    for (id, l) in labels.image_ids().iter().zip(labels.labels()) {
        w.write_record([id.as_str(), &l.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
