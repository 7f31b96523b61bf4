//! File forms of bags, fused slot predictions and pooled outputs.
//!
//! CSV files carry every probability in shortest round-trip decimal form, so
//! writing and re-reading is value-identical. The DAT1 bag export stores
//! 32-bit floats and is lossy.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BagTensor, PoolStrategy, PooledOutput, SlotProbs};
use crate::config::parse_key_values;
use crate::csvutil::{column, csv_error, open_reader, open_writer, parse_field, record_line};
use crate::error::{Error, Result};
use crate::imageio::{read_dat1, write_dat1};
use crate::tensor::{argmax, DenseArray, NUM_CLASSES};

const PROB_COLUMNS: [&str; NUM_CLASSES] = ["p0", "p1", "p2", "p3", "p4", "p5", "p6"];
const BAG_MANIFEST_FORMAT: &str = "dabea-bag/1";

fn read_probs(rec: &csv::StringRecord, cols: &[usize], path: &Path) -> Result<[f64; NUM_CLASSES]> {
    let mut row = [0.0; NUM_CLASSES];
    for (v, &c) in row.iter_mut().zip(cols) {
        *v = parse_field(rec, c, "probability", path)?;
    }
    Ok(row)
}

fn prob_columns(headers: &csv::StringRecord, path: &Path) -> Result<Vec<usize>> {
    PROB_COLUMNS.iter().map(|c| column(headers, c, path)).collect()
}

/// Writes a bag as `image_id,slot,channel,model_id,aug_index,p0..p6`.
pub fn save_bag(bag: &BagTensor, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["image_id", "slot", "channel", "model_id", "aug_index"];
    header.extend_from_slice(&PROB_COLUMNS);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, id) in bag.image_ids().iter().enumerate() {
        for j in 0..bag.slots() {
            for (m, model) in bag.source_model_ids().iter().enumerate() {
                let mut rec = vec![
                    id.clone(),
                    j.to_string(),
                    m.to_string(),
                    model.clone(),
                    bag.aug_index(i, j, m).to_string(),
                ];
                rec.extend((0..NUM_CLASSES).map(|c| bag.value(i, c, j, m).to_string()));
                w.write_record(&rec).map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_bag(path: &Path) -> Result<BagTensor> {
    struct Row {
        image: usize,
        slot: usize,
        channel: usize,
        aug: usize,
        probs: [f64; NUM_CLASSES],
        line: u64,
    }
    let mut reader = open_reader(path)?;
    let headers = crate::csvutil::headers(&mut reader, path)?;
    let id_col = column(&headers, "image_id", path)?;
    let slot_col = column(&headers, "slot", path)?;
    let ch_col = column(&headers, "channel", path)?;
    let model_col = column(&headers, "model_id", path)?;
    let aug_col = column(&headers, "aug_index", path)?;
    let pcols = prob_columns(&headers, path)?;

    let mut ids: Vec<String> = Vec::new();
    let mut id_pos: HashMap<String, usize> = HashMap::new();
    let mut models: Vec<Option<String>> = Vec::new();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = rec.get(id_col).unwrap_or("").to_string();
        let image = *id_pos.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        let channel: usize = parse_field(&rec, ch_col, "channel", path)?;
        if models.len() <= channel {
            models.resize(channel + 1, None);
        }
        let model = rec.get(model_col).unwrap_or("");
        match &models[channel] {
            None => models[channel] = Some(model.to_string()),
            Some(prev) if prev != model => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("channel {channel} has model ids {prev:?} and {model:?}"),
                ))
            }
            _ => {}
        }
        rows.push(Row {
            image,
            slot: parse_field(&rec, slot_col, "slot", path)?,
            channel,
            aug: parse_field(&rec, aug_col, "aug_index", path)?,
            probs: read_probs(&rec, &pcols, path)?,
            line,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "bag file has no rows"));
    }
    let m = models.len();
    let model_ids: Vec<String> = models
        .into_iter()
        .enumerate()
        .map(|(c, id)| id.ok_or_else(|| Error::validation(format!("{}: channel {c} missing", path.display()))))
        .collect::<Result<_>>()?;
    let n = rows.iter().map(|r| r.slot).max().unwrap_or(0) + 1;
    let mut values = DenseArray::zeros(vec![ids.len(), NUM_CLASSES, n, m])?;
    let mut augs = vec![usize::MAX; ids.len() * n * m];
    for r in &rows {
        let cell = (r.image * n + r.slot) * m + r.channel;
        if augs[cell] != usize::MAX {
            return Err(Error::parse(path, r.line, "duplicate (image, slot, channel) row"));
        }
        augs[cell] = r.aug;
        for (c, &p) in r.probs.iter().enumerate() {
            values.set(&[r.image, c, r.slot, r.channel], p);
        }
    }
    if augs.contains(&usize::MAX) {
        return Err(Error::validation(format!(
            "{}: bag is incomplete, expected {} rows, found {}",
            path.display(),
            ids.len() * n * m,
            rows.len()
        )));
    }
    BagTensor::new(ids, model_ids, n, values, augs)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

/// Writes the bag values as DAT1 with dims `[N, 7, n·M]` plus a key-value
/// manifest naming images, models, `n`, `M` and the sampled augmentations.
pub fn export_bag_dat1(bag: &BagTensor, data_path: &Path, manifest_path: &Path) -> Result<()> {
    if bag
        .image_ids()
        .iter()
        .chain(bag.source_model_ids())
        .any(|s| s.contains(',') || s.contains('\n'))
    {
        return Err(Error::invalid("ids containing commas cannot be written to a bag manifest"));
    }
    let (n, m) = (bag.slots(), bag.channels());
    write_dat1(data_path, [bag.num_images(), NUM_CLASSES, n * m], bag.values().data())?;
    let augs: Vec<String> = (0..bag.num_images())
        .flat_map(|i| (0..n).flat_map(move |j| (0..m).map(move |c| (i, j, c))))
        .map(|(i, j, c)| bag.aug_index(i, j, c).to_string())
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "format = {BAG_MANIFEST_FORMAT}");
    let _ = writeln!(s, "images = {}", bag.num_images());
    let _ = writeln!(s, "classes = {NUM_CLASSES}");
    let _ = writeln!(s, "slots = {n}");
    let _ = writeln!(s, "channels = {m}");
    let _ = writeln!(s, "source_model_ids = {}", bag.source_model_ids().join(","));
    let _ = writeln!(s, "image_ids = {}", bag.image_ids().join(","));
    let _ = writeln!(s, "aug_indices = {}", augs.join(","));
    fs::write(manifest_path, s).map_err(|e| Error::io(manifest_path, e))
}

pub fn import_bag_dat1(data_path: &Path, manifest_path: &Path) -> Result<BagTensor> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let kv = parse_key_values(&text)?;
    let get = |k: &str| {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::validation(format!("bag manifest missing key {k:?}")))
    };
    if get("format")? != BAG_MANIFEST_FORMAT {
        return Err(Error::validation("unsupported bag manifest format"));
    }
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::validation(format!("bad {k} in bag manifest")))
    };
    let (n_images, n, m) = (num("images")?, num("slots")?, num("channels")?);
    let list = |k: &str| -> Result<Vec<String>> {
        Ok(get(k)?.split(',').map(|s| s.trim().to_string()).collect())
    };
    let augs: Vec<usize> = list("aug_indices")?
        .iter()
        .map(|s| s.parse().map_err(|_| Error::validation("bad aug index in manifest")))
        .collect::<Result<_>>()?;
    let arr = read_dat1(data_path)?;
    if arr.shape() != [n_images, NUM_CLASSES, n * m] {
        return Err(Error::validation(format!(
            "DAT1 shape {:?} does not match manifest [{n_images}, {NUM_CLASSES}, {}]",
            arr.shape(),
            n * m
        )));
    }
    let values = DenseArray::new(vec![n_images, NUM_CLASSES, n, m], arr.into_data())?;
    BagTensor::new(list("image_ids")?, list("source_model_ids")?, n, values, augs)
}

/// Writes fused predictions as `image_id,slot,p0..p6`.
pub fn save_slot_probs(slots: &SlotProbs, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["image_id", "slot"];
    header.extend_from_slice(&PROB_COLUMNS);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, id) in slots.image_ids().iter().enumerate() {
        for j in 0..slots.slots() {
            let mut rec = vec![id.clone(), j.to_string()];
            rec.extend(slots.row(i, j).iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_slot_probs(path: &Path) -> Result<SlotProbs> {
    let mut reader = open_reader(path)?;
    let headers = crate::csvutil::headers(&mut reader, path)?;
    let id_col = column(&headers, "image_id", path)?;
    let slot_col = column(&headers, "slot", path)?;
    let pcols = prob_columns(&headers, path)?;
    let mut ids: Vec<String> = Vec::new();
    let mut data = Vec::new();
    let mut n: Option<usize> = None;
    let mut expected_slot = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let id = rec.get(id_col).unwrap_or("");
        let slot: usize = parse_field(&rec, slot_col, "slot", path)?;
        if ids.last().map(String::as_str) != Some(id) {
            if !ids.is_empty() {
                match n {
                    None => n = Some(expected_slot),
                    Some(k) if k != expected_slot => {
                        return Err(Error::parse(path, line, format!("previous image has {expected_slot} slots, expected {k}")))
                    }
                    _ => {}
                }
            }
            if ids.iter().any(|x| x == id) {
                return Err(Error::parse(path, line, format!("rows for image {id:?} are not contiguous")));
            }
            ids.push(id.to_string());
            expected_slot = 0;
        }
        if slot != expected_slot {
            return Err(Error::parse(path, line, format!("slot {slot} out of order, expected {expected_slot}")));
        }
        data.extend_from_slice(&read_probs(&rec, &pcols, path)?);
        expected_slot += 1;
    }
    if ids.is_empty() {
        return Err(Error::parse(path, 1, "slot prediction file has no rows"));
    }
    let n = match n {
        Some(k) if k != expected_slot => {
            return Err(Error::validation(format!(
                "{}: last image has {expected_slot} slots, expected {k}",
                path.display()
            )))
        }
        Some(k) => k,
        None => expected_slot,
    };
    let len = ids.len();
    SlotProbs::new(ids, DenseArray::new(vec![len, n, NUM_CLASSES], data)?)
}

/// Writes pooled predictions as `image_id,pred_class,pool,p0..p6`.
pub fn save_pooled(pooled: &PooledOutput, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["image_id", "pred_class", "pool"];
    header.extend_from_slice(&PROB_COLUMNS);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, id) in pooled.image_ids.iter().enumerate() {
        let row = pooled.row(i);
        let mut rec = vec![id.clone(), argmax(row).to_string(), pooled.strategy.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pooled(path: &Path) -> Result<PooledOutput> {
    let mut reader = open_reader(path)?;
    let headers = crate::csvutil::headers(&mut reader, path)?;
    let id_col = column(&headers, "image_id", path)?;
    let pool_col = column(&headers, "pool", path)?;
    let pcols = prob_columns(&headers, path)?;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut strategy = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let s: PoolStrategy = rec
            .get(pool_col)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::parse(path, record_line(&rec), format!("{e}")))?;
        if *strategy.get_or_insert(s) != s {
            return Err(Error::parse(path, record_line(&rec), "mixed pooling strategies"));
        }
        ids.push(rec.get(id_col).unwrap_or("").to_string());
        data.extend_from_slice(&read_probs(&rec, &pcols, path)?);
    }
    let Some(strategy) = strategy else {
        return Err(Error::parse(path, 1, "pooled prediction file has no rows"));
    };
    let len = ids.len();
    Ok(PooledOutput {
        image_ids: ids,
        probs: DenseArray::new(vec![len, NUM_CLASSES], data)?,
        strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basemodels::{synth_generate, synth_labels};
    use crate::ensemble::{bag, fusion_forward, pool, FusionWeights};

    fn sample_bag() -> BagTensor {
        let labels = synth_labels(4, "io", 1).unwrap();
        let sets: Vec<_> = (0..2)
            .map(|m| synth_generate(&labels, 5, 1.0, 1.0, m, &format!("model{m}")).unwrap())
            .collect();
        bag(&sets, 6, 3).unwrap()
    }

    #[test]
    fn bag_csv_round_trip_is_exact() {
        let b = sample_bag();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bag.csv");
        save_bag(&b, &p).unwrap();
        assert_eq!(load_bag(&p).unwrap(), b);
    }

    #[test]
    fn bag_dat1_round_trip_is_f32_close() {
        let b = sample_bag();
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = (dir.path().join("bag.dat"), dir.path().join("bag.manifest"));
        export_bag_dat1(&b, &d, &m).unwrap();
        let back = import_bag_dat1(&d, &m).unwrap();
        assert_eq!(back.image_ids(), b.image_ids());
        assert_eq!(back.values().shape(), b.values().shape());
        for (x, y) in back.values().data().iter().zip(b.values().data()) {
            assert!((x - y).abs() < 1e-7);
        }
        assert_eq!(back.aug_index(3, 5, 1), b.aug_index(3, 5, 1));
    }

    #[test]
    fn slot_and_pooled_round_trips() {
        let b = sample_bag();
        let fused = fusion_forward(&b, &FusionWeights::shared(vec![0.9, 0.4], 0.0).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("slots.csv");
        save_slot_probs(&fused, &p).unwrap();
        assert_eq!(load_slot_probs(&p).unwrap(), fused);

        let pooled = pool(&fused, PoolStrategy::Extreme).unwrap();
        let q = dir.path().join("pooled.csv");
        save_pooled(&pooled, &q).unwrap();
        assert_eq!(load_pooled(&q).unwrap(), pooled);
    }

    #[test]
    fn incomplete_bag_rejected() {
        let b = sample_bag();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bag.csv");
        save_bag(&b, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let truncated: Vec<&str> = text.lines().take(text.lines().count() - 1).collect();
        fs::write(&p, truncated.join("\n")).unwrap();
        assert!(load_bag(&p).unwrap_err().to_string().contains("incomplete"));
    }
}
