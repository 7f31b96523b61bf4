//! C ABI over the `dabea` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`, `*_load`
//! or a computation, and released with the matching `*_free`. Every fallible
//! function returns a [`DabeaStatus`]; on failure [`dabea_last_error`] gives a
//! message for the calling thread. Pointers passed in are borrowed for the
//! duration of the call only.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dabea::basemodels::{
    load_labels, load_predictions, lr_schedule, save_labels, save_predictions, synth_generate,
    LabelSet, PredictionSet,
};
use dabea::config::PipelineConfig;
use dabea::ensemble::{
    bag, fuse_train, fusion_forward, load_bag, pool, predict, save_bag, save_pooled, BagTensor,
    FuseConfig, FusionArtifact, FusionLayout, FusionWeights, PoolStrategy, PooledOutput, SlotProbs,
};
use dabea::metrics::{balanced_accuracy, confusion, ZeroSupport};
use dabea::pipeline::cmd_pipeline;
use dabea::tensor::{softmax, NUM_CLASSES};
use dabea::{Error, ExitKind};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DabeaStatus {
    Ok = 0,
    /// Bad argument or configuration.
    InvalidArgument = 1,
    /// Input data failed validation or could not be read.
    Validation = 2,
    /// Non-finite values or divergence.
    Numeric = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    Utf8 = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

pub const DABEA_NUM_CLASSES: usize = 7;
const _: () = assert!(DABEA_NUM_CLASSES == NUM_CLASSES);
pub const DABEA_POOL_AVG: u32 = 0;
pub const DABEA_POOL_MAX: u32 = 1;
pub const DABEA_POOL_EXTREME: u32 = 2;
pub const DABEA_LAYOUT_SHARED: u32 = 0;
pub const DABEA_LAYOUT_PER_CLASS: u32 = 1;
pub const DABEA_ZERO_SUPPORT_EXCLUDE: u32 = 0;
pub const DABEA_ZERO_SUPPORT_ZERO: u32 = 1;

/// Image ids with ground-truth classes.
pub struct DabeaLabels(LabelSet);
/// One base model's predictions for `k` augmented views per image.
pub struct DabeaPredictions(PredictionSet);
/// Bagged predictions `[N × 7 × n × M]`.
pub struct DabeaBag(BagTensor);
/// Fusion weights with the channel ids they were trained on.
pub struct DabeaFusion(FusionArtifact);
/// Fused per-slot probabilities `[N × n × 7]`.
pub struct DabeaSlots(SlotProbs);
/// Pooled probabilities `[N × 7]`.
pub struct DabeaPooled(PooledOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DabeaStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DabeaStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let status = match e.exit_kind() {
                ExitKind::Success | ExitKind::Usage => DabeaStatus::InvalidArgument,
                ExitKind::DataValidation => DabeaStatus::Validation,
                ExitKind::Numeric => DabeaStatus::Numeric,
            };
            set_last_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            DabeaStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("{what} is not valid UTF-8"));
            DabeaStatus::Utf8
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DabeaStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Utf8(what))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    string(p, "path").map(PathBuf::from)
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn strings(p: *const *const c_char, len: usize, what: &'static str) -> Result<Vec<String>, Failure> {
    slice(p, len, what)?.iter().map(|&s| string(s, what)).collect()
}

fn emit<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dabea_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dabea_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Numerically stable softmax of seven logits.
///
/// # Safety
/// `logits` and `out` must each point to 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_softmax(logits: *const f64, out: *mut f64) -> DabeaStatus {
    guard(|| {
        let z: [f64; NUM_CLASSES] = slice(logits, NUM_CLASSES, "logits")?.try_into().expect("length 7");
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let p = softmax(&z)?;
        std::slice::from_raw_parts_mut(out, NUM_CLASSES).copy_from_slice(p.as_array());
        Ok(())
    })
}

/// Stub-model learning rate at `epoch`: `lr0 · 0.94^⌊epoch/2⌋`.
#[no_mangle]
pub extern "C" fn dabea_lr_schedule(epoch: usize, lr0: f64) -> f64 {
    lr_schedule(epoch, lr0)
}

/// Builds a label set; `classes[i]` is the class index of `ids[i]`.
///
/// # Safety
/// `ids` must point to `n` NUL-terminated strings and `classes` to `n` values.
#[no_mangle]
pub unsafe extern "C" fn dabea_labels_new(
    ids: *const *const c_char,
    classes: *const usize,
    n: usize,
    out: *mut *mut DabeaLabels,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ids = strings(ids, n, "ids")?;
        let classes = slice(classes, n, "classes")?.to_vec();
        emit(out, DabeaLabels(LabelSet::new(ids, classes)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dabea_labels_load(path_: *const c_char, out: *mut *mut DabeaLabels) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        emit(out, DabeaLabels(load_labels(&path(path_)?)?));
        Ok(())
    })
}

/// # Safety
/// `labels` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dabea_labels_save(labels: *const DabeaLabels, path_: *const c_char) -> DabeaStatus {
    guard(|| {
        save_labels(&borrow(labels, "labels")?.0, &path(path_)?)?;
        Ok(())
    })
}

/// Number of images, or 0 for a null handle.
///
/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dabea_labels_len(labels: *const DabeaLabels) -> usize {
    labels.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `labels` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_labels_free(labels: *mut DabeaLabels) {
    free(labels)
}

/// Builds a prediction set from `n · k · 7` probabilities laid out
/// image-major, then augmentation, then class.
///
/// # Safety
/// `model_id` must be NUL-terminated, `ids` point to `n` strings and `probs`
/// to `n · k · 7` doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_new(
    model_id: *const c_char,
    ids: *const *const c_char,
    n: usize,
    k: usize,
    probs: *const f64,
    out: *mut *mut DabeaPredictions,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model_id = string(model_id, "model_id")?;
        let ids = strings(ids, n, "ids")?;
        let len = n
            .checked_mul(k)
            .and_then(|v| v.checked_mul(NUM_CLASSES))
            .ok_or_else(|| Error::invalid("n * k * 7 overflows"))?;
        let probs = slice(probs, len, "probs")?.to_vec();
        emit(out, DabeaPredictions(PredictionSet::new(model_id, ids, k, probs)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_load(
    path_: *const c_char,
    renormalize: bool,
    out: *mut *mut DabeaPredictions,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        emit(out, DabeaPredictions(load_predictions(&path(path_)?, renormalize)?));
        Ok(())
    })
}

/// Synthetic predictions: softmax of `strength · onehot(label) + noise`.
///
/// # Safety
/// `labels` must be a live handle and `model_id` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_synth(
    labels: *const DabeaLabels,
    k: usize,
    strength: f64,
    noise_sd: f64,
    seed: u64,
    model_id: *const c_char,
    out: *mut *mut DabeaPredictions,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let labels = &borrow(labels, "labels")?.0;
        let model_id = string(model_id, "model_id")?;
        emit(
            out,
            DabeaPredictions(synth_generate(labels, k, strength, noise_sd, seed, &model_id)?),
        );
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_save(
    set: *const DabeaPredictions,
    path_: *const c_char,
) -> DabeaStatus {
    guard(|| {
        save_predictions(&borrow(set, "set")?.0, &path(path_)?)?;
        Ok(())
    })
}

/// Writes the image count and `k` of a prediction set.
///
/// # Safety
/// `set` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_dims(
    set: *const DabeaPredictions,
    num_images: *mut usize,
    k: *mut usize,
) -> DabeaStatus {
    guard(|| {
        let s = &borrow(set, "set")?.0;
        if let Some(v) = num_images.as_mut() {
            *v = s.num_images();
        }
        if let Some(v) = k.as_mut() {
            *v = s.k();
        }
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_predictions_free(set: *mut DabeaPredictions) {
    free(set)
}

/// Bags `m` prediction sets over the same images into `n` slots each.
///
/// # Safety
/// `sets` must point to `m` live handles.
#[no_mangle]
pub unsafe extern "C" fn dabea_bag_new(
    sets: *const *const DabeaPredictions,
    m: usize,
    n: usize,
    seed: u64,
    out: *mut *mut DabeaBag,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let sets = slice(sets, m, "sets")?
            .iter()
            .map(|&p| borrow(p, "sets[i]").map(|s| s.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        emit(out, DabeaBag(bag(&sets, n, seed)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dabea_bag_load(path_: *const c_char, out: *mut *mut DabeaBag) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        emit(out, DabeaBag(load_bag(&path(path_)?)?));
        Ok(())
    })
}

/// # Safety
/// `b` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dabea_bag_save(b: *const DabeaBag, path_: *const c_char) -> DabeaStatus {
    guard(|| {
        save_bag(&borrow(b, "bag")?.0, &path(path_)?)?;
        Ok(())
    })
}

/// Writes the image, slot and channel counts of a bag.
///
/// # Safety
/// `b` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn dabea_bag_dims(
    b: *const DabeaBag,
    num_images: *mut usize,
    slots: *mut usize,
    channels: *mut usize,
) -> DabeaStatus {
    guard(|| {
        let b = &borrow(b, "bag")?.0;
        for (p, v) in [(num_images, b.num_images()), (slots, b.slots()), (channels, b.channels())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `b` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_bag_free(b: *mut DabeaBag) {
    free(b)
}

/// Shared-layout fusion weights from `m` channel weights and one bias.
///
/// # Safety
/// `w` must point to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_new_shared(
    w: *const f64,
    m: usize,
    b: f64,
    out: *mut *mut DabeaFusion,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let w = slice(w, m, "w")?.to_vec();
        emit(
            out,
            DabeaFusion(FusionArtifact {
                weights: FusionWeights::shared(w, b)?,
                source_model_ids: (0..m).map(|i| format!("channel{i}")).collect(),
                meta: None,
            }),
        );
        Ok(())
    })
}

/// Trains the fusion layer with full-batch Adam. When `loss_history` is not
/// null it receives up to `loss_len` values (loss before training, then after
/// each epoch).
///
/// # Safety
/// `b` and `labels` must be live handles; `loss_history` null or valid for
/// `loss_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_train(
    b: *const DabeaBag,
    labels: *const DabeaLabels,
    epochs: usize,
    lr: f64,
    layout: u32,
    seed: u64,
    loss_history: *mut f64,
    loss_len: usize,
    out: *mut *mut DabeaFusion,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let b = &borrow(b, "bag")?.0;
        let labels = &borrow(labels, "labels")?.0;
        let layout = match layout {
            DABEA_LAYOUT_SHARED => FusionLayout::Shared,
            DABEA_LAYOUT_PER_CLASS => FusionLayout::PerClass,
            other => return Err(Error::invalid(format!("unknown fusion layout {other}")).into()),
        };
        let rep = fuse_train(
            b,
            labels,
            &FuseConfig {
                epochs,
                lr,
                layout,
                seed,
                ..FuseConfig::default()
            },
        )?;
        if !loss_history.is_null() {
            let dst = std::slice::from_raw_parts_mut(loss_history, loss_len);
            for (d, s) in dst.iter_mut().zip(&rep.loss_history) {
                *d = *s;
            }
        }
        emit(
            out,
            DabeaFusion(FusionArtifact {
                weights: rep.weights,
                source_model_ids: b.source_model_ids().to_vec(),
                meta: Some(rep.meta),
            }),
        );
        Ok(())
    })
}

/// Copies the channel weights (`M` shared, or `7·M` class-major per class)
/// into `buf` and writes the total count to `count`. Pass a null `buf` to
/// query the count.
///
/// # Safety
/// `f` must be a live handle; `buf` null or valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_weights(
    f: *const DabeaFusion,
    buf: *mut f64,
    len: usize,
    count: *mut usize,
) -> DabeaStatus {
    guard(|| {
        let w = borrow(f, "fusion")?.0.weights.weights();
        if let Some(c) = count.as_mut() {
            *c = w.len();
        }
        if !buf.is_null() {
            if len < w.len() {
                return Err(Error::invalid(format!("buffer holds {len} values, need {}", w.len())).into());
            }
            std::slice::from_raw_parts_mut(buf, w.len()).copy_from_slice(w);
        }
        Ok(())
    })
}

/// Bias of `class` (the shared bias for the shared layout).
///
/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_bias(f: *const DabeaFusion, class: usize, out: *mut f64) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if class >= NUM_CLASSES {
            return Err(Error::invalid(format!("class {class} out of range")).into());
        }
        *out = borrow(f, "fusion")?.0.weights.bias(class);
        Ok(())
    })
}

/// # Safety
/// `f` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_save(f: *const DabeaFusion, path_: *const c_char) -> DabeaStatus {
    guard(|| {
        borrow(f, "fusion")?.0.save(&path(path_)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_load(path_: *const c_char, out: *mut *mut DabeaFusion) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        emit(out, DabeaFusion(FusionArtifact::load(&path(path_)?)?));
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_free(f: *mut DabeaFusion) {
    free(f)
}

/// Applies fusion weights to every slot of a bag.
///
/// # Safety
/// `b` and `f` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn dabea_fusion_forward(
    b: *const DabeaBag,
    f: *const DabeaFusion,
    out: *mut *mut DabeaSlots,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let slots = fusion_forward(&borrow(b, "bag")?.0, &borrow(f, "fusion")?.0.weights)?;
        emit(out, DabeaSlots(slots));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_slots_free(s: *mut DabeaSlots) {
    free(s)
}

/// Pools slots with one of the `DABEA_POOL_*` strategies.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dabea_pool(s: *const DabeaSlots, strategy: u32, out: *mut *mut DabeaPooled) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let strategy = match strategy {
            DABEA_POOL_AVG => PoolStrategy::Avg,
            DABEA_POOL_MAX => PoolStrategy::Max,
            DABEA_POOL_EXTREME => PoolStrategy::Extreme,
            other => return Err(Error::invalid(format!("unknown pooling strategy {other}")).into()),
        };
        emit(out, DabeaPooled(pool(&borrow(s, "slots")?.0, strategy)?));
        Ok(())
    })
}

/// Number of pooled images, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dabea_pooled_len(p: *const DabeaPooled) -> usize {
    p.as_ref().map_or(0, |p| p.0.num_images())
}

/// Copies the 7 pooled probabilities of image `i` into `out`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn dabea_pooled_row(p: *const DabeaPooled, i: usize, out: *mut f64) -> DabeaStatus {
    guard(|| {
        let p = &borrow(p, "pooled")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if i >= p.num_images() {
            return Err(Error::invalid(format!("image {i} out of range")).into());
        }
        std::slice::from_raw_parts_mut(out, NUM_CLASSES).copy_from_slice(p.row(i));
        Ok(())
    })
}

/// Writes the argmax class of every image into `classes`.
///
/// # Safety
/// `p` must be a live handle and `classes` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn dabea_pooled_predict(p: *const DabeaPooled, classes: *mut usize, len: usize) -> DabeaStatus {
    guard(|| {
        let p = &borrow(p, "pooled")?.0;
        if len < p.num_images() {
            return Err(Error::invalid(format!("buffer holds {len} classes, need {}", p.num_images())).into());
        }
        if classes.is_null() {
            return Err(Failure::Null("classes"));
        }
        let preds = predict(p);
        std::slice::from_raw_parts_mut(classes, preds.classes.len()).copy_from_slice(&preds.classes);
        Ok(())
    })
}

/// # Safety
/// `p` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dabea_pooled_save(p: *const DabeaPooled, path_: *const c_char) -> DabeaStatus {
    guard(|| {
        save_pooled(&borrow(p, "pooled")?.0, &path(path_)?)?;
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dabea_pooled_free(p: *mut DabeaPooled) {
    free(p)
}

/// Balanced accuracy of the pooled argmax predictions, with one of the
/// `DABEA_ZERO_SUPPORT_*` policies.
///
/// # Safety
/// `p` and `labels` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn dabea_balanced_accuracy(
    p: *const DabeaPooled,
    labels: *const DabeaLabels,
    zero_support: u32,
    out: *mut f64,
) -> DabeaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let policy = match zero_support {
            DABEA_ZERO_SUPPORT_EXCLUDE => ZeroSupport::Exclude,
            DABEA_ZERO_SUPPORT_ZERO => ZeroSupport::Zero,
            other => return Err(Error::invalid(format!("unknown zero-support policy {other}")).into()),
        };
        let preds = predict(&borrow(p, "pooled")?.0);
        let cm = confusion(&preds.image_ids, &preds.classes, &borrow(labels, "labels")?.0)?;
        *out = balanced_accuracy(&cm, policy)?;
        Ok(())
    })
}

/// Runs the full pipeline from a config file (null for defaults) and writes
/// the balanced accuracy to `out`.
///
/// # Safety
/// `config_path` must be null or NUL-terminated; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn dabea_pipeline_run(config_path: *const c_char, out: *mut f64) -> DabeaStatus {
    guard(|| {
        let cfg = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(&path(config_path)?)?
        };
        let outcome = cmd_pipeline(&cfg)?;
        if let Some(o) = out.as_mut() {
            *o = outcome.report.balanced_accuracy;
        }
        Ok(())
    })
}
