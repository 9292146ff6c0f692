//! C ABI over the `trustml` toolkit.
//!
//! Every fallible function returns a [`TrustmlStatus`]; on failure the
//! message is available from [`trustml_last_error`] on the same thread.
//! Outputs are written through caller-provided pointers. Strings returned
//! by the library must be released with [`trustml_string_free`]; model
//! handles with [`trustml_triage_model_free`]. Panics never cross the
//! boundary: they are reported as `TRUSTML_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use trustml::equity::{self, Region};
use trustml::fairness::{self, LabeledOutcomes};
use trustml::fedsim;
use trustml::fuzzy::{self, RiskLabel};
use trustml::privacy::{self, ClipConfig, CostMode, Epsilon, PrivacyBudget, WeightVector};
use trustml::triage::{self, DecisionTree};
use trustml::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustmlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustmlRiskLabel {
    Low = 0,
    Mid = 1,
    High = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustmlCostMode {
    ValueOnly = 0,
    ValuePlusIndex = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrustmlFairness {
    pub dpd: f64,
    pub di: f64,
    /// Valid only when `has_eod` is true.
    pub eod: f64,
    pub has_eod: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrustmlCommCost {
    pub dense_bytes: u64,
    pub sparse_bytes: u64,
    pub reduction: f64,
}

/// Opaque trained triage tree.
pub struct TrustmlTriageModel {
    tree: DecisionTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TrustmlStatus {
    match err {
        Error::InvalidConfig(_) => TrustmlStatus::InvalidConfig,
        Error::TrainingDiverged { .. } => TrustmlStatus::Numerical,
        Error::Io { .. } => TrustmlStatus::Io,
        _ => TrustmlStatus::InvalidInput,
    }
}

struct Fail(TrustmlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TrustmlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, records any failure, and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> TrustmlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TrustmlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TrustmlStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail(TrustmlStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(TrustmlStatus::InvalidInput, "string contains NUL".into()))
}

fn budget(epsilon: f64, delta: f64) -> Result<PrivacyBudget, Fail> {
    let eps = if epsilon == f64::INFINITY {
        Epsilon::Infinite
    } else {
        Epsilon::Finite(epsilon)
    };
    Ok(PrivacyBudget::new(eps, delta)?)
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn trustml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trustml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn trustml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// DPD, DI and (when `truths` is non-NULL) EOD for `n` binary predictions
/// with integer group ids.
#[no_mangle]
pub unsafe extern "C" fn trustml_fairness_summary(
    predictions: *const u8,
    truths: *const u8,
    groups: *const u32,
    n: usize,
    out: *mut TrustmlFairness,
) -> TrustmlStatus {
    guard(|| {
        let preds = input(predictions, n, "predictions")?;
        let groups = input(groups, n, "groups")?;
        let truths = if truths.is_null() {
            None
        } else {
            Some(input(truths, n, "truths")?.to_vec())
        };
        let outcomes = LabeledOutcomes::new(preds.to_vec(), truths, groups.iter().map(|g| g.to_string()))?;
        let report = fairness::fairness_summary(&outcomes)?;
        write(
            out,
            TrustmlFairness {
                dpd: report.dpd,
                di: report.di,
                eod: report.eod.unwrap_or(f64::NAN),
                has_eod: report.eod.is_some(),
            },
            "out",
        )
    })
}

/// Scales `w` into the L2 ball of radius `clip_norm`; `out` holds `n` values.
#[no_mangle]
pub unsafe extern "C" fn trustml_clip_weights(
    w: *const f64,
    n: usize,
    clip_norm: f64,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let w = WeightVector::new(input(w, n, "w")?.to_vec())?;
        let clipped = privacy::clip_weights(&w, &ClipConfig::new(clip_norm)?);
        output(out, n, "out")?.copy_from_slice(&clipped);
        Ok(())
    })
}

/// Gaussian-mechanism noise scale. Pass `INFINITY` as `epsilon` to
/// disable privacy (sigma 0).
#[no_mangle]
pub unsafe extern "C" fn trustml_gaussian_sigma(
    sensitivity: f64,
    epsilon: f64,
    delta: f64,
    out_sigma: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let b = budget(epsilon, delta)?;
        write(out_sigma, privacy::gaussian_sigma(sensitivity, &b), "out_sigma")
    })
}

/// Adds seeded Gaussian noise calibrated to `clip_norm`.
#[no_mangle]
pub unsafe extern "C" fn trustml_add_gaussian_noise(
    w: *const f64,
    n: usize,
    epsilon: f64,
    delta: f64,
    clip_norm: f64,
    seed: u64,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let w = WeightVector::new(input(w, n, "w")?.to_vec())?;
        let noisy = privacy::add_gaussian_noise(&w, &budget(epsilon, delta)?, &ClipConfig::new(clip_norm)?, seed);
        output(out, n, "out")?.copy_from_slice(&noisy);
        Ok(())
    })
}

/// Number of entries [`trustml_sparsify`] keeps for this length and sparsity.
#[no_mangle]
pub unsafe extern "C" fn trustml_keep_count(n: usize, sparsity: f64, out: *mut usize) -> TrustmlStatus {
    guard(|| write(out, privacy::keep_count(n, sparsity)?, "out"))
}

/// Top-magnitude sparsification. `capacity` is the length of both output
/// arrays; `*out_nnz` receives the number of entries written and
/// `*out_rate` the achieved sparsity.
#[no_mangle]
pub unsafe extern "C" fn trustml_sparsify(
    w: *const f64,
    n: usize,
    sparsity: f64,
    out_indices: *mut usize,
    out_values: *mut f64,
    capacity: usize,
    out_nnz: *mut usize,
    out_rate: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let w = WeightVector::new(input(w, n, "w")?.to_vec())?;
        let (sparse, rate) = privacy::sparsify(&w, sparsity)?;
        let k = sparse.nnz();
        if k > capacity {
            return Err(Fail(
                TrustmlStatus::BufferTooSmall,
                format!("need room for {k} entries, capacity is {capacity}"),
            ));
        }
        output(out_indices, k, "out_indices")?.copy_from_slice(sparse.indices());
        output(out_values, k, "out_values")?.copy_from_slice(sparse.values());
        write(out_nnz, k, "out_nnz")?;
        write(out_rate, rate, "out_rate")
    })
}

/// Dense versus sparse upload size for one vector.
#[no_mangle]
pub unsafe extern "C" fn trustml_comm_cost(
    n: usize,
    sparsity: f64,
    value_bytes: u64,
    index_bytes: u64,
    mode: TrustmlCostMode,
    out: *mut TrustmlCommCost,
) -> TrustmlStatus {
    guard(|| {
        let mode = match mode {
            TrustmlCostMode::ValueOnly => CostMode::ValueOnly,
            TrustmlCostMode::ValuePlusIndex => CostMode::ValuePlusIndex,
        };
        let c = privacy::comm_cost(n, sparsity, value_bytes, index_bytes, mode)?;
        write(
            out,
            TrustmlCommCost {
                dense_bytes: c.dense_bytes,
                sparse_bytes: c.sparse_bytes,
                reduction: c.reduction,
            },
            "out",
        )
    })
}

/// Fuzzy risk score in [0, 1] and its tertile label.
#[no_mangle]
pub unsafe extern "C" fn trustml_fuzzy_risk(
    age: f64,
    sbp: f64,
    bs: f64,
    hr: f64,
    out_score: *mut f64,
    out_label: *mut TrustmlRiskLabel,
) -> TrustmlStatus {
    guard(|| {
        let score = fuzzy::risk_score(age, sbp, bs, hr)?;
        let label = match fuzzy::score_to_label(score)? {
            RiskLabel::Low => TrustmlRiskLabel::Low,
            RiskLabel::Mid => TrustmlRiskLabel::Mid,
            RiskLabel::High => TrustmlRiskLabel::High,
        };
        write(out_score, score, "out_score")?;
        write(out_label, label, "out_label")
    })
}

/// Fired rules as a JSON array; free with [`trustml_string_free`].
#[no_mangle]
pub unsafe extern "C" fn trustml_fuzzy_fired_rules_json(
    age: f64,
    sbp: f64,
    bs: f64,
    hr: f64,
    out_json: *mut *mut c_char,
) -> TrustmlStatus {
    guard(|| {
        let rules = fuzzy::get_fired_rules(age, sbp, bs, hr)?;
        let json = trustml::output::line(&rules)?;
        write(out_json, c_string(json.trim_end().to_string())?, "out_json")
    })
}

/// Handle to the bundled reference tree; release with
/// [`trustml_triage_model_free`].
#[no_mangle]
pub extern "C" fn trustml_triage_model_reference() -> *mut TrustmlTriageModel {
    Box::into_raw(Box::new(TrustmlTriageModel {
        tree: DecisionTree::reference().clone(),
    }))
}

/// Loads a serialized tree from `path`.
#[no_mangle]
pub unsafe extern "C" fn trustml_triage_model_load(
    path: *const c_char,
    out_model: *mut *mut TrustmlTriageModel,
) -> TrustmlStatus {
    guard(|| {
        let tree = DecisionTree::load(text(path, "path")?)?;
        write(out_model, Box::into_raw(Box::new(TrustmlTriageModel { tree })), "out_model")
    })
}

/// Releases a model handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn trustml_triage_model_free(model: *mut TrustmlTriageModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Triage one case and return the result document as JSON. `house_type`
/// may be NULL, in which case the model's training mode is used.
#[no_mangle]
pub unsafe extern "C" fn trustml_triage_assess(
    model: *const TrustmlTriageModel,
    age: f64,
    gender: *const c_char,
    area_type: *const c_char,
    district: *const c_char,
    house_type: *const c_char,
    language: *const c_char,
    out_json: *mut *mut c_char,
) -> TrustmlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let house = if house_type.is_null() {
            None
        } else {
            Some(text(house_type, "house_type")?)
        };
        let result = triage::assess_dengue_risk(
            age,
            text(gender, "gender")?,
            text(area_type, "area_type")?,
            text(district, "district")?,
            text(language, "language")?,
            &model.tree,
            house,
        )?;
        let json = trustml::output::line(&result)?;
        write(out_json, c_string(json.trim_end().to_string())?, "out_json")
    })
}

/// Backward pass of the gradient-reversal layer: `out = -lambda * g`.
#[no_mangle]
pub unsafe extern "C" fn trustml_grl_backward(
    g: *const f64,
    n: usize,
    lambda: f64,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let back = equity::grl_backward(input(g, n, "g")?, lambda);
        output(out, n, "out")?.copy_from_slice(&back);
        Ok(())
    })
}

/// Mean-score gap between Haor (`is_haor[i] != 0`) and other regions.
#[no_mangle]
pub unsafe extern "C" fn trustml_statistical_parity_difference(
    scores: *const f64,
    is_haor: *const u8,
    n: usize,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let scores = input(scores, n, "scores")?;
        let regions: Vec<Region> = input(is_haor, n, "is_haor")?
            .iter()
            .map(|&h| if h != 0 { Region::Haor } else { Region::NonHaor })
            .collect();
        write(out, equity::statistical_parity_difference(scores, &regions)?, "out")
    })
}

/// Unweighted mean of the two per-class F1 scores.
#[no_mangle]
pub unsafe extern "C" fn trustml_macro_f1(
    predictions: *const u8,
    truths: *const u8,
    n: usize,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let f1 = fedsim::macro_f1(input(predictions, n, "predictions")?, input(truths, n, "truths")?)?;
        write(out, f1, "out")
    })
}

/// Best balanced accuracy of a loss-threshold membership attack.
#[no_mangle]
pub unsafe extern "C" fn trustml_mia_attack(
    member_losses: *const f64,
    n_members: usize,
    nonmember_losses: *const f64,
    n_nonmembers: usize,
    out: *mut f64,
) -> TrustmlStatus {
    guard(|| {
        let a = fedsim::mia_loss_threshold_attack(
            input(member_losses, n_members, "member_losses")?,
            input(nonmember_losses, n_nonmembers, "nonmember_losses")?,
        )?;
        write(out, a, "out")
    })
}
