//! C ABI over the winnower engine: opaque handles behind raw pointers,
//! integer status codes, and a thread-local error message. The header
//! in `include/winnower.h` is generated from this file at build time.
//!
//! Conventions: every fallible call returns [`WnwStatus`]; on failure
//! the message is available from `wnw_last_error_message` until the
//! next failure on the same thread. Handles are created and destroyed
//! in pairs (`wnw_*_load`/`wnw_*_free`); strings returned through out
//! parameters are owned by the caller and released with
//! `wnw_string_free`. Passing a handle after freeing it, or from
//! another library instance, is undefined behavior.

// the safety contract above covers every extern below; per-function
// sections would repeat it verbatim
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use winnower::data::{Dataset, Instance, SparseVector};
use winnower::em::{run_em, EmConfig};
use winnower::error::Error;
use winnower::evidence::{
    build_coverage_problem, rule_based_silver, solve_max_coverage_exact, write_silver_jsonl,
    EvidenceCorpus, EvidenceSelection,
};
use winnower::inference::Marginals;
use winnower::prediction::{LinearModel, PredictionModule};
use winnower::templates::{
    load_templates, save_templates, FormulaTemplate, LabelingFunctionRegistry,
};

/// Result of every fallible call. Anything but Ok leaves a description
/// in `wnw_last_error_message`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WnwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad input: malformed file, unknown id, out-of-range index,
    /// invalid configuration.
    InvalidArgument = 3,
    Io = 4,
    /// Failure while running: divergence, unnormalized output, bounds.
    Runtime = 5,
    /// A panic crossed the boundary and was caught.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).expect("nul bytes stripped");
    });
}

fn error_status(e: &Error) -> WnwStatus {
    match e {
        Error::Io { .. } => WnwStatus::Io,
        Error::Parse { .. }
        | Error::InvalidLabelSpace(_)
        | Error::DuplicateId(_)
        | Error::UnknownLabel { .. }
        | Error::UnknownLabelingFunction(_)
        | Error::InvalidTemplate { .. }
        | Error::UnknownDocument { .. }
        | Error::InvalidConfig(_)
        | Error::Invalid(_) => WnwStatus::InvalidArgument,
        Error::EmStep { source, .. } => error_status(source),
        _ => WnwStatus::Runtime,
    }
}

fn fail(e: &Error) -> WnwStatus {
    set_error(&e.to_string());
    error_status(e)
}

/// Returns the message for the most recent failure on this thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wnw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned through an out parameter.
#[no_mangle]
pub unsafe extern "C" fn wnw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn guarded(body: impl FnOnce() -> WnwStatus) -> WnwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            WnwStatus::Panic
        }
    }
}

/// Null-checked, UTF-8-checked view of a C string.
unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, WnwStatus> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        return Err(WnwStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        WnwStatus::InvalidUtf8
    })
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, WnwStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(&format!("{what} is null"));
        WnwStatus::NullArgument
    })
}

fn checked_out<T>(out: *mut T, what: &str) -> Result<(), WnwStatus> {
    if out.is_null() {
        set_error(&format!("{what} is null"));
        return Err(WnwStatus::NullArgument);
    }
    Ok(())
}

fn give<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Instance collection with its label space. Opaque.
pub struct WnwDataset {
    inner: Dataset,
}

/// Weighted formula template set. Opaque.
pub struct WnwTemplates {
    inner: Vec<FormulaTemplate>,
}

/// Trained linear prediction module. Opaque.
pub struct WnwModel {
    inner: LinearModel,
}

/// Per-instance label distributions. Opaque.
pub struct WnwMarginals {
    inner: Marginals,
}

/// Documents plus questions for silver generation. Opaque.
pub struct WnwCorpus {
    inner: EvidenceCorpus,
}

/// Loads a JSONL dataset (header line with the label space, then one
/// instance per line).
#[no_mangle]
pub unsafe extern "C" fn wnw_dataset_load(
    path: *const c_char,
    out: *mut *mut WnwDataset,
) -> WnwStatus {
    guarded(|| {
        let path = try_ffi!(cstr(path, "path"));
        try_ffi!(checked_out(out, "out"));
        match Dataset::load(Path::new(path)) {
            Ok(inner) => {
                give(out, WnwDataset { inner });
                WnwStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_dataset_free(dataset: *mut WnwDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wnw_dataset_len(
    dataset: *const WnwDataset,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let ds = try_ffi!(deref(dataset, "dataset"));
        try_ffi!(checked_out(out, "out"));
        *out = ds.inner.len();
        WnwStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_dataset_n_labels(
    dataset: *const WnwDataset,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let ds = try_ffi!(deref(dataset, "dataset"));
        try_ffi!(checked_out(out, "out"));
        *out = ds.inner.label_space().len();
        WnwStatus::Ok
    })
}

/// Copies the id of one instance; release with `wnw_string_free`.
#[no_mangle]
pub unsafe extern "C" fn wnw_dataset_instance_id(
    dataset: *const WnwDataset,
    index: usize,
    out: *mut *mut c_char,
) -> WnwStatus {
    guarded(|| {
        let ds = try_ffi!(deref(dataset, "dataset"));
        try_ffi!(checked_out(out, "out"));
        let Some(inst) = ds.inner.instances().get(index) else {
            set_error(&format!("instance index {index} out of range"));
            return WnwStatus::InvalidArgument;
        };
        let id = CString::new(inst.id.clone()).expect("ids have no nul bytes");
        *out = id.into_raw();
        WnwStatus::Ok
    })
}

/// Loads formula templates from JSON.
#[no_mangle]
pub unsafe extern "C" fn wnw_templates_load(
    path: *const c_char,
    out: *mut *mut WnwTemplates,
) -> WnwStatus {
    guarded(|| {
        let path = try_ffi!(cstr(path, "path"));
        try_ffi!(checked_out(out, "out"));
        match load_templates(Path::new(path)) {
            Ok(inner) => {
                give(out, WnwTemplates { inner });
                WnwStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_templates_save(
    templates: *const WnwTemplates,
    path: *const c_char,
) -> WnwStatus {
    guarded(|| {
        let t = try_ffi!(deref(templates, "templates"));
        let path = try_ffi!(cstr(path, "path"));
        match save_templates(Path::new(path), &t.inner) {
            Ok(()) => WnwStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_templates_free(templates: *mut WnwTemplates) {
    if !templates.is_null() {
        drop(Box::from_raw(templates));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wnw_templates_len(
    templates: *const WnwTemplates,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let t = try_ffi!(deref(templates, "templates"));
        try_ffi!(checked_out(out, "out"));
        *out = t.inner.len();
        WnwStatus::Ok
    })
}

/// Reads the current weight of the template with the given id.
#[no_mangle]
pub unsafe extern "C" fn wnw_templates_weight(
    templates: *const WnwTemplates,
    id: *const c_char,
    out: *mut f64,
) -> WnwStatus {
    guarded(|| {
        let t = try_ffi!(deref(templates, "templates"));
        let id = try_ffi!(cstr(id, "id"));
        try_ffi!(checked_out(out, "out"));
        match t.inner.iter().find(|tpl| tpl.id == id) {
            Some(tpl) => {
                *out = tpl.weight.value;
                WnwStatus::Ok
            }
            None => {
                set_error(&format!("no template with id `{id}`"));
                WnwStatus::InvalidArgument
            }
        }
    })
}

fn parse_config(config_json: *const c_char) -> Result<EmConfig, WnwStatus> {
    if config_json.is_null() {
        return Ok(EmConfig::default());
    }
    let text = unsafe { cstr(config_json, "config_json")? };
    let config: EmConfig = serde_json::from_str(text).map_err(|e| {
        set_error(&format!("config_json: {e}"));
        WnwStatus::InvalidArgument
    })?;
    Ok(config)
}

fn run_em_ffi(
    dataset: &Dataset,
    templates: &[FormulaTemplate],
    config: &EmConfig,
    module: &mut dyn PredictionModule,
    out_marginals: *mut *mut WnwMarginals,
    out_refined: *mut *mut WnwTemplates,
) -> WnwStatus {
    let registry = LabelingFunctionRegistry::with_builtins();
    match run_em(dataset, templates.to_vec(), module, &registry, config, None) {
        Ok(outcome) => {
            if !out_marginals.is_null() {
                give(out_marginals, WnwMarginals { inner: outcome.marginals });
            }
            if !out_refined.is_null() {
                give(out_refined, WnwTemplates { inner: outcome.templates });
            }
            WnwStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Trains the built-in linear module with EM. `config_json` may be
/// null for defaults or a JSON object with any subset of the training
/// configuration fields. Each out pointer may be null if the caller
/// does not want that result.
#[no_mangle]
pub unsafe extern "C" fn wnw_train(
    dataset: *const WnwDataset,
    templates: *const WnwTemplates,
    config_json: *const c_char,
    out_model: *mut *mut WnwModel,
    out_marginals: *mut *mut WnwMarginals,
    out_refined: *mut *mut WnwTemplates,
) -> WnwStatus {
    guarded(|| {
        let ds = try_ffi!(deref(dataset, "dataset"));
        let t = try_ffi!(deref(templates, "templates"));
        let config = try_ffi!(parse_config(config_json));
        let mut model = LinearModel::new(ds.inner.label_space(), config.seed);
        if config.m_step.learning_rate > 0.0 {
            model = model.with_learning_rate(config.m_step.learning_rate);
        }
        let status =
            run_em_ffi(&ds.inner, &t.inner, &config, &mut model, out_marginals, out_refined);
        if status == WnwStatus::Ok && !out_model.is_null() {
            give(out_model, WnwModel { inner: model });
        }
        status
    })
}

/// External prediction module driven through C callbacks.
///
/// `predict` receives one instance's sparse features and must fill
/// `out_probs` (length `n_labels`) with a distribution summing to 1;
/// return 0 for success. `fit` receives the whole training batch in
/// CSR form: `row_offsets` has `n_rows + 1` entries delimiting each
/// instance's span in `feature_indices`/`feature_values`, `targets`
/// is row-major `n_rows * n_labels`, `example_weights` has `n_rows`
/// entries. It should train for `epochs` passes, write the final loss
/// to `out_loss`, and return 0. `checkpoint_json` may be null; when
/// set it returns a serialized snapshot (or null) valid until the next
/// callback invocation.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct WnwPredictionCallbacks {
    pub user_data: *mut c_void,
    pub n_labels: usize,
    pub predict: Option<
        unsafe extern "C" fn(
            user_data: *mut c_void,
            feature_indices: *const u32,
            feature_values: *const f64,
            n_features: usize,
            out_probs: *mut f64,
            n_labels: usize,
        ) -> i32,
    >,
    pub fit: Option<
        unsafe extern "C" fn(
            user_data: *mut c_void,
            n_rows: usize,
            row_offsets: *const usize,
            feature_indices: *const u32,
            feature_values: *const f64,
            targets: *const f64,
            example_weights: *const f64,
            epochs: usize,
            out_loss: *mut f64,
        ) -> i32,
    >,
    pub checkpoint_json: Option<unsafe extern "C" fn(user_data: *mut c_void) -> *const c_char>,
}

struct CallbackModule {
    cb: WnwPredictionCallbacks,
}

impl CallbackModule {
    fn split(instance: &Instance) -> (Vec<u32>, Vec<f64>) {
        instance.features.iter().unzip()
    }
}

impl PredictionModule for CallbackModule {
    fn n_labels(&self) -> usize {
        self.cb.n_labels
    }

    fn predict_proba(&self, instance: &Instance) -> Vec<f64> {
        let (indices, values) = Self::split(instance);
        let mut probs = vec![0.0; self.cb.n_labels];
        let f = self.cb.predict.expect("predict callback checked at entry");
        let code = unsafe {
            f(
                self.cb.user_data,
                indices.as_ptr(),
                values.as_ptr(),
                indices.len(),
                probs.as_mut_ptr(),
                probs.len(),
            )
        };
        // the trait has no error channel here; the guard at the FFI
        // boundary turns this into a Panic status with the message
        assert!(code == 0, "predict callback returned {code}");
        probs
    }

    fn fit(
        &mut self,
        instances: &[Instance],
        targets: &Marginals,
        example_weights: &[f64],
        epochs: usize,
    ) -> winnower::error::Result<f64> {
        let mut offsets = Vec::with_capacity(instances.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0usize);
        for inst in instances {
            for (k, v) in inst.features.iter() {
                indices.push(k);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        let flat_targets: Vec<f64> =
            targets.rows().iter().flat_map(|row| row.iter().copied()).collect();
        let mut loss = 0.0f64;
        let f = self.cb.fit.expect("fit callback checked at entry");
        let code = unsafe {
            f(
                self.cb.user_data,
                instances.len(),
                offsets.as_ptr(),
                indices.as_ptr(),
                values.as_ptr(),
                flat_targets.as_ptr(),
                example_weights.as_ptr(),
                epochs,
                &mut loss,
            )
        };
        if code != 0 {
            return Err(Error::Invalid(format!("fit callback returned {code}")));
        }
        Ok(loss)
    }

    fn checkpoint_json(&self) -> Option<String> {
        let f = self.cb.checkpoint_json?;
        let p = unsafe { f(self.cb.user_data) };
        if p.is_null() {
            return None;
        }
        unsafe { CStr::from_ptr(p) }.to_str().ok().map(str::to_owned)
    }
}

/// Like `wnw_train` but the prediction module lives on the caller's
/// side of the boundary. `callbacks.predict` and `callbacks.fit` are
/// required; the struct is copied, so it only needs to outlive this
/// call. A nonzero return from `predict` surfaces as `WNW_STATUS_PANIC`
/// and from `fit` as `WNW_STATUS_INVALID_ARGUMENT`.
#[no_mangle]
pub unsafe extern "C" fn wnw_train_with_callbacks(
    dataset: *const WnwDataset,
    templates: *const WnwTemplates,
    config_json: *const c_char,
    callbacks: *const WnwPredictionCallbacks,
    out_marginals: *mut *mut WnwMarginals,
    out_refined: *mut *mut WnwTemplates,
) -> WnwStatus {
    guarded(|| {
        let ds = try_ffi!(deref(dataset, "dataset"));
        let t = try_ffi!(deref(templates, "templates"));
        let cb = *try_ffi!(deref(callbacks, "callbacks"));
        if cb.predict.is_none() || cb.fit.is_none() {
            set_error("callbacks.predict and callbacks.fit are required");
            return WnwStatus::NullArgument;
        }
        let config = try_ffi!(parse_config(config_json));
        let mut module = CallbackModule { cb };
        run_em_ffi(&ds.inner, &t.inner, &config, &mut module, out_marginals, out_refined)
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_model_free(model: *mut WnwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wnw_model_save(
    model: *const WnwModel,
    path: *const c_char,
) -> WnwStatus {
    guarded(|| {
        let m = try_ffi!(deref(model, "model"));
        let path = try_ffi!(cstr(path, "path"));
        match m.inner.save_json(Path::new(path)) {
            Ok(()) => WnwStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_model_load(
    path: *const c_char,
    out: *mut *mut WnwModel,
) -> WnwStatus {
    guarded(|| {
        let path = try_ffi!(cstr(path, "path"));
        try_ffi!(checked_out(out, "out"));
        match LinearModel::load_json(Path::new(path)) {
            Ok(inner) => {
                give(out, WnwModel { inner });
                WnwStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_model_n_labels(
    model: *const WnwModel,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let m = try_ffi!(deref(model, "model"));
        try_ffi!(checked_out(out, "out"));
        *out = m.inner.n_labels();
        WnwStatus::Ok
    })
}

/// Scores one sparse feature vector. `out_probs` must hold `n_labels`
/// doubles, matching `wnw_model_n_labels`.
#[no_mangle]
pub unsafe extern "C" fn wnw_model_predict(
    model: *const WnwModel,
    feature_indices: *const u32,
    feature_values: *const f64,
    n_features: usize,
    out_probs: *mut f64,
    n_labels: usize,
) -> WnwStatus {
    guarded(|| {
        let m = try_ffi!(deref(model, "model"));
        if n_features > 0 {
            if feature_indices.is_null() {
                set_error("feature_indices is null");
                return WnwStatus::NullArgument;
            }
            if feature_values.is_null() {
                set_error("feature_values is null");
                return WnwStatus::NullArgument;
            }
        }
        try_ffi!(checked_out(out_probs, "out_probs"));
        if n_labels != m.inner.n_labels() {
            set_error(&format!(
                "out_probs holds {n_labels} labels but the model has {}",
                m.inner.n_labels()
            ));
            return WnwStatus::InvalidArgument;
        }
        let indices = std::slice::from_raw_parts(feature_indices, n_features);
        let values = std::slice::from_raw_parts(feature_values, n_features);
        let pairs = indices.iter().copied().zip(values.iter().copied());
        let instance = Instance {
            id: String::new(),
            group_id: None,
            features: SparseVector::from_pairs(pairs),
            text: None,
            meta: BTreeMap::new(),
        };
        let probs = m.inner.predict_proba(&instance);
        ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, probs.len());
        WnwStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_marginals_free(marginals: *mut WnwMarginals) {
    if !marginals.is_null() {
        drop(Box::from_raw(marginals));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wnw_marginals_n_rows(
    marginals: *const WnwMarginals,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let m = try_ffi!(deref(marginals, "marginals"));
        try_ffi!(checked_out(out, "out"));
        *out = m.inner.len();
        WnwStatus::Ok
    })
}

/// Reads one probability; `row` indexes instances in dataset order and
/// `label` indexes the label space.
#[no_mangle]
pub unsafe extern "C" fn wnw_marginals_get(
    marginals: *const WnwMarginals,
    row: usize,
    label: usize,
    out: *mut f64,
) -> WnwStatus {
    guarded(|| {
        let m = try_ffi!(deref(marginals, "marginals"));
        try_ffi!(checked_out(out, "out"));
        let Some(r) = m.inner.rows().get(row) else {
            set_error(&format!("row {row} out of range"));
            return WnwStatus::InvalidArgument;
        };
        let Some(&p) = r.get(label) else {
            set_error(&format!("label {label} out of range"));
            return WnwStatus::InvalidArgument;
        };
        *out = p;
        WnwStatus::Ok
    })
}

/// Loads a mixed JSONL corpus of documents and questions.
#[no_mangle]
pub unsafe extern "C" fn wnw_corpus_load(
    path: *const c_char,
    out: *mut *mut WnwCorpus,
) -> WnwStatus {
    guarded(|| {
        let path = try_ffi!(cstr(path, "path"));
        try_ffi!(checked_out(out, "out"));
        match EvidenceCorpus::load(Path::new(path)) {
            Ok(inner) => {
                give(out, WnwCorpus { inner });
                WnwStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wnw_corpus_free(corpus: *mut WnwCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wnw_corpus_n_questions(
    corpus: *const WnwCorpus,
    out: *mut usize,
) -> WnwStatus {
    guarded(|| {
        let c = try_ffi!(deref(corpus, "corpus"));
        try_ffi!(checked_out(out, "out"));
        *out = c.inner.questions.len();
        WnwStatus::Ok
    })
}

/// Silver-label generator selection.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WnwSilverMethod {
    /// Idf-weighted overlap ranking.
    Rule = 0,
    /// Exhaustive max-coverage optimum. Fails with
    /// `WNW_STATUS_RUNTIME` when the subset count exceeds the solver
    /// bound; fall back to Rule in that case.
    Exact = 1,
}

/// Generates evidence selections for every question and writes them as
/// JSONL to `out_path`.
#[no_mangle]
pub unsafe extern "C" fn wnw_silver(
    corpus: *const WnwCorpus,
    method: WnwSilverMethod,
    budget: usize,
    out_path: *const c_char,
) -> WnwStatus {
    guarded(|| {
        let c = try_ffi!(deref(corpus, "corpus"));
        let out_path = try_ffi!(cstr(out_path, "out_path"));
        let mut entries: Vec<(String, EvidenceSelection)> = Vec::new();
        for question in &c.inner.questions {
            let doc = c.inner.document(&question.doc_id).expect("corpus validated");
            let selection = match method {
                WnwSilverMethod::Rule => {
                    let idf = match doc.sentence_idf() {
                        Ok(idf) => idf,
                        Err(e) => return fail(&e),
                    };
                    rule_based_silver(doc, question, &idf, budget)
                }
                WnwSilverMethod::Exact => {
                    let problem = match build_coverage_problem(doc, question, budget) {
                        Ok(p) => p,
                        Err(e) => return fail(&e),
                    };
                    match solve_max_coverage_exact(&problem) {
                        Ok(sel) => sel,
                        Err(e) => return fail(&e),
                    }
                }
            };
            entries.push((question.id.clone(), selection));
        }
        match write_silver_jsonl(Path::new(out_path), &entries) {
            Ok(()) => WnwStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}
