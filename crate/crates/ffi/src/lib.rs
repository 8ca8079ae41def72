//! C ABI over plan parsing and model prediction.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`PcStatus`];
//! on failure [`pc_last_error`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use plancost::learn::{LearnError, ModelDocument, ModelKind};
use plancost::plan_ingest::{parse_plan_document_lenient, query_id, PlanTree};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Model = 5,
    ModeMismatch = 6,
    Panic = 7,
}

/// A parsed EXPLAIN plan.
pub struct PcPlan {
    tree: PlanTree,
}

/// A trained model document.
pub struct PcModel {
    doc: ModelDocument,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(PcStatus, String);

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        let status = match e {
            LearnError::Io { .. } => PcStatus::Io,
            LearnError::ModeMismatch(_) => PcStatus::ModeMismatch,
            _ => PcStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(PcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PcStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(PcStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(PcStatus::NullArgument, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses EXPLAIN (FORMAT JSON) output, analyzed or not.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_parse(json: *const c_char, out: *mut *mut PcPlan) -> PcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let tree = parse_plan_document_lenient(text).map_err(|e| Failure(PcStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(PcPlan { tree }));
        Ok(())
    })
}

/// Attaches SQL text, used by models with a TF-IDF block.
///
/// # Safety
/// `plan` must come from [`pc_plan_parse`]; `sql` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_set_query_text(plan: *mut PcPlan, sql: *const c_char) -> PcStatus {
    guard(|| {
        let plan = out_ref(plan, "plan")?;
        let sql = read_str(sql, "sql")?;
        plan.tree.query_text = sql.trim().trim_end_matches(';').trim_end().to_string();
        plan.tree.query_id = query_id(&plan.tree.query_text);
        Ok(())
    })
}

/// Number of operator nodes in the plan.
///
/// # Safety
/// `plan` must come from [`pc_plan_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_node_count(plan: *const PcPlan, out: *mut usize) -> PcStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(plan, "plan")?.tree.node_count();
        Ok(())
    })
}

/// Releases a plan. NULL is ignored.
///
/// # Safety
/// `plan` must come from [`pc_plan_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_free(plan: *mut PcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Loads a model file written by `plancost train`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pc_model_load(path: *const c_char, out: *mut *mut PcModel) -> PcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let doc = ModelDocument::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(PcModel { doc }));
        Ok(())
    })
}

/// Loads a model from its JSON text.
///
/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pc_model_from_json(json: *const c_char, out: *mut *mut PcModel) -> PcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let doc = ModelDocument::from_json(read_str(json, "json")?)?;
        *out = Box::into_raw(Box::new(PcModel { doc }));
        Ok(())
    })
}

/// Model family name ("linear", "forest", "gbdt", "mlp" or "lstm"), static.
/// Returns NULL for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from a `pc_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pc_model_kind(model: *const PcModel) -> *const c_char {
    match model.as_ref() {
        None => ptr::null(),
        Some(m) => {
            let name: &'static str = match m.doc.kind {
                ModelKind::Linear => "linear\0",
                ModelKind::Forest => "forest\0",
                ModelKind::Gbdt => "gbdt\0",
                ModelKind::Mlp => "mlp\0",
                ModelKind::Lstm => "lstm\0",
            };
            name.as_ptr().cast()
        }
    }
}

/// Predicts runtime in milliseconds, and its log1p, for one plan.
/// `out_log` may be NULL.
///
/// # Safety
/// Handles must come from this library; `out_ms` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_model_predict(
    model: *const PcModel,
    plan: *const PcPlan,
    out_ms: *mut f64,
    out_log: *mut f64,
) -> PcStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let plan = handle(plan, "plan")?;
        let out_ms = out_ref(out_ms, "out_ms")?;
        let p = model.doc.predict_plan(&plan.tree, None)?;
        *out_ms = p.predicted_ms;
        if let Some(l) = out_log.as_mut() {
            *l = p.predicted_log;
        }
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from a `pc_model_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pc_model_free(model: *mut PcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut plan = ptr::null_mut();
        let status = unsafe { pc_plan_parse(ptr::null(), &mut plan) };
        assert_eq!(status, PcStatus::NullArgument);
        assert!(plan.is_null());
        let msg = unsafe { CStr::from_ptr(pc_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "json is null");
    }

    #[test]
    fn success_clears_last_error() {
        unsafe { pc_plan_parse(ptr::null(), ptr::null_mut()) };
        assert!(!pc_last_error().is_null());
        let json = CString::new(
            r#"[{"Plan":{"Node Type":"Seq Scan","Startup Cost":0,"Total Cost":5,"Plan Rows":3,"Plan Width":4}}]"#,
        )
        .unwrap();
        let mut plan = ptr::null_mut();
        assert_eq!(unsafe { pc_plan_parse(json.as_ptr(), &mut plan) }, PcStatus::Ok);
        assert!(pc_last_error().is_null());
        let mut n = 0usize;
        assert_eq!(unsafe { pc_plan_node_count(plan, &mut n) }, PcStatus::Ok);
        assert_eq!(n, 1);
        unsafe { pc_plan_free(plan) };
    }

    #[test]
    fn version_matches_package() {
        let v = unsafe { CStr::from_ptr(pc_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
