//! C ABI over `ilab`. Every fallible call returns an [`IlabStatus`]; the
//! message of the most recent failure on the calling thread is available
//! from [`ilab_last_error`]. Handles are opaque and owned by the caller
//! until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use ilab::behavior::{wh_licensing, SurprisalQuad};
use ilab::harness::{emit_report, run_dir, run_experiment, ExperimentSpec};
use ilab::lm::{checkpoint, surprisal, Checkpoint};
use ilab::LabError;

/// Result code of every fallible call. `ILAB_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    Dimension = 10,
    Index = 11,
    Contract = 12,
    Config = 13,
    Patch = 14,
    Format = 15,
    Input = 16,
    Spec = 17,
    Capacity = 18,
    Parse = 19,
    Lexicon = 20,
    Schema = 21,
    Degenerate = 22,
    Alignment = 23,
    Pairing = 24,
    Projection = 25,
    Report = 26,
    Io = 27,
    Json = 28,
    Csv = 29,
}

impl From<&LabError> for IlabStatus {
    fn from(e: &LabError) -> Self {
        match e {
            LabError::Dimension(_) => IlabStatus::Dimension,
            LabError::Index(_) => IlabStatus::Index,
            LabError::Contract(_) => IlabStatus::Contract,
            LabError::Config(_) => IlabStatus::Config,
            LabError::Patch(_) => IlabStatus::Patch,
            LabError::Format(_) => IlabStatus::Format,
            LabError::Input(_) => IlabStatus::Input,
            LabError::Spec(_) => IlabStatus::Spec,
            LabError::Capacity { .. } => IlabStatus::Capacity,
            LabError::Parse { .. } => IlabStatus::Parse,
            LabError::Lexicon(_) => IlabStatus::Lexicon,
            LabError::Schema(_) => IlabStatus::Schema,
            LabError::Degenerate(_) => IlabStatus::Degenerate,
            LabError::Alignment(_) => IlabStatus::Alignment,
            LabError::Pairing(_) => IlabStatus::Pairing,
            LabError::Projection(_) => IlabStatus::Projection,
            LabError::Report(_) => IlabStatus::Report,
            LabError::Io { .. } => IlabStatus::Io,
            LabError::Json(_) => IlabStatus::Json,
            LabError::Csv(_) => IlabStatus::Csv,
        }
    }
}

/// A loaded checkpoint: 64-bit weights and, if saved, the vocabulary.
pub struct IlabModel {
    inner: Checkpoint<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(IlabStatus, String);

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure(IlabStatus::from(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn record(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, turning errors and panics into a status and recording the message.
fn guard(f: impl FnOnce() -> Outcome) -> IlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IlabStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            record(message);
            status
        }
        Err(_) => {
            record("panic inside ilab".into());
            IlabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(IlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(IlabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const IlabModel) -> Result<&'a IlabModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `s` with a trailing NUL into `buf`. `*len` receives the byte
/// length without the NUL even when the buffer is too small.
unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, len: *mut usize) -> Outcome {
    *out_arg(len, "len")? = s.len();
    if cap < s.len() + 1 {
        return Err(Failure(IlabStatus::BufferTooSmall, format!("need {} bytes, have {cap}", s.len() + 1)));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Static name of a status code, such as `"format"`.
#[no_mangle]
pub extern "C" fn ilab_status_name(status: IlabStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IlabStatus::Ok => c"ok",
        IlabStatus::NullPointer => c"null_pointer",
        IlabStatus::InvalidUtf8 => c"invalid_utf8",
        IlabStatus::BufferTooSmall => c"buffer_too_small",
        IlabStatus::Panic => c"panic",
        IlabStatus::Dimension => c"dimension",
        IlabStatus::Index => c"index",
        IlabStatus::Contract => c"contract",
        IlabStatus::Config => c"config",
        IlabStatus::Patch => c"patch",
        IlabStatus::Format => c"format",
        IlabStatus::Input => c"input",
        IlabStatus::Spec => c"spec",
        IlabStatus::Capacity => c"capacity",
        IlabStatus::Parse => c"parse",
        IlabStatus::Lexicon => c"lexicon",
        IlabStatus::Schema => c"schema",
        IlabStatus::Degenerate => c"degenerate",
        IlabStatus::Alignment => c"alignment",
        IlabStatus::Pairing => c"pairing",
        IlabStatus::Projection => c"projection",
        IlabStatus::Report => c"report",
        IlabStatus::Io => c"io",
        IlabStatus::Json => c"json",
        IlabStatus::Csv => c"csv",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf`. Returns the
/// message length without the NUL; 0 when there is none. Truncates to
/// `cap - 1` bytes.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ilab_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads a checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ilab_model_load(path: *const c_char, out: *mut *mut IlabModel) -> IlabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let inner = checkpoint::load::<f64>(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(IlabModel { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `model` must come from [`ilab_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ilab_model_free(model: *mut IlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Shape of a loaded model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IlabModelInfo {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// Nonzero when the checkpoint carries a vocabulary.
    pub has_vocab: u8,
}

/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ilab_model_info(model: *const IlabModel, out: *mut IlabModelInfo) -> IlabStatus {
    guard(|| {
        let m = model_arg(model)?;
        let c = m.inner.params.config;
        *out_arg(out, "out")? = IlabModelInfo {
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            d_model: c.d_model,
            d_mlp: c.d_mlp,
            vocab_size: c.vocab_size,
            max_seq_len: c.max_seq_len,
            has_vocab: m.inner.vocab.is_some() as u8,
        };
        Ok(())
    })
}

/// Encodes whitespace-separated words with the checkpoint's vocabulary.
/// `*len` receives the token count; `ILAB_STATUS_BUFFER_TOO_SMALL` when it
/// exceeds `cap`.
///
/// # Safety
/// `text` must be NUL-terminated; `ids` valid for `cap` writes; `len` valid.
#[no_mangle]
pub unsafe extern "C" fn ilab_model_encode(
    model: *const IlabModel,
    text: *const c_char,
    ids: *mut usize,
    cap: usize,
    len: *mut usize,
) -> IlabStatus {
    guard(|| {
        let m = model_arg(model)?;
        let vocab = m.inner.vocab.as_ref().ok_or_else(|| Failure(IlabStatus::Input, "checkpoint carries no vocabulary".into()))?;
        let encoded = vocab.encode(str_arg(text, "text")?)?;
        *out_arg(len, "len")? = encoded.len();
        if encoded.len() > cap {
            return Err(Failure(IlabStatus::BufferTooSmall, format!("{} tokens, capacity {cap}", encoded.len())));
        }
        if !encoded.is_empty() {
            if ids.is_null() {
                return Err(null("ids"));
            }
            std::ptr::copy_nonoverlapping(encoded.as_ptr(), ids, encoded.len());
        }
        Ok(())
    })
}

/// Surprisal in nats of `label` after `prefix`.
///
/// # Safety
/// `prefix` must be valid for `len` reads; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ilab_model_surprisal(
    model: *const IlabModel,
    prefix: *const usize,
    len: usize,
    label: usize,
    out: *mut f64,
) -> IlabStatus {
    guard(|| {
        let m = model_arg(model)?;
        let prefix = slice_arg(prefix, len, "prefix")?;
        *out_arg(out, "out")? = surprisal(&m.inner.params, prefix, label)?;
        Ok(())
    })
}

/// `(S(l_th|wh) − S(l_th|th)) − (S(l_wh|wh) − S(l_wh|th))`.
#[no_mangle]
pub extern "C" fn ilab_wh_licensing(s_th_wh: f64, s_th_th: f64, s_wh_wh: f64, s_wh_th: f64) -> f64 {
    wh_licensing(&SurprisalQuad::new(s_th_wh, s_th_th, s_wh_wh, s_wh_th))
}

/// `out = b + ((s − b)·a) a` for a unit `a`, all of length `n`.
///
/// # Safety
/// Each pointer must be valid for `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ilab_das_patch(b: *const f64, s: *const f64, a: *const f64, n: usize, out: *mut f64) -> IlabStatus {
    guard(|| {
        let r = ilab::das::das_patch(slice_arg(b, n, "b")?, slice_arg(s, n, "s")?, slice_arg(a, n, "a")?)?;
        if n > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::ptr::copy_nonoverlapping(r.as_ptr(), out, n);
        }
        Ok(())
    })
}

/// Runs the experiment described by a JSON config and writes the run
/// directory path into `buf`.
///
/// # Safety
/// `config` must be NUL-terminated; `buf` valid for `cap` bytes; `len` valid.
#[no_mangle]
pub unsafe extern "C" fn ilab_run_experiment(config: *const c_char, buf: *mut c_char, cap: usize, len: *mut usize) -> IlabStatus {
    guard(|| {
        let spec = ExperimentSpec::load(&path_arg(config, "config")?)?;
        run_experiment(&spec)?;
        let dir = run_dir(&spec)?;
        write_str(&dir.to_string_lossy(), buf, cap, len)
    })
}

/// Writes `report.html` into a finished run directory.
///
/// # Safety
/// `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ilab_emit_report(dir: *const c_char) -> IlabStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        emit_report(Path::new(&dir))?;
        Ok(())
    })
}
