//! C ABI over the structmask library.
//!
//! Every fallible function returns an [`SmStatus`]; on failure the message is
//! available from [`sm_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that must be released with their `_free`
//! function. Strings returned to the caller are released with
//! [`sm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use structmask::encoder::{forward, pair_count};
use structmask::latex::{decode_document, encode_document, extract_document, strip_noise, DocumentTree, Format};
use structmask::train::{load_checkpoint, save_checkpoint, Checkpoint, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    EmptyDocument = 5,
    IoError = 6,
    CorruptCheckpoint = 7,
    VersionMismatch = 8,
    ModelError = 9,
    Panic = 10,
}

/// Serialization formats accepted where a `format` argument is taken.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmFormat {
    Text = 0,
    Tree = 1,
}

/// Opaque document tree.
pub struct SmTree(DocumentTree);

/// Opaque model checkpoint.
pub struct SmCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (SmStatus, String);

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SmStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (SmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SmStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn format_arg(format: i32) -> Result<Format, Failure> {
    match format {
        0 => Ok(Format::Text),
        1 => Ok(Format::Tree),
        other => Err((SmStatus::InvalidArgument, format!("unknown format {other}"))),
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (SmStatus::InvalidArgument, "output contains a NUL byte".into()))
}

fn train_failure(e: TrainError) -> Failure {
    let status = match e {
        TrainError::Io(_) => SmStatus::IoError,
        TrainError::CorruptFile(_) => SmStatus::CorruptCheckpoint,
        TrainError::VersionMismatch { .. } => SmStatus::VersionMismatch,
        _ => SmStatus::ModelError,
    };
    (status, e.to_string())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Removes comments, floats, equations and math spans from LaTeX source.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_strip_noise(source: *const c_char, out: *mut *mut c_char) -> SmStatus {
    guard(|| {
        let source = str_arg(source, "source")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(strip_noise(source))?;
        Ok(())
    })
}

/// Extracts a document tree from raw LaTeX.
///
/// # Safety
/// `latex` and `doc_id` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_extract(
    latex: *const c_char,
    doc_id: *const c_char,
    out: *mut *mut SmTree,
) -> SmStatus {
    guard(|| {
        let latex = str_arg(latex, "latex")?;
        let doc_id = str_arg(doc_id, "doc_id")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tree = extract_document(latex, doc_id).map_err(|e| (SmStatus::EmptyDocument, e.to_string()))?;
        *out = Box::into_raw(Box::new(SmTree(tree)));
        Ok(())
    })
}

/// Decodes one document from `len` bytes in the given [`SmFormat`].
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_decode(data: *const u8, len: usize, format: i32, out: *mut *mut SmTree) -> SmStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let format = format_arg(format)?;
        let bytes = std::slice::from_raw_parts(data, len);
        let tree = decode_document(bytes, format).map_err(|e| (SmStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SmTree(tree)));
        Ok(())
    })
}

/// Encodes a tree; the result is freed with [`sm_string_free`].
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_encode(tree: *const SmTree, format: i32, out: *mut *mut c_char) -> SmStatus {
    guard(|| {
        let tree = tree.as_ref().ok_or_else(|| null("tree"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = encode_document(&tree.0, format_arg(format)?);
        let text = String::from_utf8(bytes).map_err(|e| (SmStatus::InvalidUtf8, e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Number of words in headings and bodies; 0 for NULL.
///
/// # Safety
/// `tree` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_word_count(tree: *const SmTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.root.word_count())
}

/// Number of nodes with a non-empty heading; 0 for NULL.
///
/// # Safety
/// `tree` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_header_count(tree: *const SmTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.root.header_count())
}

/// # Safety
/// `tree` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_tree_free(tree: *mut SmTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Allowed attention pairs for length `n`, total window `window` and the
/// `n_globals` global positions in `globals` (which may be NULL when zero).
///
/// # Safety
/// `globals` must point to `n_globals` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_pair_count(
    n: usize,
    window: usize,
    globals: *const usize,
    n_globals: usize,
    out: *mut u64,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let globals: &[usize] = if n_globals == 0 {
            &[]
        } else if globals.is_null() {
            return Err(null("globals"));
        } else {
            std::slice::from_raw_parts(globals, n_globals)
        };
        if !window.is_multiple_of(2) {
            return Err((SmStatus::InvalidArgument, format!("window {window} is odd")));
        }
        if let Some(g) = globals.iter().find(|&&g| g >= n) {
            return Err((SmStatus::InvalidArgument, format!("global position {g} out of range for length {n}")));
        }
        let mut sorted = globals.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        *out = pair_count(n, window, &sorted);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_load(path: *const c_char, out: *mut *mut SmCheckpoint) -> SmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = load_checkpoint(Path::new(path)).map_err(train_failure)?;
        *out = Box::into_raw(Box::new(SmCheckpoint(checkpoint)));
        Ok(())
    })
}

/// # Safety
/// `checkpoint` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_save(checkpoint: *const SmCheckpoint, path: *const c_char) -> SmStatus {
    guard(|| {
        let checkpoint = checkpoint.as_ref().ok_or_else(|| null("checkpoint"))?;
        let path = str_arg(path, "path")?;
        save_checkpoint(&checkpoint.0, Path::new(path)).map_err(train_failure)
    })
}

/// Training step count; 0 for NULL.
///
/// # Safety
/// `checkpoint` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_step(checkpoint: *const SmCheckpoint) -> u64 {
    checkpoint.as_ref().map_or(0, |c| c.0.step)
}

/// Vocabulary size of the model; 0 for NULL.
///
/// # Safety
/// `checkpoint` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_vocab_size(checkpoint: *const SmCheckpoint) -> usize {
    checkpoint.as_ref().map_or(0, |c| c.0.config().vocab_size)
}

/// Whether the model was trained with HEADER tokens as global tokens.
///
/// # Safety
/// `checkpoint` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_global_attention(checkpoint: *const SmCheckpoint) -> bool {
    checkpoint.as_ref().is_some_and(|c| c.0.global_attention)
}

/// Runs the encoder on `n` token ids and writes `n * vocab_size` logits,
/// row-major, into `logits`. `header_mask` may be NULL; when given, its
/// nonzero entries mark HEADER tokens, which are global only if the
/// checkpoint was trained that way.
///
/// # Safety
/// `ids` must hold `n` values, `header_mask` (if not NULL) `n` bytes, and
/// `logits` room for `logits_len` values.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_logits(
    checkpoint: *const SmCheckpoint,
    ids: *const u32,
    header_mask: *const u8,
    n: usize,
    logits: *mut f64,
    logits_len: usize,
) -> SmStatus {
    guard(|| {
        let checkpoint = checkpoint.as_ref().ok_or_else(|| null("checkpoint"))?;
        if ids.is_null() {
            return Err(null("ids"));
        }
        if logits.is_null() {
            return Err(null("logits"));
        }
        let vocab = checkpoint.0.config().vocab_size;
        if logits_len != n * vocab {
            return Err((
                SmStatus::InvalidArgument,
                format!("logits buffer holds {logits_len} values, need {}", n * vocab),
            ));
        }
        let ids = std::slice::from_raw_parts(ids, n);
        let mask: Vec<bool> = if header_mask.is_null() || !checkpoint.0.global_attention {
            vec![false; n]
        } else {
            std::slice::from_raw_parts(header_mask, n).iter().map(|&b| b != 0).collect()
        };
        let (out, _) = forward(&checkpoint.0.params, ids, &mask).map_err(|e| (SmStatus::ModelError, e.to_string()))?;
        let dst = std::slice::from_raw_parts_mut(logits, logits_len);
        for (d, s) in dst.iter_mut().zip(out.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `checkpoint` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_checkpoint_free(checkpoint: *mut SmCheckpoint) {
    if !checkpoint.is_null() {
        drop(Box::from_raw(checkpoint));
    }
}
