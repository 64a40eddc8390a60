//! C ABI over the `usreport` library.
//!
//! Every fallible function returns a [`UsrStatus`] and writes its result
//! through an out-pointer. On failure a message is stored per thread and can be
//! fetched with [`usr_last_error_message`]. Strings returned to the caller are
//! owned by the caller and must be released with [`usr_string_free`]; tables
//! with [`usr_table_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use usreport::datasetgen::{compute_masked_loss, SegmentSpans, TokenSequence};
use usreport::lexicon::{apply_table, FragmentTable, JoinRule};
use usreport::metrics::{bleu, cider, rouge_l, BleuMode, TokenizedPair};
use usreport::segmenter::{normalize_text, segment_report, Delimiters};
use usreport::{Error, Language, Report, Site};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Unresolved = 6,
    ProtectedTerm = 7,
    Internal = 99,
}

/// Report language selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsrLanguage {
    Zh = 0,
    En = 1,
}

impl From<UsrLanguage> for Language {
    fn from(l: UsrLanguage) -> Self {
        match l {
            UsrLanguage::Zh => Language::Zh,
            UsrLanguage::En => Language::En,
        }
    }
}

/// Opaque handle to a loaded fragment table.
pub struct UsrTable {
    table: FragmentTable,
    delimiters: Delimiters,
    join: JoinRule,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(UsrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } | Error::MissingInput(_) | Error::Locked(_) => UsrStatus::Io,
            Error::Parse { .. } | Error::Config(_) => UsrStatus::Parse,
            Error::Unresolved { .. } => UsrStatus::Unresolved,
            Error::ProtectedTerms(_) => UsrStatus::ProtectedTerm,
            _ => UsrStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: UsrStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UsrStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            UsrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(UsrStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(UsrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .map_or_else(|| fail(UsrStatus::NullPointer, format!("{name} is null")), Ok)
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(UsrStatus::Internal, "output contains an interior NUL"))
}

unsafe fn string_array(p: *const *const c_char, len: usize, name: &str) -> Result<Vec<String>, Failure> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return fail(UsrStatus::NullPointer, format!("{name} is null"));
    }
    std::slice::from_raw_parts(p, len)
        .iter()
        .map(|&s| str_arg(s, name).map(str::to_string))
        .collect()
}

unsafe fn pairs(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    len: usize,
    language: UsrLanguage,
) -> Result<Vec<TokenizedPair>, Failure> {
    let hyps = string_array(hyps, len, "hyps")?;
    let refs = string_array(refs, len, "refs")?;
    Ok(hyps
        .iter()
        .zip(&refs)
        .map(|(h, r)| TokenizedPair::new(h, r, language.into()))
        .collect())
}

/// Message for the last failed call on this thread, or NULL. Free with
/// `usr_string_free`.
#[no_mangle]
pub extern "C" fn usr_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn usr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn usr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// NFKC plus whitespace collapsing.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn usr_normalize(text: *const c_char, out: *mut *mut c_char) -> UsrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(normalize_text(text))?;
        Ok(())
    })
}

/// Segments with the default delimiters; writes a JSON array of fragments.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn usr_segment_json(
    text: *const c_char,
    language: UsrLanguage,
    out_json: *mut *mut c_char,
) -> UsrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out_json, "out_json")?;
        let fragments = segment_report(text, language.into(), &Delimiters::default());
        let json = serde_json::to_string(&fragments).or_else(|e| fail(UsrStatus::Internal, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Loads a fragment table TSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn usr_table_load(path: *const c_char, out_table: *mut *mut UsrTable) -> UsrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out_table, "out_table")?;
        let table = FragmentTable::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(UsrTable {
            table,
            delimiters: Delimiters::default(),
            join: JoinRule::default(),
        }));
        Ok(())
    })
}

/// Releases a table. NULL is ignored.
///
/// # Safety
/// `table` must come from `usr_table_load` and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn usr_table_free(table: *mut UsrTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of entries, or 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn usr_table_len(table: *const UsrTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.len())
}

/// Translates a zh report through the table. Fails with `Unresolved` when any
/// fragment lacks an approved or edited entry.
///
/// # Safety
/// `table` must be a live handle, `zh_text` a NUL-terminated string and
/// `out_en` writable.
#[no_mangle]
pub unsafe extern "C" fn usr_table_apply(
    table: *const UsrTable,
    zh_text: *const c_char,
    out_en: *mut *mut c_char,
) -> UsrStatus {
    guard(|| {
        let Some(t) = table.as_ref() else {
            return fail(UsrStatus::NullPointer, "table is null");
        };
        let text = str_arg(zh_text, "zh_text")?;
        let out = out_arg(out_en, "out_en")?;
        let report = Report {
            id: String::new(),
            site: Site::Other(String::new()),
            language: Language::Zh,
            text: text.to_string(),
            images: Vec::new(),
        };
        let english = apply_table(&report, &t.table, &t.join, &t.delimiters)?;
        *out = into_c_string(english.text)?;
        Ok(())
    })
}

/// Corpus ROUGE-L (beta = 1) over `len` hypothesis/reference pairs.
///
/// # Safety
/// `hyps` and `refs` must each point to `len` NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn usr_rouge_l(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    len: usize,
    language: UsrLanguage,
    out: *mut f64,
) -> UsrStatus {
    guard(|| {
        let pairs = pairs(hyps, refs, len, language)?;
        let out = out_arg(out, "out")?;
        *out = rouge_l(&pairs, 1.0)?;
        Ok(())
    })
}

/// Corpus BLEU-n, n in 1..=4.
///
/// # Safety
/// As for `usr_rouge_l`.
#[no_mangle]
pub unsafe extern "C" fn usr_bleu(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    len: usize,
    language: UsrLanguage,
    n: u32,
    out: *mut f64,
) -> UsrStatus {
    guard(|| {
        let pairs = pairs(hyps, refs, len, language)?;
        let out = out_arg(out, "out")?;
        *out = bleu(&pairs, n as usize, BleuMode::Corpus)?;
        Ok(())
    })
}

/// Corpus CIDEr with the given scale.
///
/// # Safety
/// As for `usr_rouge_l`.
#[no_mangle]
pub unsafe extern "C" fn usr_cider(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    len: usize,
    language: UsrLanguage,
    scale: f64,
    out: *mut f64,
) -> UsrStatus {
    guard(|| {
        let pairs = pairs(hyps, refs, len, language)?;
        let out = out_arg(out, "out")?;
        *out = cider(&pairs, scale)?.score;
        Ok(())
    })
}

/// Negative log-likelihood summed over positions where `supervised[i]` is true.
///
/// # Safety
/// `logprobs` and `supervised` must each point to `len` elements (may be NULL
/// when `len` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn usr_masked_loss(
    logprobs: *const f64,
    supervised: *const bool,
    len: usize,
    out: *mut f64,
) -> UsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if len > 0 && (logprobs.is_null() || supervised.is_null()) {
            return fail(UsrStatus::NullPointer, "logprobs or supervised is null");
        }
        let (lp, sup): (&[f64], &[bool]) = if len == 0 {
            (&[], &[])
        } else {
            (
                std::slice::from_raw_parts(logprobs, len),
                std::slice::from_raw_parts(supervised, len),
            )
        };
        let seq = TokenSequence {
            tokens: vec![0; len],
            supervised: sup.to_vec(),
            spans: SegmentSpans {
                system: 0..0,
                image: 0..0,
                user: 0..0,
                target: 0..0,
            },
        };
        *out = compute_masked_loss(lp, &seq)?;
        Ok(())
    })
}
