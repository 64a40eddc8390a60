use std::ffi::{c_char, CStr, CString};
use std::ptr;

use usreport_ffi::*;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { usr_string_free(s) };
    out
}

fn last_error() -> String {
    take(usr_last_error_message())
}

#[test]
fn normalize_and_segment() {
    let text = CString::new("ＣＦＤＩ  未见 异常").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { usr_normalize(text.as_ptr(), &mut out) }, UsrStatus::Ok);
    assert_eq!(take(out), "CFDI 未见 异常");
    assert!(usr_last_error_message().is_null());

    let text = CString::new("甲状腺大小正常，形态规则。").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { usr_segment_json(text.as_ptr(), UsrLanguage::Zh, &mut json) },
        UsrStatus::Ok
    );
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["normalized"], "形态规则");
}

#[test]
fn null_and_utf8_errors() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { usr_normalize(ptr::null(), &mut out) }, UsrStatus::NullPointer);
    assert!(last_error().contains("text"));
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { usr_normalize(bad.as_ptr().cast(), &mut out) },
        UsrStatus::InvalidUtf8
    );
    let text = CString::new("x").unwrap();
    assert_eq!(
        unsafe { usr_normalize(text.as_ptr(), ptr::null_mut()) },
        UsrStatus::NullPointer
    );
}

#[test]
fn table_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.tsv");
    std::fs::write(
        &path,
        "source\ttarget\tstatus\toccurrences\treviewer\tupdated_at\n\
         甲状腺大小正常\tthyroid size is normal\tapproved\t2\t\t\n\
         形态规则\tregular shape\tedited\t1\tr\t\n\
         包膜完整\tintact capsule\tpending\t1\t\t\n",
    )
    .unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { usr_table_load(c_path.as_ptr(), &mut table) }, UsrStatus::Ok);
    assert_eq!(unsafe { usr_table_len(table) }, 3);

    let text = CString::new("甲状腺大小正常，形态规则。").unwrap();
    let mut en = ptr::null_mut();
    assert_eq!(unsafe { usr_table_apply(table, text.as_ptr(), &mut en) }, UsrStatus::Ok);
    assert_eq!(take(en), "thyroid size is normal, regular shape.");

    let text = CString::new("甲状腺大小正常，包膜完整。").unwrap();
    assert_eq!(
        unsafe { usr_table_apply(table, text.as_ptr(), &mut en) },
        UsrStatus::Unresolved
    );
    assert!(last_error().contains("包膜完整"));

    unsafe { usr_table_free(table) };
    unsafe { usr_table_free(ptr::null_mut()) };
    assert_eq!(unsafe { usr_table_len(ptr::null()) }, 0);

    let missing = CString::new(dir.path().join("nope.tsv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { usr_table_load(missing.as_ptr(), &mut table) }, UsrStatus::Io);
    std::fs::write(&path, "source\ttarget\n").unwrap();
    assert_eq!(unsafe { usr_table_load(c_path.as_ptr(), &mut table) }, UsrStatus::Parse);
}

#[test]
fn metrics_over_string_arrays() {
    let hyps = [CString::new("a b c").unwrap()];
    let refs = [CString::new("a b c d").unwrap()];
    let hp: Vec<*const c_char> = hyps.iter().map(|s| s.as_ptr()).collect();
    let rp: Vec<*const c_char> = refs.iter().map(|s| s.as_ptr()).collect();
    let mut out = 0.0;
    assert_eq!(
        unsafe { usr_bleu(hp.as_ptr(), rp.as_ptr(), 1, UsrLanguage::En, 1, &mut out) },
        UsrStatus::Ok
    );
    assert!((out - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
    assert_eq!(
        unsafe { usr_bleu(hp.as_ptr(), rp.as_ptr(), 1, UsrLanguage::En, 7, &mut out) },
        UsrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { usr_rouge_l(hp.as_ptr(), rp.as_ptr(), 1, UsrLanguage::En, &mut out) },
        UsrStatus::Ok
    );
    assert!((out - 2.0 * 1.0 * 0.75 / 1.75).abs() < 1e-12);
    assert_eq!(
        unsafe { usr_cider(hp.as_ptr(), rp.as_ptr(), 1, UsrLanguage::En, 10.0, &mut out) },
        UsrStatus::Ok
    );
    assert_eq!(out, 0.0);
    assert_eq!(
        unsafe { usr_cider(ptr::null(), ptr::null(), 0, UsrLanguage::En, 10.0, &mut out) },
        UsrStatus::InvalidArgument
    );
}

#[test]
fn masked_loss() {
    let lp = [-5.0, -5.0, -std::f64::consts::LN_2];
    let sup = [false, false, true];
    let mut out = 0.0;
    assert_eq!(
        unsafe { usr_masked_loss(lp.as_ptr(), sup.as_ptr(), 3, &mut out) },
        UsrStatus::Ok
    );
    assert!((out - std::f64::consts::LN_2).abs() < 1e-12);
    let bad = [0.5, -1.0, -1.0];
    assert_eq!(
        unsafe { usr_masked_loss(bad.as_ptr(), sup.as_ptr(), 3, &mut out) },
        UsrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { usr_masked_loss(ptr::null(), ptr::null(), 0, &mut out) },
        UsrStatus::Ok
    );
    assert_eq!(out, 0.0);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(usr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
