//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "usreport.h"

int main(void) {
    char *out = NULL;
    if (usr_normalize("a   b", &out) != USR_STATUS_OK || strcmp(out, "a b") != 0) return 1;
    usr_string_free(out);

    const char *hyps[] = {"a b c"};
    const char *refs[] = {"a b c d"};
    double b1 = 0.0;
    if (usr_bleu(hyps, refs, 1, USR_LANGUAGE_EN, 1, &b1) != USR_STATUS_OK) return 2;
    if (fabs(b1 - 0.7165) > 1e-4) return 3;

    if (usr_normalize(NULL, &out) != USR_STATUS_NULL_POINTER) return 4;
    char *msg = usr_last_error_message();
    if (msg == NULL) return 5;
    usr_string_free(msg);

    UsrTable *table = NULL;
    if (usr_table_load("/nonexistent/table.tsv", &table) != USR_STATUS_IO) return 6;
    printf("ok %s\n", usr_version());
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libusreport_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = work.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("run C compiler");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program exited with {:?}",
        out.status.code()
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
