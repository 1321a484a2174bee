//! Compiles a small C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "ggbm.h"

int main(void) {
    GgbmKernel *k = NULL;
    if (ggbm_kernel_parse("sub:alpha=0.8", &k) != GGBM_STATUS_OK) return 1;
    GgbmMarket m = { 100.0, 0.02, 0.2, 0.02 };
    double c = 0.0;
    if (ggbm_gbs_call(k, m, 100.0, 0.25, GGBM_MODE_RISK_NEUTRAL, GGBM_DISCOUNT_OPERATIONAL, &c) != GGBM_STATUS_OK) return 2;
    if (!(c > 0.0 && c < 100.0)) return 3;
    GgbmKernel *bad = NULL;
    if (ggbm_kernel_parse("sub:alpha=2", &bad) != GGBM_STATUS_DOMAIN || bad != NULL) return 4;
    if (ggbm_last_error() == NULL) return 5;
    ggbm_kernel_free(k);
    printf("%.12f\n", c);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libggbm_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let price: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(price > 1.0 && price < 10.0, "{price}");
}
