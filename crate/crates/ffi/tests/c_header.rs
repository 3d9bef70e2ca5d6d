//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the path.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "converge.h"

int main(void) {
    ConvergePointCloud *cloud = NULL;
    ConvergeLaplacian *op = NULL;
    ConvergeEigenSystem *sys = NULL;
    double values[3];
    if (converge_point_cloud_sample(CONVERGE_MANIFOLD_CIRCLE, 256, 5, &cloud) != CONVERGE_STATUS_OK) return 1;
    if (converge_laplacian_build(cloud, CONVERGE_SCHEME_GAUSSIAN, 2.0, 0.0, &op) != CONVERGE_STATUS_OK) return 2;
    if (converge_eigensolve(op, 3, 1e-9, 1, false, &sys) != CONVERGE_STATUS_OK) return 3;
    if (converge_eigensystem_values(sys, values, 3) != CONVERGE_STATUS_OK) return 4;
    if (fabs(values[0]) > 1e-8) return 5;
    if (converge_eigensolve(op, 1000, 1e-9, 1, false, &sys) != CONVERGE_STATUS_INVALID_ARGUMENT) return 6;
    char msg[128];
    if (converge_last_error(msg, sizeof msg) == 0) return 7;
    printf("%.6f %.6f\n", values[1], values[2]);
    converge_eigensystem_free(sys);
    converge_laplacian_free(op);
    converge_point_cloud_free(cloud);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/converge.h")).unwrap();
    for name in [
        "typedef struct ConvergePointCloud ConvergePointCloud;",
        "CONVERGE_STATUS_CONVERGENCE_FAILURE = 3",
        "converge_point_cloud_sample",
        "converge_laplacian_matvec",
        "converge_eigensolve",
        "converge_filter_apply",
        "converge_run_experiment",
        "converge_last_error",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let lib = target_dir().join("libconverge_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(values.iter().all(|v| (0.5..1.5).contains(v)), "{values:?}");
}
