//! Compiles and runs a real C client against the generated header and
//! the static library, exercising the ABI end to end.

use std::path::PathBuf;
use std::process::Command;

const C_CLIENT: &str = r#"
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include "tempo4d.h"

int main(int argc, char **argv) {
    assert(argc == 2);
    T4dSequence *seq = NULL;
    T4dStatus st = t4d_sequence_load(argv[1], NULL, &seq);
    if (st != T4dStatus_Ok) {
        fprintf(stderr, "load failed: %s\n", t4d_last_error_message());
        return 1;
    }
    size_t frames = t4d_sequence_frame_count(seq);
    if (frames != 3) return 2;

    char *record = NULL;
    if (t4d_sequence_normalize(seq, 0, &record) != T4dStatus_Ok) return 3;
    t4d_string_free(record);

    T4dMetricParams params = t4d_metric_params_default();
    params.points_per_frame = 128;
    T4dReport *report = NULL;
    if (t4d_evaluate(seq, seq, &params, &report) != T4dStatus_Ok) return 4;
    double cd = t4d_report_get(report, T4dMetric_Cd);
    double f = t4d_report_get(report, T4dMetric_FScore);
    if (cd != 0.0 || f != 1.0) return 5;

    t4d_report_free(report);
    t4d_sequence_free(seq);
    printf("c-smoke ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from the crate root; the workspace target sits two up.
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    manifest.join("../../target/debug")
}

#[test]
fn c_client_links_and_runs() {
    let cc = which_cc();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let staticlib = target_dir().join("libtempo4d_ffi.a");
    assert!(
        staticlib.is_file(),
        "static library missing at {}",
        staticlib.display()
    );

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(&src, C_CLIENT).unwrap();

    // Fixture: three translated tetrahedra.
    let fixture = tmp.path().join("seq");
    std::fs::create_dir_all(&fixture).unwrap();
    for i in 0..3 {
        let o = i as f64 * 0.25;
        std::fs::write(
            fixture.join(format!("frame_{i:03}.obj")),
            format!(
                "v {o} 0 0\nv {} 0 0\nv {o} 1 0\nv {o} 0 1\nf 1 2 3\nf 1 2 4\nf 1 3 4\nf 2 3 4\n",
                o + 1.0
            ),
        )
        .unwrap();
    }

    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let bin = tmp.path().join("smoke");
    let compile = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(staticlib)
        .args(["-lm", "-lpthread", "-ldl"])
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin)
        .arg(&fixture)
        .output()
        .expect("smoke binary runs");
    assert!(
        run.status.success(),
        "smoke exited {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c-smoke ok"));
}

fn which_cc() -> Option<String> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
        {
            return Some(cc.to_string());
        }
    }
    None
}
