//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    Some(exe.parent()?.parent()?.to_path_buf())
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let Some(lib_dir) = target_dir() else { return };
    let lib = lib_dir.join("libanode_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "anode.h"

int main(void) {
    AnodeSystem *sys = NULL;
    if (anode_system_builtin("three-node", &sys) != ANODE_STATUS_OK) return 10;
    size_t nn, nx, nu, ny;
    if (anode_system_dimensions(sys, &nn, &nx, &nu, &ny) != ANODE_STATUS_OK) return 11;
    if (nn != 3 || nx != 9 || nu != 3 || ny != 6) return 12;
    AnodeSimulationParams p = {1.0, 0.01, 5.0, 0.2, 0.5, 7, 25.0, 8};
    AnodeTrajectory *traj = NULL;
    if (anode_simulate(sys, &p, &traj) != ANODE_STATUS_OK) return 13;
    double y[101 * 6];
    if (anode_trajectory_copy(traj, ANODE_CHANNEL_OUTPUTS, y, 101 * 6) != ANODE_STATUS_OK) return 14;
    if (fabs(y[1] - 1.0) > 0.1) return 15;
    double small[2];
    if (anode_trajectory_copy(traj, ANODE_CHANNEL_OUTPUTS, small, 2) != ANODE_STATUS_DIMENSION_MISMATCH) return 16;
    if (anode_last_error_message() == NULL) return 17;
    anode_trajectory_free(traj);
    anode_system_free(sys);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = work.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "C client exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
