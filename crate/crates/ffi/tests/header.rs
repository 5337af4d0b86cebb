use std::path::Path;
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rfmr.h");
    std::fs::read_to_string(path).expect("build script writes the header")
}

#[test]
fn header_declares_the_public_surface() {
    let h = header();
    for decl in [
        "typedef struct RfmrModel RfmrModel;",
        "typedef struct RfmrTrajectory RfmrTrajectory;",
        "RFMR_STATUS_OK = 0",
        "RFMR_STATUS_PANIC",
        "rfmr_last_error_message(void)",
        "rfmr_model_new_constant(",
        "rfmr_model_new_sinusoidal(",
        "rfmr_model_free(",
        "rfmr_vector_field(",
        "rfmr_jacobian(",
        "rfmr_integrate(",
        "rfmr_trajectory_state(",
        "rfmr_solve_equilibrium(",
        "rfmr_integrate_to_equilibrium(",
        "rfmr_simulate_asep(",
    ] {
        assert!(h.contains(decl), "missing {decl}");
    }
}

#[test]
fn header_parses_as_c() {
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    if !probe.status.success() {
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"rfmr.h\"\nint main(void) { return rfmr_last_error_message() == 0 ? 0 : 1; }\n").unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
