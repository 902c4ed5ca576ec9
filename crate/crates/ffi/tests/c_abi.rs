use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// `target/<profile>`, where cargo puts the static library.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_public_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/histostyle.h")).unwrap();
    for name in [
        "hs_last_error_message",
        "hs_string_free",
        "hs_weights_load",
        "hs_weights_random",
        "hs_weights_free",
        "hs_image_load",
        "hs_image_save",
        "hs_image_center_crop",
        "hs_image_colorize",
        "hs_stylize",
        "hs_chi_square_gof",
        "hs_paired_t_test",
        "hs_report_json",
        "HS_STATUS_NULL_POINTER",
        "typedef struct HsImage HsImage",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = profile_dir().join("libhistostyle_ffi.a");
    assert!(
        lib.is_file(),
        "static library not found at {}",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(compiler)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C program failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("chi2 46.240000"), "{stdout}");
}
