//! The generated header compiles as C and C++, and links when the static
//! library is present.

use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = crate_dir().join("include");
    let src = crate_dir().join("tests/c/smoke.c");
    assert!(include.join("perfhom.h").exists(), "build script writes the header");
    for (tool, std) in [("cc", "-std=c99"), ("c++", "-std=c++11")] {
        if !have(tool) {
            eprintln!("{tool} not found; skipping");
            continue;
        }
        let mut cmd = Command::new(tool);
        cmd.args([std, "-Wall", "-Werror", "-fsyntax-only", "-I"]).arg(&include);
        if tool == "c++" {
            cmd.args(["-x", "c++"]);
        }
        let out = cmd.arg(&src).output().unwrap();
        assert!(out.status.success(), "{tool}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary> → target/<profile>
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libperfhom_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping link test");
        return;
    };
    if !have("cc") {
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .args(["-std=c99", "-I"])
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "link: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.starts_with("theta "), "{text}");
}
