//! End-to-end behaviour of the `perfhom` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn perfhom(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_perfhom"));
    cmd.args(args).env_remove("PERFHOM_CACHE").env("RUST_LOG", "info");
    if let Some(c) = cache {
        cmd.env("PERFHOM_CACHE", c);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_writes_one_row_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.toml", "[geometry]\nn = [4]\n[run]\nstudies = [\"rates\"]\n");
    let out = dir.path().join("out");
    let o = perfhom(&["run", &cfg, "--out", out.to_str().unwrap(), "--cache", dir.path().join("c").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 2, "{rates}");
    assert!(rates.starts_with("study,epsilon,h,h1_w,l2_err,lp_err_tau,sqfn,normalizer_g,normalizer_F,normalizer_gradF,theta"));
    assert!(out.join("monitors.csv").exists());
    assert!(out.join("perfhom.log").exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_pass"], true);
}

#[test]
fn bad_tau_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[geometry]\nn = [4]\n[rates]\ntau = 1.5\n");
    let o = perfhom(&["run", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("rates.tau") && msg.contains("line 4"), "{msg}");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for (text, field) in [
        ("[geometry]\nn = [8, 4]\n", "geometry.n"),
        ("[geometry]\nn = [4]\nbogus = 1\n", "bogus"),
        ("[geometry]\nn = [4]\n[discretization]\nh_per_eps = 4\n", "discretization.h_per_eps"),
    ] {
        let cfg = write(dir.path(), "c.toml", text);
        let o = perfhom(&["run", &cfg], None);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(field), "{}", stderr(&o));
    }
    let cfg = write(dir.path(), "ok.toml", "[geometry]\nn = [4]\n");
    let o = perfhom(&["run", &cfg, "--only", "nonsense"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--only"));
    let o = perfhom(&["run", &cfg, "--workers", "0"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.workers"));
    let o = perfhom(&["run", dir.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_cell_uses_the_cache_and_recovers_from_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write(dir.path(), "cell.toml", "[geometry]\nn = [4]\n[discretization]\ncell_h = 0.0625\n");
    let out = dir.path().join("out");
    let args = ["check-cell", cfg.as_str(), "--out", out.to_str().unwrap()];
    let cold = perfhom(&args, Some(&cache));
    assert!(stderr(&cold).contains("cache miss"), "{}", stderr(&cold));
    let cold_monitors = fs::read(out.join("monitors.csv")).unwrap();
    let warm = perfhom(&args, Some(&cache));
    assert!(stderr(&warm).contains("cache hit"), "{}", stderr(&warm));
    assert_eq!(cold.status.code(), warm.status.code());
    assert_eq!(fs::read(out.join("monitors.csv")).unwrap(), cold_monitors);

    // inject a residual above the threshold into the manifest
    let entry = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_dir()).unwrap();
    let manifest = entry.join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["diagnostics"]["chi_residual"] = serde_json::json!(1e-3);
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let again = perfhom(&args, Some(&cache));
    let log = stderr(&again);
    assert!(log.contains("recomputing") && log.contains("chi_residual"), "{log}");
    assert_eq!(fs::read(out.join("monitors.csv")).unwrap(), cold_monitors);
    let healed = perfhom(&args, Some(&cache));
    assert!(stderr(&healed).contains("cache hit"));
}

#[test]
fn cache_environment_variable_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let env_cache = dir.path().join("env");
    let flag_cache = dir.path().join("flag");
    let cfg = write(dir.path(), "min.toml", "[geometry]\nn = [4]\n[run]\nstudies = [\"rates\"]\n");
    let out = dir.path().join("out");
    let o = perfhom(&["run", &cfg, "--out", out.to_str().unwrap(), "--cache", flag_cache.to_str().unwrap()], Some(&env_cache));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_cache.exists());
    assert!(!flag_cache.exists());
}

#[test]
fn changing_h_misses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    for h in ["0.125", "0.0625"] {
        let cfg = write(dir.path(), "c.toml", &format!("[geometry]\nn = [4]\n[discretization]\ncell_h = {h}\n"));
        let o = perfhom(&["check-cell", &cfg, "--out", out.to_str().unwrap()], Some(&cache));
        assert!(stderr(&o).contains("cache miss"), "{}", stderr(&o));
    }
}
