use std::ffi::{c_char, CStr, CString};
use std::ptr;

use perfhom_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { perfhom_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(perfhom_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn corrector_set_round_trip() {
    let mut set = ptr::null_mut();
    let s = unsafe { perfhom_corrector_set_build(0.25, 1.0, 1.0, 0.125, &mut set) };
    assert_eq!(s, PerfhomStatus::Ok, "{}", last_error());
    assert!(!set.is_null());
    let mut a = [0.0; 16];
    let mut theta = 0.0;
    let mut diag = PerfhomCellDiagnostics::default();
    unsafe {
        assert_eq!(perfhom_corrector_set_effective_tensor(set, a.as_mut_ptr()), PerfhomStatus::Ok);
        assert_eq!(perfhom_corrector_set_theta(set, &mut theta), PerfhomStatus::Ok);
        assert_eq!(perfhom_corrector_set_diagnostics(set, &mut diag), PerfhomStatus::Ok);
    }
    // the hole removes about π/16 of the cell
    assert!((theta - (1.0 - std::f64::consts::PI / 16.0)).abs() < 0.01, "{theta}");
    // a_{11}^{11} is positive and a_{11}^{12} vanishes for isotropic material
    assert!(a[0] > 0.0 && a[1].abs() < 1e-8, "{a:?}");
    assert!(diag.chi_mean < 1e-10);

    let mut rep = PerfhomErrorReport::default();
    let s = unsafe { perfhom_error_report(set, 4, 8, 0.5, &mut rep) };
    assert_eq!(s, PerfhomStatus::Ok, "{}", last_error());
    assert_eq!(rep.epsilon, 0.25);
    assert!(rep.h1_w > 0.0 && rep.h1_w.is_finite());
    unsafe { perfhom_corrector_set_free(set) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut set = ptr::null_mut();
    let s = unsafe { perfhom_corrector_set_build(0.7, 1.0, 1.0, 0.125, &mut set) };
    assert_eq!(s, PerfhomStatus::Geometry);
    assert!(set.is_null());
    assert!(!last_error().is_empty());

    let s = unsafe { perfhom_corrector_set_theta(ptr::null(), ptr::null_mut()) };
    assert_eq!(s, PerfhomStatus::NullPointer);
    assert!(last_error().contains("set"));

    let text = CString::new("[geometry]\nn = [4]\n[rates]\ntau = 1.5\n").unwrap();
    let mut cfg = ptr::null_mut();
    let s = unsafe { perfhom_config_parse(text.as_ptr(), &mut cfg) };
    assert_eq!(s, PerfhomStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("rates.tau"));
    // freeing null is a no-op
    unsafe {
        perfhom_config_free(ptr::null_mut());
        perfhom_corrector_set_free(ptr::null_mut());
    }
}

#[test]
fn minimal_run_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let text = CString::new("[geometry]\nn = [4]\n[run]\nstudies = [\"rates\"]\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { perfhom_config_parse(text.as_ptr(), &mut cfg) }, PerfhomStatus::Ok, "{}", last_error());
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let cache = CString::new(dir.path().join("cache").to_str().unwrap()).unwrap();
    let mut outcome = PerfhomRunOutcome::default();
    let s = unsafe { perfhom_run(cfg, out.as_ptr(), cache.as_ptr(), &mut outcome) };
    assert_eq!(s, PerfhomStatus::Ok, "{}", last_error());
    assert_eq!(outcome.exit_code, 0);
    assert_eq!(outcome.gaps, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/rates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    unsafe { perfhom_config_free(cfg) };
}
