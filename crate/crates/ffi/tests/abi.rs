use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use gridkernel::acpf::{generate_dataset, sample_injections, PfOptions, SolveCounter};
use gridkernel::gpr::{cold_start, fit, FitOptions};
use gridkernel::kernels::KernelSpec;
use gridkernel::netcase::{case30, neighborhoods, Topology};
use gridkernel_ffi::*;

fn last_error() -> String {
    let p = gk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn case_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/case30_ieee.m")
}

#[test]
fn case_handles_and_counts() {
    let path = CString::new(case_path().to_str().unwrap()).unwrap();
    let mut case: *mut GkCase = ptr::null_mut();
    assert_eq!(unsafe { gk_case_load(path.as_ptr(), &mut case) }, GkStatus::Ok);
    assert!(gk_last_error().is_null());
    unsafe {
        assert_eq!(gk_case_bus_count(case), 30);
        assert_eq!(gk_case_branch_count(case), 41);
        gk_case_free(case);
        assert_eq!(gk_case_bus_count(ptr::null()), 0);
        gk_case_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_carry_messages() {
    let mut case: *mut GkCase = ptr::null_mut();
    let missing = CString::new("/nonexistent/case.m").unwrap();
    assert_eq!(unsafe { gk_case_load(missing.as_ptr(), &mut case) }, GkStatus::Io);
    assert!(last_error().contains("/nonexistent/case.m"));
    assert!(case.is_null());
    assert_eq!(unsafe { gk_case_load(ptr::null(), &mut case) }, GkStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.m");
    std::fs::write(&bad, "mpc.bus = [ 1 3 x ];").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gk_case_load(bad.as_ptr(), &mut case) }, GkStatus::Format);
}

#[test]
fn power_flow_through_the_abi() {
    let mut case: *mut GkCase = ptr::null_mut();
    assert_eq!(unsafe { gk_case_ieee30(&mut case) }, GkStatus::Ok);
    let mut v = vec![0.0; 30];
    let mut iters = 0usize;
    let st = unsafe { gk_pf_solve(case, ptr::null(), 0, v.as_mut_ptr(), 30, &mut iters) };
    assert_eq!(st, GkStatus::Ok);
    assert!(iters <= 10);
    assert_eq!(v[0], 1.06);
    assert!((v[3] - 1.012300430170).abs() < 1e-8);

    let out = [12usize];
    let st = unsafe { gk_pf_solve(case, out.as_ptr(), 1, v.as_mut_ptr(), 30, ptr::null_mut()) };
    assert_eq!(st, GkStatus::Ok);
    assert!((v[3] - 1.0117354482516583).abs() < 1e-8);

    let st = unsafe { gk_pf_solve(case, ptr::null(), 0, v.as_mut_ptr(), 29, ptr::null_mut()) };
    assert_eq!(st, GkStatus::InvalidArgument);
    // a radial leaf outage islands a bus
    let leaf = [13usize];
    let st = unsafe { gk_pf_solve(case, leaf.as_ptr(), 1, v.as_mut_ptr(), 30, ptr::null_mut()) };
    assert_ne!(st, GkStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe { gk_case_free(case) };
}

#[test]
fn model_prediction_matches_the_library() {
    let case = case30();
    let topo = Topology::base(&case);
    let set = sample_injections(&case, 0.1, 20, 5).unwrap();
    let ds = generate_dataset(&case, &topo, &set.samples, &[4], &PfOptions::default(), &SolveCounter::new())
        .unwrap();
    let spec = KernelSpec::vdk(neighborhoods(&case, &topo));
    let model = fit(&ds.training_set(4).unwrap(), &spec, &cold_start(&spec), &FitOptions::iters(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut GkModel = ptr::null_mut();
    assert_eq!(unsafe { gk_model_load(cpath.as_ptr(), &mut h) }, GkStatus::Ok);
    assert_eq!(unsafe { gk_model_input_dim(h) }, 60);
    let probe = sample_injections(&case, 0.1, 3, 9).unwrap();
    for s in &probe.samples {
        let x = s.features();
        let (mut m, mut v) = (0.0, 0.0);
        let st = unsafe { gk_model_predict(h, x.as_ptr(), x.len(), &mut m, &mut v) };
        assert_eq!(st, GkStatus::Ok);
        let (em, ev) = model.predict(s).unwrap();
        assert!((m - em).abs() < 1e-12);
        assert!((v - ev).abs() < 1e-12);
    }
    let x = vec![0.0; 4];
    let (mut m, mut v) = (0.0, 0.0);
    assert_eq!(
        unsafe { gk_model_predict(h, x.as_ptr(), 4, &mut m, &mut v) },
        GkStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { gk_model_predict(ptr::null(), x.as_ptr(), 4, &mut m, &mut v) },
        GkStatus::NullPointer
    );
    unsafe { gk_model_free(h) };
}

#[test]
fn envelope_helpers() {
    let mut t = 0usize;
    assert_eq!(unsafe { gk_required_samples(0.02, 1e-4, &mut t) }, GkStatus::Ok);
    assert_eq!(t, 917);
    assert_eq!(unsafe { gk_required_samples(0.0, 1e-4, &mut t) }, GkStatus::InvalidArgument);
    assert!(last_error().contains("epsilon"));
    assert!((gk_gamma_tail(3.75) - 8.84e-5).abs() < 1e-7);
    assert!((gk_adjusted_confidence(1e-4, 3.75, 1000) - 0.9157).abs() < 5e-4);
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("gridkernel.h").exists());
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let lib = target_dir().join("libgridkernel_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "gridkernel.h"
int main(void) {
    GkCase *c = NULL;
    size_t t = 0;
    if (gk_case_ieee30(&c) != GK_STATUS_OK) return 1;
    double v[30];
    size_t it = 0;
    if (gk_pf_solve(c, NULL, 0, v, 30, &it) != GK_STATUS_OK) return 2;
    if (gk_required_samples(0.02, 1e-4, &t) != GK_STATUS_OK || t != 917) return 3;
    if (gk_pf_solve(c, NULL, 0, v, 3, &it) != GK_STATUS_INVALID_ARGUMENT) return 4;
    if (gk_last_error() == NULL) return 5;
    printf("%zu %.6f\n", gk_case_bus_count(c), v[3]);
    gk_case_free(c);
    return 0;
}
"#,
    )
    .unwrap();
    let check = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .output()
        .unwrap();
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stderr));
    if !lib.exists() {
        eprintln!("{} not built, skipping link step", lib.display());
        return;
    }
    let exe = dir.path().join("smoke");
    let link = Command::new("cc")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "30 1.012300");
}
