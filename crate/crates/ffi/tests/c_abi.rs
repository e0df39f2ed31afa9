use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nalgebra::DVector;
use star_rz::star_solver::{discretize, solve_vector, SolverConfig};
use star_rz::{Case, RZModel, C64};
use star_rz_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(star_rz_last_error()) }.to_string_lossy().into_owned()
}

fn make_disc(case: u32, n: usize, m: usize) -> *mut StarRzDiscretization {
    let mut disc = ptr::null_mut();
    let st = unsafe { star_rz_discretize(case, n, m, -2.0, 3.0, &mut disc) };
    assert_eq!(st, StarRzStatus::Ok, "{}", last_error());
    disc
}

#[test]
fn state_matches_library() {
    let disc = make_disc(STAR_RZ_CASE_B, 6, 40);
    let (mut n, mut m, mut q) = (0, 0, 0);
    assert_eq!(unsafe { star_rz_discretization_shape(disc, &mut n, &mut m, &mut q) }, StarRzStatus::Ok);
    assert_eq!((n, m), (6, 40));
    assert!(q >= m);

    let re: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
    let im: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
    let opts = star_rz_solver_options_default();
    let mut sol = ptr::null_mut();
    let mut info = StarRzSolveInfo::default();
    let st = unsafe { star_rz_solve_vector(disc, re.as_ptr(), im.as_ptr(), n, &opts, &mut sol, &mut info) };
    assert_eq!(st, StarRzStatus::Ok, "{}", last_error());
    assert!(info.converged && info.iterations > 0 && info.max_rank > 0);

    let (mut or, mut oi) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { star_rz_state_evaluate(sol, 1.5, or.as_mut_ptr(), oi.as_mut_ptr(), n) }, StarRzStatus::Ok);

    let model = RZModel::preset(Case::B, n).unwrap().with_interval(-2.0, 3.0).unwrap();
    let d = discretize(&model, 40).unwrap();
    let psi0 = DVector::from_fn(n, |i, _| C64::new(re[i], im[i]));
    let (s, _) = solve_vector(&d, &psi0, &SolverConfig::default()).unwrap();
    let want = s.evaluate_state(1.5).unwrap();
    for i in 0..n {
        assert!((want[i] - C64::new(or[i], oi[i])).norm() < 1e-14);
    }

    assert_eq!(
        unsafe { star_rz_state_evaluate(sol, 9.0, or.as_mut_ptr(), oi.as_mut_ptr(), n) },
        StarRzStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { star_rz_state_evaluate(sol, 0.0, or.as_mut_ptr(), oi.as_mut_ptr(), n - 1) },
        StarRzStatus::InvalidArgument
    );
    unsafe {
        star_rz_state_free(sol);
        star_rz_discretization_free(disc);
    }
}

#[test]
fn operator_columns_are_unit_vectors() {
    let disc = make_disc(STAR_RZ_CASE_A, 4, 40);
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { star_rz_solve_operator(disc, ptr::null(), &mut sol, ptr::null_mut()) }, StarRzStatus::Ok);
    let (mut re, mut im) = (vec![0.0; 4], vec![0.0; 4]);
    for j in 0..4 {
        assert_eq!(unsafe { star_rz_operator_column(sol, 3.0, j, re.as_mut_ptr(), im.as_mut_ptr(), 4) }, StarRzStatus::Ok);
        let nrm: f64 = re.iter().chain(&im).map(|x| x * x).sum();
        assert!((nrm.sqrt() - 1.0).abs() < 1e-6);
    }
    assert_eq!(
        unsafe { star_rz_operator_column(sol, 3.0, 4, re.as_mut_ptr(), im.as_mut_ptr(), 4) },
        StarRzStatus::InvalidArgument
    );
    let (mut b, mut r) = (0.0, 0.0);
    assert_eq!(unsafe { star_rz_frobenius_bound(disc, 4, &mut b) }, StarRzStatus::Ok);
    assert_eq!(unsafe { star_rz_spectral_radius(disc, &mut r) }, StarRzStatus::Ok);
    assert!(r > 0.0 && r <= b * (1.0 + 1e-9));
    unsafe {
        star_rz_operator_free(sol);
        star_rz_discretization_free(disc);
    }
}

#[test]
fn bad_arguments_report_status() {
    let mut disc = ptr::null_mut();
    assert_eq!(unsafe { star_rz_discretize(9, 4, 20, 0.0, 1.0, &mut disc) }, StarRzStatus::InvalidArgument);
    assert!(last_error().contains("case id"));
    assert_eq!(unsafe { star_rz_discretize(0, 3, 20, 0.0, 1.0, &mut disc) }, StarRzStatus::InvalidArgument);
    assert_eq!(unsafe { star_rz_discretize(0, 4, 20, 1.0, 0.0, &mut disc) }, StarRzStatus::InvalidArgument);
    assert_eq!(unsafe { star_rz_discretize(0, 4, 20, 0.0, 1.0, ptr::null_mut()) }, StarRzStatus::NullPointer);
    assert!(disc.is_null());
    let mut x = 0.0;
    assert_eq!(unsafe { star_rz_spectral_radius(ptr::null(), &mut x) }, StarRzStatus::NullPointer);
    assert_eq!(unsafe { star_rz_frobenius_bound(ptr::null(), 2, &mut x) }, StarRzStatus::NullPointer);
    unsafe {
        star_rz_discretization_free(ptr::null_mut());
        star_rz_state_free(ptr::null_mut());
        star_rz_operator_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(star_rz_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("star_rz.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "star_rz_version",
        "star_rz_last_error",
        "star_rz_solver_options_default",
        "star_rz_discretize",
        "star_rz_discretization_free",
        "star_rz_discretization_shape",
        "star_rz_solve_vector",
        "star_rz_state_evaluate",
        "star_rz_state_free",
        "star_rz_solve_operator",
        "star_rz_operator_column",
        "star_rz_operator_free",
        "star_rz_frobenius_bound",
        "star_rz_spectral_radius",
        "STAR_RZ_STATUS_OK",
        "typedef struct StarRzDiscretization StarRzDiscretization",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "star_rz.h"

int main(void) {
    StarRzDiscretization *disc = NULL;
    if (star_rz_discretize(STAR_RZ_CASE_A, 4, 40, -2.0, 3.0, &disc) != STAR_RZ_STATUS_OK) return 1;
    double re[4] = {1, 0, 0, 0}, im[4] = {0, 0, 0, 0};
    StarRzState *sol = NULL;
    StarRzSolveInfo info;
    if (star_rz_solve_vector(disc, re, im, 4, NULL, &sol, &info) != STAR_RZ_STATUS_OK) return 2;
    double outr[4], outi[4];
    if (star_rz_state_evaluate(sol, 3.0, outr, outi, 4) != STAR_RZ_STATUS_OK) return 3;
    double nrm = 0;
    for (int i = 0; i < 4; i++) nrm += outr[i] * outr[i] + outi[i] * outi[i];
    if (star_rz_discretize(7, 4, 40, 0.0, 1.0, &disc) != STAR_RZ_STATUS_INVALID_ARGUMENT) return 4;
    printf("%d %.12f %s\n", info.converged, nrm, star_rz_last_error());
    star_rz_state_free(sol);
    star_rz_discretization_free(disc);
    return 0;
}
"#;

/// Compiles and runs a C client against the generated header and the
/// static library.
#[test]
fn c_client_links_and_runs() {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libstar_rz_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = std::env::temp_dir().join(format!("star_rz_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("client.c");
    let bin = dir.join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new("cc")
        .arg("-std=c11")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "client exited with {:?}", run.status.code());
    let text = String::from_utf8_lossy(&run.stdout);
    let parts: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(parts[0], "1");
    assert!((parts[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-6);
    assert!(text.contains("case id 7"));
    let _ = std::fs::remove_dir_all(&dir);
}
