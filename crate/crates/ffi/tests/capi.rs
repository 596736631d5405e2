use std::ffi::CStr;
use std::ptr;

use ppsel_ffi::*;

const WIN: PpselWindow = PpselWindow { x_min: 0.0, x_max: 500.0, y_min: 0.0, y_max: 250.0 };

fn covariates() -> *mut PpselCovariates {
    let mut cov = ptr::null_mut();
    let st = unsafe { ppsel_covariates_synth(1, 3, WIN, 51, 26, &mut cov) };
    assert_eq!(st, PpselStatus::Ok);
    cov
}

fn last_error() -> String {
    let p = ppsel_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_fit_and_score_round_trip() {
    unsafe {
        let cov = covariates();
        assert_eq!(ppsel_covariates_len(cov), 3);
        let beta = [0.8, -0.4, 0.0];
        let mut pat = ptr::null_mut();
        assert_eq!(ppsel_simulate_poisson(cov, beta.as_ptr(), 400.0, 5, &mut pat), PpselStatus::Ok);
        let n = ppsel_pattern_len(pat);
        assert!(n > 300 && n < 500, "{n}");

        let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(ppsel_pattern_coords(pat, xs.as_mut_ptr(), ys.as_mut_ptr(), n), PpselStatus::Ok);
        assert_eq!(
            ppsel_pattern_coords(pat, xs.as_mut_ptr(), ys.as_mut_ptr(), n - 1),
            PpselStatus::BufferTooSmall
        );

        // rebuilding the pattern from its coordinates gives the same fit
        let mut copy = ptr::null_mut();
        assert_eq!(ppsel_pattern_new(xs.as_ptr(), ys.as_ptr(), n, WIN, &mut copy), PpselStatus::Ok);

        let subset = [1u32, 2];
        let (mut f1, mut f2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ppsel_fit(pat, cov, subset.as_ptr(), 2, 1600, &mut f1), PpselStatus::Ok);
        assert_eq!(ppsel_fit(copy, cov, subset.as_ptr(), 2, 1600, &mut f2), PpselStatus::Ok);
        assert_eq!(ppsel_fit_dim(f1), 3);
        let (mut b1, mut b2) = ([0.0; 3], [0.0; 3]);
        let (mut l1, mut l2) = (0.0, 0.0);
        assert_eq!(ppsel_fit_coefficients(f1, b1.as_mut_ptr(), 3, &mut l1), PpselStatus::Ok);
        assert_eq!(ppsel_fit_coefficients(f2, b2.as_mut_ptr(), 3, &mut l2), PpselStatus::Ok);
        assert_eq!(b1, b2);
        assert_eq!(l1, l2);
        assert!((b1[1] - 0.8).abs() < 0.3 && (b1[2] + 0.4).abs() < 0.3, "{b1:?}");

        let mut c = PpselCriteria::default();
        assert_eq!(ppsel_fit_criteria(f1, cov, PpselPcf::Poisson, 0.0, 0.0, &mut c), PpselStatus::Ok);
        assert_eq!(c.p_l, 3);
        assert_eq!(c.cic, c.aic);
        assert_eq!(c.cbic, c.bic_n);
        assert!((c.aic - (-2.0 * l1 + 6.0)).abs() < 1e-9);
        let mut t = PpselCriteria::default();
        assert_eq!(ppsel_fit_criteria(f1, cov, PpselPcf::Thomas, 4e-4, 5.0, &mut t), PpselStatus::Ok);
        assert!(t.p_star > 3.0);

        let mut sel = ptr::null_mut();
        assert_eq!(ppsel_select(pat, cov, PpselPcf::Poisson, 1600, 20.0, &mut sel), PpselStatus::Ok);
        assert_eq!(ppsel_selection_len(sel), 8);
        let mut mask = 0u32;
        let mut ps = 0.0;
        assert_eq!(ppsel_selection_chosen(sel, PpselCriterion::BicN, &mut mask, &mut ps), PpselStatus::Ok);
        assert_eq!(mask & 0b011, 0b011);
        assert_eq!(ps, (mask.count_ones() + 1) as f64);

        ppsel_selection_free(sel);
        ppsel_fit_free(f1);
        ppsel_fit_free(f2);
        ppsel_pattern_free(copy);
        ppsel_pattern_free(pat);
        ppsel_covariates_free(cov);
    }
}

#[test]
fn thomas_simulation_is_seeded() {
    unsafe {
        let cov = covariates();
        let beta = [0.5, 0.0, 0.0];
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ppsel_simulate_thomas(cov, beta.as_ptr(), 300.0, 4e-4, 5.0, 7, &mut a), PpselStatus::Ok);
        assert_eq!(ppsel_simulate_thomas(cov, beta.as_ptr(), 300.0, 4e-4, 5.0, 7, &mut b), PpselStatus::Ok);
        let n = ppsel_pattern_len(a);
        assert_eq!(n, ppsel_pattern_len(b));
        let mut xa = vec![0.0; n];
        let mut ya = vec![0.0; n];
        let mut xb = vec![0.0; n];
        let mut yb = vec![0.0; n];
        ppsel_pattern_coords(a, xa.as_mut_ptr(), ya.as_mut_ptr(), n);
        ppsel_pattern_coords(b, xb.as_mut_ptr(), yb.as_mut_ptr(), n);
        assert_eq!((xa, ya), (xb, yb));
        ppsel_pattern_free(a);
        ppsel_pattern_free(b);
        ppsel_covariates_free(cov);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut cov = ptr::null_mut();
        let bad = PpselWindow { x_min: 1.0, x_max: 0.0, y_min: 0.0, y_max: 1.0 };
        assert_eq!(ppsel_covariates_synth(1, 2, bad, 11, 11, &mut cov), PpselStatus::InvalidWindow);
        assert!(cov.is_null());
        assert!(!last_error().is_empty());

        let xs = [600.0];
        let ys = [10.0];
        let mut pat = ptr::null_mut();
        assert_eq!(ppsel_pattern_new(xs.as_ptr(), ys.as_ptr(), 1, WIN, &mut pat), PpselStatus::OutOfWindow);

        assert_eq!(ppsel_pattern_new(ptr::null(), ys.as_ptr(), 1, WIN, &mut pat), PpselStatus::NullPointer);
        assert_eq!(last_error(), "null pointer argument");

        let cov = covariates();
        let mut empty = ptr::null_mut();
        assert_eq!(ppsel_pattern_new(ptr::null(), ptr::null(), 0, WIN, &mut empty), PpselStatus::Ok);
        let mut sel = ptr::null_mut();
        assert_eq!(ppsel_select(empty, cov, PpselPcf::Poisson, 64, 20.0, &mut sel), PpselStatus::EmptyPattern);

        let mut f = ptr::null_mut();
        let idx = [4u32];
        assert_eq!(ppsel_fit(empty, cov, idx.as_ptr(), 1, 64, &mut f), PpselStatus::InvalidArgument);

        // a constant covariate is rejected at standardization
        let flat = vec![1.0; 2 * 4 * 4];
        let mut c2 = ptr::null_mut();
        assert_eq!(
            ppsel_covariates_from_grids(WIN, 4, 4, 2, flat.as_ptr(), &mut c2),
            PpselStatus::DegenerateCovariate
        );

        // null handles are harmless in accessors and destructors
        assert_eq!(ppsel_pattern_len(ptr::null()), 0);
        ppsel_fit_free(ptr::null_mut());
        ppsel_pattern_free(empty);
        ppsel_covariates_free(cov);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/ppsel.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["PpselStatus", "PpselCriteria", "PpselWindow", "PPSEL_STATUS_OK = 0"] {
        assert!(header.contains(ty), "{ty}");
    }
}
