use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use mdp_approx_ffi::*;

fn last_error() -> String {
    let p = mdpa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

// Two states, two actions. Action 0 stays put, action 1 swaps.
fn toy(cost: [f64; 4], discount: f64) -> *mut MdpaMdp {
    let kernel = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let mut out = ptr::null_mut();
    let s = unsafe { mdpa_mdp_new_dense(2, 2, kernel.as_ptr(), cost.as_ptr(), discount, &mut out) };
    assert_eq!(s, MdpaStatus::Ok);
    out
}

#[test]
fn value_iteration_matches_a_hand_solution() {
    // State 1 costs 1 to stay, state 0 is free; moving costs 0.5.
    let m = toy([0.0, 0.5, 1.0, 0.5], 0.9);
    assert_eq!(unsafe { mdpa_mdp_n_states(m) }, 2);
    assert_eq!(unsafe { mdpa_mdp_n_actions(m) }, 2);
    let mut v = [0.0; 2];
    let mut pi = [9usize; 2];
    let s = unsafe { mdpa_value_iteration(m, 1e-12, 100_000, v.as_mut_ptr(), pi.as_mut_ptr()) };
    assert_eq!(s, MdpaStatus::Ok);
    assert_eq!(pi, [0, 1]);
    assert!(v[0].abs() < 1e-9);
    assert!((v[1] - 0.5).abs() < 1e-9);

    let mut pe = [0.0; 2];
    let stay = [0usize, 0];
    let s = unsafe { mdpa_policy_evaluation(m, stay.as_ptr(), 1e-12, 100_000, pe.as_mut_ptr()) };
    assert_eq!(s, MdpaStatus::Ok);
    assert!((pe[1] - 1.0 / 0.1).abs() < 1e-8);
    unsafe { mdpa_mdp_free(m) };
}

#[test]
fn kappa_of_a_swap_is_the_weight_ratio() {
    let m = toy([0.0; 4], 0.5);
    let w = [1.0, 3.0];
    let swap = [1usize, 1];
    let mut k = 0.0;
    assert_eq!(unsafe { mdpa_kappa_policy(m, swap.as_ptr(), w.as_ptr(), &mut k) }, MdpaStatus::Ok);
    assert!((k - 3.0).abs() < 1e-12);
    assert_eq!(unsafe { mdpa_kappa_model(m, w.as_ptr(), &mut k) }, MdpaStatus::Ok);
    assert!((k - 3.0).abs() < 1e-12);
    unsafe { mdpa_mdp_free(m) };
}

#[test]
fn identical_models_give_a_zero_bound() {
    let truth = toy([0.0, 0.5, 1.0, 0.5], 0.9);
    let approx = toy([0.0, 0.5, 1.0, 0.5], 0.9);
    let mut pair = ptr::null_mut();
    let s = unsafe { mdpa_pair_solve(truth, approx, 1e-12, 100_000, true, &mut pair) };
    assert_eq!(s, MdpaStatus::Ok);
    unsafe { mdpa_mdp_free(truth) };
    unsafe { mdpa_mdp_free(approx) };

    let w = [1.0, 1.0];
    let mut b = MdpaBound { bound: f64::NAN, kappa: 0.0, gamma_kappa: 0.0, realized: 0.0, status: -1 };
    let s = unsafe {
        mdpa_performance_loss_bound(pair, w.as_ptr(), 1.0, 1.0, 0.0, MdpaRoute::OptimalityApprox as u32, &mut b)
    };
    assert_eq!(s, MdpaStatus::Ok);
    assert_eq!(b.status, MDPA_CERTIFIED);
    assert!(b.bound.abs() < 1e-9 && b.realized.abs() < 1e-9);
    assert!((b.gamma_kappa - 0.9).abs() < 1e-12);

    let mut v = [f64::NAN; 2];
    assert_eq!(unsafe { mdpa_pair_deployed_value(pair, v.as_mut_ptr()) }, MdpaStatus::Ok);
    assert!((v[1] - 0.5).abs() < 1e-9);
    unsafe { mdpa_pair_free(pair) };
}

#[test]
fn unsolved_truth_reports_nan_realized() {
    let truth = toy([0.0, 0.5, 1.0, 0.5], 0.9);
    let approx = toy([0.0, 0.4, 1.0, 0.6], 0.9);
    let mut pair = ptr::null_mut();
    assert_eq!(unsafe { mdpa_pair_solve(truth, approx, 1e-12, 100_000, false, &mut pair) }, MdpaStatus::Ok);
    let w = [1.0, 1.0];
    let mut b = MdpaBound { bound: 0.0, kappa: 0.0, gamma_kappa: 0.0, realized: 0.0, status: -1 };
    let s = unsafe {
        mdpa_performance_loss_bound(pair, w.as_ptr(), 1.0, 1.0, 0.0, MdpaRoute::OpenLoopApprox as u32, &mut b)
    };
    assert_eq!(s, MdpaStatus::Ok);
    assert!(b.realized.is_nan());
    assert!(b.bound.is_finite() && b.bound > 0.0);
    unsafe {
        mdpa_pair_free(pair);
        mdpa_mdp_free(truth);
        mdpa_mdp_free(approx);
    }
}

#[test]
fn distances_match_hand_values() {
    let p = [0.5, 0.5, 0.0];
    let q = [0.0, 0.5, 0.5];
    let mut d = 0.0;
    let tv = MdpaIpmKind::TotalVariation as u32;
    assert_eq!(unsafe { mdpa_ipm_distance(tv, 3, p.as_ptr(), q.as_ptr(), ptr::null(), &mut d) }, MdpaStatus::Ok);
    assert!((d - 1.0).abs() < 1e-12);

    // Moving half the mass from 0 to 10 costs 5.
    let labels = [0.0, 1.0, 10.0];
    let wl = MdpaIpmKind::WassersteinLabels as u32;
    assert_eq!(unsafe { mdpa_ipm_distance(wl, 3, p.as_ptr(), q.as_ptr(), labels.as_ptr(), &mut d) }, MdpaStatus::Ok);
    assert!((d - 5.0).abs() < 1e-12);

    let metric = [0.0, 1.0, 10.0, 1.0, 0.0, 9.0, 10.0, 9.0, 0.0];
    let wm = MdpaIpmKind::WassersteinMatrix as u32;
    assert_eq!(unsafe { mdpa_ipm_distance(wm, 3, p.as_ptr(), q.as_ptr(), metric.as_ptr(), &mut d) }, MdpaStatus::Ok);
    assert!((d - 5.0).abs() < 1e-9);

    let w = [2.0, 1.0, 4.0];
    let wt = MdpaIpmKind::WeightedTotalVariation as u32;
    assert_eq!(unsafe { mdpa_ipm_distance(wt, 3, p.as_ptr(), q.as_ptr(), w.as_ptr(), &mut d) }, MdpaStatus::Ok);
    assert!((d - 3.0).abs() < 1e-12);
}

#[test]
fn noiseless_lqr_twin_is_certified_and_tight() {
    let a = [1.0, 0.1, 0.0, 1.0];
    let b = [0.0, 1.0];
    let eye = [1.0, 0.0, 0.0, 1.0];
    let r = [1.0];
    let sigma = [0.5, 0.0, 0.0, 0.5];
    let zero = [0.0; 4];
    let mut out = MdpaLqrBound {
        rho_d_star: 0.0,
        rho_d_pihat: 0.0,
        d_sigma: 0.0,
        alpha2: 0.0,
        kappa: 0.0,
        gamma_kappa: 0.0,
        bound: f64::NAN,
        certified: false,
    };
    let s = unsafe {
        mdpa_lqr_bound(
            2, 1, a.as_ptr(), b.as_ptr(), eye.as_ptr(), r.as_ptr(), sigma.as_ptr(), a.as_ptr(), b.as_ptr(),
            eye.as_ptr(), r.as_ptr(), zero.as_ptr(), 0.7, 0.01, f64::NAN, &mut out,
        )
    };
    assert_eq!(s, MdpaStatus::Ok, "{}", last_error());
    assert!(out.certified);
    assert!(out.bound <= 1e-9);
    assert!(out.d_sigma > 0.0);
    assert_eq!(out.alpha2, -out.d_sigma);
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut v = [0.0; 2];
    let s = unsafe { mdpa_value_iteration(ptr::null(), 1e-9, 10, v.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(s, MdpaStatus::NullPointer);
    assert!(last_error().contains("mdp"));

    let cost = [0.0; 4];
    let s = unsafe { mdpa_mdp_new_dense(2, 2, ptr::null(), cost.as_ptr(), 0.9, &mut ptr::null_mut()) };
    assert_eq!(s, MdpaStatus::NullPointer);
    assert!(last_error().contains("kernel"));

    assert_eq!(unsafe { mdpa_mdp_n_states(ptr::null()) }, 0);
    unsafe { mdpa_mdp_free(ptr::null_mut()) };
    unsafe { mdpa_pair_free(ptr::null_mut()) };
}

#[test]
fn bad_inputs_map_to_error_codes() {
    let kernel = [0.5, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let cost = [0.0; 4];
    let mut out = ptr::null_mut();
    let s = unsafe { mdpa_mdp_new_dense(2, 2, kernel.as_ptr(), cost.as_ptr(), 0.9, &mut out) };
    assert_eq!(s, MdpaStatus::InvalidInput);
    assert!(out.is_null());
    assert!(!last_error().is_empty());

    let m = toy([0.0; 4], 0.9);
    let bad = [0usize, 5];
    let mut v = [0.0; 2];
    let s = unsafe { mdpa_policy_evaluation(m, bad.as_ptr(), 1e-9, 100, v.as_mut_ptr()) };
    assert_ne!(s, MdpaStatus::Ok);
    unsafe { mdpa_mdp_free(m) };

    let p = [1.0, 0.0];
    let mut d = 0.0;
    let s = unsafe { mdpa_ipm_distance(42, 2, p.as_ptr(), p.as_ptr(), ptr::null(), &mut d) };
    assert_eq!(s, MdpaStatus::InvalidInput);
    assert!(last_error().contains("42"));

    // A successful call clears the message.
    let s = unsafe { mdpa_ipm_distance(0, 2, p.as_ptr(), p.as_ptr(), ptr::null(), &mut d) };
    assert_eq!(s, MdpaStatus::Ok);
    assert!(mdpa_last_error().is_null());
}

#[test]
fn unstabilizable_lqr_reports_failure() {
    let a = [1.0, 0.0, 0.0, 2.0];
    let b = [1.0, 0.0];
    let eye = [1.0, 0.0, 0.0, 1.0];
    let r = [1.0];
    let zero = [0.0; 4];
    let mut out = std::mem::MaybeUninit::<MdpaLqrBound>::uninit();
    let s = unsafe {
        mdpa_lqr_bound(
            2, 1, a.as_ptr(), b.as_ptr(), eye.as_ptr(), r.as_ptr(), zero.as_ptr(), a.as_ptr(), b.as_ptr(),
            eye.as_ptr(), r.as_ptr(), zero.as_ptr(), 0.9, 1.0, f64::NAN, out.as_mut_ptr(),
        )
    };
    assert!(matches!(s, MdpaStatus::Unstable | MdpaStatus::Convergence | MdpaStatus::InvalidInput), "{s:?}");
}

#[test]
fn header_declares_every_entry_point_and_parses_as_c() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mdp_approx.h");
    let header = std::fs::read_to_string(path).unwrap();
    for f in [
        "mdpa_last_error",
        "mdpa_mdp_new_dense",
        "mdpa_mdp_free",
        "mdpa_value_iteration",
        "mdpa_policy_evaluation",
        "mdpa_kappa_policy",
        "mdpa_kappa_model",
        "mdpa_pair_solve",
        "mdpa_pair_free",
        "mdpa_performance_loss_bound",
        "mdpa_ipm_distance",
        "mdpa_lqr_bound",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing");
    }
    // Only checked where a C compiler is installed.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", path]).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
