use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mams_ffi::*;

fn last_error() -> String {
    let needed = unsafe { mams_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; needed];
    unsafe { mams_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

/// Two-level chain H/L with the given rates.
fn two_level(lh: f64, ll: f64, ah: f64, al: f64) -> *mut MamsChain {
    let labels = [CString::new("H").unwrap(), CString::new("L").unwrap()];
    let label_ptrs: Vec<*const c_char> = labels.iter().map(|l| l.as_ptr()).collect();
    let from = [0usize, 1, 0, 1];
    let to = [0usize, 1, 1, 0];
    let mark = [1u8, 1, 0, 0];
    let rate = [lh, ll, ah, al];
    let mut out = ptr::null_mut();
    let status = unsafe {
        mams_chain_new(2, label_ptrs.as_ptr(), 4, from.as_ptr(), to.as_ptr(), mark.as_ptr(), rate.as_ptr(), &mut out)
    };
    assert_eq!(status, MamsStatus::Ok, "{}", last_error());
    out
}

fn poisson(rate: f64) -> *mut MamsChain {
    let mut out = ptr::null_mut();
    let status = unsafe { mams_chain_new(1, ptr::null(), 1, &0, &0, &1, &rate, &mut out) };
    assert_eq!(status, MamsStatus::Ok);
    out
}

#[test]
fn chain_stationary_and_relative_values() {
    let chain = two_level(2.0, 0.2, 0.5, 0.1);
    unsafe {
        assert_eq!(mams_chain_num_states(chain), 2);
        let mut pi = [0.0; 2];
        let mut lambda = 0.0;
        assert_eq!(mams_chain_stationary(chain, pi.as_mut_ptr(), 2, &mut lambda), MamsStatus::Ok);
        assert!((pi[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((lambda - 0.5).abs() < 1e-12);
        let mut delta = [0.0; 2];
        assert_eq!(mams_chain_relative_values(chain, delta.as_mut_ptr(), 2), MamsStatus::Ok);
        assert!((delta[0] - 2.5).abs() < 1e-10 && (delta[1] + 0.5).abs() < 1e-10);
        let mut small = [0.0; 1];
        assert_eq!(mams_chain_relative_values(chain, small.as_mut_ptr(), 1), MamsStatus::BufferTooSmall);
        assert!(last_error().contains("2 needed"));
        mams_chain_free(chain);
    }
}

#[test]
fn system_bounds_and_simulation() {
    let a = two_level(2.0, 0.2, 0.5, 0.1);
    let c = poisson(1.0);
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(mams_system_new(a, c, &mut sys), MamsStatus::Ok);
        mams_chain_free(a);
        mams_chain_free(c);
        let mut b = MamsBounds::default();
        assert_eq!(mams_system_bounds(sys, &mut b), MamsStatus::Ok);
        assert!((b.rho - 0.5).abs() < 1e-12);
        assert!((b.lower - 2.0).abs() < 1e-10 && (b.upper - 5.0).abs() < 1e-10);
        assert!((b.heavy_traffic_constant - 2.5).abs() < 1e-10);

        let mut cfg = mams_sim_config_default();
        cfg.num_events = 200_000;
        let mut r = MamsSimResult::default();
        assert_eq!(mams_system_simulate(sys, &cfg, &mut r), MamsStatus::Ok);
        assert!(r.e_q.mean > 1.0 && r.e_q.mean < 4.0);
        assert!(r.events > 150_000);
        let mut again = MamsSimResult::default();
        assert_eq!(mams_system_simulate(sys, &cfg, &mut again), MamsStatus::Ok);
        assert_eq!(r, again);

        cfg.num_batches = 1;
        assert_eq!(mams_system_simulate(sys, &cfg, &mut r), MamsStatus::ParseError);
        mams_system_free(sys);
    }
}

#[test]
fn unstable_system_is_a_domain_error() {
    let a = poisson(1.2);
    let c = poisson(1.0);
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(mams_system_new(a, c, &mut sys), MamsStatus::DomainError);
        assert!(sys.is_null());
        let msg = last_error();
        assert!(msg.contains("lambda") && msg.contains("mu"), "{msg}");
        mams_chain_free(a);
        mams_chain_free(c);
    }
}

#[test]
fn invalid_chain_is_rejected_at_construction() {
    let mut out = ptr::null_mut();
    let status = unsafe { mams_chain_new(2, ptr::null(), 1, &0, &1, &1, &1.0, &mut out) };
    assert_eq!(status, MamsStatus::DomainError);
    assert!(out.is_null());
    assert!(last_error().contains("reducible"), "{}", last_error());
    let status = unsafe { mams_chain_new(1, ptr::null(), 1, &0, &0, &1, &-1.0, &mut out) };
    assert_eq!(status, MamsStatus::DomainError);
}

#[test]
fn spec_documents() {
    let good = CString::new(r#"{ "two_level": { "lambda_h": 2, "lambda_l": 0.2, "alpha_h": 0.5, "alpha_l": 0.1, "mu": 1 } }"#).unwrap();
    let bad = CString::new(r#"{ "two_level": 3 "#).unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(mams_system_from_spec(good.as_ptr(), &mut sys), MamsStatus::Ok);
        let mut b = MamsBounds::default();
        assert_eq!(mams_system_bounds(sys, &mut b), MamsStatus::Ok);
        assert!((b.explicit_term - 2.5).abs() < 1e-10);
        mams_system_free(sys);
        let mut sys = ptr::null_mut();
        assert_eq!(mams_system_from_spec(bad.as_ptr(), &mut sys), MamsStatus::ParseError);
        assert!(last_error().contains("parse error"));
    }
}

#[test]
fn two_level_closed_form() {
    let mut b = MamsTwoLevelBounds::default();
    unsafe {
        assert_eq!(mams_two_level_bounds(2.0, 0.2, 5.0, 1.0, 1.0, &mut b), MamsStatus::Ok);
        assert!((b.lower - 1.1).abs() < 1e-12 && (b.upper_fast - 1.15).abs() < 1e-12);
        assert!(b.has_upper_slow && (b.upper_slow - 1.6).abs() < 1e-12);
        assert_eq!(mams_two_level_bounds(0.9, 0.2, 5.0, 1.0, 1.0, &mut b), MamsStatus::Ok);
        assert!(!b.has_upper_slow && b.upper_slow.is_nan());
        assert_eq!(mams_two_level_bounds(2.0, 0.2, -1.0, 1.0, 1.0, &mut b), MamsStatus::DomainError);
        assert_eq!(mams_two_level_bounds(2.0, 0.2, 5.0, 1.0, 1.0, ptr::null_mut()), MamsStatus::NullPointer);
    }
}

#[test]
fn null_handles() {
    unsafe {
        let mut b = MamsBounds::default();
        assert_eq!(mams_system_bounds(ptr::null(), &mut b), MamsStatus::NullPointer);
        assert_eq!(mams_chain_num_states(ptr::null()), 0);
        mams_chain_free(ptr::null_mut());
        mams_system_free(ptr::null_mut());
        let mut pi = [0.0; 1];
        assert_eq!(mams_chain_stationary(ptr::null(), pi.as_mut_ptr(), 1, ptr::null_mut()), MamsStatus::NullPointer);
    }
}

#[test]
fn error_message_truncates_and_reports_length() {
    unsafe {
        let mut b = MamsBounds::default();
        mams_system_bounds(ptr::null(), &mut b);
        let needed = mams_last_error_message(ptr::null_mut(), 0);
        let mut buf = [0 as c_char; 4];
        assert_eq!(mams_last_error_message(buf.as_mut_ptr(), 4), needed);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes(), b"sys");
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mams_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
