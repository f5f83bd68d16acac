//! C ABI for mams-core.
//!
//! Chains and systems are opaque handles created by `*_new` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`MamsStatus`]; on failure the message is available from
//! [`mams_last_error_message`] on the same thread. Panics never cross the
//! boundary.
//!
//! # Safety
//!
//! All pointer arguments must be null or valid for the access implied by
//! their type and length argument. Handles must come from the matching
//! constructor and must not be used after being freed. Handles are not
//! synchronized: share one between threads only for concurrent reads.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mams_core::two_level::e_q_bounds;
use mams_core::{
    analyze_two_level, simulate, Error, MamsSystem as CoreSystem, MarkedChain, SimConfig, SystemSpec,
    Transition, TwoLevelParams,
};

/// Status codes. 1 to 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MamsStatus {
    Ok = 0,
    /// Malformed input such as a spec document that does not parse.
    ParseError = 1,
    /// Invalid or reducible chain, unstable system, bad parameter.
    DomainError = 2,
    NumericalError = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught; the handle involved should be freed.
    Panic = 6,
}

/// A marked Markov chain.
pub struct MamsChain(MarkedChain);

/// A stable queue built from an arrival chain and a completion chain.
pub struct MamsSystem(CoreSystem);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MamsBounds {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub explicit_term: f64,
    pub lower: f64,
    pub upper: f64,
    pub heavy_traffic_constant: f64,
    pub e_delta_arrival: f64,
    pub e_delta_completion: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MamsTwoLevelBounds {
    pub lambda: f64,
    pub rho: f64,
    pub delta_h: f64,
    pub delta_l: f64,
    pub e_delta_arrival: f64,
    pub heavy_traffic_constant: f64,
    pub lower: f64,
    pub upper_fast: f64,
    /// NaN unless `has_upper_slow`.
    pub upper_slow: f64,
    pub has_upper_slow: bool,
    pub upper: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MamsSimConfig {
    pub seed: u64,
    pub stream: u64,
    pub num_events: u64,
    pub warmup_fraction: f64,
    pub num_batches: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MamsEstimate {
    pub mean: f64,
    pub ci_half_width: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MamsSimResult {
    pub e_q: MamsEstimate,
    pub p_empty: MamsEstimate,
    pub unused_rate: MamsEstimate,
    pub e_u_term: MamsEstimate,
    pub drift: MamsEstimate,
    pub events: u64,
    pub arrivals: u64,
    pub completions: u64,
    pub simulated_time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(MamsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            1 => MamsStatus::ParseError,
            2 => MamsStatus::DomainError,
            _ => MamsStatus::NumericalError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MamsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MamsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            MamsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MamsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if len < needed {
        return Err(Failure(MamsStatus::BufferTooSmall, format!("buffer holds {len} values, {needed} needed")));
    }
    if p.is_null() {
        return Err(null("output buffer"));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the length of the
/// full message plus one, so a caller can size its buffer. `buf` may be
/// null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn mams_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mams_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds and validates a chain from parallel transition arrays. `labels`
/// may be null, in which case states are named "0", "1", ... On success
/// `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn mams_chain_new(
    num_states: usize,
    labels: *const *const c_char,
    num_transitions: usize,
    from: *const usize,
    to: *const usize,
    mark: *const u8,
    rate: *const f64,
    out: *mut *mut MamsChain,
) -> MamsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let states = if labels.is_null() {
            (0..num_states).map(|i| i.to_string()).collect()
        } else {
            slice(labels, num_states, "labels")?
                .iter()
                .map(|&p| {
                    if p.is_null() {
                        return Err(null("label"));
                    }
                    CStr::from_ptr(p)
                        .to_str()
                        .map(str::to_owned)
                        .map_err(|_| Failure(MamsStatus::ParseError, "label is not valid UTF-8".into()))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let from = slice(from, num_transitions, "from")?;
        let to = slice(to, num_transitions, "to")?;
        let mark = slice(mark, num_transitions, "mark")?;
        let rate = slice(rate, num_transitions, "rate")?;
        let transitions = (0..num_transitions)
            .map(|k| Transition::new(from[k], to[k], mark[k], rate[k]))
            .collect();
        let chain = MarkedChain::new(states, transitions);
        let report = chain.validate();
        if !report.is_valid() {
            return Err(Failure(MamsStatus::DomainError, report.to_string()));
        }
        *out = Box::into_raw(Box::new(MamsChain(chain)));
        Ok(())
    })
}

/// Releases a chain. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mams_chain_free(chain: *mut MamsChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of states, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mams_chain_num_states(chain: *const MamsChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.len())
}

/// Writes the stationary distribution into `pi` (capacity `len`) and the
/// long-run event rate into `event_rate` (may be null).
#[no_mangle]
pub unsafe extern "C" fn mams_chain_stationary(
    chain: *const MamsChain,
    pi: *mut f64,
    len: usize,
    event_rate: *mut f64,
) -> MamsStatus {
    guard(|| {
        let chain = chain.as_ref().ok_or_else(|| null("chain"))?;
        let dst = out_slice(pi, len, chain.0.len())?;
        let analysis = chain.0.analyze()?;
        dst.copy_from_slice(&analysis.pi);
        if !event_rate.is_null() {
            *event_rate = analysis.event_rate;
        }
        Ok(())
    })
}

/// Writes the relative values Δ (stationary mean zero) into `delta`.
#[no_mangle]
pub unsafe extern "C" fn mams_chain_relative_values(chain: *const MamsChain, delta: *mut f64, len: usize) -> MamsStatus {
    guard(|| {
        let chain = chain.as_ref().ok_or_else(|| null("chain"))?;
        let dst = out_slice(delta, len, chain.0.len())?;
        let analysis = chain.0.analyze()?;
        let rel = mams_core::solve_relative(&chain.0, &analysis)?;
        dst.copy_from_slice(&rel.delta);
        Ok(())
    })
}

/// Builds a system from two chains (which stay owned by the caller).
/// Fails with `DomainError` when the load is not below one.
#[no_mangle]
pub unsafe extern "C" fn mams_system_new(
    arrival: *const MamsChain,
    completion: *const MamsChain,
    out: *mut *mut MamsSystem,
) -> MamsStatus {
    guard(|| {
        let arrival = arrival.as_ref().ok_or_else(|| null("arrival"))?;
        let completion = completion.as_ref().ok_or_else(|| null("completion"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let system = CoreSystem::build(arrival.0.clone(), completion.0.clone())?;
        *out = Box::into_raw(Box::new(MamsSystem(system)));
        Ok(())
    })
}

/// Builds a system from a JSON spec document (NUL-terminated UTF-8).
#[no_mangle]
pub unsafe extern "C" fn mams_system_from_spec(spec_json: *const c_char, out: *mut *mut MamsSystem) -> MamsStatus {
    guard(|| {
        if spec_json.is_null() {
            return Err(null("spec_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(spec_json)
            .to_str()
            .map_err(|_| Failure(MamsStatus::ParseError, "spec is not valid UTF-8".into()))?;
        let scenario = SystemSpec::parse(text)?.resolve()?;
        let system = CoreSystem::build(scenario.arrival, scenario.completion)?;
        *out = Box::into_raw(Box::new(MamsSystem(system)));
        Ok(())
    })
}

/// Releases a system. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mams_system_free(system: *mut MamsSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mams_system_bounds(system: *const MamsSystem, out: *mut MamsBounds) -> MamsStatus {
    guard(|| {
        let s = &system.as_ref().ok_or_else(|| null("system"))?.0;
        let b = s.bounds();
        let value = MamsBounds {
            lambda: s.lambda,
            mu: s.mu,
            rho: s.rho,
            explicit_term: b.explicit_term,
            lower: b.lower,
            upper: b.upper,
            heavy_traffic_constant: b.heavy_traffic_constant,
            e_delta_arrival: b.e_delta_arrival_weighted,
            e_delta_completion: b.e_delta_comp_weighted,
        };
        write_out(out, value, "out")
    })
}

/// Default simulation settings.
#[no_mangle]
pub extern "C" fn mams_sim_config_default() -> MamsSimConfig {
    let c = SimConfig::default();
    MamsSimConfig {
        seed: c.seed,
        stream: c.stream,
        num_events: c.num_events,
        warmup_fraction: c.warmup_fraction,
        num_batches: c.num_batches,
    }
}

/// Simulates the system. `config` may be null for the defaults.
/// `e_u_term` is always defined since the system is stable.
#[no_mangle]
pub unsafe extern "C" fn mams_system_simulate(
    system: *const MamsSystem,
    config: *const MamsSimConfig,
    out: *mut MamsSimResult,
) -> MamsStatus {
    guard(|| {
        let s = &system.as_ref().ok_or_else(|| null("system"))?.0;
        let c = config.as_ref().copied().unwrap_or_else(|| mams_sim_config_default());
        let cfg = SimConfig {
            seed: c.seed,
            stream: c.stream,
            num_events: c.num_events,
            warmup_fraction: c.warmup_fraction,
            num_batches: c.num_batches,
            ..SimConfig::default()
        };
        let r = simulate(s, &cfg)?;
        let est = |e: &mams_core::SimEstimate| MamsEstimate { mean: e.mean, ci_half_width: e.ci_half_width };
        let value = MamsSimResult {
            e_q: est(&r.e_q),
            p_empty: est(&r.p_empty),
            unused_rate: est(&r.unused_rate),
            e_u_term: r.e_u_term.as_ref().map(est).unwrap_or_default(),
            drift: est(&r.drift),
            events: r.events,
            arrivals: r.arrivals,
            completions: r.completions,
            simulated_time: r.simulated_time,
        };
        write_out(out, value, "out")
    })
}

/// Closed-form analysis of the two-level arrival system with exponential
/// service. If `lambda_h < lambda_l` the levels are swapped.
#[no_mangle]
pub unsafe extern "C" fn mams_two_level_bounds(
    lambda_h: f64,
    lambda_l: f64,
    alpha_h: f64,
    alpha_l: f64,
    mu: f64,
    out: *mut MamsTwoLevelBounds,
) -> MamsStatus {
    guard(|| {
        let params = TwoLevelParams::new(lambda_h, lambda_l, alpha_h, alpha_l, mu)?;
        let a = analyze_two_level(&params)?;
        let q = e_q_bounds(&params, &a);
        let value = MamsTwoLevelBounds {
            lambda: a.lambda,
            rho: a.rho,
            delta_h: a.delta_h,
            delta_l: a.delta_l,
            e_delta_arrival: a.e_delta_arrival,
            heavy_traffic_constant: a.heavy_traffic_constant,
            lower: q.lower,
            upper_fast: q.upper_fast,
            upper_slow: q.upper_slow.unwrap_or(f64::NAN),
            has_upper_slow: q.upper_slow.is_some(),
            upper: q.upper,
        };
        write_out(out, value, "out")
    })
}
