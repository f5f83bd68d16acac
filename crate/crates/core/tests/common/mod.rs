#![allow(dead_code)]

use mams_core::{MarkedChain, Transition, TwoLevelParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIN_RATE: f64 = 0.05;
pub const MAX_RATE: f64 = 20.0;

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random irreducible marked chain with 1 to 6 states and rates
/// log-uniform in [0.05, 20]. A random cycle through all states keeps it
/// irreducible; extra transitions and marks are random. At least one
/// transition is marked.
pub fn random_chain(seed: u64) -> MarkedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6usize);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges: Vec<(usize, usize, u8)> = Vec::new();
    let push = |edges: &mut Vec<(usize, usize, u8)>, from: usize, to: usize, mark: u8| {
        let mark = if from == to { 1 } else { mark };
        if !edges.contains(&(from, to, mark)) {
            edges.push((from, to, mark));
        }
    };
    if n > 1 {
        for k in 0..n {
            let mark = rng.random_range(0..2u8);
            push(&mut edges, order[k], order[(k + 1) % n], mark);
        }
    }
    let extra = rng.random_range(0..=n * 2);
    for _ in 0..extra {
        let from = rng.random_range(0..n);
        let to = rng.random_range(0..n);
        let mark = rng.random_range(0..2u8);
        push(&mut edges, from, to, mark);
    }
    if !edges.iter().any(|e| e.2 == 1) {
        let s = rng.random_range(0..n);
        push(&mut edges, s, s, 1);
    }
    let transitions = edges
        .into_iter()
        .map(|(f, t, m)| Transition::new(f, t, m, log_uniform(&mut rng, MIN_RATE, MAX_RATE)))
        .collect();
    MarkedChain::new((0..n).map(|i| format!("s{i}")).collect(), transitions)
}

/// Random two-level parameters with λ < μ.
pub fn random_two_level(seed: u64) -> TwoLevelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let lambda_h = log_uniform(&mut rng, MIN_RATE, MAX_RATE);
    let lambda_l = log_uniform(&mut rng, MIN_RATE, MAX_RATE);
    let alpha_h = log_uniform(&mut rng, MIN_RATE, MAX_RATE);
    let alpha_l = log_uniform(&mut rng, MIN_RATE, MAX_RATE);
    let lambda = (lambda_h * alpha_l + lambda_l * alpha_h) / (alpha_h + alpha_l);
    let rho = rng.random_range(0.05..0.95);
    TwoLevelParams::new(lambda_h, lambda_l, alpha_h, alpha_l, lambda / rho).unwrap()
}

/// The two-level arrival chain used throughout the examples.
pub fn fig3_arrival() -> MarkedChain {
    let (a, _) = mams_core::two_level::to_mams(&TwoLevelParams::new(2.0, 0.2, 0.5, 0.1, 1.0).unwrap());
    a
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
