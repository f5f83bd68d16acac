//! Mean queue length of a single-server queue driven by an arrival chain and
//! an independent completion chain.
//!
//! With `E_A = E[Δ_A(Y_A^arrival)]` and `E_C = E[Δ_C(Y_C^comp)]` the mean
//! queue length is
//!
//! ```text
//! E[Q] = (ρ E_A + E_C + ρ) / (1 − ρ) + E_U[Δ_A(Y_A) − Δ_C(Y_C^comp)]
//! ```
//!
//! where the last term is an expectation at moments of unused service. It
//! is not available in closed form; it always lies in
//! `[Δ_A^min − Δ_C^max, Δ_A^max − Δ_C^min]`, which gives the bounds below.
//! The simulator estimates it directly.

use crate::chain::{ChainAnalysis, MarkedChain};
use crate::error::{Error, Result};
use crate::relative::{solve_relative, RelativeValues};

/// A chain together with its stationary analysis and relative values.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedChain {
    pub chain: MarkedChain,
    pub analysis: ChainAnalysis,
    pub relative: RelativeValues,
}

impl AnalyzedChain {
    pub fn new(chain: MarkedChain) -> Result<Self> {
        let analysis = chain.analyze()?;
        let relative = solve_relative(&chain, &analysis)?;
        Ok(AnalyzedChain { chain, analysis, relative })
    }

    pub fn event_rate(&self) -> f64 {
        self.analysis.event_rate
    }

    /// E[Δ(Y^event)]; zero for a chain without events.
    pub fn event_weighted_delta(&self) -> f64 {
        self.analysis
            .event_weighted_dist
            .as_deref()
            .map_or(0.0, |w| self.relative.weighted_mean(w))
    }

    /// Σ_j rate(i→j, mark 1)·Δ(j) for each state i.
    pub fn event_delta_flux(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.chain.len()];
        for t in self.chain.transitions().iter().filter(|t| t.is_event()) {
            out[t.from] += t.rate * self.relative.delta[t.to];
        }
        out
    }
}

/// A stable queue: arrival chain, completion chain and load ρ = λ/μ < 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MamsSystem {
    pub arrival: AnalyzedChain,
    pub completion: AnalyzedChain,
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl MamsSystem {
    pub fn build(arrival: MarkedChain, completion: MarkedChain) -> Result<Self> {
        let arrival = AnalyzedChain::new(arrival)?;
        let completion = AnalyzedChain::new(completion)?;
        Self::from_analyzed(arrival, completion)
    }

    pub fn from_analyzed(arrival: AnalyzedChain, completion: AnalyzedChain) -> Result<Self> {
        let lambda = arrival.event_rate();
        let mu = completion.event_rate();
        if lambda <= 0.0 {
            return Err(Error::Domain("arrival chain has no mark-1 transitions (lambda = 0)".into()));
        }
        if mu <= 0.0 {
            return Err(Error::Domain("completion chain has no mark-1 transitions (mu = 0)".into()));
        }
        let rho = lambda / mu;
        if rho >= 1.0 {
            return Err(Error::Unstable { lambda, mu, rho });
        }
        Ok(MamsSystem { arrival, completion, lambda, mu, rho })
    }

    pub fn bounds(&self) -> QueueLengthBounds {
        bounds(self)
    }

    pub fn drift_self_check(&self, state: SystemState) -> DriftCheck {
        drift_self_check(self, state)
    }
}

pub fn build_system(arrival: MarkedChain, completion: MarkedChain) -> Result<MamsSystem> {
    MamsSystem::build(arrival, completion)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueLengthBounds {
    /// (ρ E_A + E_C + ρ)/(1 − ρ).
    pub explicit_term: f64,
    pub lower: f64,
    pub upper: f64,
    /// Limit of (1 − ρ) E[Q] as ρ → 1 with the chains' shape fixed.
    pub heavy_traffic_constant: f64,
    pub e_delta_arrival_weighted: f64,
    pub e_delta_comp_weighted: f64,
}

pub fn bounds(system: &MamsSystem) -> QueueLengthBounds {
    let rho = system.rho;
    let ea = system.arrival.event_weighted_delta();
    let ec = system.completion.event_weighted_delta();
    let explicit_term = (rho * ea + ec + rho) / (1.0 - rho);
    let ra = &system.arrival.relative;
    let rc = &system.completion.relative;
    QueueLengthBounds {
        explicit_term,
        lower: explicit_term + ra.min_value - rc.max_value,
        upper: explicit_term + ra.max_value - rc.min_value,
        heavy_traffic_constant: ea + ec + 1.0,
        e_delta_arrival_weighted: ea,
        e_delta_comp_weighted: ec,
    }
}

/// Queue length plus the two modulating-chain states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub q: u64,
    pub arrival: usize,
    pub completion: usize,
}

impl SystemState {
    pub fn new(q: u64, arrival: usize, completion: usize) -> Self {
        SystemState { q, arrival, completion }
    }
}

/// Drift of the test function `q(q + 2Δ_A(i_A) − 2Δ_C(i_C))`, split into
/// its arrival and completion parts, by two routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    /// Simplified closed form of the arrival part.
    pub g_a: f64,
    /// Simplified closed form of the completion part.
    pub g_c: f64,
    /// Arrival part summed transition by transition.
    pub g_a_direct: f64,
    /// Completion part summed transition by transition.
    pub g_c_direct: f64,
}

impl DriftCheck {
    pub fn total(&self) -> f64 {
        self.g_a + self.g_c
    }

    pub fn discrepancy(&self) -> f64 {
        (self.g_a - self.g_a_direct).abs().max((self.g_c - self.g_c_direct).abs())
    }
}

pub fn drift_self_check(system: &MamsSystem, state: SystemState) -> DriftCheck {
    let (g_a, g_c) = drift_closed_form(system, state);
    let (g_a_direct, g_c_direct) = drift_direct(system, state);
    DriftCheck { g_a, g_c, g_a_direct, g_c_direct }
}

/// g_A = 2λq + (1 − 2Δ_C(i_C))λ_{i_A} + 2Σ_j r_{i_A,j,1}Δ_A(j)
/// g_C = −2μq + ((1 − 2Δ_A(i_A))μ_{i_C} + 2Σ_j s_{i_C,j,1}Δ_C(j))·1{q>0}
pub fn drift_closed_form(system: &MamsSystem, state: SystemState) -> (f64, f64) {
    let q = state.q as f64;
    let (ia, ic) = (state.arrival, state.completion);
    let da = &system.arrival.relative.delta;
    let dc = &system.completion.relative.delta;
    let lambda_i = system.arrival.analysis.per_state_event_rate[ia];
    let mu_i = system.completion.analysis.per_state_event_rate[ic];
    let flux_a: f64 = event_flux(&system.arrival.chain, ia, da);
    let flux_c: f64 = event_flux(&system.completion.chain, ic, dc);

    let g_a = 2.0 * system.lambda * q + (1.0 - 2.0 * dc[ic]) * lambda_i + 2.0 * flux_a;
    let busy = if state.q > 0 { 1.0 } else { 0.0 };
    let g_c = -2.0 * system.mu * q + ((1.0 - 2.0 * da[ia]) * mu_i + 2.0 * flux_c) * busy;
    (g_a, g_c)
}

fn event_flux(chain: &MarkedChain, from: usize, delta: &[f64]) -> f64 {
    chain
        .transitions()
        .iter()
        .filter(|t| t.from == from && t.is_event())
        .map(|t| t.rate * delta[t.to])
        .sum()
}

/// The generator applied to the test function, one transition at a time.
pub fn drift_direct(system: &MamsSystem, state: SystemState) -> (f64, f64) {
    let da = &system.arrival.relative.delta;
    let dc = &system.completion.relative.delta;
    let f = |q: f64, ia: usize, ic: usize| q * (q + 2.0 * da[ia] - 2.0 * dc[ic]);
    let q = state.q as f64;
    let (ia, ic) = (state.arrival, state.completion);
    let here = f(q, ia, ic);

    let g_a = system
        .arrival
        .chain
        .transitions()
        .iter()
        .filter(|t| t.from == ia)
        .map(|t| t.rate * (f(q + f64::from(t.mark), t.to, ic) - here))
        .sum();
    let g_c = system
        .completion
        .chain
        .transitions()
        .iter()
        .filter(|t| t.from == ic)
        .map(|t| {
            let next = state.q.saturating_sub(u64::from(t.mark)) as f64;
            t.rate * (f(next, ia, t.to) - here)
        })
        .sum();
    (g_a, g_c)
}
