//! Relative arrivals / relative completions.
//!
//! For a marked chain started in state `i`, `delta[i]` is the limit of the
//! expected number of events by time `t` minus `rate * t`. It is the
//! relative value function of the chain with reward `λ_i` per unit time, so
//! it solves the Poisson equation
//!
//! ```text
//! out_i * δ_i - Σ_{j≠i} r_{i,j} δ_j = λ_i - λ        for every state i
//! Σ_i π_i δ_i = 0
//! ```
//!
//! The homogeneous part has the all-ones vector as its null space; the
//! normalization row pins the constant.

use nalgebra::{DMatrix, DVector};

use crate::chain::{condition_number, ChainAnalysis, MarkedChain, MIN_RECIPROCAL_CONDITION};
use crate::error::{Error, Result};

/// Largest tolerated Poisson residual relative to the largest rate.
pub const POISSON_TOLERANCE: f64 = 1e-10;
/// Largest tolerated |π·δ| relative to max(1, ‖δ‖∞).
pub const MEAN_ZERO_TOLERANCE: f64 = 1e-12;
/// Truncation error target of the uniformization oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeValues {
    pub delta: Vec<f64>,
    pub max_value: f64,
    pub min_value: f64,
    /// Σ_i π_i δ_i as computed; zero up to rounding.
    pub stationary_mean_residual: f64,
    /// Largest absolute Poisson residual over states.
    pub poisson_residual: f64,
}

impl RelativeValues {
    pub fn weighted_mean(&self, dist: &[f64]) -> f64 {
        dist.iter().zip(&self.delta).map(|(p, d)| p * d).sum()
    }
}

/// Per-state Poisson residuals `out_i δ_i − Σ_{j≠i} r_{i,j} δ_j − (λ_i − λ)`.
pub fn poisson_residuals(chain: &MarkedChain, analysis: &ChainAnalysis, delta: &[f64]) -> Vec<f64> {
    let mut res: Vec<f64> = analysis
        .per_state_event_rate
        .iter()
        .map(|l| -(l - analysis.event_rate))
        .collect();
    for t in chain.transitions().iter().filter(|t| t.from != t.to) {
        res[t.from] += t.rate * (delta[t.from] - delta[t.to]);
    }
    res
}

pub fn solve_relative(chain: &MarkedChain, analysis: &ChainAnalysis) -> Result<RelativeValues> {
    chain.ensure_valid()?;
    let n = chain.len();
    if analysis.pi.len() != n {
        return Err(Error::Domain(format!(
            "analysis covers {} states but the chain has {n}",
            analysis.pi.len()
        )));
    }
    let scale = chain.max_rate().max(f64::MIN_POSITIVE);

    let delta = if n == 1 {
        vec![0.0]
    } else {
        // Augmented (n+1)×n system: Poisson rows, then the π row scaled to
        // the rate magnitude so both blocks weigh alike in least squares.
        let q = chain.generator();
        let mut a = DMatrix::zeros(n + 1, n);
        a.view_mut((0, 0), (n, n)).copy_from(&(-q));
        for j in 0..n {
            a[(n, j)] = analysis.pi[j] * scale;
        }
        let mut b = DVector::zeros(n + 1);
        for i in 0..n {
            b[i] = analysis.per_state_event_rate[i] - analysis.event_rate;
        }

        let condition = condition_number(&a);
        if !(condition.is_finite() && 1.0 / condition > MIN_RECIPROCAL_CONDITION) {
            return Err(Error::Numerical { what: "singular Poisson system".into(), condition });
        }
        let svd = a.clone().svd(true, true);
        let solve = |rhs: &DVector<f64>| {
            svd.solve(rhs, 0.0).map_err(|e| Error::Numerical {
                what: format!("least-squares solve failed: {e}"),
                condition,
            })
        };
        let mut x = solve(&b)?;
        let r = &b - &a * &x;
        x += solve(&r)?;

        // Constant shifts leave the Poisson rows untouched; remove what is
        // left of the stationary mean.
        let mean: f64 = x.iter().zip(&analysis.pi).map(|(d, p)| d * p).sum();
        x.iter().map(|d| d - mean).collect()
    };

    let stationary_mean_residual = delta.iter().zip(&analysis.pi).map(|(d, p)| d * p).sum();
    let poisson_residual = poisson_residuals(chain, analysis, &delta)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    if poisson_residual > POISSON_TOLERANCE * scale {
        return Err(Error::Numerical {
            what: format!("Poisson residual {poisson_residual:e} exceeds tolerance"),
            condition: f64::NAN,
        });
    }
    let max_value = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_value = delta.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RelativeValues {
        delta,
        max_value,
        min_value,
        stationary_mean_residual,
        poisson_residual,
    })
}

/// Per-state `Σ_{j,a} r_{i,j,a} (δ_j − δ_i + a) − λ`, which vanishes when
/// the drift of δ equals `λ − λ_i`.
pub fn drift_residuals(chain: &MarkedChain, analysis: &ChainAnalysis, rel: &RelativeValues) -> Vec<f64> {
    let mut out = vec![-analysis.event_rate; chain.len()];
    for t in chain.transitions() {
        out[t.from] += t.rate * (rel.delta[t.to] - rel.delta[t.from] + f64::from(t.mark));
    }
    out
}

/// `E[A_start(horizon)] − λ·horizon` by uniformization.
///
/// Works on the centered reward `λ_i − λ`, so the series sums small numbers
/// instead of subtracting two large ones. The truncation error is kept
/// below [`ORACLE_TOLERANCE`]; if that needs more than `step_budget`
/// matrix-vector products the partial sum is returned inside the error.
pub fn transient_oracle(chain: &MarkedChain, start_state: usize, horizon: f64, step_budget: usize) -> Result<f64> {
    if start_state >= chain.len() {
        return Err(Error::Domain(format!("start state {start_state} out of range")));
    }
    transient_oracle_all(chain, horizon, step_budget).map(|v| v[start_state])
}

/// [`transient_oracle`] for every start state at once.
pub fn transient_oracle_all(chain: &MarkedChain, horizon: f64, step_budget: usize) -> Result<Vec<f64>> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    let analysis = chain.analyze()?;
    let n = chain.len();
    let centered: Vec<f64> = analysis
        .per_state_event_rate
        .iter()
        .map(|l| l - analysis.event_rate)
        .collect();
    let reward_norm = centered.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if n == 1 || reward_norm == 0.0 || horizon == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let outflow = chain.outflow_rates();
    let unif = 1.05 * outflow.iter().copied().fold(0.0, f64::max);
    let mean_jumps = unif * horizon;
    let weights = poisson_survival(mean_jumps);

    // Smallest K with (‖c‖/Λ) Σ_{k>K} w_k ≤ tol.
    let mut tail = vec![0.0; weights.len() + 1];
    for k in (0..weights.len()).rev() {
        tail[k] = tail[k + 1] + weights[k];
    }
    let bound_after = |k: usize| reward_norm / unif * tail.get(k + 1).copied().unwrap_or(0.0);
    let needed = (0..weights.len())
        .find(|&k| bound_after(k) <= ORACLE_TOLERANCE)
        .unwrap_or(weights.len().saturating_sub(1));
    let last = needed.min(step_budget.saturating_sub(1));

    // Uniformized jump matrix P = I + Q/Λ, applied to column vectors.
    let mut p = chain.generator() / unif;
    for i in 0..n {
        p[(i, i)] += 1.0;
    }
    let mut v = DVector::from_vec(centered);
    let mut acc = DVector::zeros(n);
    for (k, w) in weights.iter().enumerate().take(last + 1) {
        acc.axpy(*w, &v, 1.0);
        if k < last {
            v = &p * &v;
        }
    }
    acc /= unif;

    if last < needed {
        return Err(Error::BudgetExhausted {
            budget: step_budget,
            partial: acc[0],
            error_bound: bound_after(last),
        });
    }
    Ok(acc.iter().copied().collect())
}

/// `P(N > k)` for `N ~ Poisson(mean)`, for k = 0, 1, ... until the
/// remaining mass is negligible (below 1e-40).
fn poisson_survival(mean: f64) -> Vec<f64> {
    let ln_mean = mean.ln();
    let mut pmf = Vec::new();
    let mut log_p = -mean;
    let mut k = 0usize;
    loop {
        pmf.push(log_p.exp());
        k += 1;
        log_p += ln_mean - (k as f64).ln();
        if (k as f64) > mean && log_p < -92.0 {
            break;
        }
    }
    let mut survival = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for k in (0..pmf.len()).rev() {
        survival[k] = acc;
        acc += pmf[k];
    }
    survival
}
