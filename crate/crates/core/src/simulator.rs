//! Event-by-event simulation of the joint (queue length, arrival state,
//! completion state) CTMC.
//!
//! All estimators are time averages over the post-warmup horizon, split into
//! equal-time batches for batch-means confidence intervals.
//!
//! The run length is given as an event count. Since the total transition
//! rate does not depend on the queue length, the expected event rate is
//! known up front; the run simulates up to the time horizon at which that
//! many events are expected, so warmup and batch boundaries are fixed
//! before the first event.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{AnalyzedChain, MamsSystem};
use crate::chain::MarkedChain;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Selects an independent random stream for the same seed, e.g. the
    /// index of a point in a parameter sweep.
    pub stream: u64,
    pub num_events: u64,
    pub warmup_fraction: f64,
    pub num_batches: usize,
    pub initial_q: u64,
    pub initial_arrival: usize,
    pub initial_completion: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            stream: 0,
            num_events: 10_000_000,
            warmup_fraction: 0.05,
            num_batches: 20,
            initial_q: 0,
            initial_arrival: 0,
            initial_completion: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction must be in [0, 0.5), got {}",
                self.warmup_fraction
            )));
        }
        if self.num_batches < 10 {
            return Err(Error::Config(format!("num_batches must be at least 10, got {}", self.num_batches)));
        }
        if self.num_events < 10 * self.num_batches as u64 {
            return Err(Error::Config(format!(
                "num_events ({}) must be at least 10 * num_batches ({})",
                self.num_events, self.num_batches
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Half-width of the 95% batch-means confidence interval.
    pub ci_half_width: f64,
    pub batches_used: usize,
}

impl SimEstimate {
    fn from_batches(batch_means: &[f64]) -> Self {
        let b = batch_means.len();
        let mean = batch_means.iter().sum::<f64>() / b as f64;
        let var = batch_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
        SimEstimate {
            mean,
            ci_half_width: Z95 * (var / b as f64).sqrt(),
            batches_used: b,
        }
    }

    /// |mean − target| in units of the CI half-width.
    pub fn deviation(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.ci_half_width
    }

    pub fn contains_within(&self, target: f64, half_widths: f64) -> bool {
        (self.mean - target).abs() <= half_widths * self.ci_half_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Time-average queue length.
    pub e_q: SimEstimate,
    /// P(Q = 0).
    pub p_empty: SimEstimate,
    /// P(Y_A = i, Q = 0) per arrival state.
    pub p_joint_empty: Vec<SimEstimate>,
    /// Time average of μ_{Y_C}·1{Q=0}, the rate of unused service.
    pub unused_rate: SimEstimate,
    /// E[h(Y_A, Y_C)·1{Q=0}]/(μ − λ), the expectation at moments of unused
    /// service; `None` when μ ≤ λ.
    pub e_u_term: Option<SimEstimate>,
    /// Time average of the closed-form drift g_A + g_C.
    pub drift: SimEstimate,
    pub lambda: f64,
    pub mu: f64,
    /// False when λ ≥ μ: no estimate above converges.
    pub stable: bool,
    pub events: u64,
    pub arrivals: u64,
    pub completions: u64,
    pub unused_completions: u64,
    pub initial_q: u64,
    pub final_q: u64,
    pub max_q: u64,
    pub simulated_time: f64,
    pub warmup_time: f64,
}

pub fn simulate(system: &MamsSystem, config: &SimConfig) -> Result<SimReport> {
    Model::new(&system.arrival, &system.completion).run(config)
}

/// Same dynamics without the stability requirement. Reports from unstable
/// chains have `stable == false`.
pub fn simulate_chains(arrival: &MarkedChain, completion: &MarkedChain, config: &SimConfig) -> Result<SimReport> {
    let arrival = AnalyzedChain::new(arrival.clone())?;
    let completion = AnalyzedChain::new(completion.clone())?;
    Model::new(&arrival, &completion).run(config)
}

/// P(Y_A = i | Q = 0) per arrival state, with half-widths combined
/// conservatively (relative half-widths add).
pub fn estimate_empty_conditional(report: &SimReport) -> Result<Vec<SimEstimate>> {
    let empty = report.p_empty;
    if empty.mean <= 0.0 {
        return Err(Error::Estimation(
            "the queue was never empty after warmup; run longer or lower the load".into(),
        ));
    }
    Ok(report
        .p_joint_empty
        .iter()
        .map(|joint| {
            let ratio = joint.mean / empty.mean;
            SimEstimate {
                mean: ratio,
                ci_half_width: (joint.ci_half_width + ratio * empty.ci_half_width) / empty.mean,
                batches_used: joint.batches_used.min(empty.batches_used),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Jump {
    cumulative: f64,
    to: usize,
    event: bool,
}

/// Flattened rate tables for the sampling loop.
struct Model {
    n_a: usize,
    n_c: usize,
    arrival_jumps: Vec<Vec<Jump>>,
    completion_jumps: Vec<Vec<Jump>>,
    arrival_total: Vec<f64>,
    completion_total: Vec<f64>,
    mu_state: Vec<f64>,
    lambda: f64,
    mu: f64,
    mean_event_rate: f64,
    /// h(i_A, i_C) = μ_{i_C}Δ_A(i_A) − Σ_j s_{i_C,j,1}Δ_C(j), row-major.
    unused_weight: Vec<f64>,
    /// Drift g_A + g_C = 2(λ−μ)q + base + busy·1{q>0}.
    drift_base: Vec<f64>,
    drift_busy: Vec<f64>,
}

fn jump_table(chain: &MarkedChain) -> (Vec<Vec<Jump>>, Vec<f64>) {
    let mut table = vec![Vec::new(); chain.len()];
    for t in chain.transitions() {
        let row: &mut Vec<Jump> = &mut table[t.from];
        let cumulative = row.last().map_or(0.0, |j| j.cumulative) + t.rate;
        row.push(Jump { cumulative, to: t.to, event: t.is_event() });
    }
    let totals = table.iter().map(|r| r.last().map_or(0.0, |j| j.cumulative)).collect();
    (table, totals)
}

fn pick(row: &[Jump], x: f64) -> Jump {
    // x < total; the fallback covers rounding at the upper edge
    *row.iter().find(|j| x < j.cumulative).unwrap_or_else(|| row.last().expect("state with no transitions"))
}

impl Model {
    fn new(arrival: &AnalyzedChain, completion: &AnalyzedChain) -> Self {
        let (arrival_jumps, arrival_total) = jump_table(&arrival.chain);
        let (completion_jumps, completion_total) = jump_table(&completion.chain);
        let n_a = arrival.chain.len();
        let n_c = completion.chain.len();
        let lambda = arrival.event_rate();
        let mu = completion.event_rate();
        let lambda_state = &arrival.analysis.per_state_event_rate;
        let mu_state = completion.analysis.per_state_event_rate.clone();
        let da = &arrival.relative.delta;
        let dc = &completion.relative.delta;
        let flux_a = arrival.event_delta_flux();
        let flux_c = completion.event_delta_flux();

        let mut unused_weight = vec![0.0; n_a * n_c];
        let mut drift_base = vec![0.0; n_a * n_c];
        let mut drift_busy = vec![0.0; n_a * n_c];
        for ia in 0..n_a {
            for ic in 0..n_c {
                let k = ia * n_c + ic;
                unused_weight[k] = mu_state[ic] * da[ia] - flux_c[ic];
                drift_base[k] = (1.0 - 2.0 * dc[ic]) * lambda_state[ia] + 2.0 * flux_a[ia];
                drift_busy[k] = (1.0 - 2.0 * da[ia]) * mu_state[ic] + 2.0 * flux_c[ic];
            }
        }

        let mean_event_rate = dot(&arrival.analysis.pi, &arrival_total) + dot(&completion.analysis.pi, &completion_total);
        Model {
            n_a,
            n_c,
            arrival_jumps,
            completion_jumps,
            arrival_total,
            completion_total,
            mu_state,
            lambda,
            mu,
            mean_event_rate,
            unused_weight,
            drift_base,
            drift_busy,
        }
    }

    fn run(&self, config: &SimConfig) -> Result<SimReport> {
        config.validate()?;
        if config.initial_arrival >= self.n_a || config.initial_completion >= self.n_c {
            return Err(Error::Config("initial chain state out of range".into()));
        }
        let horizon = config.num_events as f64 / self.mean_event_rate;
        let warmup = config.warmup_fraction * horizon;
        let batches = config.num_batches;
        let batch_len = (horizon - warmup) / batches as f64;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(config.stream);

        let mut acc = Accumulators::new(batches, self.n_a);
        let (mut q, mut ia, mut ic) = (config.initial_q, config.initial_arrival, config.initial_completion);
        let mut t = 0.0f64;
        let (mut events, mut arrivals, mut completions, mut unused) = (0u64, 0u64, 0u64, 0u64);
        let mut max_q = q;
        let mut batch = 0usize;
        let mut batch_end = warmup + batch_len;
        let drift_slope = 2.0 * (self.lambda - self.mu);

        while t < horizon {
            let rate_a = self.arrival_total[ia];
            let total = rate_a + self.completion_total[ic];
            let u: f64 = rng.random();
            let hold = -(1.0 - u).ln() / total;
            let t_next = (t + hold).min(horizon);

            // Integrate the current state over [t, t_next), split at batch edges.
            if t_next > warmup {
                let k = ia * self.n_c + ic;
                let empty = q == 0;
                let sample = Sample {
                    q: q as f64,
                    empty,
                    arrival: ia,
                    unused_rate: if empty { self.mu_state[ic] } else { 0.0 },
                    unused_weight: if empty { self.unused_weight[k] } else { 0.0 },
                    drift: drift_slope * q as f64 + self.drift_base[k] + if empty { 0.0 } else { self.drift_busy[k] },
                };
                let mut from = t.max(warmup);
                while from < t_next {
                    let to = t_next.min(batch_end);
                    acc.add(batch.min(batches - 1), &sample, to - from);
                    from = to;
                    if to >= batch_end && batch + 1 < batches {
                        batch += 1;
                        batch_end = warmup + batch_len * (batch + 1) as f64;
                    } else if to >= batch_end {
                        break;
                    }
                }
            }
            t = t_next;
            if t >= horizon {
                break;
            }

            events += 1;
            let x = rng.random::<f64>() * total;
            if x < rate_a {
                let jump = pick(&self.arrival_jumps[ia], x);
                ia = jump.to;
                if jump.event {
                    q += 1;
                    arrivals += 1;
                    max_q = max_q.max(q);
                }
            } else {
                let jump = pick(&self.completion_jumps[ic], x - rate_a);
                ic = jump.to;
                if jump.event {
                    if q > 0 {
                        q -= 1;
                        completions += 1;
                    } else {
                        unused += 1;
                    }
                }
            }
        }

        let stable = self.lambda < self.mu;
        let means = |xs: &[f64]| SimEstimate::from_batches(&xs.iter().map(|x| x / batch_len).collect::<Vec<_>>());
        let e_u_term = stable.then(|| {
            let gap = self.mu - self.lambda;
            SimEstimate::from_batches(&acc.unused_weight.iter().map(|x| x / batch_len / gap).collect::<Vec<_>>())
        });
        Ok(SimReport {
            e_q: means(&acc.q),
            p_empty: means(&acc.empty),
            p_joint_empty: acc.joint_empty.iter().map(|v| means(v)).collect(),
            unused_rate: means(&acc.unused_rate),
            e_u_term,
            drift: means(&acc.drift),
            lambda: self.lambda,
            mu: self.mu,
            stable,
            events,
            arrivals,
            completions,
            unused_completions: unused,
            initial_q: config.initial_q,
            final_q: q,
            max_q,
            simulated_time: horizon,
            warmup_time: warmup,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Sample {
    q: f64,
    empty: bool,
    arrival: usize,
    unused_rate: f64,
    unused_weight: f64,
    drift: f64,
}

/// Per-batch time integrals.
struct Accumulators {
    q: Vec<f64>,
    empty: Vec<f64>,
    joint_empty: Vec<Vec<f64>>,
    unused_rate: Vec<f64>,
    unused_weight: Vec<f64>,
    drift: Vec<f64>,
}

impl Accumulators {
    fn new(batches: usize, n_a: usize) -> Self {
        Accumulators {
            q: vec![0.0; batches],
            empty: vec![0.0; batches],
            joint_empty: vec![vec![0.0; batches]; n_a],
            unused_rate: vec![0.0; batches],
            unused_weight: vec![0.0; batches],
            drift: vec![0.0; batches],
        }
    }

    fn add(&mut self, b: usize, s: &Sample, dt: f64) {
        self.q[b] += s.q * dt;
        self.drift[b] += s.drift * dt;
        if s.empty {
            self.empty[b] += dt;
            self.joint_empty[s.arrival][b] += dt;
            self.unused_rate[b] += s.unused_rate * dt;
            self.unused_weight[b] += s.unused_weight * dt;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_level::{to_mams, TwoLevelParams};

    fn mm1(lambda: f64, mu: f64) -> MamsSystem {
        MamsSystem::build(MarkedChain::poisson("A", lambda), MarkedChain::poisson("X", mu)).unwrap()
    }

    fn small(seed: u64) -> SimConfig {
        SimConfig { seed, num_events: 400_000, ..SimConfig::default() }
    }

    #[test]
    fn config_validation() {
        let base = SimConfig::default();
        assert!(SimConfig { warmup_fraction: 0.5, ..base }.validate().is_err());
        assert!(SimConfig { warmup_fraction: -0.1, ..base }.validate().is_err());
        assert!(SimConfig { num_batches: 9, ..base }.validate().is_err());
        assert!(SimConfig { num_events: 99, num_batches: 10, ..base }.validate().is_err());
        assert!(SimConfig { num_events: 100, num_batches: 10, ..base }.validate().is_ok());
    }

    #[test]
    fn same_seed_same_report() {
        let sys = mm1(0.5, 1.0);
        let a = simulate(&sys, &small(7)).unwrap();
        let b = simulate(&sys, &small(7)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&sys, &SimConfig { stream: 1, ..small(7) }).unwrap();
        assert_ne!(a.e_q, c.e_q);
    }

    #[test]
    fn jobs_are_conserved() {
        let (arr, comp) = to_mams(&TwoLevelParams::new(2.0, 0.2, 0.5, 0.1, 1.0).unwrap());
        let sys = MamsSystem::build(arr, comp).unwrap();
        let cfg = SimConfig { initial_q: 5, ..small(3) };
        let r = simulate(&sys, &cfg).unwrap();
        assert_eq!(r.arrivals + r.initial_q, r.completions + r.final_q);
        assert!(r.unused_completions > 0);
    }

    #[test]
    fn event_count_tracks_request() {
        let r = simulate(&mm1(0.5, 1.0), &small(11)).unwrap();
        let rel = (r.events as f64 - 400_000.0).abs() / 400_000.0;
        assert!(rel < 0.01, "{}", r.events);
    }

    #[test]
    fn mm1_estimates_are_plausible() {
        let r = simulate(&mm1(0.5, 1.0), &SimConfig { num_events: 2_000_000, ..small(5) }).unwrap();
        assert!(r.e_q.contains_within(1.0, 4.0), "{:?}", r.e_q);
        assert!(r.p_empty.contains_within(0.5, 4.0), "{:?}", r.p_empty);
        assert!(r.unused_rate.contains_within(0.5, 4.0), "{:?}", r.unused_rate);
        let cond = estimate_empty_conditional(&r).unwrap();
        assert!((cond[0].mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overloaded_chains_can_be_explored() {
        let r = simulate_chains(&MarkedChain::poisson("A", 1.5), &MarkedChain::poisson("X", 1.0), &small(1)).unwrap();
        assert!(!r.stable);
        assert!(r.e_u_term.is_none());
        assert!(r.final_q > 1000);
    }

    #[test]
    fn never_empty_queue_cannot_condition() {
        let r = simulate_chains(
            &MarkedChain::poisson("A", 3.0),
            &MarkedChain::poisson("X", 1.0),
            &SimConfig { initial_q: 100_000, ..small(1) },
        )
        .unwrap();
        assert!(matches!(estimate_empty_conditional(&r), Err(Error::Estimation(_))));
    }

    #[test]
    fn bad_initial_state_is_config_error() {
        let cfg = SimConfig { initial_arrival: 3, ..small(1) };
        assert!(matches!(simulate(&mm1(0.5, 1.0), &cfg), Err(Error::Config(_))));
    }
}
