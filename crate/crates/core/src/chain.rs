//! Finite-state marked continuous-time Markov chains.
//!
//! A [`MarkedChain`] models either the arrival process or the completion
//! process of a queue. Every transition carries a mark: `1` when a job
//! arrives (or a service completion happens) together with the state
//! change, `0` otherwise. Self-transitions are only meaningful with mark 1.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated ‖πQ‖∞ relative to the largest transition rate.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

/// Reciprocal condition number below which a dense solve is refused.
pub(crate) const MIN_RECIPROCAL_CONDITION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    /// 0 for a silent state change, 1 when an event accompanies it.
    pub mark: u8,
    pub rate: f64,
}

impl Transition {
    pub fn new(from: usize, to: usize, mark: u8, rate: f64) -> Self {
        Transition { from, to, mark, rate }
    }

    pub fn is_event(&self) -> bool {
        self.mark == 1
    }
}

/// A CTMC whose transitions are labelled with a 0/1 event mark.
///
/// Construction does not validate; call [`MarkedChain::validate`] or any of
/// the analysis entry points, which refuse invalid chains.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedChain {
    states: Vec<String>,
    transitions: Vec<Transition>,
}

impl MarkedChain {
    pub fn new(states: Vec<String>, transitions: Vec<Transition>) -> Self {
        MarkedChain { states, transitions }
    }

    /// Single state with one marked self-loop: a Poisson process of rate `rate`.
    pub fn poisson(label: &str, rate: f64) -> Self {
        MarkedChain::new(vec![label.to_string()], vec![Transition::new(0, 0, 1, rate)])
    }

    /// States visited in a cycle, each emitting events at its own level and
    /// moving on to the next state at rate `switch_rate`.
    pub fn cyclic(labels: &[&str], levels: &[f64], switch_rate: f64) -> Self {
        assert_eq!(labels.len(), levels.len(), "one level per state");
        let n = labels.len();
        let mut transitions = Vec::with_capacity(2 * n);
        for (i, &level) in levels.iter().enumerate() {
            transitions.push(Transition::new(i, i, 1, level));
            if n > 1 {
                transitions.push(Transition::new(i, (i + 1) % n, 0, switch_rate));
            }
        }
        MarkedChain::new(labels.iter().map(|s| s.to_string()).collect(), transitions)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn max_rate(&self) -> f64 {
        self.transitions.iter().map(|t| t.rate).fold(0.0, f64::max)
    }

    /// Multiplies every rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.map_rates(|_| factor)
    }

    /// Multiplies the rates of mark-1 transitions only.
    pub fn scaled_events(&self, factor: f64) -> Self {
        self.map_rates(|t| if t.is_event() { factor } else { 1.0 })
    }

    fn map_rates(&self, factor: impl Fn(&Transition) -> f64) -> Self {
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition { rate: t.rate * factor(t), ..*t })
            .collect();
        MarkedChain::new(self.states.clone(), transitions)
    }

    /// Relabels states so that old state `i` becomes state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.len(), "permutation length");
        let mut states = vec![String::new(); self.len()];
        for (i, label) in self.states.iter().enumerate() {
            states[perm[i]] = label.clone();
        }
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition { from: perm[t.from], to: perm[t.to], ..*t })
            .collect();
        MarkedChain::new(states, transitions)
    }

    /// Total rate out of each state over all transitions, self-loops included.
    pub fn total_rate(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for t in &self.transitions {
            out[t.from] += t.rate;
        }
        out
    }

    /// Total mark-1 rate out of each state (λ_i or μ_i).
    pub fn event_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for t in self.transitions.iter().filter(|t| t.is_event()) {
            out[t.from] += t.rate;
        }
        out
    }

    /// Rate of leaving each state, i.e. the negated generator diagonal.
    pub fn outflow_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for t in self.transitions.iter().filter(|t| t.from != t.to) {
            out[t.from] += t.rate;
        }
        out
    }

    /// Infinitesimal generator over state changes, marks ignored.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for t in self.transitions.iter().filter(|t| t.from != t.to) {
            q[(t.from, t.to)] += t.rate;
            q[(t.from, t.from)] -= t.rate;
        }
        q
    }

    /// Checks every model assumption and lists the violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.len();
        if n == 0 {
            violations.push(Violation::NoStates);
            return ValidationReport { violations };
        }
        let mut labels = HashSet::new();
        for label in &self.states {
            if !labels.insert(label.as_str()) {
                violations.push(Violation::DuplicateLabel(label.clone()));
            }
        }

        let mut seen = HashSet::new();
        for (k, t) in self.transitions.iter().enumerate() {
            if t.from >= n || t.to >= n {
                violations.push(Violation::StateOutOfRange { transition: k });
                continue;
            }
            if t.mark > 1 {
                violations.push(Violation::BadMark { transition: k, mark: t.mark });
            }
            if !t.rate.is_finite() {
                violations.push(Violation::NonFiniteRate { transition: k });
            } else if t.rate <= 0.0 {
                violations.push(Violation::NonPositiveRate { transition: k, rate: t.rate });
            }
            if t.from == t.to && t.mark == 0 {
                violations.push(Violation::SilentSelfLoop { state: self.states[t.from].clone() });
            }
            if !seen.insert((t.from, t.to, t.mark)) {
                violations.push(Violation::DuplicateTransition {
                    from: self.states[t.from].clone(),
                    to: self.states[t.to].clone(),
                    mark: t.mark,
                });
            }
        }

        let unreachable = self.not_strongly_connected();
        if !unreachable.is_empty() {
            violations.push(Violation::Reducible {
                states: unreachable.iter().map(|&i| self.states[i].clone()).collect(),
            });
        }
        ValidationReport { violations }
    }

    /// States that are not both reachable from and co-reachable to state 0.
    fn not_strongly_connected(&self) -> Vec<usize> {
        let n = self.len();
        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for t in &self.transitions {
            if t.from < n && t.to < n && t.from != t.to {
                forward[t.from].push(t.to);
                backward[t.to].push(t.from);
            }
        }
        let reach_fwd = reachable(&forward, 0);
        let reach_bwd = reachable(&backward, 0);
        (0..n).filter(|&i| !(reach_fwd[i] && reach_bwd[i])).collect()
    }

    /// Stationary and event-rate quantities of a valid chain.
    pub fn analyze(&self) -> Result<ChainAnalysis> {
        self.ensure_valid()?;
        let q = self.generator();
        let (pi, condition) = stationary(&q)?;

        let scale = self.max_rate().max(f64::MIN_POSITIVE);
        let residual = (q.transpose() * DVector::from_column_slice(&pi)).amax();
        if residual > BALANCE_TOLERANCE * scale {
            return Err(Error::Numerical {
                what: format!("balance residual {residual:e} exceeds tolerance"),
                condition,
            });
        }

        let per_state_event_rate = self.event_rates();
        let event_rate: f64 = pi.iter().zip(&per_state_event_rate).map(|(p, r)| p * r).sum();
        let event_weighted_dist = (event_rate > 0.0).then(|| {
            let mut w = vec![0.0; self.len()];
            for t in self.transitions.iter().filter(|t| t.is_event()) {
                w[t.to] += pi[t.from] * t.rate;
            }
            w.iter_mut().for_each(|x| *x /= event_rate);
            w
        });

        Ok(ChainAnalysis {
            pi,
            event_rate,
            per_state_event_rate,
            event_weighted_dist,
            balance_residual: residual,
            condition,
        })
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else if report.violations.iter().all(|v| matches!(v, Violation::Reducible { .. })) {
            Err(Error::Reducible(report))
        } else {
            Err(Error::InvalidChain(report))
        }
    }
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Solves πQ = 0, Σπ = 1 with the last balance equation replaced by the
/// normalization. Returns π and a 2-norm condition estimate of the system.
fn stationary(q: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let n = q.nrows();
    if n == 1 {
        return Ok((vec![1.0], 1.0));
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;

    let condition = condition_number(&a);
    if !(condition.is_finite() && 1.0 / condition > MIN_RECIPROCAL_CONDITION) {
        return Err(Error::Numerical { what: "singular balance system".into(), condition });
    }
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerical { what: "singular balance system".into(), condition })?;
    // one step of iterative refinement
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let total: f64 = x.iter().sum();
    Ok((x.iter().map(|v| v / total).collect(), condition))
}

pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Stationary quantities of a marked chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAnalysis {
    pub pi: Vec<f64>,
    /// Long-run mark-1 rate (λ or μ).
    pub event_rate: f64,
    /// Entry i is the total mark-1 rate out of state i.
    pub per_state_event_rate: Vec<f64>,
    /// Distribution of the state entered by a mark-1 transition in
    /// stationarity; `None` when the chain never emits events.
    pub event_weighted_dist: Option<Vec<f64>>,
    pub balance_residual: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    DuplicateLabel(String),
    StateOutOfRange { transition: usize },
    BadMark { transition: usize, mark: u8 },
    NonFiniteRate { transition: usize },
    NonPositiveRate { transition: usize, rate: f64 },
    SilentSelfLoop { state: String },
    DuplicateTransition { from: String, to: String, mark: u8 },
    Reducible { states: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "chain has no states"),
            Violation::DuplicateLabel(l) => write!(f, "duplicate state label '{l}'"),
            Violation::StateOutOfRange { transition } => {
                write!(f, "transition {transition} refers to an unknown state")
            }
            Violation::BadMark { transition, mark } => {
                write!(f, "transition {transition} has mark {mark}; marks are 0 or 1")
            }
            Violation::NonFiniteRate { transition } => {
                write!(f, "transition {transition} has a non-finite rate")
            }
            Violation::NonPositiveRate { transition, rate } => {
                write!(f, "transition {transition} has non-positive rate {rate}")
            }
            Violation::SilentSelfLoop { state } => write!(f, "mark-0 self-loop at state '{state}'"),
            Violation::DuplicateTransition { from, to, mark } => {
                write!(f, "duplicate transition '{from}' -> '{to}' with mark {mark}")
            }
            Violation::Reducible { states } => write!(
                f,
                "chain is not irreducible; states not strongly connected with the first: {}",
                states.join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> MarkedChain {
        MarkedChain::new(
            vec!["H".into(), "L".into()],
            vec![
                Transition::new(0, 0, 1, 2.0),
                Transition::new(1, 1, 1, 0.2),
                Transition::new(0, 1, 0, 0.5),
                Transition::new(1, 0, 0, 0.1),
            ],
        )
    }

    #[test]
    fn fig3_chain_is_valid() {
        assert!(fig3().validate().is_valid());
    }

    #[test]
    fn single_state_poisson_is_valid() {
        assert!(MarkedChain::poisson("X", 1.0).validate().is_valid());
    }

    #[test]
    fn silent_self_loop_is_rejected() {
        let chain = MarkedChain::new(vec!["A".into()], vec![Transition::new(0, 0, 0, 1.0)]);
        let report = chain.validate();
        assert!(!report.is_valid());
        assert!(report.to_string().contains("mark-0 self-loop"));
    }

    #[test]
    fn duplicates_bad_rates_and_marks_are_listed() {
        let chain = MarkedChain::new(
            vec!["A".into(), "B".into()],
            vec![
                Transition::new(0, 1, 0, 1.0),
                Transition::new(0, 1, 0, 2.0),
                Transition::new(1, 0, 2, 1.0),
                Transition::new(1, 0, 1, -1.0),
                Transition::new(1, 1, 1, f64::NAN),
            ],
        );
        let v = chain.validate().violations;
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateTransition { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::BadMark { mark: 2, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NonPositiveRate { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NonFiniteRate { .. })));
    }

    #[test]
    fn reducible_chain_is_a_structural_error() {
        let chain = MarkedChain::new(
            vec!["A".into(), "B".into()],
            vec![Transition::new(0, 1, 0, 1.0), Transition::new(1, 1, 1, 1.0)],
        );
        assert!(matches!(chain.analyze(), Err(Error::Reducible(_))));
    }

    #[test]
    fn fig3_stationary_distribution() {
        let a = fig3().analyze().unwrap();
        assert!((a.pi[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((a.pi[1] - 5.0 / 6.0).abs() < 1e-14);
        assert!((a.event_rate - 0.5).abs() < 1e-14);
        let w = a.event_weighted_dist.unwrap();
        // P(Y^arrival = H) = α_L λ_H / (α_H λ_L + α_L λ_H) = 0.2 / 0.3
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn poisson_chain_analysis() {
        let a = MarkedChain::poisson("X", 0.7).analyze().unwrap();
        assert_eq!(a.pi, vec![1.0]);
        assert_eq!(a.event_rate, 0.7);
    }

    #[test]
    fn cyclic_three_level_chain_is_uniform() {
        let chain = MarkedChain::cyclic(&["a", "b", "c"], &[0.5, 1.0, 3.0], 0.7);
        let a = chain.analyze().unwrap();
        for p in &a.pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((a.event_rate - 1.5).abs() < 1e-14);
    }

    #[test]
    fn chain_without_events_has_no_weighted_distribution() {
        let chain = MarkedChain::new(
            vec!["A".into(), "B".into()],
            vec![Transition::new(0, 1, 0, 1.0), Transition::new(1, 0, 0, 3.0)],
        );
        let a = chain.analyze().unwrap();
        assert_eq!(a.event_rate, 0.0);
        assert!(a.event_weighted_dist.is_none());
    }

    #[test]
    fn event_during_state_change_moves_weight_to_target() {
        // every event happens on the A -> B jump, so Y^event is always B
        let chain = MarkedChain::new(
            vec!["A".into(), "B".into()],
            vec![Transition::new(0, 1, 1, 1.0), Transition::new(1, 0, 0, 1.0)],
        );
        let a = chain.analyze().unwrap();
        assert_eq!(a.event_weighted_dist.unwrap(), vec![0.0, 1.0]);
        assert!((a.event_rate - 0.5).abs() < 1e-15);
    }
}
