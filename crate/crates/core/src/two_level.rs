//! Closed forms for the two-level arrival process with exponential service.
//!
//! Arrivals come at rate `λ_H` in state H and `λ_L` in state L. The chain
//! leaves H at rate `α_H` and leaves L at rate `α_L`. Service is
//! exponential with rate `μ`.

use crate::chain::{MarkedChain, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub lambda_h: f64,
    pub lambda_l: f64,
    /// Rate of switching H → L.
    pub alpha_h: f64,
    /// Rate of switching L → H.
    pub alpha_l: f64,
    pub mu: f64,
}

impl TwoLevelParams {
    /// Validates positivity. If `lambda_h < lambda_l` the two states are
    /// swapped (along with their switching rates) so that H is always the
    /// high-rate state.
    pub fn new(lambda_h: f64, lambda_l: f64, alpha_h: f64, alpha_l: f64, mu: f64) -> Result<Self> {
        for (name, v) in [
            ("lambda_h", lambda_h),
            ("lambda_l", lambda_l),
            ("alpha_h", alpha_h),
            ("alpha_l", alpha_l),
            ("mu", mu),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(if lambda_h >= lambda_l {
            TwoLevelParams { lambda_h, lambda_l, alpha_h, alpha_l, mu }
        } else {
            TwoLevelParams {
                lambda_h: lambda_l,
                lambda_l: lambda_h,
                alpha_h: alpha_l,
                alpha_l: alpha_h,
                mu,
            }
        })
    }

    pub fn lambda(&self) -> f64 {
        (self.lambda_h * self.alpha_l + self.lambda_l * self.alpha_h) / (self.alpha_l + self.alpha_h)
    }

    pub fn rho(&self) -> f64 {
        self.lambda() / self.mu
    }

    /// P(Y = H).
    pub fn p_high(&self) -> f64 {
        self.alpha_l / (self.alpha_h + self.alpha_l)
    }

    /// The high state alone would overload the server.
    pub fn intermittent_overload(&self) -> bool {
        self.lambda_h > self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelAnalysis {
    pub params: TwoLevelParams,
    pub lambda: f64,
    pub rho: f64,
    pub delta_h: f64,
    pub delta_l: f64,
    /// E[Δ(Y^arrival)].
    pub e_delta_arrival: f64,
    /// P(Y = H).
    pub p_h: f64,
    pub heavy_traffic_constant: f64,
}

pub fn analyze_two_level(params: &TwoLevelParams) -> Result<TwoLevelAnalysis> {
    let p = params;
    let lambda = p.lambda();
    if lambda >= p.mu {
        return Err(Error::Unstable { lambda, mu: p.mu, rho: lambda / p.mu });
    }
    let alpha_sum = p.alpha_h + p.alpha_l;
    let gap = p.lambda_h - p.lambda_l;
    let delta_h = p.alpha_h * gap / (alpha_sum * alpha_sum);
    let delta_l = -p.alpha_l * gap / (alpha_sum * alpha_sum);
    let e_delta_arrival = gap * gap * p.alpha_l * p.alpha_h / (lambda * alpha_sum.powi(3));
    Ok(TwoLevelAnalysis {
        params: *p,
        lambda,
        rho: lambda / p.mu,
        delta_h,
        delta_l,
        e_delta_arrival,
        p_h: p.p_high(),
        heavy_traffic_constant: e_delta_arrival + 1.0,
    })
}

impl TwoLevelAnalysis {
    /// ρ(E[Δ(Y^arrival)] + 1)/(1 − ρ), the part of E[Q] that does not depend
    /// on the empty-queue state.
    pub fn explicit_term(&self) -> f64 {
        self.rho * (self.e_delta_arrival + 1.0) / (1.0 - self.rho)
    }

    /// E[Δ(Y) | Q = 0] given P(Y = H | Q = 0).
    pub fn delta_given_empty(&self, p_h_given_empty: f64) -> f64 {
        let p = &self.params;
        (p.lambda_h - p.lambda_l) / (p.alpha_h + p.alpha_l) * (p_h_given_empty - self.p_h)
    }
}

/// Exact E[Q] once P(Y = H | Q = 0) is known. `p_h_given_empty` should lie
/// in [0, 1].
pub fn mean_q_given_empty_prob(analysis: &TwoLevelAnalysis, p_h_given_empty: f64) -> f64 {
    analysis.explicit_term() + analysis.delta_given_empty(p_h_given_empty)
}

/// Bounds on P(Y = H | Q = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmptyProbBounds {
    pub lower: f64,
    /// P(Y = H); tight under fast switching.
    pub upper_fast: f64,
    /// Only under intermittent overload; tight under slow switching.
    pub upper_slow: Option<f64>,
}

impl EmptyProbBounds {
    pub fn upper(&self) -> f64 {
        self.upper_slow.map_or(self.upper_fast, |s| s.min(self.upper_fast))
    }
}

pub fn empty_prob_bounds(params: &TwoLevelParams, analysis: &TwoLevelAnalysis) -> EmptyProbBounds {
    let p = params;
    let upper_slow = p.intermittent_overload().then(|| {
        let v = 1.0 / (1.0 - analysis.rho) / (p.lambda_h - p.mu) * (p.alpha_h * p.alpha_l / (p.alpha_h + p.alpha_l));
        v.clamp(0.0, 1.0)
    });
    EmptyProbBounds {
        lower: 0.0,
        upper_fast: p.p_high().clamp(0.0, 1.0),
        upper_slow,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelQueueBounds {
    pub lower: f64,
    /// min of the available upper bounds.
    pub upper: f64,
    pub upper_fast: f64,
    pub upper_slow: Option<f64>,
}

pub fn e_q_bounds(params: &TwoLevelParams, analysis: &TwoLevelAnalysis) -> TwoLevelQueueBounds {
    let lower = mean_q_given_empty_prob(analysis, 0.0);
    let upper_fast = analysis.explicit_term();
    // E[Q] is increasing in P(Y=H|Q=0); the slow bound is substituted
    // unclamped so it matches the closed-form expression exactly.
    let upper_slow = params.intermittent_overload().then(|| {
        let p = params;
        let slow = 1.0 / (1.0 - analysis.rho) / (p.lambda_h - p.mu) * (p.alpha_h * p.alpha_l / (p.alpha_h + p.alpha_l));
        mean_q_given_empty_prob(analysis, slow)
    });
    let upper = upper_slow.map_or(upper_fast, |s| s.min(upper_fast));
    TwoLevelQueueBounds { lower, upper, upper_fast, upper_slow }
}

/// The arrival chain {H, L} and the single-state completion chain {X}.
pub fn to_mams(params: &TwoLevelParams) -> (MarkedChain, MarkedChain) {
    let arrival = MarkedChain::new(
        vec!["H".into(), "L".into()],
        vec![
            Transition::new(0, 0, 1, params.lambda_h),
            Transition::new(1, 1, 1, params.lambda_l),
            Transition::new(0, 1, 0, params.alpha_h),
            Transition::new(1, 0, 0, params.alpha_l),
        ],
    );
    (arrival, MarkedChain::poisson("X", params.mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> TwoLevelParams {
        TwoLevelParams::new(2.0, 0.2, 0.5, 0.1, 1.0).unwrap()
    }

    fn fig4(alpha: f64) -> TwoLevelParams {
        TwoLevelParams::new(2.0, 0.2, 5.0 * alpha, alpha, 1.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn fig3_closed_forms() {
        let a = analyze_two_level(&fig3()).unwrap();
        assert!(close(a.lambda, 0.5, 1e-15));
        assert!(close(a.delta_h, 2.5, 1e-14));
        assert!(close(a.delta_l, -0.5, 1e-14));
        assert!(close(a.e_delta_arrival, 1.5, 1e-14));
        assert!(close(a.heavy_traffic_constant, 2.5, 1e-14));
        assert!((a.p_h * a.delta_h + (1.0 - a.p_h) * a.delta_l).abs() < 1e-15);
        assert!(close(a.delta_h - a.delta_l, (2.0 - a.lambda) / 0.5, 1e-14));
    }

    #[test]
    fn equal_levels_are_poisson() {
        let a = analyze_two_level(&TwoLevelParams::new(0.6, 0.6, 0.3, 2.0, 1.0).unwrap()).unwrap();
        assert_eq!(a.delta_h, 0.0);
        assert_eq!(a.delta_l, 0.0);
        assert_eq!(a.e_delta_arrival, 0.0);
        assert_eq!(a.heavy_traffic_constant, 1.0);
        let b = e_q_bounds(&a.params, &a);
        let mm1 = a.rho / (1.0 - a.rho);
        assert!(close(b.lower, mm1, 1e-14));
        assert!(close(b.upper_fast, mm1, 1e-14));
    }

    #[test]
    fn fig4_family() {
        for alpha in [0.01, 0.1, 1.0, 10.0] {
            let p = fig4(alpha);
            let a = analyze_two_level(&p).unwrap();
            assert!(close(a.lambda, 0.5, 1e-14));
            assert!(close(a.e_delta_arrival, 0.15 / alpha, 1e-12));

            let e = empty_prob_bounds(&p, &a);
            assert!(close(e.upper_fast, 1.0 / 6.0, 1e-14));
            assert!(close(e.upper_slow.unwrap(), (5.0 * alpha / 3.0).min(1.0), 1e-12));

            let b = e_q_bounds(&p, &a);
            assert!(close(b.lower, 1.0 + 0.1 / alpha, 1e-12));
            assert!(close(b.upper_fast, 1.0 + 0.15 / alpha, 1e-12));
            let slow = b.upper_slow.unwrap();
            assert!(close(slow, 1.5 + 0.1 / alpha, 1e-12));
            assert!((slow - b.lower - 0.5).abs() < 1e-10);
            assert_eq!(b.upper, slow.min(b.upper_fast));
        }
    }

    #[test]
    fn fast_switching_limit_is_mm1() {
        let b = {
            let p = fig4(1e6);
            e_q_bounds(&p, &analyze_two_level(&p).unwrap())
        };
        assert!((b.lower - 1.0).abs() < 1e-6);
        assert!((b.upper_fast - 1.0).abs() < 1e-6);
    }

    #[test]
    fn slow_bound_absent_without_overload() {
        let p = TwoLevelParams::new(0.9, 0.1, 1.0, 1.0, 1.0).unwrap();
        let a = analyze_two_level(&p).unwrap();
        assert!(empty_prob_bounds(&p, &a).upper_slow.is_none());
        assert!(e_q_bounds(&p, &a).upper_slow.is_none());
        // λ_H = μ exactly is not overload either
        let p = TwoLevelParams::new(1.0, 0.1, 1.0, 1.0, 1.0).unwrap();
        assert!(!p.intermittent_overload());
    }

    #[test]
    fn mean_q_at_bound_probabilities() {
        let p = fig4(0.5);
        let a = analyze_two_level(&p).unwrap();
        let b = e_q_bounds(&p, &a);
        assert_eq!(mean_q_given_empty_prob(&a, a.p_h), b.upper_fast);
        assert_eq!(mean_q_given_empty_prob(&a, 0.0), b.lower);
    }

    #[test]
    fn swapped_levels_are_normalized() {
        let p = TwoLevelParams::new(0.2, 2.0, 0.1, 0.5, 1.0).unwrap();
        assert_eq!(p, fig3());
    }

    #[test]
    fn unstable_params_are_rejected() {
        let p = TwoLevelParams::new(3.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(analyze_two_level(&p), Err(Error::Unstable { .. })));
    }

    #[test]
    fn nonpositive_params_are_rejected() {
        assert!(TwoLevelParams::new(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TwoLevelParams::new(1.0, 0.5, f64::INFINITY, 1.0, 1.0).is_err());
    }

    #[test]
    fn to_mams_chains_validate() {
        let (arr, comp) = to_mams(&fig3());
        assert!(arr.validate().is_valid());
        assert!(comp.validate().is_valid());
        assert_eq!(arr.states(), ["H".to_string(), "L".to_string()]);
    }
}
