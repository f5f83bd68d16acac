//! System specification files.
//!
//! A spec is a JSON document describing either a pair of marked chains or a
//! two-level arrival system, plus optional simulation settings and an
//! optional parameter sweep:
//!
//! ```json
//! {
//!   "two_level": { "lambda_h": 2, "lambda_l": 0.2, "alpha_l": 1, "alpha_h_ratio": 5, "mu": 1 },
//!   "simulation": { "seed": 1, "num_events": 10000000 },
//!   "sweep": { "parameter": "two_level.alpha_l", "values": [0.01, 0.1, 1, 10] }
//! }
//! ```
//!
//! `alpha_h_ratio` links `alpha_h = alpha_h_ratio * alpha_l` so a sweep over
//! `alpha_l` moves both switching rates. `arrival_scale` multiplies every
//! arrival (mark-1) rate, which is how load sweeps are written.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chain::{MarkedChain, Transition};
use crate::error::{Error, Result};
use crate::simulator::SimConfig;
use crate::two_level::{to_mams, TwoLevelParams};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_chain: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_chain: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_level: Option<TwoLevelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub states: Vec<String>,
    pub transitions: Vec<TransitionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub from: String,
    pub to: String,
    pub mark: u8,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelSpec {
    pub lambda_h: f64,
    pub lambda_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_h: Option<f64>,
    pub alpha_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_h_ratio: Option<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_events: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    #[serde(default)]
    pub q: u64,
    #[serde(default)]
    pub arrival: usize,
    #[serde(default)]
    pub completion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted path into the spec, e.g. `two_level.alpha_l` or
    /// `arrival_chain.transitions.2.rate`.
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A spec resolved into chains and a simulation config.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arrival: MarkedChain,
    pub completion: MarkedChain,
    pub two_level: Option<TwoLevelParams>,
    pub sim: SimConfig,
}

impl SystemSpec {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_chains(arrival: &MarkedChain, completion: &MarkedChain) -> Self {
        SystemSpec {
            arrival_chain: Some(ChainSpec::from_chain(arrival)),
            completion_chain: Some(ChainSpec::from_chain(completion)),
            ..SystemSpec::default()
        }
    }

    pub fn from_two_level(params: &TwoLevelParams) -> Self {
        SystemSpec {
            two_level: Some(TwoLevelSpec {
                lambda_h: params.lambda_h,
                lambda_l: params.lambda_l,
                alpha_h: Some(params.alpha_h),
                alpha_l: params.alpha_l,
                alpha_h_ratio: None,
                mu: params.mu,
            }),
            ..SystemSpec::default()
        }
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let scale = self.arrival_scale.unwrap_or(1.0);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Parse(format!("arrival_scale: must be finite and positive, got {scale}")));
        }
        let (arrival, completion, two_level) = match (&self.arrival_chain, &self.completion_chain, &self.two_level) {
            (Some(a), Some(c), None) => (
                a.to_chain("arrival_chain")?.scaled_events(scale),
                c.to_chain("completion_chain")?,
                None,
            ),
            (None, None, Some(t)) => {
                let params = t.to_params(scale)?;
                let (a, c) = to_mams(&params);
                (a, c, Some(params))
            }
            (None, None, None) => {
                return Err(Error::Parse(
                    "spec needs either arrival_chain + completion_chain or a two_level block".into(),
                ))
            }
            (_, _, Some(_)) => {
                return Err(Error::Parse("two_level cannot be combined with arrival_chain/completion_chain".into()))
            }
            (None, Some(_), None) => return Err(Error::Parse("arrival_chain: missing".into())),
            (Some(_), None, None) => return Err(Error::Parse("completion_chain: missing".into())),
        };
        Ok(Scenario { arrival, completion, two_level, sim: self.sim_config() })
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut cfg = SimConfig::default();
        if let Some(s) = &self.simulation {
            if let Some(v) = s.seed {
                cfg.seed = v;
            }
            if let Some(v) = s.num_events {
                cfg.num_events = v;
            }
            if let Some(v) = s.warmup_fraction {
                cfg.warmup_fraction = v;
            }
            if let Some(v) = s.num_batches {
                cfg.num_batches = v;
            }
            if let Some(init) = s.initial_state {
                cfg.initial_q = init.q;
                cfg.initial_arrival = init.arrival;
                cfg.initial_completion = init.completion;
            }
        }
        cfg
    }

    /// Copy of the spec with the number at `path` replaced by `value`.
    /// Missing leaf keys are created, so optional fields such as
    /// `arrival_scale` can be swept.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("spec serializes");
        let segments: Vec<&str> = path.split('.').collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(Error::Parse(format!("sweep parameter '{path}': empty path segment")));
        }
        let number = serde_json::Number::from_f64(value)
            .ok_or_else(|| Error::Parse(format!("sweep parameter '{path}': value {value} is not finite")))?;
        let (leaf, parents) = segments.split_last().expect("nonempty path");
        let mut node = &mut doc;
        for seg in parents {
            node = match node {
                Value::Object(map) => map.get_mut(*seg),
                Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Parse(format!("sweep parameter '{path}': no field '{seg}'")))?;
        }
        match node {
            Value::Object(map) => {
                map.insert(leaf.to_string(), Value::Number(number));
            }
            Value::Array(items) => {
                let slot = leaf
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| Error::Parse(format!("sweep parameter '{path}': no element '{leaf}'")))?;
                *slot = Value::Number(number);
            }
            _ => return Err(Error::Parse(format!("sweep parameter '{path}': '{leaf}' is not inside an object"))),
        }
        serde_json::from_value(doc).map_err(|e| Error::Parse(format!("sweep parameter '{path}': {e}")))
    }
}

impl ChainSpec {
    pub fn from_chain(chain: &MarkedChain) -> Self {
        let label = |i: usize| chain.states()[i].clone();
        ChainSpec {
            states: chain.states().to_vec(),
            transitions: chain
                .transitions()
                .iter()
                .map(|t| TransitionSpec { from: label(t.from), to: label(t.to), mark: t.mark, rate: t.rate })
                .collect(),
        }
    }

    /// Maps labels to indices. Model checks (rates, marks, connectivity) are
    /// left to chain validation.
    pub fn to_chain(&self, field: &str) -> Result<MarkedChain> {
        let index = |label: &str, k: usize, end: &str| {
            self.states.iter().position(|s| s == label).ok_or_else(|| {
                Error::Parse(format!("{field}.transitions[{k}].{end}: unknown state '{label}'"))
            })
        };
        let transitions = self
            .transitions
            .iter()
            .enumerate()
            .map(|(k, t)| Ok(Transition::new(index(&t.from, k, "from")?, index(&t.to, k, "to")?, t.mark, t.rate)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MarkedChain::new(self.states.clone(), transitions))
    }
}

impl TwoLevelSpec {
    pub fn to_params(&self, arrival_scale: f64) -> Result<TwoLevelParams> {
        let alpha_h = match (self.alpha_h, self.alpha_h_ratio) {
            (Some(a), None) => a,
            (None, Some(r)) => r * self.alpha_l,
            (Some(_), Some(_)) => {
                return Err(Error::Parse("two_level: give either alpha_h or alpha_h_ratio, not both".into()))
            }
            (None, None) => return Err(Error::Parse("two_level.alpha_h: missing (or set alpha_h_ratio)".into())),
        };
        TwoLevelParams::new(
            self.lambda_h * arrival_scale,
            self.lambda_l * arrival_scale,
            alpha_h,
            self.alpha_l,
            self.mu,
        )
        .map_err(|e| match e {
            Error::Domain(msg) => Error::Parse(format!("two_level.{msg}")),
            other => other,
        })
    }
}

/// Spec files shipped with the crate, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("mm1", include_str!("../presets/mm1.spec")),
    ("fig3", include_str!("../presets/fig3.spec")),
    ("fig4", include_str!("../presets/fig4.spec")),
    ("fig5_a", include_str!("../presets/fig5_a.spec")),
    ("fig5_b", include_str!("../presets/fig5_b.spec")),
    ("fig5_c", include_str!("../presets/fig5_c.spec")),
    ("fig6", include_str!("../presets/fig6.spec")),
    ("fig6_b", include_str!("../presets/fig6_b.spec")),
];

/// Looks up a shipped preset. `fig5` is an alias for `fig5_a`.
pub fn preset(name: &str) -> Result<SystemSpec> {
    let key = if name == "fig5" { "fig5_a" } else { name };
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Parse(format!("unknown preset '{name}' (available: {})", names.join(", ")))
        })?;
    SystemSpec::parse(text).map_err(|e| Error::Parse(format!("preset {key}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"{
        "two_level": { "lambda_h": 2, "lambda_l": 0.2, "alpha_h": 0.5, "alpha_l": 0.1, "mu": 1 }
    }"#;

    #[test]
    fn presets_parse_and_resolve() {
        for (name, _) in PRESETS {
            let spec = preset(name).unwrap();
            spec.resolve().unwrap();
            if let Some(sweep) = &spec.sweep {
                for v in &sweep.values {
                    spec.with_parameter(&sweep.parameter, *v).unwrap().resolve().unwrap();
                }
            }
        }
        assert_eq!(preset("fig5").unwrap().name.as_deref(), Some("fig5_a"));
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn parses_two_level_block() {
        let s = SystemSpec::parse(FIG3).unwrap().resolve().unwrap();
        let p = s.two_level.unwrap();
        assert_eq!(p.alpha_h, 0.5);
        assert_eq!(s.arrival.len(), 2);
        assert_eq!(s.completion.len(), 1);
    }

    #[test]
    fn ratio_links_switching_rates() {
        let text = r#"{ "two_level": { "lambda_h": 2, "lambda_l": 0.2, "alpha_l": 0.3, "alpha_h_ratio": 5, "mu": 1 } }"#;
        let spec = SystemSpec::parse(text).unwrap();
        assert!((spec.resolve().unwrap().two_level.unwrap().alpha_h - 1.5).abs() < 1e-15);
        let swept = spec.with_parameter("two_level.alpha_l", 2.0).unwrap();
        assert_eq!(swept.resolve().unwrap().two_level.unwrap().alpha_h, 10.0);
    }

    #[test]
    fn arrival_scale_multiplies_arrival_rates_only() {
        let spec = SystemSpec::parse(FIG3).unwrap().with_parameter("arrival_scale", 0.5).unwrap();
        let p = spec.resolve().unwrap().two_level.unwrap();
        assert_eq!((p.lambda_h, p.lambda_l, p.alpha_h, p.mu), (1.0, 0.1, 0.5, 1.0));
    }

    #[test]
    fn unknown_state_names_the_field() {
        let text = r#"{
            "arrival_chain": { "states": ["A"], "transitions": [ { "from": "A", "to": "B", "mark": 1, "rate": 1 } ] },
            "completion_chain": { "states": ["X"], "transitions": [ { "from": "X", "to": "X", "mark": 1, "rate": 2 } ] }
        }"#;
        let err = SystemSpec::parse(text).unwrap().resolve().unwrap_err().to_string();
        assert!(err.contains("arrival_chain.transitions[0].to"), "{err}");
    }

    #[test]
    fn unknown_field_is_a_parse_error_with_position() {
        let err = SystemSpec::parse("{\n \"two_levl\": {} }").unwrap_err().to_string();
        assert!(err.contains("two_levl") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn both_forms_at_once_is_rejected() {
        let mut spec = SystemSpec::parse(FIG3).unwrap();
        spec.arrival_chain = Some(ChainSpec { states: vec!["A".into()], transitions: vec![] });
        assert!(spec.resolve().is_err());
        assert!(SystemSpec::default().resolve().is_err());
    }

    #[test]
    fn sweep_path_into_array() {
        let spec = SystemSpec::from_chains(&MarkedChain::poisson("A", 0.5), &MarkedChain::poisson("X", 1.0));
        let swept = spec.with_parameter("arrival_chain.transitions.0.rate", 0.25).unwrap();
        assert_eq!(swept.resolve().unwrap().arrival.transitions()[0].rate, 0.25);
        assert!(spec.with_parameter("arrival_chain.transitions.5.rate", 1.0).is_err());
        assert!(spec.with_parameter("nope.rate", 1.0).is_err());
        assert!(spec.with_parameter("two_lvl", 1.0).is_err());
    }

    #[test]
    fn simulation_block_overrides_defaults() {
        let text = r#"{ "two_level": { "lambda_h": 2, "lambda_l": 0.2, "alpha_h": 0.5, "alpha_l": 0.1, "mu": 1 },
                        "simulation": { "seed": 9, "num_batches": 30, "initial_state": { "q": 4 } } }"#;
        let cfg = SystemSpec::parse(text).unwrap().sim_config();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.num_batches, 30);
        assert_eq!(cfg.initial_q, 4);
        assert_eq!(cfg.num_events, SimConfig::default().num_events);
    }
}
