//! Scenario files: one JSON document naming a model, regions, and a query.
//!
//! Unknown fields are rejected everywhere — a typo in a fixture should be an
//! input error, not a silently ignored knob.  Boxes are half-open products
//! `[lo, hi)` per axis, the only region syntax the engine has.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use maxfield_core::region::MAX_ATOM_SOURCES;
use maxfield_core::{Rect, Region, UncertaintyInterval, WhiteNoiseModel};

use crate::run::InputError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Mean-rate interval [lo, hi] of the driving noise.
    pub mu: [f64; 2],
    /// Ambient dimension of the index regions.
    pub dimension: usize,
    /// Named regions: name → list of boxes, each box one [lo, hi) per axis.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub regions: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    pub query: Query,
    /// Payoff text, when the query takes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Assertion on the headline value; checked by the verify suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Certified,
    Heuristic,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub value: f64,
    #[serde(default = "default_expect_tolerance")]
    pub tolerance: f64,
}

fn default_expect_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    /// Worst-case expectation of `phi` applied to the noise of these regions.
    Fdd(FddSpec),
    /// Generating function of these regions at weights `p` (closed form).
    Generating(GeneratingSpec),
    /// Integral of a simple field; checks the noise-level bound on it.
    Integral(IntegralSpec),
    /// Condition `phi` over these regions on the noise before time `t`.
    Conditional(ConditionalSpec),
    /// Solve the front-propagation equation and compare with the formula.
    Pde(PdeSpec),
    /// Adversarial law-of-large-numbers run against the certified limit.
    Lln(LlnSpec),
    /// Run the fixture + property suite.
    Verify(VerifySpec),
}

impl Query {
    pub fn kind(&self) -> &'static str {
        match self {
            Query::Fdd(_) => "fdd",
            Query::Generating(_) => "generating",
            Query::Integral(_) => "integral",
            Query::Conditional(_) => "conditional",
            Query::Pde(_) => "pde",
            Query::Lln(_) => "lln",
            Query::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FddSpec {
    /// Region names in variable order: `x0` is the noise of the first.
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratingSpec {
    pub regions: Vec<String>,
    /// One weight per region.
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralSpec {
    pub terms: Vec<IntegralTerm>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralTerm {
    /// Coefficient expression; `x0`, `x1`, … are the noise of `xi_regions`.
    pub xi: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xi_regions: Vec<String>,
    /// Name of the region this coefficient is integrated over.
    pub carrier: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalSpec {
    pub regions: Vec<String>,
    /// Conditioning time; axis 0 of every region is time.
    pub t: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    /// Velocity box, one [lo, hi] per state axis.
    pub lambda: Vec<[f64; 2]>,
    pub horizon: f64,
    /// Computational window, one [lo, hi] per state axis.
    pub window: Vec<[f64; 2]>,
    pub h: f64,
    pub tau: f64,
    /// Optional grid refinements for a convergence study.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<f64>,
    /// Largest acceptable gap to the closed form.
    pub threshold: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LlnSpec {
    pub noise: NoiseName,
    pub sigma: f64,
    /// Number of constant-mean adversaries spread over the mean interval.
    pub grid: usize,
    pub n_list: Vec<usize>,
    pub samples: usize,
    /// Largest acceptable final gap to the certified limit.
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switching: Vec<SwitchingSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseName {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub means: Vec<f64>,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {}

impl Scenario {
    pub fn mu_interval(&self) -> Result<UncertaintyInterval, InputError> {
        UncertaintyInterval::new(self.mu[0], self.mu[1])
            .map_err(|e| InputError::at("mu", e.to_string()))
    }

    pub fn model(&self) -> Result<WhiteNoiseModel, InputError> {
        let mu = self.mu_interval()?;
        WhiteNoiseModel::new(self.dimension, mu)
            .map_err(|e| InputError::at("dimension", e.to_string()))
    }

    /// Build one named region, dimension-checked against the scenario.
    pub fn region(&self, name: &str, path: &str) -> Result<Region, InputError> {
        let boxes = self
            .regions
            .get(name)
            .ok_or_else(|| InputError::at(path, format!("unknown region `{name}`")))?;
        if boxes.is_empty() {
            return Err(InputError::at(
                format!("regions.{name}"),
                "a region needs at least one box",
            ));
        }
        let mut rects = Vec::with_capacity(boxes.len());
        for (i, b) in boxes.iter().enumerate() {
            if b.len() != self.dimension {
                return Err(InputError::at(
                    format!("regions.{name}[{i}]"),
                    format!("expected {} axes, got {}", self.dimension, b.len()),
                ));
            }
            let rect = Rect::new(b.iter().map(|&[lo, hi]| (lo, hi)).collect())
                .map_err(|e| InputError::at(format!("regions.{name}[{i}]"), e.to_string()))?;
            rects.push(rect);
        }
        Region::new(self.dimension, rects, Some(name.to_string()))
            .map_err(|e| InputError::at(format!("regions.{name}"), e.to_string()))
    }

    /// Resolve a list of region names (the common query shape).
    pub fn region_list(&self, names: &[String], path: &str) -> Result<Vec<Region>, InputError> {
        if names.is_empty() {
            return Err(InputError::at(path, "need at least one region"));
        }
        if names.len() > MAX_ATOM_SOURCES {
            return Err(InputError::at(
                path,
                format!("at most {MAX_ATOM_SOURCES} regions per query"),
            ));
        }
        names
            .iter()
            .enumerate()
            .map(|(i, n)| self.region(n, &format!("{path}[{i}]")))
            .collect()
    }

    pub fn phi_text(&self) -> Result<&str, InputError> {
        self.phi
            .as_deref()
            .ok_or_else(|| InputError::at("phi", "this query needs a payoff expression"))
    }
}

/// Parse a scenario document, mapping JSON syntax errors to line/column and
/// schema violations to the offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario, InputError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            InputError::at(
                format!("line {}, column {}", e.line(), e.column()),
                "JSON syntax error",
            )
        } else {
            InputError::at(format!("line {}, column {}", e.line(), e.column()), e.to_string())
        }
    })?;
    if scenario.dimension == 0 {
        return Err(InputError::at("dimension", "dimension must be at least 1"));
    }
    if let Some(eps) = scenario.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(InputError::at("epsilon", format!("must be positive and finite, got {eps}")));
        }
    }
    if let Some(x) = &scenario.expect {
        if !(x.tolerance.is_finite() && x.tolerance >= 0.0) {
            return Err(InputError::at("expect.tolerance", "must be nonnegative and finite"));
        }
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fdd_scenario_parses() {
        let s = parse_scenario(
            r#"{
                "mu": [0, 1],
                "dimension": 1,
                "regions": {"A": [[[0, 1]]], "B": [[[0.5, 1.5]]]},
                "query": {"fdd": {"regions": ["A", "B"]}},
                "phi": "x0 - x1"
            }"#,
        )
        .unwrap();
        assert_eq!(s.query.kind(), "fdd");
        let a = s.region("A", "query.fdd.regions[0]").unwrap();
        assert_eq!(a.measure(), 1.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse_scenario(
            r#"{"mu": [0, 1], "dimension": 1, "query": {"verify": {}}, "extra": 3}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");

        let err = parse_scenario(
            r#"{"mu": [0, 1], "dimension": 1, "query": {"fdd": {"regions": [], "typo": 1}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("typo"), "{err}");
    }

    #[test]
    fn bad_region_extent_names_the_region() {
        let s = parse_scenario(
            r#"{
                "mu": [0, 1],
                "dimension": 1,
                "regions": {"bad": [[[2, 1]]]},
                "query": {"fdd": {"regions": ["bad"]}},
                "phi": "x0"
            }"#,
        )
        .unwrap();
        let err = s.region("bad", "query.fdd.regions[0]").unwrap_err();
        assert!(err.to_string().contains("regions.bad[0]"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scenario("{\n  \"mu\": [0, 1,\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn inverted_mu_is_an_input_error() {
        let s = parse_scenario(
            r#"{"mu": [2, 1], "dimension": 1, "query": {"verify": {}}}"#,
        )
        .unwrap();
        let err = s.mu_interval().unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
    }
}
