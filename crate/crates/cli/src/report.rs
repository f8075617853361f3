//! Machine-readable run reports.
//!
//! Field order is fixed by the struct declarations and every map is ordered,
//! so identical inputs serialize to identical bytes.  The timestamp and the
//! timing block are the only wall-clock-dependent fields; both disappear
//! under `--no-timestamp`, which is what makes byte-for-byte comparison of
//! two runs meaningful.

use serde::Serialize;

use maxfield_core::{Atom, CertifiedValue};

use crate::scenario::Scenario;

pub const TOOL: &str = concat!("maxfield ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Query kind, e.g. `fdd` or `verify`.
    pub query: String,
    /// Echo of the scenario that produced this report, when there was one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub epsilon: f64,
    pub mode: &'static str,
    pub seed: u64,
    pub values: Vec<ValueLine>,
    /// Conditioned or closed-form expression, when the query produces one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Atom table of the queried regions (bit i of `mask` = inside region i).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomLine>>,
    pub checks: Vec<CheckLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
    /// False when any check failed — the exit-code-2 condition.
    pub ok: bool,
}

#[derive(Debug, Serialize)]
pub struct ValueLine {
    pub label: String,
    pub value: f64,
    /// Absent for heuristic results, which carry no certificate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    pub certified: bool,
}

impl ValueLine {
    pub fn certified(label: impl Into<String>, v: &CertifiedValue) -> Self {
        ValueLine {
            label: label.into(),
            value: v.value,
            error_bound: v.certified.then_some(v.error_bound),
            certified: v.certified,
        }
    }

    /// A value known in closed form (exact up to rounding).
    pub fn exact(label: impl Into<String>, value: f64) -> Self {
        ValueLine { label: label.into(), value, error_bound: Some(0.0), certified: true }
    }

    pub fn plain(label: impl Into<String>, value: f64) -> Self {
        ValueLine { label: label.into(), value, error_bound: None, certified: false }
    }
}

#[derive(Debug, Serialize)]
pub struct AtomLine {
    pub mask: u32,
    pub measure: f64,
}

impl AtomLine {
    pub fn table(atoms: &[Atom]) -> Vec<AtomLine> {
        atoms.iter().map(|a| AtomLine { mask: a.mask, measure: a.measure }).collect()
    }
}

#[derive(Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    /// Worst residual the check observed, when it reduces to one number.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub ok: bool,
}

impl CheckLine {
    pub fn residual(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        CheckLine {
            name: name.into(),
            residual: Some(residual),
            tolerance: Some(tolerance),
            ok: residual <= tolerance,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        CheckLine { name: name.into(), residual: None, tolerance: None, ok }
    }
}

impl Report {
    /// Serialize with a trailing newline; the byte-identical artifact.
    pub fn render(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialization");
        out.push('\n');
        out
    }
}

/// CSV table: fixed header plus one row per record, `\n` line endings.
pub fn csv_table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn atoms_csv(atoms: &[AtomLine]) -> String {
    csv_table("mask,measure", atoms.iter().map(|a| format!("{},{}", a.mask, a.measure)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_stable_and_ends_with_newline() {
        let r = Report {
            tool: TOOL,
            timestamp: None,
            query: "fdd".into(),
            scenario: None,
            epsilon: 1e-6,
            mode: "certified",
            seed: 0,
            values: vec![ValueLine::exact("expectation", 0.5)],
            expression: None,
            atoms: Some(vec![AtomLine { mask: 1, measure: 0.5 }]),
            checks: vec![CheckLine::residual("identity", 0.0, 1e-6)],
            elapsed_ms: None,
            ok: true,
        };
        let a = r.render();
        let b = r.render();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        assert!(a.find("\"tool\"").unwrap() < a.find("\"query\"").unwrap());
        assert!(a.find("\"values\"").unwrap() < a.find("\"checks\"").unwrap());
        assert!(!a.contains("timestamp"));
    }

    #[test]
    fn atom_csv_shape() {
        let table = vec![AtomLine { mask: 1, measure: 0.5 }, AtomLine { mask: 3, measure: 0.25 }];
        assert_eq!(atoms_csv(&table), "mask,measure\n1,0.5\n3,0.25\n");
    }
}
