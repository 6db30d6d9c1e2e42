//! Report document types. Every statistic is a [`StatRecord`] carrying the
//! formula identifier, its inputs and either a result or the reason it
//! could not be computed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use coachlab_stats::{
    chi_square_2x2, one_sample_t, pearson_r_ci, spearman_rho, welch_t, ContingencyTable, GroupSummary, StatsError,
};

pub const REPORT_VERSION: u32 = 1;

pub const WELCH: &str = "welch_t+hedges_g";
pub const ONE_SAMPLE: &str = "one_sample_t";
pub const CHI2_YATES: &str = "chi_square_2x2+yates";
pub const CHI2_PLAIN: &str = "chi_square_2x2";
pub const PEARSON: &str = "pearson_r+fisher_z_ci95";
pub const SPEARMAN: &str = "spearman_rho";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub formula: String,
    pub inputs: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StatRecord {
    fn from<T: Serialize>(formula: &str, inputs: Value, r: Result<T, StatsError>) -> Self {
        match r {
            Ok(v) => Self {
                formula: formula.into(),
                inputs,
                result: Some(serde_json::to_value(v).expect("result serializes")),
                error: None,
            },
            Err(e) => Self { formula: formula.into(), inputs, result: None, error: Some(e.to_string()) },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.result.is_some()
    }

    /// A numeric field of the result, e.g. `statistic` or `p_value`.
    pub fn get(&self, field: &str) -> Option<f64> {
        self.result.as_ref()?.get(field)?.as_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn describe(xs: &[f64]) -> Descriptive {
    match GroupSummary::from_sample(xs) {
        Ok(g) => Descriptive { n: g.n, mean: Some(g.mean), sd: (g.n >= 2).then_some(g.sd) },
        Err(_) => Descriptive { n: xs.len(), mean: None, sd: None },
    }
}

/// Welch comparison of two raw samples (treatment first).
pub fn welch_samples(treatment: &[f64], control: &[f64]) -> StatRecord {
    let inputs = json!({ "treatment": describe(treatment), "control": describe(control) });
    let r = GroupSummary::from_sample(treatment)
        .and_then(|a| GroupSummary::from_sample(control).map(|b| (a, b)))
        .and_then(|(a, b)| welch_t(&a, &b));
    StatRecord::from(WELCH, inputs, r)
}

pub fn welch_summaries(a: &GroupSummary, b: &GroupSummary) -> StatRecord {
    StatRecord::from(WELCH, json!({ "a": a, "b": b }), welch_t(a, b))
}

pub fn one_sample_samples(xs: &[f64], reference: f64) -> StatRecord {
    let inputs = json!({ "sample": describe(xs), "reference": reference });
    StatRecord::from(ONE_SAMPLE, inputs, GroupSummary::from_sample(xs).and_then(|g| one_sample_t(&g, reference)))
}

pub fn one_sample_summary(g: &GroupSummary, reference: f64) -> StatRecord {
    StatRecord::from(ONE_SAMPLE, json!({ "sample": g, "reference": reference }), one_sample_t(g, reference))
}

pub fn chi_square(table: &ContingencyTable, correction: bool) -> StatRecord {
    let formula = if correction { CHI2_YATES } else { CHI2_PLAIN };
    StatRecord::from(formula, json!({ "cells": table.cells }), chi_square_2x2(table, correction))
}

pub fn pearson(x: &[f64], y: &[f64]) -> StatRecord {
    StatRecord::from(PEARSON, json!({ "n": x.len() }), pearson_r_ci(x, y, 0.95))
}

pub fn spearman(x: &[f64], y: &[f64]) -> StatRecord {
    StatRecord::from(SPEARMAN, json!({ "n": x.len() }), spearman_rho(x, y))
}

/// Summary statistics supplied directly to the stats stage, for
/// evaluating tests from summary statistics alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedSummaries {
    #[serde(default)]
    pub welch: Vec<InjectedWelch>,
    #[serde(default)]
    pub one_sample: Vec<InjectedOneSample>,
    #[serde(default)]
    pub chi_square: Vec<InjectedTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedWelch {
    pub label: String,
    pub a: GroupSummary,
    pub b: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedOneSample {
    pub label: String,
    pub group: GroupSummary,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedTable {
    pub label: String,
    pub cells: [[u64; 2]; 2],
}

impl InjectedSummaries {
    pub fn evaluate(&self, correction: bool) -> BTreeMap<String, StatRecord> {
        let mut out = BTreeMap::new();
        for w in &self.welch {
            out.insert(w.label.clone(), welch_summaries(&w.a, &w.b));
        }
        for o in &self.one_sample {
            out.insert(o.label.clone(), one_sample_summary(&o.group, o.reference));
        }
        for t in &self.chi_square {
            out.insert(t.label.clone(), chi_square(&ContingencyTable::new(t.cells), correction));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_hash: String,
    pub extraction_model: String,
    pub embedding_model: String,
    pub embed_source: String,
    pub include_quarter_1: bool,
    pub continuity_correction: bool,
    pub forced_choice_reference: f64,
    pub exclusion_rule: crate::session::ExclusionRule,
    pub keying_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedEntry {
    pub session_id: String,
    pub condition: crate::persona::Condition,
    pub reason: crate::session::ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participants {
    pub input: usize,
    pub retained: usize,
    pub retained_by_condition: BTreeMap<String, usize>,
    pub excluded: Vec<ExcludedEntry>,
    pub exclusion_counts: BTreeMap<String, usize>,
    pub complete_surveys_by_condition: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub provenance: Provenance,
    pub participants: Participants,
    /// Section name to named statistics or descriptive values.
    pub sections: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected: Option<BTreeMap<String, StatRecord>>,
}

impl Report {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_summaries_evaluate() {
        let g = |n, m, s| GroupSummary::new(n, m, s).unwrap();
        let inj = InjectedSummaries {
            welch: vec![InjectedWelch { label: "q8".into(), a: g(66, 1.80, 1.01), b: g(29, 2.72, 1.10) }],
            one_sample: vec![InjectedOneSample { label: "q8_control".into(), group: g(29, 2.72, 1.10), reference: 2.0 }],
            chi_square: vec![InjectedTable { label: "c".into(), cells: [[14, 2], [6, 10]] }],
        };
        let out = inj.evaluate(true);
        assert!((out["q8"].get("effect_size").unwrap() + 0.88).abs() < 0.01);
        assert!((out["q8_control"].get("statistic").unwrap() - 3.55).abs() < 0.05);
        assert!((out["c"].get("statistic").unwrap() - 6.533).abs() < 0.001);
    }

    #[test]
    fn errors_are_recorded_not_raised() {
        let r = welch_samples(&[1.0], &[]);
        assert!(!r.is_ok());
        assert!(r.error.is_some());
        assert_eq!(describe(&[]).mean, None);
    }
}
