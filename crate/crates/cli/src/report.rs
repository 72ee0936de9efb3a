//! Scenario reports: named pass/fail checks plus scenario-specific results.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
}

impl Relation {
    fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Relation::Lt => value < bound,
            Relation::Le => value <= bound,
            Relation::Ge => value >= bound,
            Relation::Gt => value > bound,
            Relation::Eq => value == bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
            Relation::Eq => "==",
        }
    }
}

/// One pass/fail check. A NaN value never passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, bound: f64) -> Self {
        Check { name: name.into(), value, relation, bound, passed: relation.holds(value, bound) }
    }

    /// Boolean check recorded as `1 == 1`.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check::new(name, if ok { 1.0 } else { 0.0 }, Relation::Eq, 1.0)
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} {} {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation.symbol(),
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    /// The part of the theory the scenario exercises.
    pub anchor: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: Map<String, Value>,
    pub error: Option<String>,
}

impl Report {
    pub fn new(scenario: &str, anchor: &str, seed: u64) -> Self {
        Report {
            scenario: scenario.into(),
            anchor: anchor.into(),
            seed,
            passed: false,
            checks: Vec::new(),
            results: Map::new(),
            error: None,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn result(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(v).expect("result serializes"));
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Fix `passed`: all checks pass, there is at least one and no error.
    pub fn finish(&mut self) {
        self.passed = self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary(&self) -> Summary {
        Summary {
            scenario: self.scenario.clone(),
            passed: self.passed,
            checks_passed: self.checks.iter().filter(|c| c.passed).count(),
            checks_total: self.checks.len(),
            failed: self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
            error: self.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub passed: bool,
    pub checks_passed: usize,
    pub checks_total: usize,
    pub failed: Vec<String>,
    pub error: Option<String>,
}
