//! Scenario reports: configuration echo, result tables and pass/fail checks,
//! written as nested JSON or as long-form CSV.
//!
//! CSV columns are `scenario,section,key1,key2,value`. `section` is `config`,
//! `check`, or a table name. Wall-clock time appears only in JSON so that CSV
//! output of a fixed configuration is byte-identical across runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One row of a long-form table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub key1: String,
    pub key2: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    /// Meaning of `key1` and `key2`.
    pub keys: [String; 2],
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(name: &str, key1: &str, key2: &str) -> Self {
        Table {
            name: name.into(),
            keys: [key1.into(), key2.into()],
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, key1: impl ToString, key2: impl ToString, value: f64) {
        self.rows.push(Row {
            key1: key1.to_string(),
            key2: key2.to_string(),
            value: fmt_num(value),
        });
    }

    pub fn push_text(&mut self, key1: impl ToString, key2: impl ToString, value: impl ToString) {
        self.rows.push(Row {
            key1: key1.to_string(),
            key2: key2.to_string(),
            value: value.to_string(),
        });
    }
}

/// Outcome of one check: `|measured − target| ≤ tolerance` unless the check
/// states its own comparison in `rule`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub rule: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    /// `|measured − target| ≤ tolerance`.
    pub fn within(name: &str, measured: f64, target: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            target,
            tolerance,
            rule: "abs_diff".into(),
            passed: (measured - target).abs() <= tolerance,
            note: String::new(),
        }
    }

    /// `measured < bound`.
    pub fn below(name: &str, measured: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            target: 0.0,
            tolerance: bound,
            rule: "less_than".into(),
            passed: measured < bound,
            note: String::new(),
        }
    }

    /// `|measured − target| ≤ k · se`, with `tolerance = k · se` recorded.
    pub fn z_score(name: &str, measured: f64, target: f64, se: f64, k: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            target,
            tolerance: k * se,
            rule: format!("within_{k}_se"),
            passed: (measured - target).abs() <= k * se,
            note: String::new(),
        }
    }

    /// Boolean check; measured is 1 for true.
    pub fn holds(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            measured: if ok { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            rule: "holds".into(),
            passed: ok,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    /// Every resolved parameter, including the seed.
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl ScenarioReport {
    pub fn new(scenario: &str, config: serde_json::Value) -> Self {
        ScenarioReport {
            scenario: scenario.into(),
            config,
            tables: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,section,key1,key2,value\n");
        let mut line = |section: &str, k1: &str, k2: &str, v: &str| {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&self.scenario),
                csv_field(section),
                csv_field(k1),
                csv_field(k2),
                csv_field(v)
            );
        };
        if let serde_json::Value::Object(map) = &self.config {
            for (k, v) in map {
                let text = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                line("config", k, "", &text);
            }
        }
        for t in &self.tables {
            for r in &t.rows {
                line(&t.name, &r.key1, &r.key2, &r.value);
            }
        }
        for c in &self.checks {
            line("check", &c.name, "measured", &fmt_num(c.measured));
            line("check", &c.name, "target", &fmt_num(c.target));
            line("check", &c.name, "tolerance", &fmt_num(c.tolerance));
            line("check", &c.name, "rule", &c.rule);
            line("check", &c.name, "passed", if c.passed { "true" } else { "false" });
        }
        out
    }
}

/// Shortest round-trip decimal form.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioReport {
        let mut r = ScenarioReport::new("demo", serde_json::json!({"n": 4, "label": "a,b"}));
        let mut t = Table::new("values", "m", "n");
        t.push(1, 2, 0.5);
        t.push_text(1, 2, "time_domain");
        r.tables.push(t);
        r.checks.push(Check::within("half", 0.5 + 1e-9, 0.5, 1e-7));
        r.checks.push(Check::below("small", 2.0, 1.0));
        r.wall_clock_seconds = 1.25;
        r
    }

    #[test]
    fn checks_evaluate() {
        let r = sample();
        assert!(r.check("half").unwrap().passed);
        assert!(!r.check("small").unwrap().passed);
        assert!(!r.passed());
        assert!(Check::z_score("z", 1.0, 0.0, 0.5, 3.0).passed);
        assert!(!Check::z_score("z", 2.0, 0.0, 0.5, 3.0).passed);
        assert!(!Check::holds("h", false).passed);
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scenario,section,key1,key2,value");
        assert!(lines.contains(&"demo,config,label,,\"a,b\""));
        assert!(lines.contains(&"demo,values,1,2,0.5"));
        assert!(lines.contains(&"demo,check,small,passed,false"));
        assert!(!csv.contains("1.25"));
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let back: ScenarioReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 8.0 / (3.0 * std::f64::consts::PI), 1e-300, -0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
