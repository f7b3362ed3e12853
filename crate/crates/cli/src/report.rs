//! Plain-text reports: blocks of `key=value` lines, each block opened by a
//! `record=<kind>` line and closed by a blank line.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::checks::Check;

/// One `record=` block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Record {
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl Record {
    pub fn new(kind: impl Into<String>) -> Self {
        Record {
            kind: kind.into(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, key: impl Into<String>, value: impl fmt::Display) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        let value = value.to_string().replace('\n', " ");
        self.fields.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "record={}", self.kind)?;
        for (k, v) in &self.fields {
            writeln!(f, "{k}={v}")?;
        }
        writeln!(f)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: &'static str,
}

/// Parses the text produced by rendering records.
pub fn parse_records(text: &str) -> Result<Vec<Record>, ParseError> {
    let mut out = Vec::new();
    let mut cur: Option<Record> = None;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            out.extend(cur.take());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ParseError {
            line: i + 1,
            reason: "expected key=value",
        })?;
        match (&mut cur, k) {
            (None, "record") => cur = Some(Record::new(v)),
            (None, _) => {
                return Err(ParseError {
                    line: i + 1,
                    reason: "field outside a record",
                })
            }
            (Some(_), "record") => {
                out.extend(cur.replace(Record::new(v)));
            }
            (Some(r), _) => r.push(k, v),
        }
    }
    out.extend(cur);
    Ok(out)
}

/// Result of one check on one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub check: Check,
    pub passed: bool,
    pub fields: Vec<(String, String)>,
    pub witness: Option<String>,
    pub trace: Vec<String>,
    pub millis: u128,
}

impl Outcome {
    pub fn new(check: Check) -> Self {
        Outcome {
            check,
            passed: true,
            fields: Vec::new(),
            witness: None,
            trace: Vec::new(),
            millis: 0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn fail(&mut self, witness: impl fmt::Display) {
        self.passed = false;
        self.witness.get_or_insert_with(|| witness.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Checks run on one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceReport {
    /// `None` for instances read from a file without a generation spec.
    pub seed: Option<u64>,
    pub header: Vec<(String, String)>,
    pub outcomes: Vec<Outcome>,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub pass: u64,
    pub fail: u64,
}

/// Aggregate over instances, in the order they were requested.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CampaignReport {
    pub instances: Vec<InstanceReport>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.instances.iter().all(InstanceReport::passed)
    }

    pub fn tallies(&self) -> BTreeMap<Check, Tally> {
        let mut out: BTreeMap<Check, Tally> = BTreeMap::new();
        for inst in &self.instances {
            for o in &inst.outcomes {
                let t = out.entry(o.check).or_default();
                if o.passed {
                    t.pass += 1;
                } else {
                    t.fail += 1;
                }
            }
        }
        out
    }

    pub fn failing_seeds(&self) -> Vec<String> {
        self.instances
            .iter()
            .filter(|i| !i.passed())
            .map(|i| seed_text(i.seed))
            .collect()
    }

    pub fn records(&self, timing: bool) -> Vec<Record> {
        let mut out = Vec::new();
        for inst in &self.instances {
            let mut head = Record::new("instance").field("seed", seed_text(inst.seed));
            for (k, v) in &inst.header {
                head.push(k.clone(), v);
            }
            out.push(head);
            for o in &inst.outcomes {
                let mut r = Record::new("check")
                    .field("seed", seed_text(inst.seed))
                    .field("check", o.check)
                    .field("status", if o.passed { "pass" } else { "fail" });
                for (k, v) in &o.fields {
                    r.push(k.clone(), v);
                }
                if let Some(w) = &o.witness {
                    r.push("witness", w);
                }
                for (i, t) in o.trace.iter().enumerate() {
                    r.push(format!("trace.{i}"), t);
                }
                if timing {
                    r.push("millis", o.millis);
                }
                out.push(r);
            }
        }
        for (check, t) in self.tallies() {
            out.push(
                Record::new("summary")
                    .field("check", check)
                    .field("pass", t.pass)
                    .field("fail", t.fail),
            );
        }
        let failing = self.failing_seeds();
        out.push(
            Record::new("total")
                .field("instances", self.instances.len())
                .field("failed_instances", failing.len())
                .field("failing_seeds", failing.join(",")),
        );
        out
    }

    pub fn render(&self, timing: bool) -> String {
        let mut text = String::new();
        for r in self.records(timing) {
            write!(text, "{r}").expect("writing to a string");
        }
        text
    }
}

fn seed_text(seed: Option<u64>) -> String {
    seed.map_or_else(|| "file".to_string(), |s| s.to_string())
}

/// Re-aggregates `check` records of a rendered report.
pub fn summarize(records: &[Record]) -> (Vec<Record>, bool) {
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut failing: Vec<String> = Vec::new();
    for r in records.iter().filter(|r| r.kind == "check") {
        let check = r.get("check").unwrap_or("?").to_string();
        let t = tallies.entry(check).or_default();
        if r.get("status") == Some("pass") {
            t.pass += 1;
        } else {
            t.fail += 1;
            let seed = r.get("seed").unwrap_or("?").to_string();
            if !failing.contains(&seed) {
                failing.push(seed);
            }
        }
    }
    let mut out: Vec<Record> = tallies
        .iter()
        .map(|(c, t)| {
            Record::new("summary")
                .field("check", c)
                .field("pass", t.pass)
                .field("fail", t.fail)
        })
        .collect();
    out.push(
        Record::new("total")
            .field("checks", tallies.values().map(|t| t.pass + t.fail).sum::<u64>())
            .field("failing_seeds", failing.join(",")),
    );
    (out, failing.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let recs = vec![
            Record::new("check").field("seed", 3).field("status", "pass"),
            Record::new("total").field("failing_seeds", ""),
        ];
        let text: String = recs.iter().map(|r| r.to_string()).collect();
        assert_eq!(parse_records(&text).unwrap(), recs);
        assert!(parse_records("seed=1\n").is_err());
        assert!(parse_records("record=a\nnot a field\n").is_err());
    }

    #[test]
    fn values_stay_on_one_line() {
        let r = Record::new("check").field("witness", "a\nb");
        assert_eq!(r.to_string(), "record=check\nwitness=a b\n\n");
    }
}
