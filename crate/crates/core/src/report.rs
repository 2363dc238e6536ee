//! Line-oriented report documents.
//!
//! The structured form is one `key = value` per line with dotted key paths.
//! Numbers are rendered with 12 significant digits (C `%.12g` style), absent
//! quantities as `undefined`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{CalibrationReport, SeparationGap, SufficiencyGap, WithinGroupCalibration};
use crate::utility::{CaseBreakdown, UtilityReport};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Text(String),
    Undefined,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Num(v) => format_number(*v),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
            Value::Undefined => "undefined".into(),
        }
    }

    fn parse(raw: &str) -> Value {
        match raw {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "undefined" => Value::Undefined,
            _ => match raw.parse::<f64>() {
                Ok(v) if !raw.is_empty() => Value::Num(v),
                _ => Value::Text(raw.to_string()),
            },
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Undefined, Value::Num)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Num(v as f64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Num(v as f64)
    }
}

/// Renders `v` like C's `%.12g`.
pub fn format_number(v: f64) -> String {
    const SIG: i32 = 12;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIG).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (SIG - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Ordered `key = value` entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    entries: Vec<(String, Value)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.entries.push((key.into(), value.into()));
        self
    }

    pub fn extend(&mut self, prefix: &str, other: &Document) {
        for (k, v) in &other.entries {
            self.entries.push((join(prefix, k), v.clone()));
        }
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Document {
        let lead = format!("{prefix}.");
        Document {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&lead).map(|k| (k.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn to_doc_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {}", v.render());
        }
        out
    }

    /// Aligned two-column rendering for terminals.
    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k:<width$}  {}", v.render());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| Error::Parse {
                row: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            entries.push((k.trim().to_string(), Value::parse(v.trim())));
        }
        Ok(Self { entries })
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Writes a value's metrics under `prefix`.
pub trait ToDocument {
    fn write_doc(&self, prefix: &str, doc: &mut Document);

    fn to_document(&self) -> Document {
        let mut doc = Document::new();
        self.write_doc("", &mut doc);
        doc
    }
}

fn key(prefix: &str, k: &str) -> String {
    join(prefix, k)
}

impl ToDocument for CalibrationReport {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        doc.push(key(prefix, "groups"), self.groups.join(","));
        doc.push(key(prefix, "sup_gap"), self.sup_gap);
        doc.push(key(prefix, "l1_gap"), self.l1_gap);
        doc.push(key(prefix, "bins"), self.bins.len());
        for (j, b) in self.bins.iter().enumerate() {
            let p = key(prefix, &format!("bin.{j}"));
            doc.push(key(&p, "lo"), b.lo);
            doc.push(key(&p, "hi"), b.hi);
            doc.push(key(&p, "level"), b.level);
            doc.push(key(&p, "mass"), b.mass);
            doc.push(key(&p, "pooled_rate"), b.pooled_rate);
            for (g, r) in self.groups.iter().zip(&b.group_rates) {
                doc.push(key(&p, &format!("rate.{g}")), *r);
            }
            doc.push(key(&p, "gap"), b.gap);
        }
    }
}

impl ToDocument for WithinGroupCalibration {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        doc.push(key(prefix, "group"), self.group.as_str());
        doc.push(key(prefix, "sup_error"), self.sup_error);
        doc.push(key(prefix, "l1_error"), self.l1_error);
        for (j, b) in self.bins.iter().enumerate() {
            let p = key(prefix, &format!("bin.{j}"));
            doc.push(key(&p, "level"), b.level);
            doc.push(key(&p, "mass"), b.mass);
            doc.push(key(&p, "rate"), b.rate);
            doc.push(key(&p, "error"), b.error);
        }
    }
}

impl ToDocument for SeparationGap {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        for (g, r) in &self.per_group {
            doc.push(key(prefix, &format!("{g}.fpr")), r.fpr);
            doc.push(key(prefix, &format!("{g}.fnr")), r.fnr);
        }
        doc.push(key(prefix, "fpr_gap"), self.fpr_gap);
        doc.push(key(prefix, "fnr_gap"), self.fnr_gap);
    }
}

impl ToDocument for SufficiencyGap {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        for (g, pos, neg) in &self.per_group {
            doc.push(key(prefix, &format!("{g}.p_y1_given_d1")), *pos);
            doc.push(key(prefix, &format!("{g}.p_y1_given_d0")), *neg);
        }
        doc.push(key(prefix, "positive_gap"), self.positive_gap);
        doc.push(key(prefix, "negative_gap"), self.negative_gap);
        doc.push(key(prefix, "sup_gap"), self.sup());
    }
}

impl ToDocument for CaseBreakdown {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        for (k, c) in self.cases.iter().enumerate() {
            doc.push(key(prefix, &format!("case{}.mass", k + 1)), c.mass);
            doc.push(key(prefix, &format!("case{}.loss", k + 1)), c.loss);
        }
        doc.push(key(prefix, "total_loss"), self.total_loss());
    }
}

impl ToDocument for UtilityReport {
    fn write_doc(&self, prefix: &str, doc: &mut Document) {
        for (g, v) in &self.per_group {
            doc.push(key(prefix, &format!("{g}.expected")), *v);
        }
        doc.push(key(prefix, "disparity"), self.disparity);
        doc.push(key(prefix, "tolerance"), self.tolerance);
        doc.push(key(prefix, "verdict"), self.verdict);
        if let Some(c) = &self.cases {
            c.write_doc(&key(prefix, "cases"), doc);
        }
    }
}
