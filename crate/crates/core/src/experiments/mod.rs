//! Canned experiments: the recommender miscalibration loss, equal error rates
//! with unequal harm, the judge construction, and the appendix counterexample.
//!
//! Every experiment returns an [`ExperimentReport`] whose verdicts refer to a
//! metric key, so they can be recomputed from the serialized report alone
//! (see [`check_consistency`]).

mod appendix;
mod equal_rates;
mod judge;
mod recommender;

pub use appendix::{
    run_appendix_counterexample, AppendixConstruction, AppendixMeasurement, SweepSummary,
};
pub use equal_rates::run_equal_rates_unequal_utility;
pub use judge::{run_judge_experiment, JudgeOutcome};
pub use recommender::{parse_map, run_recommender_experiment};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::report::{format_number, Document, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    AtMost(f64),
    Above(f64),
}

impl Comparison {
    pub fn holds(&self, value: Option<f64>) -> bool {
        match (self, value) {
            (Comparison::AtMost(t), Some(v)) => v <= *t,
            (Comparison::Above(t), Some(v)) => v > *t,
            (_, None) => false,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Comparison::AtMost(_) => "at_most",
            Comparison::Above(_) => "above",
        }
    }

    fn tolerance(&self) -> f64 {
        match self {
            Comparison::AtMost(t) | Comparison::Above(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub name: String,
    /// Key into the report metrics.
    pub metric: String,
    pub comparison: Comparison,
    pub magnitude: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.points {
            let _ = writeln!(out, "{},{}", format_number(*x), format_number(*y));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    pub params: Document,
    pub metrics: Document,
    pub verdicts: Vec<VerdictRecord>,
    pub series: Vec<PlotSeries>,
}

impl ExperimentReport {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            params: Document::new(),
            metrics: Document::new(),
            verdicts: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.params.push(key, value);
        self
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.metrics.push(key, value);
        self
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get_f64(key)
    }

    /// Adds a verdict evaluated on an already recorded metric.
    pub fn verdict(&mut self, name: &str, metric: &str, comparison: Comparison) -> bool {
        let magnitude = self.metrics.get_f64(metric);
        let holds = comparison.holds(magnitude);
        self.verdicts.push(VerdictRecord {
            name: name.into(),
            metric: metric.into(),
            comparison,
            magnitude,
            holds,
        });
        holds
    }

    pub fn verdict_holds(&self, name: &str) -> Option<bool> {
        self.verdicts.iter().find(|v| v.name == name).map(|v| v.holds)
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new();
        doc.push("experiment", self.id.as_str());
        doc.extend("params", &self.params);
        doc.extend("metrics", &self.metrics);
        for v in &self.verdicts {
            let p = format!("verdict.{}", v.name);
            doc.push(format!("{p}.metric"), v.metric.as_str());
            doc.push(format!("{p}.rule"), v.comparison.name());
            doc.push(format!("{p}.tolerance"), v.comparison.tolerance());
            doc.push(format!("{p}.magnitude"), v.magnitude);
            doc.push(format!("{p}.holds"), v.holds);
        }
        for s in &self.series {
            doc.push(format!("series.{}.points", s.name), s.points.len());
        }
        doc
    }
}

/// Recomputes every verdict of a serialized report from its metrics.
pub fn check_consistency(doc: &Document) -> Result<()> {
    let metrics = doc.section("metrics");
    let verdicts = doc.section("verdict");
    let mut names: Vec<&str> = verdicts
        .entries()
        .iter()
        .filter_map(|(k, _)| k.strip_suffix(".holds"))
        .collect();
    names.dedup();
    for name in names {
        let field = |f: &str| verdicts.get(&format!("{name}.{f}")).cloned();
        let bad = |msg: &str| Error::Precondition(format!("verdict `{name}`: {msg}"));
        let metric = field("metric")
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or_else(|| bad("missing metric"))?;
        let tol = field("tolerance")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| bad("missing tolerance"))?;
        let comparison = match field("rule").as_ref().and_then(Value::as_str) {
            Some("at_most") => Comparison::AtMost(tol),
            Some("above") => Comparison::Above(tol),
            _ => return Err(bad("unknown rule")),
        };
        let stored = field("holds")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| bad("missing holds"))?;
        let value = metrics.get_f64(&metric);
        if comparison.holds(value) != stored {
            return Err(bad(&format!(
                "stored {stored} but metric `{metric}` = {value:?} gives the opposite"
            )));
        }
        if field("magnitude").and_then(|v| v.as_f64()) != value {
            return Err(bad("magnitude differs from metric"));
        }
    }
    Ok(())
}

/// A runnable experiment and the parameters it accepts as `key=value`.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentInfo {
    pub id: &'static str,
    pub summary: &'static str,
    /// `(name, default)`; an empty default means the value is required.
    pub params: &'static [(&'static str, &'static str)],
}

pub const EXPERIMENTS: &[ExperimentInfo] = &[
    ExperimentInfo {
        id: "recommender",
        summary: "expected-utility loss of a miscalibrated recommender score",
        params: &[("map", "constant:0.9")],
    },
    ExperimentInfo {
        id: "equal-rates",
        summary: "equal error rates with unequal utility loss",
        params: &[("p_men", "0.1"), ("p_women", "0.4"), ("fp_mass", "0.1")],
    },
    ExperimentInfo {
        id: "judge",
        summary: "equalized odds on calibrated scores with unequal base rates",
        params: &[("base_rate_m", "0.3"), ("base_rate_f", "0.6"), ("reference_t", "0.5")],
    },
    ExperimentInfo {
        id: "appendix",
        summary: "equal joint harm without equal negative predictive composition",
        params: &[("reshapes", "100")],
    },
];

pub fn experiment_info(id: &str) -> Result<&'static ExperimentInfo> {
    EXPERIMENTS.iter().find(|e| e.id == id).ok_or_else(|| {
        let ids: Vec<&str> = EXPERIMENTS.iter().map(|e| e.id).collect();
        Error::InvalidArgument(format!(
            "unknown experiment `{id}`; valid ids: {}",
            ids.join(", ")
        ))
    })
}
