//! Expected utility of threshold decisions.
//!
//! Two settings are covered. In the recommender setting the decider acts on a
//! displayed score while outcomes follow the true probability `p`; utility is
//! compared to the rule that sees `p` itself. In the judge setting a harm of 1
//! is incurred when `D = 0` and `Y = 1`, and group harm is measured either per
//! outcome class or per person.

use std::fmt;
use std::str::FromStr;

use crate::density::ScoreDensity;
use crate::error::{Error, Result};
use crate::metrics::confusion_for_group;
use crate::population::{PopulationModel, ScoreMap};
use crate::rules::DecisionRule;

/// Default tolerance for analytic utility parity.
pub const ANALYTIC_TOL: f64 = 1e-6;

/// Utility `U(d, y)`. When `outside` is set, declining (`d = 0`) yields that
/// value whatever the outcome, and `u01`/`u00` are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffMatrix {
    pub u11: f64,
    pub u10: f64,
    pub u01: f64,
    pub u00: f64,
    pub outside: Option<f64>,
}

impl PayoffMatrix {
    /// Watching a liked movie is worth +1, a disliked one -1; not watching is
    /// worth `outside`.
    pub fn recommender(outside: f64) -> Self {
        Self {
            u11: 1.0,
            u10: -1.0,
            u01: outside,
            u00: outside,
            outside: Some(outside),
        }
    }

    /// Harm of 1 for `D = 0, Y = 1`, nothing otherwise.
    pub fn judge_harm() -> Self {
        Self {
            u11: 0.0,
            u10: 0.0,
            u01: 1.0,
            u00: 0.0,
            outside: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.u11, self.u10, self.u01, self.u00, self.outside.unwrap_or(0.0)];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("non-finite payoff {self:?}")))
        }
    }

    /// Expected utility of acting (`d = 1`) at true probability `p`.
    pub fn act(&self, p: f64) -> f64 {
        p * self.u11 + (1.0 - p) * self.u10
    }

    /// Expected utility of declining (`d = 0`) at true probability `p`.
    pub fn decline(&self, p: f64) -> f64 {
        self.outside.unwrap_or(p * self.u01 + (1.0 - p) * self.u00)
    }
}

/// Expected utility at true probability `p` of decision `d`.
pub fn pointwise_eu(p: f64, payoff: &PayoffMatrix, act: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(if act { payoff.act(p) } else { payoff.decline(p) })
}

/// Probability above which acting beats declining, clamped to `[0, 1]`.
pub fn optimal_threshold(payoff: &PayoffMatrix) -> Result<f64> {
    payoff.validate()?;
    // act(p) - decline(p) = slope * p + intercept
    let intercept = payoff.act(0.0) - payoff.decline(0.0);
    let slope = (payoff.act(1.0) - payoff.decline(1.0)) - intercept;
    if slope <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "payoff {payoff:?} does not favour acting as p grows"
        )));
    }
    Ok((-intercept / slope).clamp(0.0, 1.0))
}

/// Long-run expected utility when decisions follow `displayed(p) > threshold`
/// and `p` is distributed as `true_density`.
pub fn long_run_eu(
    true_density: &ScoreDensity,
    displayed: &ScoreMap,
    payoff: &PayoffMatrix,
    threshold: f64,
) -> Result<f64> {
    check_grid(true_density, displayed)?;
    let h = true_density.cell_width();
    Ok(true_density
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let p = true_density.midpoint(i);
            let u = if displayed.value(i) > threshold {
                payoff.act(p)
            } else {
                payoff.decline(p)
            };
            w * h * u
        })
        .sum())
}

fn check_grid(d: &ScoreDensity, m: &ScoreMap) -> Result<()> {
    if d.grid_size() != m.grid_size() {
        return Err(Error::GridMismatch {
            expected: d.grid_size(),
            found: m.grid_size(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaseCell {
    pub mass: f64,
    /// Utility lost against the decision taken on the true probability.
    pub loss: f64,
}

/// Mass and loss per case: 1 = (s ≤ T, p ≤ T), 2 = (s > T, p ≤ T),
/// 3 = (s ≤ T, p > T), 4 = (s > T, p > T).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaseBreakdown {
    pub cases: [CaseCell; 4],
}

impl CaseBreakdown {
    pub fn case(&self, k: usize) -> CaseCell {
        self.cases[k - 1]
    }

    pub fn total_loss(&self) -> f64 {
        self.cases.iter().map(|c| c.loss).sum()
    }

    /// Mass of wrong decisions (cases 2 and 3).
    pub fn wrong_mass(&self) -> f64 {
        self.cases[1].mass + self.cases[2].mass
    }
}

pub fn classify_cases(
    true_density: &ScoreDensity,
    displayed: &ScoreMap,
    payoff: &PayoffMatrix,
    threshold: f64,
) -> Result<CaseBreakdown> {
    check_grid(true_density, displayed)?;
    let mut out = CaseBreakdown::default();
    for (i, &w) in true_density.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let p = true_density.midpoint(i);
        let mass = w * true_density.cell_width();
        let acted = displayed.value(i) > threshold;
        let should = p > threshold;
        let (k, loss) = match (acted, should) {
            (false, false) => (0, 0.0),
            (true, false) => (1, payoff.decline(p) - payoff.act(p)),
            (false, true) => (2, payoff.act(p) - payoff.decline(p)),
            (true, true) => (3, 0.0),
        };
        out.cases[k].mass += mass;
        out.cases[k].loss += mass * loss;
    }
    Ok(out)
}

/// How the judge's harm is aggregated per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `P[D = 0 | Y = 1]`: expectation within the `Y = 1` class.
    PerOutcome,
    /// `P[D = 0 | Y = 1] · P(Y = 1)`: expectation over every group member.
    PerPerson,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::PerOutcome => "per-outcome",
            Convention::PerPerson => "per-person",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-outcome" => Ok(Convention::PerOutcome),
            "per-person" => Ok(Convention::PerPerson),
            other => Err(Error::InvalidArgument(format!(
                "unknown convention `{other}` (expected per-outcome or per-person)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    pub per_group: Vec<(String, f64)>,
    pub disparity: f64,
    pub tolerance: f64,
    pub verdict: bool,
    pub cases: Option<CaseBreakdown>,
}

impl UtilityReport {
    pub fn new(per_group: Vec<(String, f64)>, tolerance: f64) -> Self {
        let disparity = disparity_of(per_group.iter().map(|(_, v)| *v));
        Self {
            per_group,
            disparity,
            tolerance,
            verdict: disparity <= tolerance,
            cases: None,
        }
    }

    pub fn value(&self, label: &str) -> Option<f64> {
        self.per_group.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }
}

fn disparity_of(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Expected harm per group under `rule`.
pub fn judge_disutility(
    pop: &PopulationModel,
    rule: &DecisionRule,
    convention: Convention,
    tolerance: f64,
) -> Result<UtilityReport> {
    let mut per_group = Vec::with_capacity(pop.groups().len());
    for g in pop.groups() {
        let c = confusion_for_group(&g.density, rule.policy(&g.label)?);
        let harm = match convention {
            Convention::PerOutcome => c.fnr().ok_or_else(|| {
                Error::Undefined(format!("group `{}` has no Y = 1 members", g.label))
            })?,
            Convention::PerPerson => c.fn_ / c.total(),
        };
        per_group.push((g.label.clone(), harm));
    }
    Ok(UtilityReport::new(per_group, tolerance))
}

/// Outcome of the equal-average-utility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    pub magnitude: f64,
}

pub fn disparity_verdict(report: &UtilityReport, tol: f64) -> Verdict {
    let magnitude = disparity_of(report.per_group.iter().map(|(_, v)| *v));
    Verdict {
        holds: magnitude <= tol,
        magnitude,
    }
}

/// Tolerance for sampled utilities: three standard errors of the difference
/// of two group means.
pub fn monte_carlo_tolerance(std_errors: &[f64]) -> f64 {
    3.0 * std_errors.iter().map(|s| s * s).sum::<f64>().sqrt()
}
