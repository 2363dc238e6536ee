//! Threshold decision rules and the solvers that tune them to parity targets.
//!
//! A score `s` leads to a positive decision iff `s > T` (strict). Randomized
//! policies mix two thresholds: with probability `mix` the lower threshold is
//! used, otherwise the upper one. Decision probabilities are returned exactly;
//! nothing in this module draws random numbers.

use std::collections::BTreeMap;
use std::fmt;

use crate::density::ScoreDensity;
use crate::error::{Error, Result};
use crate::metrics::{confusion_for_group, ConfusionCounts};
use crate::population::{ConditionalScoreDensity, PopulationModel};

/// Threshold resolution of the solvers.
pub const SOLVER_TOL: f64 = 1e-8;
/// Iteration cap of the solvers.
pub const SOLVER_MAX_ITER: usize = 200;
/// Largest mismatch a solver may leave on its target quantity.
pub const TARGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    Deterministic { threshold: f64 },
    Randomized { lower: f64, upper: f64, mix: f64 },
}

impl ThresholdPolicy {
    pub fn threshold(t: f64) -> Self {
        ThresholdPolicy::Deterministic { threshold: t }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            ThresholdPolicy::Deterministic { threshold } if unit(threshold) => Ok(()),
            ThresholdPolicy::Randomized { lower, upper, mix }
                if unit(lower) && unit(upper) && unit(mix) && lower <= upper =>
            {
                Ok(())
            }
            other => Err(Error::InvalidArgument(format!("invalid policy {other:?}"))),
        }
    }

    /// Probability of a positive decision at score `s`.
    pub fn decide(&self, s: f64) -> f64 {
        let above = |t: f64| if s > t { 1.0 } else { 0.0 };
        match *self {
            ThresholdPolicy::Deterministic { threshold } => above(threshold),
            ThresholdPolicy::Randomized { lower, upper, mix } => {
                mix * above(lower) + (1.0 - mix) * above(upper)
            }
        }
    }

    /// Average decision probability over scores uniform on `[lo, hi)`.
    pub fn accept_fraction(&self, lo: f64, hi: f64) -> f64 {
        let share = |t: f64| ((hi - t.max(lo)) / (hi - lo)).clamp(0.0, 1.0);
        match *self {
            ThresholdPolicy::Deterministic { threshold } => share(threshold),
            ThresholdPolicy::Randomized { lower, upper, mix } => {
                mix * share(lower) + (1.0 - mix) * share(upper)
            }
        }
    }

    /// Exact mass of `density` receiving a positive decision.
    pub fn accepted_mass(&self, density: &ScoreDensity) -> f64 {
        match *self {
            ThresholdPolicy::Deterministic { threshold } => density.mass_above(threshold),
            ThresholdPolicy::Randomized { lower, upper, mix } => {
                mix * density.mass_above(lower) + (1.0 - mix) * density.mass_above(upper)
            }
        }
    }
}

/// One threshold policy per group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionRule {
    policies: BTreeMap<String, ThresholdPolicy>,
}

impl DecisionRule {
    pub fn new<S: Into<String>>(policies: impl IntoIterator<Item = (S, ThresholdPolicy)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (label, policy) in policies {
            policy.validate()?;
            let label = label.into();
            if map.insert(label.clone(), policy).is_some() {
                return Err(Error::DuplicateGroup(label));
            }
        }
        Ok(Self { policies: map })
    }

    /// The same deterministic threshold for every listed group.
    pub fn shared_threshold<'a>(labels: impl IntoIterator<Item = &'a str>, t: f64) -> Result<Self> {
        Self::new(labels.into_iter().map(|l| (l, ThresholdPolicy::threshold(t))))
    }

    pub fn policy(&self, label: &str) -> Result<&ThresholdPolicy> {
        self.policies
            .get(label)
            .ok_or_else(|| Error::MissingPolicy(label.to_string()))
    }

    pub fn policies(&self) -> impl Iterator<Item = (&str, &ThresholdPolicy)> {
        self.policies.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn decide(&self, label: &str, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
        }
        Ok(self.policy(label)?.decide(s))
    }

    /// Parses the line format written by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut policies = Vec::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { row: row + 1, message };
            let mut fields = BTreeMap::new();
            for token in line.split_whitespace() {
                let (k, v) = token
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got `{token}`")))?;
                fields.insert(k, v);
            }
            let get = |k: &str| -> Result<&str> {
                fields.get(k).copied().ok_or_else(|| err(format!("missing `{k}`")))
            };
            let num = |k: &str| -> Result<f64> {
                get(k)?
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad `{k}`: {e}")))
            };
            let policy = match get("kind")? {
                "det" => ThresholdPolicy::Deterministic { threshold: num("t1")? },
                "rand" => ThresholdPolicy::Randomized {
                    lower: num("t1")?,
                    upper: num("t2")?,
                    mix: num("q")?,
                },
                other => return Err(err(format!("unknown kind `{other}`"))),
            };
            policy.validate().map_err(|e| err(e.to_string()))?;
            policies.push((get("group")?.to_string(), policy));
        }
        Self::new(policies)
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, policy) in &self.policies {
            match policy {
                ThresholdPolicy::Deterministic { threshold } => {
                    writeln!(f, "group={label} kind=det t1={threshold}")?
                }
                ThresholdPolicy::Randomized { lower, upper, mix } => {
                    writeln!(f, "group={label} kind=rand t1={lower} t2={upper} q={mix}")?
                }
            }
        }
        Ok(())
    }
}

/// Replaces every group's score by the binary prediction `R` of `rule`.
///
/// The result lives on a two-cell grid: `R = 0` in `[0, 0.5)` and `R = 1` in
/// `[0.5, 1]`, so thresholding it at 0.5 reproduces the rule.
pub fn coarsen(pop: &PopulationModel, rule: &DecisionRule) -> Result<PopulationModel> {
    let mut groups = Vec::with_capacity(pop.groups().len());
    for g in pop.groups() {
        let c = confusion_for_group(&g.density, rule.policy(&g.label)?);
        let f0 = ScoreDensity::new(vec![2.0 * c.tn, 2.0 * c.fp])?;
        let f1 = ScoreDensity::new(vec![2.0 * c.fn_, 2.0 * c.tp])?;
        groups.push((
            g.label.clone(),
            ConditionalScoreDensity::new(f0, f1)?,
            g.weight,
        ));
    }
    PopulationModel::with_weights(groups)
}

/// Rule that thresholds a coarsened population back into its decisions.
pub fn coarsened_rule(pop: &PopulationModel) -> Result<DecisionRule> {
    DecisionRule::shared_threshold(pop.labels(), 0.5)
}

/// Largest probed point still below the target, within `SOLVER_TOL`.
fn bisect(mut lo: f64, mut hi: f64, below_target: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..SOLVER_MAX_ITER {
        if hi - lo <= SOLVER_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below_target(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Equalized-odds post-processing: every non-reference group gets a mix of
/// two thresholds whose (FPR, FNR) equals the reference group's.
///
/// The mix is the point on the chord between the ROC point of `T1` and the
/// origin (`T2 = 1`, never positive) that lies on the ray through the target.
pub fn solve_equalized_odds(
    pop: &PopulationModel,
    reference: &str,
    reference_policy: ThresholdPolicy,
) -> Result<DecisionRule> {
    reference_policy.validate()?;
    let target = confusion_for_group(pop.group(reference)?, &reference_policy);
    let (fpr, fnr) = match (target.fpr(), target.fnr()) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(Error::Precondition(format!(
                "reference group `{reference}` has undefined error rates"
            )))
        }
    };
    let mut policies = vec![(reference.to_string(), reference_policy)];
    for g in pop.groups().iter().filter(|g| g.label != reference) {
        let policy = match_roc_point(&g.density, fpr, 1.0 - fnr).map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("group `{}`: {msg}", g.label)),
            other => other,
        })?;
        policies.push((g.label.clone(), policy));
    }
    DecisionRule::new(policies)
}

fn match_roc_point(group: &ConditionalScoreDensity, fpr: f64, tpr: f64) -> Result<ThresholdPolicy> {
    let (m0, m1) = (group.f0().mass(), group.f1().mass());
    if m0 <= 0.0 || m1 <= 0.0 {
        return Err(Error::Precondition("group has an empty outcome class".into()));
    }
    let roc = |t: f64| (group.f0().mass_above(t) / m0, group.f1().mass_above(t) / m1);
    if tpr < fpr - 1e-12 {
        return Err(Error::Infeasible(format!(
            "target (fpr {fpr}, tpr {tpr}) lies below the chance diagonal"
        )));
    }
    if tpr <= 0.0 {
        return Ok(ThresholdPolicy::threshold(1.0));
    }

    let anchor = if fpr <= 0.0 {
        // largest score carried by a negative: beyond it fpr is zero
        let last = group
            .f0()
            .weights()
            .iter()
            .rposition(|w| *w > 0.0)
            .expect("m0 > 0");
        (last + 1) as f64 * group.f0().cell_width()
    } else {
        let cross = |t: f64| {
            let (x, y) = roc(t);
            y * fpr - x * tpr
        };
        let n = group.grid_size();
        let first_positive = (1..=n)
            .map(|k| k as f64 / n as f64)
            .find(|&t| cross(t) > 0.0)
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "target (fpr {fpr}, tpr {tpr}) lies above the group's ROC curve"
                ))
            })?;
        let start = (first_positive - 1.0 / n as f64).max(0.0);
        bisect(start, first_positive, |t| cross(t) <= 0.0)
    };

    let (_, anchor_tpr) = roc(anchor);
    if anchor_tpr <= 0.0 {
        return Err(Error::Infeasible(format!(
            "target tpr {tpr} is unreachable without false positives"
        )));
    }
    let mix = tpr / anchor_tpr;
    if mix > 1.0 + TARGET_TOL {
        return Err(Error::Infeasible(format!(
            "target (fpr {fpr}, tpr {tpr}) lies above the group's ROC curve"
        )));
    }
    // a mix this close to one moves the rates by less than the bisection does
    let policy = if mix >= 1.0 - 10.0 * SOLVER_TOL {
        ThresholdPolicy::threshold(anchor)
    } else {
        ThresholdPolicy::Randomized {
            lower: anchor,
            upper: 1.0,
            mix,
        }
    };
    let got = confusion_for_group(group, &policy);
    let (gf, gn) = (got.fpr().unwrap_or(f64::NAN), got.fnr().unwrap_or(f64::NAN));
    if !((gf - fpr).abs() <= TARGET_TOL && (gn - (1.0 - tpr)).abs() <= TARGET_TOL) {
        return Err(Error::Infeasible(format!(
            "closest chord point (fpr {gf}, fnr {gn}) misses target (fpr {fpr}, fnr {})",
            1.0 - tpr
        )));
    }
    Ok(policy)
}

/// Parity of the joint harm probability `P[D = 0, Y = 1]`: every non-reference
/// group gets the deterministic threshold whose joint probability matches the
/// reference group's, i.e. `P_g[D=0|Y=1] P_g(Y=1) = P_ref[D=0|Y=1] P_ref(Y=1)`.
pub fn solve_parity_ratio(
    pop: &PopulationModel,
    reference: &str,
    reference_policy: ThresholdPolicy,
) -> Result<DecisionRule> {
    reference_policy.validate()?;
    let target = confusion_for_group(pop.group(reference)?, &reference_policy).fn_;
    let mut policies = vec![(reference.to_string(), reference_policy)];
    for g in pop.groups().iter().filter(|g| g.label != reference) {
        let policy = match_joint_harm(&g.density, target)
            .map_err(|e| Error::Infeasible(format!("group `{}`: {e}", g.label)))?;
        policies.push((g.label.clone(), policy));
    }
    DecisionRule::new(policies)
}

fn match_joint_harm(group: &ConditionalScoreDensity, target: f64) -> Result<ThresholdPolicy> {
    let base = group.base_rate();
    if target > base + 1e-12 {
        return Err(Error::Infeasible(format!(
            "joint probability {target} exceeds base rate {base}"
        )));
    }
    let t = bisect(0.0, 1.0, |t| group.f1().mass_below(t) < target);
    let got = group.f1().mass_below(t);
    if (got - target).abs() > TARGET_TOL {
        return Err(Error::Infeasible(format!(
            "threshold {t} reaches {got}, target {target}"
        )));
    }
    Ok(ThresholdPolicy::threshold(t))
}

/// Confusion cells of one group under one policy.
pub fn group_confusion(pop: &PopulationModel, rule: &DecisionRule, label: &str) -> Result<ConfusionCounts> {
    Ok(confusion_for_group(pop.group(label)?, rule.policy(label)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_threshold() {
        let p = ThresholdPolicy::threshold(0.5);
        assert_eq!(p.decide(0.5), 0.0);
        assert_eq!(p.decide(0.51), 1.0);
        let r = ThresholdPolicy::Randomized {
            lower: 0.3,
            upper: 0.7,
            mix: 0.25,
        };
        assert_eq!(r.decide(0.5), 0.25);
        assert_eq!(ThresholdPolicy::threshold(1.0).decide(1.0), 0.0);
    }

    #[test]
    fn accept_fraction_splits_cells() {
        let p = ThresholdPolicy::threshold(0.25);
        assert!((p.accept_fraction(0.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(p.accept_fraction(0.5, 1.0), 1.0);
        assert_eq!(p.accept_fraction(0.0, 0.25), 0.0);
    }

    #[test]
    fn rule_validation_and_lookup() {
        assert!(DecisionRule::new([("a", ThresholdPolicy::threshold(1.5))]).is_err());
        assert!(DecisionRule::new([(
            "a",
            ThresholdPolicy::Randomized {
                lower: 0.7,
                upper: 0.3,
                mix: 0.5
            }
        )])
        .is_err());
        let rule = DecisionRule::shared_threshold(["a", "b"], 0.5).unwrap();
        assert_eq!(rule.decide("c", 0.4), Err(Error::MissingPolicy("c".into())));
        assert!(rule.decide("a", 1.5).is_err());
    }

    #[test]
    fn serialization_format() {
        let rule = DecisionRule::new([
            ("men", ThresholdPolicy::threshold(0.5)),
            (
                "women",
                ThresholdPolicy::Randomized {
                    lower: 0.25,
                    upper: 1.0,
                    mix: 0.75,
                },
            ),
        ])
        .unwrap();
        let text = rule.to_string();
        assert_eq!(
            text,
            "group=men kind=det t1=0.5\ngroup=women kind=rand t1=0.25 t2=1 q=0.75\n"
        );
        assert_eq!(DecisionRule::parse(&text).unwrap(), rule);
        assert!(matches!(
            DecisionRule::parse("group=a kind=foo t1=0.1"),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(DecisionRule::parse("group=a kind=rand t1=0.1").is_err());
    }

    fn pop(b0: f64, b1: f64) -> PopulationModel {
        PopulationModel::new(vec![
            ("a", ConditionalScoreDensity::calibrated_with_base_rate(1024, b0).unwrap()),
            ("b", ConditionalScoreDensity::calibrated_with_base_rate(1024, b1).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn coarsen_keeps_masses() {
        let g = ConditionalScoreDensity::calibrated_uniform(1024).unwrap();
        let p = PopulationModel::new(vec![("a", g.clone()), ("b", g)]).unwrap();
        let rule = DecisionRule::shared_threshold(["a", "b"], 0.5).unwrap();
        let c = coarsen(&p, &rule).unwrap();
        let a = c.group("a").unwrap();
        // P(R = 1) = 0.5, P(Y = 1 | R = 1) = 0.375 / 0.5
        assert!((a.f0().cell_mass(1) + a.f1().cell_mass(1) - 0.5).abs() < 1e-12);
        assert!((a.calibration_curve()[1].unwrap() - 0.75).abs() < 1e-12);

        let always = DecisionRule::shared_threshold(["a", "b"], 0.0).unwrap();
        let c = coarsen(&p, &always).unwrap();
        let a = c.group("a").unwrap();
        assert_eq!(a.f0().cell_mass(0) + a.f1().cell_mass(0), 0.0);
    }

    #[test]
    fn equalized_odds_identical_groups_is_deterministic() {
        let p = pop(0.4, 0.4);
        let rule = solve_equalized_odds(&p, "a", ThresholdPolicy::threshold(0.5)).unwrap();
        match rule.policy("b").unwrap() {
            ThresholdPolicy::Deterministic { threshold } => {
                assert!((threshold - 0.5).abs() < 1e-6, "{threshold}")
            }
            other => panic!("expected deterministic, got {other:?}"),
        }
    }

    #[test]
    fn equalized_odds_matches_rates() {
        let p = pop(0.3, 0.6);
        let rule = solve_equalized_odds(&p, "a", ThresholdPolicy::threshold(0.5)).unwrap();
        let a = group_confusion(&p, &rule, "a").unwrap();
        let b = group_confusion(&p, &rule, "b").unwrap();
        assert!((a.fpr().unwrap() - b.fpr().unwrap()).abs() <= 1e-6);
        assert!((a.fnr().unwrap() - b.fnr().unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn equalized_odds_rejects_uninformative_group() {
        // scores concentrated on one cell carry almost no information
        let n = 1024;
        let flat = ConditionalScoreDensity::calibrated(&ScoreDensity::uniform_on(n, 0.5, 0.5 + 1.0 / n as f64).unwrap()).unwrap();
        let p = PopulationModel::new(vec![
            ("a", ConditionalScoreDensity::calibrated_uniform(n).unwrap()),
            ("b", flat),
        ])
        .unwrap();
        let err = solve_equalized_odds(&p, "a", ThresholdPolicy::threshold(0.5)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn parity_ratio_hits_joint_target() {
        let p = pop(0.3, 0.6);
        // reference threshold giving P_a[D=0, Y=1] = 0.1
        let t_ref = bisect(0.0, 1.0, |t| p.group("a").unwrap().f1().mass_below(t) < 0.1);
        let rule = solve_parity_ratio(&p, "a", ThresholdPolicy::threshold(t_ref)).unwrap();
        let a = group_confusion(&p, &rule, "a").unwrap();
        let b = group_confusion(&p, &rule, "b").unwrap();
        assert!((a.fn_ - 0.1).abs() < 1e-6);
        assert!((b.fn_ - 0.1).abs() < 1e-6);
    }

    #[test]
    fn parity_ratio_infeasible_above_base_rate() {
        let p = pop(0.9, 0.6);
        // all positives of `a` rejected: joint 0.9 > 0.6
        let err = solve_parity_ratio(&p, "a", ThresholdPolicy::threshold(1.0)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn parity_ratio_identical_groups() {
        let p = pop(0.45, 0.45);
        let rule = solve_parity_ratio(&p, "a", ThresholdPolicy::threshold(0.6)).unwrap();
        match rule.policy("b").unwrap() {
            ThresholdPolicy::Deterministic { threshold } => assert!((threshold - 0.6).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }
}
