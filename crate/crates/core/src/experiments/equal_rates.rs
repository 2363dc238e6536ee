use super::{Comparison, ExperimentReport, PlotSeries};
use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;
use crate::report::ToDocument;
use crate::utility::{pointwise_eu, PayoffMatrix, UtilityReport, ANALYTIC_TOL};

const THRESHOLD: f64 = 0.5;
/// Displayed score of every atom that is recommended.
const HIGH_SCORE: f64 = 0.75;
/// Where the correctly handled mass sits (true probability = displayed score).
const CORRECT_LOW: f64 = 0.25;
const CORRECT_HIGH: f64 = 0.75;

/// A point mass of recommendations sharing one true probability.
#[derive(Debug, Clone, Copy)]
struct Atom {
    p: f64,
    displayed: f64,
    mass: f64,
}

struct GroupOutcome {
    confusion: ConfusionCounts,
    expected: f64,
    loss_per_false_positive: f64,
}

fn evaluate(atoms: &[Atom], payoff: &PayoffMatrix) -> Result<GroupOutcome> {
    let mut c = ConfusionCounts::default();
    let mut expected = 0.0;
    let mut fp_loss = 0.0;
    for a in atoms {
        let acted = a.displayed > THRESHOLD;
        let should = a.p > THRESHOLD;
        match (acted, should) {
            (true, true) => c.tp += a.mass,
            (true, false) => {
                c.fp += a.mass;
                fp_loss += a.mass * (pointwise_eu(a.p, payoff, false)? - pointwise_eu(a.p, payoff, true)?);
            }
            (false, true) => c.fn_ += a.mass,
            (false, false) => c.tn += a.mass,
        }
        expected += a.mass * pointwise_eu(a.p, payoff, acted)?;
    }
    Ok(GroupOutcome {
        loss_per_false_positive: if c.fp > 0.0 { fp_loss / c.fp } else { 0.0 },
        confusion: c,
        expected,
    })
}

/// Two groups with the same mass of wrong recommendations (`fp_mass`, all of
/// them recommended although `p < 0.5`) but concentrated at different true
/// probabilities. The rest of each group is handled correctly and identically.
///
/// Rates here compare the displayed-score decision with the decision taken on
/// the true probability.
pub fn run_equal_rates_unequal_utility(
    p_men: f64,
    p_women: f64,
    fp_mass: f64,
) -> Result<ExperimentReport> {
    for (name, p) in [("p_men", p_men), ("p_women", p_women)] {
        if !(0.0..THRESHOLD).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {p} is not a false positive at threshold {THRESHOLD}"
            )));
        }
    }
    if !(0.0..=1.0).contains(&fp_mass) {
        return Err(Error::InvalidArgument(format!("fp_mass {fp_mass} outside [0, 1]")));
    }
    let payoff = PayoffMatrix::recommender(0.0);
    let rest = 1.0 - fp_mass;
    let group = |p: f64| {
        [
            Atom { p, displayed: HIGH_SCORE, mass: fp_mass },
            Atom { p: CORRECT_LOW, displayed: CORRECT_LOW, mass: 0.5 * rest },
            Atom { p: CORRECT_HIGH, displayed: CORRECT_HIGH, mass: 0.5 * rest },
        ]
    };
    let men = evaluate(&group(p_men), &payoff)?;
    let women = evaluate(&group(p_women), &payoff)?;

    let mut r = ExperimentReport::new("equal-rates");
    r.param("p_men", p_men)
        .param("p_women", p_women)
        .param("fp_mass", fp_mass)
        .param("threshold", THRESHOLD)
        .param("construction", "fp_mass recommended at displayed 0.75; rest split evenly between p=s=0.25 and p=s=0.75");

    let mut gaps = (0.0f64, 0.0f64);
    for (label, g) in [("men", &men), ("women", &women)] {
        let rates = g.confusion.rates();
        r.metric(&format!("rates.{label}.fpr"), rates.fpr)
            .metric(&format!("rates.{label}.fnr"), rates.fnr)
            .metric(&format!("loss_per_false_positive.{label}"), g.loss_per_false_positive);
    }
    let (rm, rw) = (men.confusion.rates(), women.confusion.rates());
    if let (Some(a), Some(b)) = (rm.fpr, rw.fpr) {
        gaps.0 = (a - b).abs();
    }
    if let (Some(a), Some(b)) = (rm.fnr, rw.fnr) {
        gaps.1 = (a - b).abs();
    }
    r.metric("rates.fpr_gap", gaps.0).metric("rates.fnr_gap", gaps.1);

    let utility = UtilityReport::new(
        vec![("men".into(), men.expected), ("women".into(), women.expected)],
        ANALYTIC_TOL,
    );
    utility.write_doc("utility", &mut r.metrics);
    let predicted = fp_mass * ((2.0 * p_men - 1.0) - (2.0 * p_women - 1.0)).abs();
    r.metric("utility.predicted_disparity", predicted);

    r.verdict("equal_error_rates", "rates.fpr_gap", Comparison::AtMost(1e-12));
    r.verdict("equal_false_negative_rates", "rates.fnr_gap", Comparison::AtMost(1e-12));
    r.verdict("equal_expected_utility", "utility.disparity", Comparison::AtMost(ANALYTIC_TOL));

    r.series = vec![PlotSeries::new(
        "false_positive_loss",
        vec![
            (p_men, men.loss_per_false_positive),
            (p_women, women.loss_per_false_positive),
        ],
    )];
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentrated_false_positives() {
        let r = run_equal_rates_unequal_utility(0.1, 0.4, 0.1).unwrap();
        assert_eq!(r.verdict_holds("equal_error_rates"), Some(true));
        assert_eq!(r.verdict_holds("equal_false_negative_rates"), Some(true));
        assert!((r.metric_f64("loss_per_false_positive.men").unwrap() - 0.8).abs() < 1e-12);
        assert!((r.metric_f64("loss_per_false_positive.women").unwrap() - 0.2).abs() < 1e-12);
        // 0.1 * |(-0.8) - (-0.2)|
        assert!((r.metric_f64("utility.disparity").unwrap() - 0.06).abs() < 1e-9);
        assert_eq!(r.verdict_holds("equal_expected_utility"), Some(false));
    }

    #[test]
    fn degenerate_inputs() {
        let r = run_equal_rates_unequal_utility(0.3, 0.3, 0.1).unwrap();
        assert_eq!(r.metric_f64("utility.disparity"), Some(0.0));
        let r = run_equal_rates_unequal_utility(0.1, 0.4, 0.0).unwrap();
        assert_eq!(r.metric_f64("utility.disparity"), Some(0.0));
        assert_eq!(r.metric_f64("rates.men.fpr"), Some(0.0));
        assert!(run_equal_rates_unequal_utility(0.6, 0.4, 0.1).is_err());
        assert!(run_equal_rates_unequal_utility(0.1, 0.4, 1.5).is_err());
    }
}
