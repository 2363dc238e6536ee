use super::{Comparison, ExperimentReport, PlotSeries};
use crate::error::{Error, Result};
use crate::metrics::{
    confusion_for_group, impossibility_witness, separation_gap, sufficiency_gap_binary,
    within_group_calibration_error, WITNESS_EPS,
};
use crate::population::{ConditionalScoreDensity, PopulationModel};
use crate::report::ToDocument;
use crate::rules::{coarsen, coarsened_rule, solve_equalized_odds, solve_parity_ratio, DecisionRule, ThresholdPolicy};
use crate::utility::{judge_disutility, Convention, ANALYTIC_TOL};

const REFERENCE: &str = "men";
const OTHER: &str = "women";
const ROC_POINTS: usize = 101;

/// Everything the judge pipeline builds, for callers that keep working with it.
#[derive(Debug, Clone)]
pub struct JudgeOutcome {
    pub report: ExperimentReport,
    pub population: PopulationModel,
    /// Equalized-odds rule.
    pub rule: DecisionRule,
    /// Population of the binary prediction `R` under `rule`.
    pub coarsened: PopulationModel,
    /// Rule equalizing `P[D = 0, Y = 1]`, built only for the per-person convention.
    pub parity_rule: Option<DecisionRule>,
}

fn write_rule(report: &mut ExperimentReport, prefix: &str, rule: &DecisionRule) {
    for (label, policy) in rule.policies() {
        let p = format!("{prefix}.{label}");
        match *policy {
            ThresholdPolicy::Deterministic { threshold } => {
                report.metric(&format!("{p}.t1"), threshold);
            }
            ThresholdPolicy::Randomized { lower, upper, mix } => {
                report
                    .metric(&format!("{p}.t1"), lower)
                    .metric(&format!("{p}.t2"), upper)
                    .metric(&format!("{p}.mix"), mix);
            }
        }
    }
}

fn roc(group: &ConditionalScoreDensity) -> Vec<(f64, f64)> {
    let (m0, m1) = (group.f0().mass(), group.f1().mass());
    (0..ROC_POINTS)
        .map(|k| {
            let t = k as f64 / (ROC_POINTS - 1) as f64;
            (group.f0().mass_above(t) / m0, group.f1().mass_above(t) / m1)
        })
        .collect()
}

/// Calibrated raw scores for men and women with the given base rates; men are
/// decided by `s > reference_t`, women get the randomized thresholds that give
/// them the men's error rates. `Y = 1` means the defendant would not reoffend,
/// `D = 0` means detention.
pub fn run_judge_experiment(
    base_rate_m: f64,
    base_rate_f: f64,
    reference_t: f64,
    grid: usize,
    convention: Convention,
) -> Result<JudgeOutcome> {
    for (name, b) in [("base_rate_m", base_rate_m), ("base_rate_f", base_rate_f)] {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidArgument(format!("{name} = {b} must lie in (0, 1)")));
        }
    }
    let population = PopulationModel::new(vec![
        (REFERENCE, ConditionalScoreDensity::calibrated_with_base_rate(grid, base_rate_m)?),
        (OTHER, ConditionalScoreDensity::calibrated_with_base_rate(grid, base_rate_f)?),
    ])?;
    let reference_policy = ThresholdPolicy::threshold(reference_t);
    let rule = solve_equalized_odds(&population, REFERENCE, reference_policy)?;

    let mut report = ExperimentReport::new("judge");
    report
        .param("base_rate_m", base_rate_m)
        .param("base_rate_f", base_rate_f)
        .param("reference_t", reference_t)
        .param("grid", grid)
        .param("convention", convention.to_string())
        .param("reference_group", REFERENCE)
        .param("scores", "calibrated within group, exponentially tilted to the base rate");

    for g in population.groups() {
        report.metric(&format!("base_rate.{}", g.label), g.density.base_rate());
        let within = within_group_calibration_error(&population, &g.label, None)?;
        report.metric(&format!("raw_calibration.{}.sup_error", g.label), within.sup_error);
    }
    write_rule(&mut report, "rule", &rule);

    let separation = separation_gap(&population, &rule)?;
    separation.write_doc("separation", &mut report.metrics);
    report.metric("separation.sup_gap", separation.sup());

    let coarsened = coarsen(&population, &rule)?;
    let sufficiency = sufficiency_gap_binary(&coarsened, &coarsened_rule(&coarsened)?)?;
    sufficiency.write_doc("sufficiency", &mut report.metrics);

    let disutility = judge_disutility(&population, &rule, convention, ANALYTIC_TOL)?;
    disutility.write_doc("disutility", &mut report.metrics);
    report.metric("no_prima_facie_discrimination", disutility.verdict);
    for g in population.groups() {
        let c = confusion_for_group(&g.density, rule.policy(&g.label)?);
        report.metric(&format!("joint.{}.d0_y1", g.label), c.fn_ / c.total());
    }

    match impossibility_witness(&population, &rule) {
        Ok(w) => {
            report
                .metric("witness.applicable", true)
                .metric("witness.implied_sufficiency_gap", w.implied_sufficiency_gap)
                .metric("witness.consistent", w.consistent());
        }
        Err(Error::Precondition(_)) => {
            report.metric("witness.applicable", false);
        }
        Err(e) => return Err(e),
    }

    report.verdict("separation_holds", "separation.sup_gap", Comparison::AtMost(WITNESS_EPS));
    report.verdict("sufficiency_holds", "sufficiency.sup_gap", Comparison::AtMost(WITNESS_EPS));
    report.verdict("equal_expected_harm", "disutility.disparity", Comparison::AtMost(ANALYTIC_TOL));

    let parity_rule = if convention == Convention::PerPerson {
        let parity = solve_parity_ratio(&population, REFERENCE, reference_policy)?;
        write_rule(&mut report, "parity_rule", &parity);
        let fixed = judge_disutility(&population, &parity, convention, ANALYTIC_TOL)?;
        fixed.write_doc("parity_rule.disutility", &mut report.metrics);
        report.verdict(
            "equal_expected_harm_parity_rule",
            "parity_rule.disutility.disparity",
            Comparison::AtMost(ANALYTIC_TOL),
        );
        Some(parity)
    } else {
        None
    };

    let mut operating = Vec::new();
    for (label, r) in &separation.per_group {
        if let (Some(fpr), Some(fnr)) = (r.fpr, r.fnr) {
            operating.push((fpr, 1.0 - fnr));
        }
        report.series.push(PlotSeries::new(
            format!("roc_{label}"),
            roc(population.group(label)?),
        ));
    }
    report.series.push(PlotSeries::new("operating_points", operating));

    Ok(JudgeOutcome {
        report,
        population,
        rule,
        coarsened,
        parity_rule,
    })
}
