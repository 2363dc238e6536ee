use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Comparison, ExperimentReport, PlotSeries};
use crate::density::ScoreDensity;
use crate::error::{Error, Result};
use crate::metrics::{between_group_calibration_gap, within_group_calibration_error};
use crate::population::{ConditionalScoreDensity, PopulationModel, ScoreMap};
use crate::report::ToDocument;
use crate::utility::{
    classify_cases, disparity_verdict, long_run_eu, monte_carlo_tolerance, optimal_threshold,
    PayoffMatrix, UtilityReport, ANALYTIC_TOL,
};

const PLOT_POINTS: usize = 101;

/// Parses a miscalibration map description:
/// `identity`, `flip` (1 - p), `constant:<v>`, `shrink:<k>` (0.5 + k (p - 0.5)),
/// `power:<g>` (p^g).
pub fn parse_map(desc: &str, grid: usize) -> Result<ScoreMap> {
    let (kind, arg) = match desc.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (desc, None),
    };
    let num = || -> Result<f64> {
        let a = arg.ok_or_else(|| Error::InvalidArgument(format!("map `{kind}` needs a value")))?;
        a.parse()
            .map_err(|_| Error::InvalidArgument(format!("map `{desc}`: `{a}` is not a number")))
    };
    match kind {
        "identity" => Ok(ScoreMap::identity(grid)),
        "flip" => ScoreMap::from_fn(grid, |p| 1.0 - p),
        "constant" => ScoreMap::constant(grid, num()?),
        "shrink" => {
            let k = num()?;
            ScoreMap::from_fn(grid, |p| 0.5 + k * (p - 0.5))
        }
        "power" => {
            let g = num()?;
            if g <= 0.0 {
                return Err(Error::InvalidArgument("power map needs a positive exponent".into()));
            }
            ScoreMap::from_fn(grid, |p| p.powf(g))
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown map `{other}` (expected identity, flip, constant:<v>, shrink:<k>, power:<g>)"
        ))),
    }
}

struct MonteCarlo {
    mean: f64,
    std_error: f64,
}

/// Draws true probabilities from `density`, decides on the displayed score and
/// realizes the outcome.
fn simulate(
    density: &ScoreDensity,
    displayed: &ScoreMap,
    payoff: &PayoffMatrix,
    threshold: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MonteCarlo> {
    let cells = WeightedIndex::new(density.weights().iter().copied())
        .map_err(|e| Error::InvalidDensity(e.to_string()))?;
    let h = density.cell_width();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let cell = cells.sample(rng);
        let p = (cell as f64 + rng.random::<f64>()) * h;
        let liked = rng.random::<f64>() < p;
        let u = match (displayed.value(cell) > threshold, liked) {
            (true, true) => payoff.u11,
            (true, false) => payoff.u10,
            (false, y) => payoff
                .outside
                .unwrap_or(if y { payoff.u01 } else { payoff.u00 }),
        };
        sum += u;
        sum_sq += u * u;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok(MonteCarlo {
        mean,
        std_error: (var / n as f64).sqrt(),
    })
}

/// Women see calibrated scores (`s = p`), men see `men_map(p)`; both act on
/// `s > 0.5` with true probabilities uniform on `[0, 1]`.
pub fn run_recommender_experiment(
    men_map: &ScoreMap,
    n_mc: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let grid = men_map.grid_size();
    let payoff = PayoffMatrix::recommender(0.0);
    let threshold = optimal_threshold(&payoff)?;
    let truth = ScoreDensity::uniform(grid)?;
    let identity = ScoreMap::identity(grid);

    let mut report = ExperimentReport::new("recommender");
    report
        .param("grid", grid)
        .param("samples", n_mc)
        .param("seed", seed)
        .param("threshold", threshold)
        .param("payoff.watch_liked", payoff.u11)
        .param("payoff.watch_disliked", payoff.u10)
        .param("payoff.outside", payoff.outside)
        .param("true_density", "uniform on [0, 1]");

    let women = long_run_eu(&truth, &identity, &payoff, threshold)?;
    let men = long_run_eu(&truth, men_map, &payoff, threshold)?;
    let mut utility = UtilityReport::new(
        vec![("women".into(), women), ("men".into(), men)],
        ANALYTIC_TOL,
    );
    utility.cases = Some(classify_cases(&truth, men_map, &payoff, threshold)?);
    let mut doc = crate::report::Document::new();
    utility.write_doc("utility", &mut doc);
    report.metrics.extend("", &doc);
    report.metric("shaded_area", women);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mc_women = simulate(&truth, &identity, &payoff, threshold, n_mc, &mut rng)?;
    let mc_men = simulate(&truth, men_map, &payoff, threshold, n_mc, &mut rng)?;
    let mc_tol = monte_carlo_tolerance(&[mc_women.std_error, mc_men.std_error]);
    report
        .metric("monte_carlo.women.expected", mc_women.mean)
        .metric("monte_carlo.women.std_error", mc_women.std_error)
        .metric("monte_carlo.men.expected", mc_men.mean)
        .metric("monte_carlo.men.std_error", mc_men.std_error)
        .metric("monte_carlo.disparity", (mc_women.mean - mc_men.mean).abs())
        .metric("monte_carlo.tolerance", mc_tol);

    let calibrated = ConditionalScoreDensity::calibrated(&truth)?;
    let pop = PopulationModel::new(vec![("women", calibrated.clone()), ("men", calibrated)])?
        .apply_score_map("men", men_map)?;
    let between = between_group_calibration_gap(&pop, None)?;
    let within_men = within_group_calibration_error(&pop, "men", None)?;
    report
        .metric("calibration.between.sup_gap", between.sup_gap)
        .metric("calibration.between.l1_gap", between.l1_gap)
        .metric("calibration.within_men.sup_error", within_men.sup_error)
        .metric("calibration.within_men.l1_error", within_men.l1_error);

    let verdict = disparity_verdict(&utility, ANALYTIC_TOL);
    debug_assert_eq!(verdict.holds, utility.verdict);
    report.verdict("equal_expected_utility", "utility.disparity", Comparison::AtMost(ANALYTIC_TOL));
    report.verdict(
        "equal_expected_utility_sampled",
        "monte_carlo.disparity",
        Comparison::AtMost(mc_tol),
    );
    report.verdict(
        "between_group_calibration",
        "calibration.between.sup_gap",
        Comparison::AtMost(1.0 / grid as f64),
    );

    let xs: Vec<f64> = (0..PLOT_POINTS).map(|k| k as f64 / (PLOT_POINTS - 1) as f64).collect();
    let realized = |map: &ScoreMap| -> Vec<(f64, f64)> {
        xs.iter()
            .map(|&p| {
                let cell = truth.cell_of(p);
                let u = if map.value(cell) > threshold {
                    payoff.act(p)
                } else {
                    payoff.decline(p)
                };
                (p, u)
            })
            .collect()
    };
    report.series = vec![
        PlotSeries::new("utility_watch", xs.iter().map(|&p| (p, payoff.act(p))).collect()),
        PlotSeries::new("utility_skip", xs.iter().map(|&p| (p, payoff.decline(p))).collect()),
        PlotSeries::new("realized_women", realized(&identity)),
        PlotSeries::new("realized_men", realized(men_map)),
    ];
    Ok(report)
}
