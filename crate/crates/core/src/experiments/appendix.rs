use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Comparison, ExperimentReport, PlotSeries};
use crate::density::{BoxReshape, ScoreDensity};
use crate::error::{Error, Result};
use crate::metrics::confusion_for_group;
use crate::population::{ConditionalScoreDensity, PopulationModel};
use crate::rules::{solve_parity_ratio, DecisionRule, ThresholdPolicy};

const MEN: &str = "men";
const WOMEN: &str = "women";
const WOMEN_SUPPORT: (f64, f64) = (0.25, 0.625);
const EQUALITY_TOL: f64 = 1e-6;
const MIN_MOVED_MASS: f64 = 0.005;
const MAX_DRAWS: usize = 100_000;

/// Population A and the fixed thresholds applied to every variant of it.
///
/// Men: calibrated, scores uniform on `[0, 1]`, so `f_{m,0}(s) = 1 - s`.
/// Women: calibrated, scores uniform on `[0.25, 0.625)`. The women's threshold
/// is tuned so that `P[Y=1 | D=0]` agrees between the groups on A; the men's
/// threshold equalizes `P[D=0, Y=1]`.
#[derive(Debug, Clone)]
pub struct AppendixConstruction {
    pub population: PopulationModel,
    pub rule: DecisionRule,
    pub threshold_m: f64,
    pub threshold_f: f64,
}

/// Both equalities measured on one variant of the population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixMeasurement {
    /// `P[D=0, Y=1]` per group.
    pub joint_m: f64,
    pub joint_f: f64,
    /// `P[Y=1 | D=0]` per group.
    pub x_m: f64,
    pub x_f: f64,
    /// `P_m(D = 0)`.
    pub detained_m: f64,
    /// `∫ s f_{m,0}(s) ds`.
    pub mean_m0: f64,
}

impl AppendixMeasurement {
    pub fn star_gap(&self) -> f64 {
        (self.joint_m - self.joint_f).abs()
    }

    pub fn double_star_gap(&self) -> f64 {
        (self.x_m - self.x_f).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub count: usize,
    pub max_star_gap: f64,
    pub min_double_star_gap: f64,
    /// Reshapes on which `P[Y=1 | D=0]` still agrees within 1e-6.
    pub double_star_holds: usize,
    pub min_moved_mass: f64,
    pub max_mean_shift: f64,
}

fn measure(pop: &PopulationModel, rule: &DecisionRule) -> Result<AppendixMeasurement> {
    let men = pop.group(MEN)?;
    let cm = confusion_for_group(men, rule.policy(MEN)?);
    let cf = confusion_for_group(pop.group(WOMEN)?, rule.policy(WOMEN)?);
    let x = |c: &crate::metrics::ConfusionCounts| {
        c.false_omission_rate()
            .ok_or_else(|| Error::Undefined("no detained defendants".into()))
    };
    Ok(AppendixMeasurement {
        joint_m: cm.fn_ / cm.total(),
        joint_f: cf.fn_ / cf.total(),
        x_m: x(&cm)?,
        x_f: x(&cf)?,
        detained_m: (cm.fn_ + cm.tn) / cm.total(),
        mean_m0: men.f0().mean(),
    })
}

fn rule_for(pop: &PopulationModel, threshold_f: f64) -> Result<DecisionRule> {
    solve_parity_ratio(pop, WOMEN, ThresholdPolicy::threshold(threshold_f))
}

impl AppendixConstruction {
    pub fn build(grid: usize) -> Result<Self> {
        let men = ConditionalScoreDensity::calibrated_uniform(grid)?;
        let women = ConditionalScoreDensity::calibrated(&ScoreDensity::uniform_on(
            grid,
            WOMEN_SUPPORT.0,
            WOMEN_SUPPORT.1,
        )?)?;
        let population = PopulationModel::new(vec![(MEN, men), (WOMEN, women)])?;

        let h = 1.0 / grid as f64;
        let diff = |t: f64| -> Result<f64> {
            let m = measure(&population, &rule_for(&population, t)?)?;
            Ok(m.x_m - m.x_f)
        };
        let (mut lo, mut hi) = (WOMEN_SUPPORT.0 + 4.0 * h, WOMEN_SUPPORT.1 - h);
        let (d_lo, d_hi) = (diff(lo)?, diff(hi)?);
        if d_lo.signum() == d_hi.signum() {
            return Err(Error::Precondition(format!(
                "grid {grid} too coarse to tune the women's threshold"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if diff(mid)?.signum() == d_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let threshold_f = 0.5 * (lo + hi);
        let rule = rule_for(&population, threshold_f)?;
        let threshold_m = match rule.policy(MEN)? {
            ThresholdPolicy::Deterministic { threshold } => *threshold,
            other => return Err(Error::Precondition(format!("unexpected policy {other:?}"))),
        };
        Ok(Self {
            population,
            rule,
            threshold_m,
            threshold_f,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.population.grid_size()
    }

    pub fn men_f0(&self) -> &ScoreDensity {
        self.population.group(MEN).expect("men present").f0()
    }

    /// Population with the men's `f_{m,0}` reshaped.
    pub fn variant(&self, reshape: Option<&BoxReshape>) -> Result<PopulationModel> {
        match reshape {
            None => Ok(self.population.clone()),
            Some(r) => {
                let men = self.population.group(MEN)?;
                self.population.with_group(MEN, men.with_f0(r.apply(men.f0())?)?)
            }
        }
    }

    pub fn evaluate(&self, reshape: Option<&BoxReshape>) -> Result<AppendixMeasurement> {
        measure(&self.variant(reshape)?, &self.rule)
    }

    /// Largest admissible right-box amplitude: the center box may be emptied
    /// but not driven negative.
    fn max_amplitude(&self, width: usize, left: usize, center: usize, right: usize) -> f64 {
        let floor = self.men_f0().weights()[center..center + width]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let (l, c, r) = (left as f64, center as f64, right as f64);
        floor / (1.0 + (r - c) / (c - l))
    }

    /// Fixed bimodal reshape: a wide box removed around s = 0.4, balanced by
    /// boxes at the origin and just above the men's threshold.
    pub fn default_reshape(&self) -> Result<BoxReshape> {
        let n = self.grid_size();
        let width = (0.15 * n as f64).floor() as usize;
        let center = (0.35 * n as f64).round() as usize;
        let right = self.men_f0().cell_of(self.threshold_m) + 1;
        if width == 0 || center + width > right || right + width > n {
            return Err(Error::Precondition(format!("grid {n} too coarse for the reshape")));
        }
        Ok(BoxReshape {
            width,
            left: 0,
            center,
            right,
            right_amplitude: 0.9 * self.max_amplitude(width, 0, center, right),
        })
    }

    /// Random mean-preserving reshape with its center box below the men's
    /// threshold and its right box above it, moving at least 0.005 of mass
    /// across the threshold.
    pub fn random_reshape(&self, rng: &mut impl Rng) -> Result<BoxReshape> {
        let n = self.grid_size();
        let cut = self.men_f0().cell_of(self.threshold_m);
        let k_lo = (n / 64).max(1);
        let k_hi = (n / 8).max(k_lo);
        for _ in 0..MAX_DRAWS {
            let width = rng.random_range(k_lo..=k_hi);
            if 2 * width > cut || cut + 1 + width > n {
                continue;
            }
            let right = rng.random_range(cut + 1..=n - width);
            let center = rng.random_range(width..=cut - width);
            let left = rng.random_range(0..=center - width);
            let fraction = rng.random_range(0.2..=0.95);
            let amplitude = fraction * self.max_amplitude(width, left, center, right);
            if amplitude * width as f64 / n as f64 >= MIN_MOVED_MASS {
                return Ok(BoxReshape {
                    width,
                    left,
                    center,
                    right,
                    right_amplitude: amplitude,
                });
            }
        }
        Err(Error::Precondition(format!(
            "no admissible reshape found at grid {n}"
        )))
    }

    pub fn sweep(&self, count: usize, seed: u64) -> Result<SweepSummary> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = self.evaluate(None)?;
        let mut s = SweepSummary {
            count,
            max_star_gap: 0.0,
            min_double_star_gap: f64::INFINITY,
            double_star_holds: 0,
            min_moved_mass: f64::INFINITY,
            max_mean_shift: 0.0,
        };
        for _ in 0..count {
            let r = self.random_reshape(&mut rng)?;
            let m = self.evaluate(Some(&r))?;
            s.max_star_gap = s.max_star_gap.max(m.star_gap());
            s.min_double_star_gap = s.min_double_star_gap.min(m.double_star_gap());
            if m.double_star_gap() <= EQUALITY_TOL {
                s.double_star_holds += 1;
            }
            s.min_moved_mass = s.min_moved_mass.min(base.detained_m - m.detained_m);
            s.max_mean_shift = s.max_mean_shift.max((m.mean_m0 - base.mean_m0).abs());
        }
        Ok(s)
    }
}

fn density_points(d: &ScoreDensity) -> Vec<(f64, f64)> {
    d.weights()
        .iter()
        .enumerate()
        .map(|(i, w)| (d.midpoint(i), *w))
        .collect()
}

fn write_measurement(r: &mut ExperimentReport, prefix: &str, m: &AppendixMeasurement) {
    r.metric(&format!("{prefix}.joint.men"), m.joint_m)
        .metric(&format!("{prefix}.joint.women"), m.joint_f)
        .metric(&format!("{prefix}.star_gap"), m.star_gap())
        .metric(&format!("{prefix}.x.men"), m.x_m)
        .metric(&format!("{prefix}.x.women"), m.x_f)
        .metric(&format!("{prefix}.double_star_gap"), m.double_star_gap())
        .metric(&format!("{prefix}.detained.men"), m.detained_m)
        .metric(&format!("{prefix}.mean_f_m0"), m.mean_m0);
}

/// Two populations that share every joint probability `P[D=0, Y=1]` but
/// differ in `P_m[Y=1 | D=0]`, plus a sweep over random reshapes.
pub fn run_appendix_counterexample(grid: usize, reshapes: usize, seed: u64) -> Result<ExperimentReport> {
    let c = AppendixConstruction::build(grid)?;
    let reshape = c.default_reshape()?;
    let a = c.evaluate(None)?;
    let b = c.evaluate(Some(&reshape))?;

    let mut r = ExperimentReport::new("appendix");
    r.param("grid", grid)
        .param("reshapes", reshapes)
        .param("seed", seed)
        .param("shape.men", "calibrated, scores uniform on [0, 1]: f_m0(s) = 1 - s")
        .param("shape.women", "calibrated, scores uniform on [0.25, 0.625)")
        .param("shape.reshape", "f_m0 plus three equal-width boxes: +left, -center, +right, mass and mean preserved")
        .param("reshape.width_cells", reshape.width)
        .param("reshape.left_cell", reshape.left)
        .param("reshape.center_cell", reshape.center)
        .param("reshape.right_cell", reshape.right)
        .param("reshape.right_amplitude", reshape.right_amplitude)
        .param("reshape.center_amplitude", reshape.center_amplitude())
        .param("reshape.left_amplitude", reshape.left_amplitude());

    r.metric("threshold.men", c.threshold_m)
        .metric("threshold.women", c.threshold_f);
    write_measurement(&mut r, "a", &a);
    write_measurement(&mut r, "b", &b);
    r.metric("mean_shift", (b.mean_m0 - a.mean_m0).abs())
        .metric("moved_mass", a.detained_m - b.detained_m)
        .metric("x_gap.men", (a.x_m - b.x_m).abs())
        .metric("x_gap.women", (a.x_f - b.x_f).abs());

    r.verdict("star_holds_a", "a.star_gap", Comparison::AtMost(EQUALITY_TOL));
    r.verdict("star_holds_b", "b.star_gap", Comparison::AtMost(EQUALITY_TOL));
    r.verdict("double_star_holds_a", "a.double_star_gap", Comparison::AtMost(EQUALITY_TOL));
    r.verdict("double_star_holds_b", "b.double_star_gap", Comparison::AtMost(EQUALITY_TOL));
    r.verdict("x_men_differs", "x_gap.men", Comparison::Above(0.01));
    r.verdict("x_women_unchanged", "x_gap.women", Comparison::AtMost(1e-12));

    if reshapes > 0 {
        let s = c.sweep(reshapes, seed)?;
        r.metric("sweep.count", s.count)
            .metric("sweep.max_star_gap", s.max_star_gap)
            .metric("sweep.min_double_star_gap", s.min_double_star_gap)
            .metric("sweep.double_star_holds", s.double_star_holds)
            .metric("sweep.double_star_holds_fraction", s.double_star_holds as f64 / s.count as f64)
            .metric("sweep.min_moved_mass", s.min_moved_mass)
            .metric("sweep.max_mean_shift", s.max_mean_shift);
        r.verdict("sweep_star_holds", "sweep.max_star_gap", Comparison::AtMost(EQUALITY_TOL));
        r.verdict("sweep_double_star_fails", "sweep.min_double_star_gap", Comparison::Above(1e-3));
    }

    r.series = vec![
        PlotSeries::new("f_m0_a", density_points(c.men_f0())),
        PlotSeries::new(
            "f_m0_b",
            density_points(c.variant(Some(&reshape))?.group(MEN)?.f0()),
        ),
    ];
    Ok(r)
}
