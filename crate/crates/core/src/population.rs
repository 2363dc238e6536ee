//! Groups described by the joint law of (score, outcome), and populations
//! made of several such groups.

use crate::density::{cell_index, ScoreDensity};
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;

/// Sub-densities of scores for the `Y = 0` and `Y = 1` members of one group.
///
/// `∫f0 + ∫f1 = 1`, so `∫f1` is the group's base rate `P(Y = 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalScoreDensity {
    f0: ScoreDensity,
    f1: ScoreDensity,
}

impl ConditionalScoreDensity {
    pub fn new(f0: ScoreDensity, f1: ScoreDensity) -> Result<Self> {
        if f0.grid_size() != f1.grid_size() {
            return Err(Error::GridMismatch {
                expected: f0.grid_size(),
                found: f1.grid_size(),
            });
        }
        let total = f0.mass() + f1.mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!(
                "sub-densities integrate to {total}, expected 1"
            )));
        }
        Ok(Self { f0, f1 })
    }

    /// Calibrated group with score density `f`: `f1(s) = s f(s)`,
    /// `f0(s) = (1 - s) f(s)`.
    pub fn calibrated(f: &ScoreDensity) -> Result<Self> {
        let f = f.normalized()?;
        Self::new(f.modulated(|s| 1.0 - s)?, f.modulated(|s| s)?)
    }

    /// Calibrated group whose scores are uniform on `[0, 1]` (base rate 1/2).
    pub fn calibrated_uniform(grid_size: usize) -> Result<Self> {
        Self::calibrated(&ScoreDensity::uniform(grid_size)?)
    }

    /// Calibrated group with an exponentially tilted score density whose base
    /// rate is exactly `base_rate` on the grid.
    pub fn calibrated_with_base_rate(grid_size: usize, base_rate: f64) -> Result<Self> {
        Self::calibrated(&ScoreDensity::tilted_with_mean(grid_size, base_rate)?)
    }

    pub fn f0(&self) -> &ScoreDensity {
        &self.f0
    }

    pub fn f1(&self) -> &ScoreDensity {
        &self.f1
    }

    pub fn grid_size(&self) -> usize {
        self.f0.grid_size()
    }

    pub fn base_rate(&self) -> f64 {
        self.f1.mass()
    }

    /// Marginal score density `f0 + f1`.
    pub fn marginal(&self) -> ScoreDensity {
        ScoreDensity::from_weights_unchecked(
            self.f0
                .weights()
                .iter()
                .zip(self.f1.weights())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Same group with `f0` replaced; total mass must be preserved.
    pub fn with_f0(&self, f0: ScoreDensity) -> Result<Self> {
        Self::new(f0, self.f1.clone())
    }

    /// Per-cell `P(Y = 1 | S in cell)`; `None` where the cell carries no mass.
    pub fn calibration_curve(&self) -> Vec<Option<f64>> {
        self.f0
            .weights()
            .iter()
            .zip(self.f1.weights())
            .map(|(&w0, &w1)| {
                let total = w0 + w1;
                (total > 0.0).then(|| w1 / total)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    pub density: ConditionalScoreDensity,
    /// Relative size used when sampling or pooling; need not sum to one.
    pub weight: f64,
}

/// Named groups sharing one score grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    groups: Vec<Group>,
}

impl PopulationModel {
    /// Builds a population with equal group weights.
    pub fn new<S: Into<String>>(groups: Vec<(S, ConditionalScoreDensity)>) -> Result<Self> {
        Self::with_weights(groups.into_iter().map(|(l, d)| (l, d, 1.0)).collect())
    }

    pub fn with_weights<S: Into<String>>(groups: Vec<(S, ConditionalScoreDensity, f64)>) -> Result<Self> {
        let groups: Vec<Group> = groups
            .into_iter()
            .map(|(label, density, weight)| Group {
                label: label.into(),
                density,
                weight,
            })
            .collect();
        if groups.len() < 2 {
            return Err(Error::TooFewGroups {
                needed: 2,
                found: groups.len(),
            });
        }
        let grid = groups[0].density.grid_size();
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|o| o.label == g.label) {
                return Err(Error::DuplicateGroup(g.label.clone()));
            }
            if g.density.grid_size() != grid {
                return Err(Error::GridMismatch {
                    expected: grid,
                    found: g.density.grid_size(),
                });
            }
            if !(g.weight.is_finite() && g.weight > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "group `{}` has non-positive weight {}",
                    g.label, g.weight
                )));
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.label.as_str())
    }

    pub fn grid_size(&self) -> usize {
        self.groups[0].density.grid_size()
    }

    pub fn group(&self, label: &str) -> Result<&ConditionalScoreDensity> {
        self.groups
            .iter()
            .find(|g| g.label == label)
            .map(|g| &g.density)
            .ok_or_else(|| Error::UnknownGroup(label.to_string()))
    }

    /// Copy with the density of `label` replaced.
    pub fn with_group(&self, label: &str, density: ConditionalScoreDensity) -> Result<Self> {
        if density.grid_size() != self.grid_size() {
            return Err(Error::GridMismatch {
                expected: self.grid_size(),
                found: density.grid_size(),
            });
        }
        let mut out = self.clone();
        let slot = out
            .groups
            .iter_mut()
            .find(|g| g.label == label)
            .ok_or_else(|| Error::UnknownGroup(label.to_string()))?;
        slot.density = density;
        Ok(out)
    }

    pub fn base_rate(&self, label: &str) -> Result<f64> {
        self.group(label).map(ConditionalScoreDensity::base_rate)
    }

    pub fn calibration_curve(&self, label: &str) -> Result<Vec<Option<f64>>> {
        self.group(label).map(ConditionalScoreDensity::calibration_curve)
    }

    /// Replaces the displayed score of group `label` by `map(p)`. Mass of each
    /// outcome class moves cell-to-cell, so `∫f0` and `∫f1` are unchanged.
    pub fn apply_score_map(&self, label: &str, map: &ScoreMap) -> Result<Self> {
        let group = self.group(label)?;
        if map.grid_size() != self.grid_size() {
            return Err(Error::GridMismatch {
                expected: self.grid_size(),
                found: map.grid_size(),
            });
        }
        let transport = |d: &ScoreDensity| -> Result<ScoreDensity> {
            let mut out = vec![0.0; d.grid_size()];
            for (i, w) in d.weights().iter().enumerate() {
                out[map.target_cell(i)] += w;
            }
            ScoreDensity::new(out)
        };
        let moved = ConditionalScoreDensity::new(transport(group.f0())?, transport(group.f1())?)?;
        self.with_group(label, moved)
    }
}

/// Displayed score as a function of the true probability, one value per
/// grid cell (evaluated at the cell midpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("score map has no cells".into()));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::MapOutOfRange { cell, value });
        }
        Ok(Self { values })
    }

    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / grid_size as f64;
        Self::new((0..grid_size).map(|i| f((i as f64 + 0.5) * h)).collect())
    }

    pub fn identity(grid_size: usize) -> Self {
        Self::from_fn(grid_size, |p| p).expect("midpoints lie in [0, 1]")
    }

    pub fn constant(grid_size: usize, value: f64) -> Result<Self> {
        Self::from_fn(grid_size, |_| value)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Displayed score for true probabilities in `cell`.
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub(crate) fn target_cell(&self, cell: usize) -> usize {
        cell_index(self.values[cell], self.values.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_uniform(n: usize) -> PopulationModel {
        let g = ConditionalScoreDensity::calibrated_uniform(n).unwrap();
        PopulationModel::new(vec![("a", g.clone()), ("b", g)]).unwrap()
    }

    #[test]
    fn base_rate_edge_cases() {
        let n = 64;
        let none = ConditionalScoreDensity::new(
            ScoreDensity::uniform(n).unwrap(),
            ScoreDensity::zeros(n).unwrap(),
        )
        .unwrap();
        assert_eq!(none.base_rate(), 0.0);
        assert!(none.calibration_curve().iter().all(|c| *c == Some(0.0)));

        let pop = two_uniform(1024);
        let oracle = ScoreDensity::uniform(1024).unwrap().integrate(|s| s);
        assert!((pop.base_rate("a").unwrap() - oracle).abs() < 1e-12);
        assert!((pop.base_rate("a").unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pop.base_rate("zz"), Err(Error::UnknownGroup("zz".into())));
    }

    #[test]
    fn calibrated_curve_is_identity() {
        let pop = two_uniform(256);
        let curve = pop.calibration_curve("a").unwrap();
        for (i, c) in curve.iter().enumerate() {
            let s = (i as f64 + 0.5) / 256.0;
            assert!((c.unwrap() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cells_are_undefined() {
        let f = ScoreDensity::uniform_on(8, 0.5, 1.0).unwrap();
        let g = ConditionalScoreDensity::calibrated(&f).unwrap();
        let curve = g.calibration_curve();
        assert!(curve[..4].iter().all(Option::is_none));
        assert!(curve[4..].iter().all(Option::is_some));
    }

    #[test]
    fn doubled_positives_break_calibration() {
        let n = 128;
        let base = ConditionalScoreDensity::calibrated_uniform(n).unwrap();
        let f1 = base.f1().scaled(2.0).unwrap();
        let total = base.f0().mass() + f1.mass();
        let g = ConditionalScoreDensity::new(
            base.f0().scaled(1.0 / total).unwrap(),
            f1.scaled(1.0 / total).unwrap(),
        )
        .unwrap();
        let curve = g.calibration_curve();
        for (i, c) in curve.iter().enumerate().skip(1).take(n - 2) {
            let s = (i as f64 + 0.5) / n as f64;
            // 2s / (1 + s) != s for s in (0, 1)
            assert!((c.unwrap() - 2.0 * s / (1.0 + s)).abs() < 1e-12);
            assert!((c.unwrap() - s).abs() > 1e-6);
        }
    }

    #[test]
    fn rejects_bad_populations() {
        let g = ConditionalScoreDensity::calibrated_uniform(16).unwrap();
        assert!(matches!(
            PopulationModel::new(vec![("a", g.clone())]),
            Err(Error::TooFewGroups { .. })
        ));
        assert_eq!(
            PopulationModel::new(vec![("a", g.clone()), ("a", g.clone())]),
            Err(Error::DuplicateGroup("a".into()))
        );
        let other = ConditionalScoreDensity::calibrated_uniform(32).unwrap();
        assert!(matches!(
            PopulationModel::new(vec![("a", g), ("b", other)]),
            Err(Error::GridMismatch { .. })
        ));
        let unnormalized = ConditionalScoreDensity::new(
            ScoreDensity::uniform(4).unwrap(),
            ScoreDensity::uniform(4).unwrap(),
        );
        assert!(unnormalized.is_err());
    }

    #[test]
    fn identity_map_is_noop() {
        let pop = two_uniform(1024);
        let out = pop.apply_score_map("a", &ScoreMap::identity(1024)).unwrap();
        let (x, y) = (pop.group("a").unwrap(), out.group("a").unwrap());
        for (u, v) in x.f1().weights().iter().zip(y.f1().weights()) {
            assert!((u - v).abs() < 1e-12);
        }
        for (u, v) in x.f0().weights().iter().zip(y.f0().weights()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_map_concentrates_mass() {
        let n = 1024;
        let pop = two_uniform(n);
        let out = pop
            .apply_score_map("a", &ScoreMap::constant(n, 0.9).unwrap())
            .unwrap();
        let g = out.group("a").unwrap();
        let cell = g.f0().cell_of(0.9);
        assert!((g.f0().cell_mass(cell) - 0.5).abs() < 1e-9);
        assert!((g.f1().cell_mass(cell) - 0.5).abs() < 1e-9);
        assert!((g.f0().mass() - 0.5).abs() < 1e-9);
        assert!((g.f1().mass() - 0.5).abs() < 1e-9);
        // the other group is untouched
        assert_eq!(out.group("b").unwrap(), pop.group("b").unwrap());
    }

    #[test]
    fn flip_map_inverts_calibration() {
        let n = 512;
        let pop = two_uniform(n);
        let out = pop
            .apply_score_map("a", &ScoreMap::from_fn(n, |p| 1.0 - p).unwrap())
            .unwrap();
        for (i, c) in out.calibration_curve("a").unwrap().iter().enumerate() {
            let s = (i as f64 + 0.5) / n as f64;
            assert!((c.unwrap() - (1.0 - s)).abs() < 1e-12);
        }
    }

    #[test]
    fn map_validation() {
        assert!(matches!(
            ScoreMap::new(vec![0.2, 1.2]),
            Err(Error::MapOutOfRange { cell: 1, .. })
        ));
        let pop = two_uniform(16);
        assert!(matches!(
            pop.apply_score_map("a", &ScoreMap::identity(8)),
            Err(Error::GridMismatch { .. })
        ));
    }
}
