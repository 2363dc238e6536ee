//! Piecewise-constant densities on a uniform grid over `[0, 1]`.
//!
//! Cell `i` covers `[i/n, (i+1)/n)`; the last cell is closed at 1. Point
//! evaluations of weight functions use the cell midpoint, while threshold
//! integrals (`mass_above`, `mass_below`) are exact for the piecewise-constant
//! shape, so thresholded quantities are continuous in the threshold.

use crate::error::{Error, Result};

/// Default number of grid cells.
pub const DEFAULT_GRID: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDensity {
    weights: Vec<f64>,
}

impl ScoreDensity {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDensity("grid must have at least one cell".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDensity(format!(
                "weight {w} at cell {i} is not a finite nonnegative number"
            )));
        }
        Ok(Self { weights })
    }

    pub fn zeros(grid_size: usize) -> Result<Self> {
        Self::new(vec![0.0; grid_size])
    }

    /// The uniform density `f(s) = 1`.
    pub fn uniform(grid_size: usize) -> Result<Self> {
        Self::new(vec![1.0; grid_size])
    }

    /// Samples `f` at every cell midpoint.
    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / grid_size as f64;
        Self::new((0..grid_size).map(|i| f((i as f64 + 0.5) * h)).collect())
    }

    /// Constant density `1 / (hi - lo)` on the cells covering `[lo, hi)`.
    /// Both ends are snapped to cell boundaries.
    pub fn uniform_on(grid_size: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "support [{lo}, {hi}) is not a nonempty subinterval of [0, 1]"
            )));
        }
        let first = (lo * grid_size as f64).round() as usize;
        let last = ((hi * grid_size as f64).round() as usize).min(grid_size);
        if first >= last {
            return Err(Error::InvalidArgument(format!(
                "support [{lo}, {hi}) covers no cell at grid size {grid_size}"
            )));
        }
        let mut weights = vec![0.0; grid_size];
        let level = grid_size as f64 / (last - first) as f64;
        weights[first..last].iter_mut().for_each(|w| *w = level);
        Self::new(weights)
    }

    /// Exponentially tilted uniform density whose mean (on the grid) equals
    /// `mean`. Used to build calibrated groups with a prescribed base rate.
    pub fn tilted_with_mean(grid_size: usize, mean: f64) -> Result<Self> {
        let h = 1.0 / grid_size as f64;
        let (lo_mean, hi_mean) = (0.5 * h, 1.0 - 0.5 * h);
        if !(mean > lo_mean && mean < hi_mean) {
            return Err(Error::InvalidArgument(format!(
                "mean {mean} not attainable on a grid of {grid_size} cells"
            )));
        }
        let build = |lambda: f64| -> ScoreDensity {
            let peak = lambda.max(0.0) * hi_mean + lambda.min(0.0) * lo_mean;
            let raw: Vec<f64> = (0..grid_size)
                .map(|i| (lambda * (i as f64 + 0.5) * h - peak).exp())
                .collect();
            let mut d = ScoreDensity { weights: raw };
            let m = d.mass();
            d.weights.iter_mut().for_each(|w| *w /= m);
            d
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while build(lo).mean() > mean {
            lo *= 2.0;
        }
        while build(hi).mean() < mean {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if build(m).mean() < mean {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo < 1e-14 * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(build(0.5 * (lo + hi)))
    }

    pub fn grid_size(&self) -> usize {
        self.weights.len()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.weights.len() as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.cell_width()
    }

    /// Index of the cell containing `s`, with `s = 1` mapped to the last cell.
    pub fn cell_of(&self, s: f64) -> usize {
        cell_index(s, self.grid_size())
    }

    /// Probability mass held by one cell.
    pub fn cell_mass(&self, cell: usize) -> f64 {
        self.weights[cell] * self.cell_width()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.cell_width()
    }

    /// First moment `∫ s f(s) ds`, exact for the piecewise-constant shape.
    pub fn mean(&self) -> f64 {
        self.integrate(|s| s)
    }

    /// Midpoint-rule integral `∫ f(s) w(s) ds`.
    pub fn integrate(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let h = self.cell_width();
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * weight((i as f64 + 0.5) * h))
            .sum::<f64>()
            * h
    }

    /// Exact mass on `(t, 1]`.
    pub fn mass_above(&self, t: f64) -> f64 {
        self.mass() - self.mass_below(t)
    }

    /// Exact mass on `[0, t]`.
    pub fn mass_below(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return self.mass();
        }
        let h = self.cell_width();
        let cell = self.cell_of(t);
        let full: f64 = self.weights[..cell].iter().sum::<f64>() * h;
        full + self.weights[cell] * (t - cell as f64 * h)
    }

    /// Exact integral of the density against a per-cell acceptance fraction.
    /// `fraction(lo, hi)` must return the share of `[lo, hi)` accepted.
    pub fn integrate_fraction(&self, fraction: impl Fn(f64, f64) -> f64) -> f64 {
        let h = self.cell_width();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| w * h * fraction(i as f64 * h, (i + 1) as f64 * h))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }

    /// Pointwise product with `g` evaluated at cell midpoints.
    pub fn modulated(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        let h = self.cell_width();
        Self::new(
            self.weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * g((i as f64 + 0.5) * h))
                .collect(),
        )
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if m <= 0.0 {
            return Err(Error::InvalidDensity("cannot normalize a zero density".into()));
        }
        self.scaled(1.0 / m)
    }

    pub(crate) fn from_weights_unchecked(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

/// Three equal-width boxes that move mass from the `center` box to the
/// `left` and `right` boxes without changing total mass or first moment.
///
/// Box positions are cell indices of each box's first cell. The amplitude of
/// the right box is given; the left amplitude follows from the moment balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxReshape {
    pub width: usize,
    pub left: usize,
    pub center: usize,
    pub right: usize,
    pub right_amplitude: f64,
}

impl BoxReshape {
    /// Density added on the left box.
    pub fn left_amplitude(&self) -> f64 {
        let (a, b, c) = (self.left as f64, self.center as f64, self.right as f64);
        self.right_amplitude * (c - b) / (b - a)
    }

    pub fn center_amplitude(&self) -> f64 {
        self.left_amplitude() + self.right_amplitude
    }

    pub fn apply(&self, density: &ScoreDensity) -> Result<ScoreDensity> {
        let n = density.grid_size();
        let ok = self.width > 0
            && self.left + self.width <= self.center
            && self.center + self.width <= self.right
            && self.right + self.width <= n
            && self.right_amplitude.is_finite()
            && self.right_amplitude >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("malformed reshape {self:?}")));
        }
        let mut weights = density.weights.clone();
        let (left, center) = (self.left_amplitude(), self.center_amplitude());
        for k in 0..self.width {
            weights[self.left + k] += left;
            weights[self.center + k] -= center;
            weights[self.right + k] += self.right_amplitude;
        }
        // absorb rounding on cells that are driven exactly to zero
        for w in &mut weights[self.center..self.center + self.width] {
            if *w < 0.0 && *w > -1e-12 {
                *w = 0.0;
            }
        }
        ScoreDensity::new(weights).map_err(|_| {
            Error::InvalidDensity(format!("reshape {self:?} drives the density negative"))
        })
    }
}

pub(crate) fn cell_index(s: f64, grid_size: usize) -> usize {
    ((s * grid_size as f64).floor().max(0.0) as usize).min(grid_size - 1)
}

/// Midpoint-rule integral of `weight` against `density`.
pub fn integrate(density: &ScoreDensity, weight: impl Fn(f64) -> f64) -> f64 {
    density.integrate(weight)
}
