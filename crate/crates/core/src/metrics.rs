//! Group fairness criteria for analytic populations and empirical datasets:
//! confusion cells, error rates, calibration (between groups and within a
//! group), separation, binary sufficiency, and a numeric witness of the
//! calibration / error-rate-balance impossibility.

use crate::dataset::AuditDataset;
use crate::density::cell_index;
use crate::error::{Error, Result};
use crate::population::{ConditionalScoreDensity, PopulationModel};
use crate::rules::{DecisionRule, ThresholdPolicy};

/// Default number of equal-width bins for empirical calibration.
pub const DEFAULT_BINS: usize = 10;

/// Confusion cells; counts for datasets, probability masses for populations.
///
/// Positive prediction is `D = 1`, positive outcome is `Y = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfusionCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl ConfusionCounts {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `b / (b + d)`
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `c / (a + c)`
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.tp + self.fn_)
    }

    /// `P(Y = 1 | D = 1)`
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `P(Y = 1 | D = 0)`
    pub fn false_omission_rate(&self) -> Option<f64> {
        ratio(self.fn_, self.fn_ + self.tn)
    }

    pub fn rates(&self) -> RatePair {
        RatePair {
            fpr: self.fpr(),
            fnr: self.fnr(),
        }
    }
}

/// False positive and false negative rate; `None` on a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

pub fn rates(c: &ConfusionCounts) -> RatePair {
    c.rates()
}

/// What metrics are computed over.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Population(&'a PopulationModel),
    Dataset(&'a AuditDataset),
}

impl<'a> From<&'a PopulationModel> for Source<'a> {
    fn from(p: &'a PopulationModel) -> Self {
        Source::Population(p)
    }
}

impl<'a> From<&'a AuditDataset> for Source<'a> {
    fn from(d: &'a AuditDataset) -> Self {
        Source::Dataset(d)
    }
}

impl Source<'_> {
    pub fn labels(&self) -> Vec<String> {
        match self {
            Source::Population(p) => p.labels().map(str::to_string).collect(),
            Source::Dataset(d) => d.labels(),
        }
    }

    fn require_groups(&self, needed: usize) -> Result<Vec<String>> {
        let labels = self.labels();
        if labels.len() < needed {
            return Err(Error::TooFewGroups {
                needed,
                found: labels.len(),
            });
        }
        Ok(labels)
    }
}

/// Where binary decisions come from.
#[derive(Debug, Clone, Copy)]
pub enum Decisions<'a> {
    Rule(&'a DecisionRule),
    /// The `decision` column of a dataset.
    Recorded,
}

impl<'a> From<&'a DecisionRule> for Decisions<'a> {
    fn from(r: &'a DecisionRule) -> Self {
        Decisions::Rule(r)
    }
}

/// Exact confusion masses of one analytic group under one policy.
pub fn confusion_for_group(group: &ConditionalScoreDensity, policy: &ThresholdPolicy) -> ConfusionCounts {
    let tp = policy.accepted_mass(group.f1());
    let fp = policy.accepted_mass(group.f0());
    ConfusionCounts {
        tp,
        fp,
        fn_: group.f1().mass() - tp,
        tn: group.f0().mass() - fp,
    }
}

pub fn confusion<'a>(
    source: impl Into<Source<'a>>,
    decisions: impl Into<Decisions<'a>>,
    label: &str,
) -> Result<ConfusionCounts> {
    match (source.into(), decisions.into()) {
        (Source::Population(p), Decisions::Rule(rule)) => {
            Ok(confusion_for_group(p.group(label)?, rule.policy(label)?))
        }
        (Source::Population(_), Decisions::Recorded) => Err(Error::InvalidArgument(
            "analytic populations carry no recorded decisions".into(),
        )),
        (Source::Dataset(d), decisions) => {
            if !d.labels().iter().any(|l| l == label) {
                return Err(Error::UnknownGroup(label.to_string()));
            }
            let policy = match decisions {
                Decisions::Rule(rule) => Some(rule.policy(label)?),
                Decisions::Recorded => None,
            };
            let mut c = ConfusionCounts::default();
            for (i, r) in d.records().iter().enumerate().filter(|(_, r)| r.group == label) {
                let accept = match policy {
                    Some(p) => p.decide(r.score),
                    None => match r.decision {
                        Some(true) => 1.0,
                        Some(false) => 0.0,
                        None => {
                            return Err(Error::InvalidArgument(format!(
                                "record {} has no recorded decision",
                                i + 1
                            )))
                        }
                    },
                };
                if r.outcome {
                    c.tp += accept;
                    c.fn_ += 1.0 - accept;
                } else {
                    c.fp += accept;
                    c.tn += 1.0 - accept;
                }
            }
            Ok(c)
        }
    }
}

/// Largest absolute difference among the values; `None` if any is undefined
/// or fewer than two are given.
fn max_pairwise_gap(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        let v = v?;
        lo = lo.min(v);
        hi = hi.max(v);
        n += 1;
    }
    (n >= 2).then_some(hi - lo)
}

/// Gap over the defined values only; `None` if fewer than two are defined.
fn max_defined_gap(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    max_pairwise_gap(values.into_iter().flatten().map(Some))
}

#[derive(Debug, Clone, PartialEq)]
struct BinAccumulator {
    y0: f64,
    y1: f64,
    score_sum: f64,
}

/// Per-group, per-bin masses of each outcome plus the score mass moment.
struct Binned {
    edges: Vec<(f64, f64)>,
    /// `[group][bin]`
    groups: Vec<Vec<BinAccumulator>>,
    weights: Vec<f64>,
}

fn bin_source(source: Source<'_>, labels: &[String], bins: Option<usize>) -> Result<Binned> {
    if bins == Some(0) {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let empty = |k: usize| {
        vec![
            BinAccumulator {
                y0: 0.0,
                y1: 0.0,
                score_sum: 0.0
            };
            k
        ]
    };
    match source {
        Source::Population(p) => {
            let n = p.grid_size();
            let k = bins.unwrap_or(n);
            let edges: Vec<(f64, f64)> = (0..k)
                .map(|j| (j as f64 / k as f64, (j + 1) as f64 / k as f64))
                .collect();
            let h = 1.0 / n as f64;
            let mut groups = Vec::new();
            for label in labels {
                let g = p.group(label)?;
                let mut acc = empty(k);
                for (i, (&w0, &w1)) in g.f0().weights().iter().zip(g.f1().weights()).enumerate() {
                    if w0 == 0.0 && w1 == 0.0 {
                        continue;
                    }
                    let (clo, chi) = (i as f64 * h, (i + 1) as f64 * h);
                    if k == n {
                        acc[i].y0 += w0 * h;
                        acc[i].y1 += w1 * h;
                        acc[i].score_sum += (w0 + w1) * h * 0.5 * (clo + chi);
                        continue;
                    }
                    // split the cell across every bin it overlaps
                    let first = cell_index(clo, k);
                    for (j, &(blo, bhi)) in edges.iter().enumerate().skip(first) {
                        if blo >= chi {
                            break;
                        }
                        let (olo, ohi) = (clo.max(blo), chi.min(bhi));
                        if ohi <= olo {
                            continue;
                        }
                        let len = ohi - olo;
                        acc[j].y0 += w0 * len;
                        acc[j].y1 += w1 * len;
                        acc[j].score_sum += (w0 + w1) * len * 0.5 * (olo + ohi);
                    }
                }
                groups.push(acc);
            }
            let weights = p
                .groups()
                .iter()
                .filter(|g| labels.contains(&g.label))
                .map(|g| g.weight)
                .collect();
            Ok(Binned { edges, groups, weights })
        }
        Source::Dataset(d) => {
            let k = bins.unwrap_or(DEFAULT_BINS);
            let edges = (0..k)
                .map(|j| (j as f64 / k as f64, (j + 1) as f64 / k as f64))
                .collect();
            let mut groups: Vec<Vec<BinAccumulator>> = labels.iter().map(|_| empty(k)).collect();
            for r in d.records() {
                let Some(gi) = labels.iter().position(|l| *l == r.group) else {
                    continue;
                };
                let b = &mut groups[gi][cell_index(r.score, k)];
                if r.outcome {
                    b.y1 += 1.0;
                } else {
                    b.y0 += 1.0;
                }
                b.score_sum += r.score;
            }
            // empirical pooling uses raw counts
            let weights = vec![1.0; labels.len()];
            Ok(Binned { edges, groups, weights })
        }
    }
}

/// One score bin of a between-group calibration report.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean score of the pooled mass in the bin.
    pub level: Option<f64>,
    /// Share of the pooled mass falling into the bin.
    pub mass: f64,
    /// `P(Y = 1 | R in bin, A = a)` per group, in report group order.
    pub group_rates: Vec<Option<f64>>,
    /// `P(Y = 1 | R in bin)`.
    pub pooled_rate: Option<f64>,
    /// Largest difference between defined group rates.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub groups: Vec<String>,
    pub bins: Vec<CalibrationBin>,
    /// Largest gap over bins where at least two groups have mass.
    pub sup_gap: Option<f64>,
    /// Mass-weighted mean gap over the same bins.
    pub l1_gap: Option<f64>,
}

impl CalibrationReport {
    /// Between-group calibration (sufficiency) holds on every defined bin.
    pub fn sufficiency_holds(&self, tol: f64) -> bool {
        self.sup_gap.is_none_or(|g| g <= tol)
    }
}

/// Compares `P(Y = 1 | R = r, A = a)` across groups for every score level.
///
/// Analytic populations use their grid cells when `bins` is `None`; datasets
/// default to ten equal-width bins.
pub fn between_group_calibration_gap<'a>(
    source: impl Into<Source<'a>>,
    bins: Option<usize>,
) -> Result<CalibrationReport> {
    let source = source.into();
    let labels = source.require_groups(2)?;
    let binned = bin_source(source, &labels, bins)?;
    let wsum: f64 = binned.weights.iter().sum();
    let total: f64 = binned
        .groups
        .iter()
        .zip(&binned.weights)
        .map(|(g, w)| w / wsum * g.iter().map(|b| b.y0 + b.y1).sum::<f64>())
        .sum();

    let mut out = Vec::with_capacity(binned.edges.len());
    for (j, &(lo, hi)) in binned.edges.iter().enumerate() {
        let mut y1 = 0.0;
        let mut all = 0.0;
        let mut score = 0.0;
        let mut group_rates = Vec::with_capacity(labels.len());
        for (g, w) in binned.groups.iter().zip(&binned.weights) {
            let b = &g[j];
            let w = w / wsum;
            y1 += w * b.y1;
            all += w * (b.y0 + b.y1);
            score += w * b.score_sum;
            group_rates.push(ratio(b.y1, b.y0 + b.y1));
        }
        out.push(CalibrationBin {
            lo,
            hi,
            level: ratio(score, all),
            mass: if total > 0.0 { all / total } else { 0.0 },
            gap: max_defined_gap(group_rates.iter().copied()),
            group_rates,
            pooled_rate: ratio(y1, all),
        });
    }
    let (sup_gap, l1_gap) = summarize(out.iter().map(|b| (b.mass, b.gap)));
    Ok(CalibrationReport {
        groups: labels,
        bins: out,
        sup_gap,
        l1_gap,
    })
}

fn summarize(items: impl Iterator<Item = (f64, Option<f64>)>) -> (Option<f64>, Option<f64>) {
    let mut sup: Option<f64> = None;
    let (mut weighted, mut mass) = (0.0, 0.0);
    for (m, gap) in items {
        if let Some(g) = gap {
            sup = Some(sup.map_or(g, |s| s.max(g)));
            weighted += m * g;
            mass += m;
        }
    }
    let l1 = sup.map(|_| if mass > 0.0 { weighted / mass } else { 0.0 });
    (sup, l1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithinGroupBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean score of the group's mass in the bin.
    pub level: Option<f64>,
    pub mass: f64,
    pub rate: Option<f64>,
    /// `|P(Y = 1 | R in bin, A = a) - level|`
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithinGroupCalibration {
    pub group: String,
    pub bins: Vec<WithinGroupBin>,
    pub sup_error: Option<f64>,
    pub l1_error: Option<f64>,
}

/// Deviation of a group's outcome frequency from its own score level.
pub fn within_group_calibration_error<'a>(
    source: impl Into<Source<'a>>,
    label: &str,
    bins: Option<usize>,
) -> Result<WithinGroupCalibration> {
    let source = source.into();
    if !source.labels().iter().any(|l| l == label) {
        return Err(Error::UnknownGroup(label.to_string()));
    }
    let labels = vec![label.to_string()];
    let binned = bin_source(source, &labels, bins)?;
    let acc = &binned.groups[0];
    let total: f64 = acc.iter().map(|b| b.y0 + b.y1).sum();
    let bins: Vec<WithinGroupBin> = binned
        .edges
        .iter()
        .zip(acc)
        .map(|(&(lo, hi), b)| {
            let all = b.y0 + b.y1;
            let level = ratio(b.score_sum, all);
            let rate = ratio(b.y1, all);
            WithinGroupBin {
                lo,
                hi,
                level,
                mass: if total > 0.0 { all / total } else { 0.0 },
                rate,
                error: rate.zip(level).map(|(r, l)| (r - l).abs()),
            }
        })
        .collect();
    let (sup_error, l1_error) = summarize(bins.iter().map(|b| (b.mass, b.error)));
    Ok(WithinGroupCalibration {
        group: label.to_string(),
        bins,
        sup_error,
        l1_error,
    })
}

/// Per-group error rates and their largest pairwise differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationGap {
    pub per_group: Vec<(String, RatePair)>,
    pub fpr_gap: Option<f64>,
    pub fnr_gap: Option<f64>,
}

impl SeparationGap {
    /// Larger of the two gaps; `None` if either is undefined.
    pub fn sup(&self) -> Option<f64> {
        self.fpr_gap.zip(self.fnr_gap).map(|(a, b)| a.max(b))
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.sup().is_some_and(|g| g <= tol)
    }
}

pub fn separation_gap<'a>(
    source: impl Into<Source<'a>>,
    decisions: impl Into<Decisions<'a>>,
) -> Result<SeparationGap> {
    let source = source.into();
    let decisions = decisions.into();
    let labels = source.require_groups(2)?;
    let mut per_group = Vec::with_capacity(labels.len());
    for label in labels {
        let c = confusion(source, decisions, &label)?;
        per_group.push((label, c.rates()));
    }
    Ok(SeparationGap {
        fpr_gap: max_pairwise_gap(per_group.iter().map(|(_, r)| r.fpr)),
        fnr_gap: max_pairwise_gap(per_group.iter().map(|(_, r)| r.fnr)),
        per_group,
    })
}

/// Outcome composition of each prediction class of a binary score.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyGap {
    /// `(group, P(Y=1|D=1), P(Y=1|D=0))`
    pub per_group: Vec<(String, Option<f64>, Option<f64>)>,
    pub positive_gap: Option<f64>,
    pub negative_gap: Option<f64>,
}

impl SufficiencyGap {
    pub fn sup(&self) -> Option<f64> {
        self.positive_gap.zip(self.negative_gap).map(|(a, b)| a.max(b))
    }
}

pub fn sufficiency_gap_binary<'a>(
    source: impl Into<Source<'a>>,
    decisions: impl Into<Decisions<'a>>,
) -> Result<SufficiencyGap> {
    let source = source.into();
    let decisions = decisions.into();
    let labels = source.require_groups(2)?;
    let mut per_group = Vec::with_capacity(labels.len());
    for label in labels {
        let c = confusion(source, decisions, &label)?;
        per_group.push((label, c.precision(), c.false_omission_rate()));
    }
    Ok(SufficiencyGap {
        positive_gap: max_pairwise_gap(per_group.iter().map(|g| g.1)),
        negative_gap: max_pairwise_gap(per_group.iter().map(|g| g.2)),
        per_group,
    })
}

/// Gap below which separation counts as satisfied in the witness.
pub const WITNESS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityWitness {
    pub base_rates: Vec<(String, f64)>,
    pub separation: SeparationGap,
    pub sufficiency: SufficiencyGap,
    /// Sufficiency gap forced by the base rates if every group had the mean
    /// error rates exactly.
    pub implied_sufficiency_gap: f64,
}

impl ImpossibilityWitness {
    pub fn separation_holds(&self) -> bool {
        self.separation.holds(WITNESS_EPS)
    }

    pub fn sufficiency_holds(&self) -> bool {
        self.sufficiency.sup().is_some_and(|g| g <= WITNESS_EPS)
    }

    /// Both criteria never hold together, and balanced error rates come with
    /// a strictly positive sufficiency gap of the implied size.
    pub fn consistent(&self) -> bool {
        if self.separation_holds() && self.sufficiency_holds() {
            return false;
        }
        if self.separation_holds() {
            let measured = self.sufficiency.sup().unwrap_or(0.0);
            return self.implied_sufficiency_gap > 0.0
                && measured >= 0.5 * self.implied_sufficiency_gap;
        }
        true
    }
}

/// Checks that an imperfect rule on groups with unequal base rates cannot
/// have both balanced error rates and binary calibration between groups.
pub fn impossibility_witness(pop: &PopulationModel, rule: &DecisionRule) -> Result<ImpossibilityWitness> {
    let base_rates: Vec<(String, f64)> = pop
        .groups()
        .iter()
        .map(|g| (g.label.clone(), g.density.base_rate()))
        .collect();
    let spread = max_pairwise_gap(base_rates.iter().map(|(_, b)| Some(*b))).unwrap_or(0.0);
    if spread <= 1e-6 {
        return Err(Error::Precondition(format!(
            "base rates differ by only {spread}; the impossibility needs unequal base rates"
        )));
    }
    let separation = separation_gap(pop, rule)?;
    let sums: Vec<f64> = separation
        .per_group
        .iter()
        .filter_map(|(_, r)| r.fpr.zip(r.fnr).map(|(a, b)| a + b))
        .collect();
    if sums.len() != separation.per_group.len() {
        return Err(Error::Precondition("error rates undefined for some group".into()));
    }
    if !sums.iter().any(|&s| s > 1e-6 && s < 2.0 - 1e-6) {
        return Err(Error::Precondition(
            "rule is perfectly accurate (or perfectly inverted) in every group".into(),
        ));
    }
    let sufficiency = sufficiency_gap_binary(pop, rule)?;

    let k = separation.per_group.len() as f64;
    let fpr = separation.per_group.iter().filter_map(|(_, r)| r.fpr).sum::<f64>() / k;
    let tpr = 1.0 - separation.per_group.iter().filter_map(|(_, r)| r.fnr).sum::<f64>() / k;
    let implied = |b: f64| -> (Option<f64>, Option<f64>) {
        let c = ConfusionCounts {
            tp: b * tpr,
            fn_: b * (1.0 - tpr),
            fp: (1.0 - b) * fpr,
            tn: (1.0 - b) * (1.0 - fpr),
        };
        (c.precision(), c.false_omission_rate())
    };
    let pos = max_pairwise_gap(base_rates.iter().map(|(_, b)| implied(*b).0));
    let neg = max_pairwise_gap(base_rates.iter().map(|(_, b)| implied(*b).1));
    let implied_sufficiency_gap = pos.unwrap_or(0.0).max(neg.unwrap_or(0.0));

    Ok(ImpossibilityWitness {
        base_rates,
        separation,
        sufficiency,
        implied_sufficiency_gap,
    })
}
