//! Group fairness criteria for risk scores, threshold decision rules, and the
//! expected-utility view of the decisions they drive.
//!
//! Scores live on `[0, 1]`. A group is described by two sub-densities of the
//! score, one per outcome (`f0` for `Y = 0`, `f1` for `Y = 1`), discretized on a
//! uniform grid. Analytic populations and sampled CSV datasets are measured by
//! the same functions in [`metrics`].

pub mod cli;
pub mod dataset;
pub mod density;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod population;
pub mod report;
pub mod rules;
pub mod utility;

pub use dataset::{sample, sample_with_rule, AuditDataset, Record};
pub use density::{BoxReshape, ScoreDensity, DEFAULT_GRID};
pub use error::{Error, Result};
pub use metrics::{
    between_group_calibration_gap, confusion, impossibility_witness, separation_gap,
    sufficiency_gap_binary, within_group_calibration_error, CalibrationReport, ConfusionCounts,
    Decisions, RatePair, SeparationGap, Source, SufficiencyGap,
};
pub use population::{ConditionalScoreDensity, Group, PopulationModel, ScoreMap};
pub use report::{Document, ToDocument, Value};
pub use rules::{coarsen, solve_equalized_odds, solve_parity_ratio, DecisionRule, ThresholdPolicy};
pub use utility::{
    classify_cases, judge_disutility, long_run_eu, optimal_threshold, Convention, PayoffMatrix,
    UtilityReport,
};
