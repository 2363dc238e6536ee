//! Command-line front end: `list`, `audit` and `simulate`.
//!
//! The exit status reports whether the computation ran; fairness findings are
//! written into the report.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::dataset::AuditDataset;
use crate::density::DEFAULT_GRID;
use crate::error::{Error, Result};
use crate::experiments::{
    experiment_info, parse_map, run_appendix_counterexample, run_equal_rates_unequal_utility,
    run_judge_experiment, run_recommender_experiment, Comparison, ExperimentInfo, ExperimentReport,
    EXPERIMENTS,
};
use crate::metrics::{
    between_group_calibration_gap, confusion, separation_gap, sufficiency_gap_binary,
    within_group_calibration_error, Decisions, DEFAULT_BINS,
};
use crate::population::ScoreMap;
use crate::report::{Document, ToDocument};
use crate::rules::DecisionRule;
use crate::utility::Convention;

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
/// Tolerance for audit verdicts on sampled data.
pub const DEFAULT_AUDIT_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns.
    Text,
    /// `key = value` lines.
    Doc,
}

#[derive(Debug, Parser)]
#[command(name = "fairscore", version, about = "Audit risk scores for group fairness and run case studies")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,

    /// Report layout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Directory for the report and plot-series CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the available experiments and their parameters.
    List,
    /// Measure calibration, error rates and predictive values of a CSV file.
    Audit {
        /// CSV with columns group,score,outcome,decision.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Decide by `score > threshold` instead of the recorded decisions.
        #[arg(long)]
        threshold: Option<f64>,
        /// Gap up to which a criterion counts as satisfied.
        #[arg(long, default_value_t = DEFAULT_AUDIT_TOL)]
        tol: f64,
    },
    /// Run a named experiment; parameters are given as key=value.
    Simulate {
        id: String,
        overrides: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Monte Carlo draws per group.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Harm aggregation for the judge experiment (required there).
        #[arg(long)]
        convention: Option<Convention>,
    },
}

/// A fully validated experiment run.
#[derive(Debug, Clone)]
pub enum Job {
    Recommender { map: ScoreMap, samples: usize, seed: u64 },
    EqualRates { p_men: f64, p_women: f64, fp_mass: f64 },
    Judge { base_rate_m: f64, base_rate_f: f64, reference_t: f64, grid: usize, convention: Convention },
    Appendix { grid: usize, reshapes: usize, seed: u64 },
}

/// Merges `key=value` overrides into the experiment's defaults, rejecting
/// unknown keys and duplicates.
pub fn resolve_params(info: &ExperimentInfo, overrides: &[String]) -> Result<BTreeMap<String, String>> {
    let mut params: BTreeMap<String, String> = info
        .params
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut seen = Vec::new();
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("override `{o}` is not of the form key=value"))
        })?;
        if !params.contains_key(k) {
            let keys: Vec<&str> = info.params.iter().map(|(k, _)| *k).collect();
            return Err(Error::InvalidArgument(format!(
                "`{}` has no parameter `{k}`; valid: {}",
                info.id,
                keys.join(", ")
            )));
        }
        if seen.contains(&k) {
            return Err(Error::InvalidArgument(format!("parameter `{k}` given twice")));
        }
        seen.push(k);
        params.insert(k.to_string(), v.to_string());
    }
    Ok(params)
}

fn get<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = &params[key];
    raw.parse()
        .map_err(|_| Error::InvalidArgument(format!("parameter `{key}`: cannot parse `{raw}`")))
}

pub fn build_job(
    id: &str,
    overrides: &[String],
    grid: usize,
    samples: usize,
    seed: u64,
    convention: Option<Convention>,
) -> Result<Job> {
    let info = experiment_info(id)?;
    let p = resolve_params(info, overrides)?;
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 cells".into()));
    }
    Ok(match info.id {
        "recommender" => Job::Recommender {
            map: parse_map(&p["map"], grid)?,
            samples,
            seed,
        },
        "equal-rates" => Job::EqualRates {
            p_men: get(&p, "p_men")?,
            p_women: get(&p, "p_women")?,
            fp_mass: get(&p, "fp_mass")?,
        },
        "judge" => Job::Judge {
            base_rate_m: get(&p, "base_rate_m")?,
            base_rate_f: get(&p, "base_rate_f")?,
            reference_t: get(&p, "reference_t")?,
            grid,
            convention: convention.ok_or_else(|| {
                Error::InvalidArgument(
                    "judge needs --convention per-outcome or --convention per-person".into(),
                )
            })?,
        },
        "appendix" => Job::Appendix {
            grid,
            reshapes: get(&p, "reshapes")?,
            seed,
        },
        other => unreachable!("experiment `{other}` listed without a runner"),
    })
}

pub fn run_job(job: &Job) -> Result<ExperimentReport> {
    match job {
        Job::Recommender { map, samples, seed } => run_recommender_experiment(map, *samples, *seed),
        Job::EqualRates { p_men, p_women, fp_mass } => {
            run_equal_rates_unequal_utility(*p_men, *p_women, *fp_mass)
        }
        Job::Judge { base_rate_m, base_rate_f, reference_t, grid, convention } => {
            run_judge_experiment(*base_rate_m, *base_rate_f, *reference_t, *grid, *convention)
                .map(|o| o.report)
        }
        Job::Appendix { grid, reshapes, seed } => run_appendix_counterexample(*grid, *reshapes, *seed),
    }
}

/// Audit report of a dataset. Decisions come from `threshold` when given,
/// otherwise from the recorded column; without either only calibration is
/// measured.
pub fn audit(data: &AuditDataset, bins: usize, threshold: Option<f64>, tol: f64) -> Result<ExperimentReport> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let labels = data.labels();
    let mut r = ExperimentReport::new("audit");
    r.param("records", data.len())
        .param("groups", labels.join(","))
        .param("bins", bins)
        .param("tol", tol);

    for label in &labels {
        let members: Vec<_> = data.records().iter().filter(|x| &x.group == label).collect();
        let pos = members.iter().filter(|x| x.outcome).count();
        r.metric(&format!("base_rate.{label}"), pos as f64 / members.len() as f64)
            .metric(&format!("count.{label}"), members.len());
    }

    let calibration = between_group_calibration_gap(data, Some(bins))?;
    calibration.write_doc("calibration", &mut r.metrics);
    for label in &labels {
        within_group_calibration_error(data, label, Some(bins))?
            .write_doc(&format!("within.{label}"), &mut r.metrics);
    }
    r.verdict("calibration_holds", "calibration.sup_gap", Comparison::AtMost(tol));

    let rule = match threshold {
        Some(t) => Some(DecisionRule::shared_threshold(labels.iter().map(String::as_str), t)?),
        None => None,
    };
    let decisions = match (&rule, data.has_decisions()) {
        (Some(rule), _) => {
            r.param("decisions", "threshold");
            r.param("threshold", threshold);
            Some(Decisions::Rule(rule))
        }
        (None, true) => {
            r.param("decisions", "recorded");
            Some(Decisions::Recorded)
        }
        (None, false) => {
            r.param("decisions", "none");
            None
        }
    };
    if let Some(d) = decisions {
        for label in &labels {
            let c = confusion(data, d, label)?;
            let p = format!("confusion.{label}");
            r.metric(&format!("{p}.tp"), c.tp)
                .metric(&format!("{p}.fp"), c.fp)
                .metric(&format!("{p}.fn"), c.fn_)
                .metric(&format!("{p}.tn"), c.tn)
                .metric(&format!("{p}.fpr"), c.fpr())
                .metric(&format!("{p}.fnr"), c.fnr())
                .metric(&format!("{p}.ppv"), c.precision())
                .metric(&format!("{p}.for"), c.false_omission_rate());
        }
        let separation = separation_gap(data, d)?;
        separation.write_doc("separation", &mut r.metrics);
        r.metric("separation.sup_gap", separation.sup());
        sufficiency_gap_binary(data, d)?.write_doc("sufficiency", &mut r.metrics);
        r.verdict("separation_holds", "separation.sup_gap", Comparison::AtMost(tol));
        r.verdict("sufficiency_holds", "sufficiency.sup_gap", Comparison::AtMost(tol));
    }
    Ok(r)
}

fn render(doc: &Document, format: Format) -> String {
    match format {
        Format::Text => doc.to_text(),
        Format::Doc => doc.to_doc_string(),
    }
}

/// Writes `report.txt` and one `<series>.csv` per plot series into `dir`.
pub fn write_outputs(report: &ExperimentReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.txt");
    fs::write(&path, render(&report.to_document(), format))?;
    written.push(path);
    for s in &report.series {
        let path = dir.join(format!("{}.csv", s.name));
        fs::write(&path, s.to_csv())?;
        written.push(path);
    }
    Ok(written)
}

fn list(out: &mut impl Write) -> Result<()> {
    for e in EXPERIMENTS {
        writeln!(out, "{}  {}", e.id, e.summary)?;
        for (k, v) in e.params {
            writeln!(out, "    {k}={v}")?;
        }
    }
    Ok(())
}

pub fn run(args: &Args, out: &mut impl Write) -> Result<()> {
    let report = match &args.command {
        Command::List => return list(out),
        Command::Audit { input, bins, threshold, tol } => {
            let data = AuditDataset::read_csv(input)?;
            audit(&data, *bins, *threshold, *tol)?
        }
        Command::Simulate { id, overrides, grid, samples, seed, convention } => {
            let job = build_job(id, overrides, *grid, *samples, *seed, *convention)?;
            run_job(&job)?
        }
    };
    out.write_all(render(&report.to_document(), args.format).as_bytes())?;
    if let Some(dir) = &args.out {
        write_outputs(&report, args.format, dir)?;
    }
    Ok(())
}
