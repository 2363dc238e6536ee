//! Finite audit records and their CSV form.
//!
//! The CSV header is `group,score,outcome,decision`; `decision` may be empty.

use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::population::PopulationModel;
use crate::rules::DecisionRule;

pub const CSV_HEADER: [&str; 4] = ["group", "score", "outcome", "decision"];

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub group: String,
    pub score: f64,
    pub outcome: bool,
    pub decision: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditDataset {
    records: Vec<Record>,
}

impl AuditDataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("score {} outside [0, 1]", r.score),
                });
            }
            if r.group.is_empty() {
                return Err(Error::Parse {
                    row: i + 1,
                    message: "empty group label".into(),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Group labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.group) {
                out.push(r.group.clone());
            }
        }
        out
    }

    /// Whether every record carries a decision.
    pub fn has_decisions(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.decision.is_some())
    }

    /// Parses CSV text. Row numbers in errors are file line numbers.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected header `{}`", CSV_HEADER.join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let err = |message: String| Error::Parse { row: line, message };
            let row = row.map_err(|e| err(e.to_string()))?;
            if row.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", row.len())));
            }
            let group = row[0].to_string();
            if group.is_empty() {
                return Err(err("column `group`: empty label".into()));
            }
            let score: f64 = row[1]
                .parse()
                .map_err(|_| err(format!("column `score`: `{}` is not a number", &row[1])))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(err(format!("column `score`: {score} outside [0, 1]")));
            }
            let binary = |col: &str, v: &str| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("column `{col}`: `{other}` is not 0 or 1"))),
            };
            let outcome = binary("outcome", &row[2])?;
            let decision = match &row[3] {
                "" => None,
                v => Some(binary("decision", v)?),
            };
            records.push(Record {
                group,
                score,
                outcome,
                decision,
            });
        }
        Ok(Self { records })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            let bit = |b: bool| if b { "1" } else { "0" };
            w.write_record([
                r.group.as_str(),
                &r.score.to_string(),
                bit(r.outcome),
                r.decision.map_or("", bit),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        self.write_to(std::io::BufWriter::new(file))
    }
}

struct GroupSampler {
    label: String,
    base_rate: f64,
    grid: usize,
    cells: [Option<WeightedIndex<f64>>; 2],
}

fn samplers(pop: &PopulationModel) -> Result<(WeightedIndex<f64>, Vec<GroupSampler>)> {
    let groups = WeightedIndex::new(pop.groups().iter().map(|g| g.weight))
        .map_err(|e| Error::InvalidArgument(format!("group weights: {e}")))?;
    let per_group = pop
        .groups()
        .iter()
        .map(|g| {
            let cells = |d: &crate::density::ScoreDensity| {
                (d.mass() > 0.0)
                    .then(|| WeightedIndex::new(d.weights().iter().copied()).ok())
                    .flatten()
            };
            GroupSampler {
                label: g.label.clone(),
                base_rate: g.density.base_rate(),
                grid: g.density.grid_size(),
                cells: [cells(g.density.f0()), cells(g.density.f1())],
            }
        })
        .collect();
    Ok((groups, per_group))
}

fn draw(
    pop: &PopulationModel,
    rule: Option<&DecisionRule>,
    n: usize,
    seed: u64,
) -> Result<AuditDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if let Some(rule) = rule {
        for label in pop.labels() {
            rule.policy(label)?;
        }
    }
    let (groups, per_group) = samplers(pop)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let g = &per_group[groups.sample(&mut rng)];
        let outcome = rng.random::<f64>() < g.base_rate;
        let cells = g.cells[usize::from(outcome)]
            .as_ref()
            .expect("a drawn outcome class has positive mass");
        let cell = cells.sample(&mut rng);
        let score = ((cell as f64 + rng.random::<f64>()) / g.grid as f64).min(1.0);
        let decision = match rule {
            Some(rule) => {
                let p = rule.policy(&g.label)?.decide(score);
                Some(rng.random::<f64>() < p)
            }
            None => None,
        };
        records.push(Record {
            group: g.label.clone(),
            score,
            outcome,
            decision,
        });
    }
    Ok(AuditDataset { records })
}

/// `n` i.i.d. records from `pop`; groups are drawn in proportion to their
/// weights. Deterministic for a given seed.
pub fn sample(pop: &PopulationModel, n: usize, seed: u64) -> Result<AuditDataset> {
    draw(pop, None, n, seed)
}

/// Like [`sample`], and also draws each record's decision from `rule`.
pub fn sample_with_rule(
    pop: &PopulationModel,
    rule: &DecisionRule,
    n: usize,
    seed: u64,
) -> Result<AuditDataset> {
    draw(pop, Some(rule), n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ScoreDensity;
    use crate::population::ConditionalScoreDensity;

    fn uniform_pair() -> PopulationModel {
        let g = ConditionalScoreDensity::calibrated_uniform(1024).unwrap();
        PopulationModel::new(vec![("a", g.clone()), ("b", g)]).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = uniform_pair();
        assert_eq!(sample(&p, 10, 7).unwrap(), sample(&p, 10, 7).unwrap());
        assert_ne!(sample(&p, 10, 7).unwrap(), sample(&p, 10, 8).unwrap());
        assert!(sample(&p, 0, 7).is_err());
    }

    #[test]
    fn no_positives_when_f1_is_zero() {
        let n = 32;
        let g = ConditionalScoreDensity::new(
            ScoreDensity::uniform(n).unwrap(),
            ScoreDensity::zeros(n).unwrap(),
        )
        .unwrap();
        let p = PopulationModel::new(vec![("a", g.clone()), ("b", g)]).unwrap();
        let d = sample(&p, 1000, 1).unwrap();
        assert!(d.records().iter().all(|r| !r.outcome));
    }

    #[test]
    fn csv_round_trip() {
        let p = uniform_pair();
        let rule = DecisionRule::shared_threshold(["a", "b"], 0.5).unwrap();
        let d = sample_with_rule(&p, &rule, 50, 3).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("group,score,outcome,decision\n"));
        assert_eq!(AuditDataset::from_reader(&buf[..]).unwrap(), d);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let text = "group,score,outcome,decision\na,0.5,1,\nb,1.2,0,1\n";
        let err = AuditDataset::from_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        let text = "group,score,outcome,decision\na,0.5,2,\n";
        assert!(matches!(
            AuditDataset::from_reader(text.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
        let text = "grp,score,outcome,decision\n";
        assert!(matches!(
            AuditDataset::from_reader(text.as_bytes()),
            Err(Error::Parse { row: 1, .. })
        ));
        let text = "group,score,outcome,decision\na,abc,1,0\n";
        assert!(AuditDataset::from_reader(text.as_bytes()).is_err());
    }

    #[test]
    fn empty_decision_column() {
        let text = "group,score,outcome,decision\na,0.25,1,\nb,0.75,0,\n";
        let d = AuditDataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(d.records()[0].decision, None);
        assert!(!d.has_decisions());
        assert_eq!(d.labels(), vec!["a", "b"]);
    }
}
