use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fairscore::experiments::check_consistency;
use fairscore::rules::solve_equalized_odds;
use fairscore::{sample_with_rule, ConditionalScoreDensity, Document, PopulationModel, ThresholdPolicy};

fn fairscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairscore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn doc_of(out: &Output) -> Document {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Document::parse(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap()
}

fn num(doc: &Document, key: &str) -> f64 {
    doc.get_f64(key).unwrap_or_else(|| panic!("missing {key}"))
}

#[test]
fn audit_echoes_exact_rates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("four.csv");
    fs::write(
        &path,
        "group,score,outcome,decision\n\
         a,0.9,1,1\na,0.8,0,1\na,0.2,1,0\na,0.1,0,0\n\
         b,0.7,1,1\nb,0.6,0,1\nb,0.4,1,0\nb,0.3,0,0\n",
    )
    .unwrap();
    let doc = doc_of(&fairscore(&["audit", "--input", path.to_str().unwrap(), "--format", "doc"]));
    for g in ["a", "b"] {
        for rate in ["fpr", "fnr", "ppv", "for"] {
            assert_eq!(num(&doc, &format!("metrics.confusion.{g}.{rate}")), 0.5);
        }
    }
    assert_eq!(num(&doc, "metrics.separation.sup_gap"), 0.0);
    assert_eq!(doc.get("params.decisions").and_then(|v| v.as_str()), Some("recorded"));
    check_consistency(&doc).unwrap();
}

#[test]
fn audit_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "group,score,outcome,decision\na,0.5,1,\nb,1.2,0,1\n").unwrap();
    let out = fairscore(&["audit", "--input", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3"), "{err}");

    fs::write(&path, "group,score,outcome,decision\na,0.5,1,\na,0.2,0,\n").unwrap();
    let out = fairscore(&["audit", "--input", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn audit_of_sampled_judge_population() {
    let pop = PopulationModel::new(vec![
        ("men", ConditionalScoreDensity::calibrated_with_base_rate(1024, 0.3).unwrap()),
        ("women", ConditionalScoreDensity::calibrated_with_base_rate(1024, 0.6).unwrap()),
    ])
    .unwrap();
    let rule = solve_equalized_odds(&pop, "men", ThresholdPolicy::threshold(0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("judge.csv");
    sample_with_rule(&pop, &rule, 1_000_000, 42).unwrap().write_csv(&path).unwrap();
    let doc = doc_of(&fairscore(&["audit", "--input", path.to_str().unwrap(), "--format", "doc"]));
    assert!(num(&doc, "metrics.separation.fpr_gap") < 0.01);
    assert!(num(&doc, "metrics.separation.fnr_gap") < 0.01);
    assert!(num(&doc, "metrics.sufficiency.sup_gap") > 0.02);
    assert_eq!(doc.get("verdict.separation_holds.holds").and_then(|v| v.as_bool()), Some(true));
    assert_eq!(doc.get("verdict.sufficiency_holds.holds").and_then(|v| v.as_bool()), Some(false));
}

#[test]
fn recommender_defaults() {
    let doc = doc_of(&fairscore(&["simulate", "recommender", "--format", "doc"]));
    assert!((num(&doc, "metrics.utility.women.expected") - 0.25).abs() < 1e-4);
    assert!((num(&doc, "metrics.monte_carlo.women.expected") - 0.25).abs() < 0.01);
    check_consistency(&doc).unwrap();
}

#[test]
fn appendix_defaults() {
    let doc = doc_of(&fairscore(&["simulate", "appendix", "--format", "doc"]));
    assert!(num(&doc, "metrics.a.star_gap") <= 1e-6);
    assert!(num(&doc, "metrics.b.star_gap") <= 1e-6);
    assert!(num(&doc, "metrics.x_gap.men") > 0.01);
    check_consistency(&doc).unwrap();
}

#[test]
fn unknown_experiment_lists_ids() {
    let out = fairscore(&["simulate", "nosuch"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for id in ["recommender", "equal-rates", "judge", "appendix"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn overrides_are_validated() {
    let out = fairscore(&["simulate", "equal-rates", "p_men=0.7"]);
    assert!(!out.status.success());
    let out = fairscore(&["simulate", "equal-rates", "p_mne=0.2"]);
    assert!(!out.status.success());
    let doc = doc_of(&fairscore(&["simulate", "equal-rates", "p_men=0.2", "--format", "doc"]));
    assert!((num(&doc, "metrics.utility.disparity") - 0.04).abs() < 1e-9);
}

#[test]
fn judge_needs_an_explicit_convention() {
    let out = fairscore(&["simulate", "judge"]);
    assert!(!out.status.success());
    let doc = doc_of(&fairscore(&["simulate", "judge", "--convention", "per-outcome", "--format", "doc"]));
    check_consistency(&doc).unwrap();
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_byte_identical() {
    let runs: &[&[&str]] = &[
        &["simulate", "recommender", "--samples", "20000"],
        &["simulate", "equal-rates"],
        &["simulate", "judge", "--convention", "per-person", "--grid", "256"],
        &["simulate", "appendix", "reshapes=10", "--seed", "7"],
    ];
    for args in runs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let mut full = args.to_vec();
            full.extend(["--out", d.path().to_str().unwrap(), "--format", "doc"]);
            let out = fairscore(&full);
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let (a, b) = (read_dir(dirs[0].path()), read_dir(dirs[1].path()));
        assert!(a.len() > 1, "{args:?} wrote no series");
        assert_eq!(a, b, "{args:?}");
        for (name, bytes) in &a {
            if name.ends_with(".csv") {
                assert!(bytes.starts_with(b"x,y\n"), "{name}");
            }
        }
        let report = Document::parse(&String::from_utf8(a.iter().find(|f| f.0 == "report.txt").unwrap().1.clone()).unwrap()).unwrap();
        check_consistency(&report).unwrap();
    }
}

#[test]
fn list_names_every_experiment() {
    let out = fairscore(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["recommender", "equal-rates", "judge", "appendix"] {
        assert!(text.contains(id));
    }
}
