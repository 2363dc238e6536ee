use fairscore::experiments::run_equal_rates_unequal_utility;
use fairscore::metrics::confusion_for_group;
use fairscore::*;
use proptest::prelude::*;

const N: usize = 64;

fn density() -> impl Strategy<Value = ScoreDensity> {
    prop::collection::vec(0.0f64..2.0, N)
        .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| ScoreDensity::new(w).unwrap().normalized().unwrap())
}

/// Arbitrary (not necessarily calibrated) group.
fn group() -> impl Strategy<Value = ConditionalScoreDensity> {
    (prop::collection::vec(0.0f64..1.0, N), prop::collection::vec(0.0f64..1.0, N), 0.05f64..0.95)
        .prop_filter("both classes need mass", |(a, b, _)| {
            a.iter().sum::<f64>() > 1e-2 && b.iter().sum::<f64>() > 1e-2
        })
        .prop_map(|(a, b, base)| {
            let f0 = ScoreDensity::new(a).unwrap().normalized().unwrap().scaled(1.0 - base).unwrap();
            let f1 = ScoreDensity::new(b).unwrap().normalized().unwrap().scaled(base).unwrap();
            ConditionalScoreDensity::new(f0, f1).unwrap()
        })
}

fn calibrated_group() -> impl Strategy<Value = ConditionalScoreDensity> {
    density().prop_map(|f| ConditionalScoreDensity::calibrated(&f).unwrap())
}

fn score_map() -> impl Strategy<Value = ScoreMap> {
    prop::collection::vec(0.0f64..=1.0, N).prop_map(|v| ScoreMap::new(v).unwrap())
}

fn policy() -> impl Strategy<Value = ThresholdPolicy> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(ThresholdPolicy::threshold),
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b, mix)| {
            ThresholdPolicy::Randomized {
                lower: a.min(b),
                upper: a.max(b),
                mix,
            }
        }),
    ]
}

fn pair(a: ConditionalScoreDensity, b: ConditionalScoreDensity) -> PopulationModel {
    PopulationModel::new(vec![("a", a), ("b", b)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_maps_conserve_class_mass(g in group(), map in score_map()) {
        let p = pair(g.clone(), g.clone()).apply_score_map("a", &map).unwrap();
        let moved = p.group("a").unwrap();
        prop_assert!((moved.f0().mass() - g.f0().mass()).abs() < 1e-9);
        prop_assert!((moved.f1().mass() - g.f1().mass()).abs() < 1e-9);
    }

    #[test]
    fn calibrated_construction_is_a_fixed_point(f in density()) {
        let g = ConditionalScoreDensity::calibrated(&f).unwrap();
        let h = 1.0 / N as f64;
        for (i, c) in g.calibration_curve().iter().enumerate() {
            match c {
                Some(c) => prop_assert!((c - (i as f64 + 0.5) * h).abs() <= h),
                None => prop_assert_eq!(f.weights()[i], 0.0),
            }
        }
    }

    #[test]
    fn integration_is_linear_and_monotone(f in density(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let u = |s: f64| s * s;
        let v = |s: f64| (1.0 - s).sqrt();
        let lhs = f.integrate(|s| a * u(s) + b * v(s));
        let rhs = a * f.integrate(u) + b * f.integrate(v);
        prop_assert!((lhs - rhs).abs() < 1e-9);
        // u <= u + v^2 pointwise
        prop_assert!(f.integrate(u) <= f.integrate(|s| u(s) + v(s) * v(s)) + 1e-15);
        prop_assert!(f.integrate(|s| u(s).abs()) >= 0.0);
    }

    #[test]
    fn confusion_cells_partition_the_group(g in group(), p in policy()) {
        let c = confusion_for_group(&g, &p);
        for cell in [c.tp, c.fp, c.fn_, c.tn] {
            prop_assert!(cell >= -1e-12);
        }
        prop_assert!((c.total() - 1.0).abs() < 1e-9);
        let r = c.rates();
        for v in [r.fpr, r.fnr].into_iter().flatten() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn dataset_rates_are_count_ratios(
        rows in prop::collection::vec((0usize..2, 0.0f64..=1.0, any::<bool>(), any::<bool>()), 2..60)
    ) {
        let records: Vec<Record> = rows
            .iter()
            .map(|&(g, s, y, d)| Record {
                group: ["a", "b"][g].into(),
                score: s,
                outcome: y,
                decision: Some(d),
            })
            .collect();
        let data = AuditDataset::new(records).unwrap();
        for label in data.labels() {
            let mine: Vec<_> = rows.iter().filter(|r| ["a", "b"][r.0] == label).collect();
            let count = |y: bool, d: bool| mine.iter().filter(|r| r.2 == y && r.3 == d).count();
            let (tp, fp, fn_, tn) = (count(true, true), count(false, true), count(true, false), count(false, false));
            let c = confusion(&data, Decisions::Recorded, &label).unwrap();
            prop_assert_eq!((c.tp, c.fp, c.fn_, c.tn), (tp as f64, fp as f64, fn_ as f64, tn as f64));
            let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
            prop_assert_eq!(c.fpr(), ratio(fp, fp + tn));
            prop_assert_eq!(c.fnr(), ratio(fn_, fn_ + tp));
        }
    }

    #[test]
    fn calibration_gap_is_the_cellwise_sufficiency_gap(a in group(), b in group()) {
        let p = pair(a.clone(), b.clone());
        let report = between_group_calibration_gap(&p, None).unwrap();
        let direct = a
            .calibration_curve()
            .iter()
            .zip(b.calibration_curve())
            .filter_map(|(x, y)| x.zip(y).map(|(x, y)| (x - y).abs()))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
        match (report.sup_gap, direct) {
            (Some(g), Some(d)) => prop_assert!((g - d).abs() < 1e-12),
            (g, d) => prop_assert_eq!(g, d),
        }
        // identical curves give a zero gap
        let same = pair(a.clone(), a);
        prop_assert!(between_group_calibration_gap(&same, None).unwrap().sup_gap.unwrap_or(0.0) < 1e-12);
    }

    #[test]
    fn raising_the_threshold_trades_fpr_for_fnr(g in group(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = confusion_for_group(&g, &ThresholdPolicy::threshold(lo));
        let b = confusion_for_group(&g, &ThresholdPolicy::threshold(hi));
        prop_assert!(b.fnr().unwrap() >= a.fnr().unwrap() - 1e-12);
        prop_assert!(b.fpr().unwrap() <= a.fpr().unwrap() + 1e-12);
    }

    #[test]
    fn equalized_odds_rule_separates(a in calibrated_group(), b in calibrated_group(), t in 0.2f64..0.8) {
        let p = pair(a, b);
        match solve_equalized_odds(&p, "a", ThresholdPolicy::threshold(t)) {
            Ok(rule) => {
                let gap = separation_gap(&p, &rule).unwrap();
                prop_assert!(gap.holds(1e-6), "{gap:?}");
            }
            // infeasibility is a reported outcome, never a near miss
            Err(Error::Infeasible(_)) | Err(Error::Precondition(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn parity_rule_equalizes_joint_harm(a in group(), b in group(), t in 0.0f64..=1.0) {
        let p = pair(a, b);
        if let Ok(rule) = solve_parity_ratio(&p, "a", ThresholdPolicy::threshold(t)) {
            let joint = |l: &str| {
                let c = confusion_for_group(p.group(l).unwrap(), rule.policy(l).unwrap());
                c.fn_ / c.total()
            };
            prop_assert!((joint("a") - joint("b")).abs() <= 1e-6);
        }
    }

    #[test]
    fn randomized_decisions_are_probabilities(p in policy(), s in 0.0f64..=1.0) {
        let d = p.decide(s);
        prop_assert_eq!(d, p.decide(s));
        prop_assert!((0.0..=1.0).contains(&d));
        if let ThresholdPolicy::Randomized { lower, upper, mix } = p {
            let expected = if s > upper { 1.0 } else if s > lower { mix } else { 0.0 };
            prop_assert!((d - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn optimal_threshold_is_optimal(f in density(), t in 0.0f64..=1.0) {
        let payoff = PayoffMatrix::recommender(0.0);
        let id = ScoreMap::identity(N);
        let best = long_run_eu(&f, &id, &payoff, optimal_threshold(&payoff).unwrap()).unwrap();
        prop_assert!(long_run_eu(&f, &id, &payoff, t).unwrap() <= best + 1e-6);
    }

    #[test]
    fn calibration_dominates_and_loss_decomposes(f in density(), map in score_map(), outside in 0.0f64..0.9) {
        let payoff = PayoffMatrix::recommender(outside);
        let t = optimal_threshold(&payoff).unwrap();
        let id = ScoreMap::identity(N);
        let calibrated = long_run_eu(&f, &id, &payoff, t).unwrap();
        let mis = long_run_eu(&f, &map, &payoff, t).unwrap();
        prop_assert!(mis <= calibrated + 1e-9);
        let cases = classify_cases(&f, &map, &payoff, t).unwrap();
        prop_assert!((calibrated - mis - cases.total_loss()).abs() < 1e-9);
        if cases.wrong_mass() == 0.0 {
            prop_assert!((calibrated - mis).abs() < 1e-9);
        } else {
            prop_assert!(calibrated - mis > 1e-9);
        }
    }

    #[test]
    fn per_outcome_harm_is_the_fnr_gap(a in group(), b in group(), pa in policy(), pb in policy()) {
        let p = pair(a, b);
        let rule = DecisionRule::new([("a", pa), ("b", pb)]).unwrap();
        let report = judge_disutility(&p, &rule, Convention::PerOutcome, 1e-6).unwrap();
        let gap = separation_gap(&p, &rule).unwrap();
        prop_assert_eq!(report.disparity, gap.fnr_gap.unwrap());
        prop_assert!(report.disparity >= 0.0);
        prop_assert_eq!(report.verdict, report.disparity <= 1e-6);
    }

    #[test]
    fn equal_rates_construct(pm in 0.0f64..0.5, pw in 0.0f64..0.5, m in 0.0f64..=1.0) {
        let r = run_equal_rates_unequal_utility(pm, pw, m).unwrap();
        prop_assert_eq!(r.metric_f64("rates.fpr_gap"), Some(0.0));
        prop_assert_eq!(r.metric_f64("rates.fnr_gap"), Some(0.0));
        let expected = m * ((2.0 * pm - 1.0) - (2.0 * pw - 1.0)).abs();
        prop_assert!((r.metric_f64("utility.disparity").unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn concentrated_false_positives_lose_half_a_unit_more() {
    let r = run_equal_rates_unequal_utility(0.1, 0.4, 0.1).unwrap();
    let m = r.metric_f64("loss_per_false_positive.men").unwrap();
    let w = r.metric_f64("loss_per_false_positive.women").unwrap();
    assert!(m - w >= 0.5, "{m} vs {w}");
}

#[test]
fn sampled_group_outcome_frequencies() {
    let p = PopulationModel::new(vec![
        ("a", ConditionalScoreDensity::calibrated_with_base_rate(1024, 0.3).unwrap()),
        ("b", ConditionalScoreDensity::calibrated_with_base_rate(1024, 0.6).unwrap()),
    ])
    .unwrap();
    let n = 1_000_000;
    let data = sample(&p, n, 42).unwrap();
    for (label, base) in [("a", 0.3), ("b", 0.6)] {
        for outcome in [false, true] {
            let got = data
                .records()
                .iter()
                .filter(|r| r.group == label && r.outcome == outcome)
                .count() as f64
                / n as f64;
            let want = 0.5 * if outcome { base } else { 1.0 - base };
            assert!((got - want).abs() < 0.005, "{label} {outcome}: {got} vs {want}");
        }
    }
}
