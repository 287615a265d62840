use abcmeta::experiments::*;
use abcmeta::*;

fn bma_only(
    gen: FamilyParams,
    scenario: SummaryScenario,
    sizes: Vec<usize>,
    reps: usize,
) -> ExperimentDesign {
    let mut d = ExperimentDesign::new(gen, scenario);
    d.sizes = sizes;
    d.reps = reps;
    d.methods = vec![MethodSpec::bma(&Family::ALL)];
    d
}

#[test]
fn single_large_normal_trial_is_accurate() {
    let d = bma_only(
        FamilyParams::normal(50.0, 17.0).unwrap(),
        SummaryScenario::S1,
        vec![600],
        1,
    );
    let t = run_trial(&d, 0, 600).unwrap();
    let re = t.outcomes[0].re_sd.unwrap();
    assert!(re.abs() < 0.15, "RE of SD {re}");
}

#[test]
fn normal_are_vanishes_at_large_n() {
    let d = bma_only(
        FamilyParams::normal(50.0, 17.0).unwrap(),
        SummaryScenario::S1,
        vec![600],
        50,
    );
    let out = run_design(&d).unwrap();
    let row = out.report.row("ABC-BMA", 600).unwrap();
    assert_eq!(row.reps, 50);
    assert!(row.are_sd.abs() < 0.05, "ARE of SD {}", row.are_sd);
}

#[test]
fn extremes_improve_sd_estimates() {
    let gen = FamilyParams::lognormal(4.0, 0.3).unwrap();
    let mean_abs = |scenario| {
        let out = run_design(&bma_only(gen, scenario, vec![100], 50)).unwrap();
        out.report.row("ABC-BMA", 100).unwrap().mean_abs_re_sd
    };
    let (s2, s3) = (mean_abs(SummaryScenario::S2), mean_abs(SummaryScenario::S3));
    assert!(s2 <= s3, "S2 {s2} vs S3 {s3}");
}

#[test]
fn trials_rerun_in_isolation() {
    let mut d = ExperimentDesign::new(
        FamilyParams::weibull(2.0, 35.0).unwrap(),
        SummaryScenario::S2,
    );
    d.sizes = vec![10, 40, 80];
    d.reps = 3;
    for m in &mut d.methods {
        m.config.iterations = 2_000;
    }
    let out = run_design(&d).unwrap();
    assert_eq!(out.trials.len(), 9);
    let keys: Vec<(usize, usize)> = out.trials.iter().map(|t| (t.rep, t.n)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let alone = run_trial(&d, 2, 40).unwrap();
    assert_eq!(
        out.trials.iter().find(|t| t.rep == 2 && t.n == 40),
        Some(&alone)
    );
}

#[test]
fn aggregates_recompute_from_trials() {
    let mut d = ExperimentDesign::new(FamilyParams::beta(9.0, 4.0).unwrap(), SummaryScenario::S3);
    d.sizes = vec![10, 100];
    d.reps = 6;
    for m in &mut d.methods {
        m.config.iterations = 3_000;
    }
    let out = run_design(&d).unwrap();
    for row in &out.report.rows {
        let outcomes: Vec<_> = out
            .trials
            .iter()
            .filter(|t| t.n == row.n)
            .flat_map(|t| t.outcomes.iter().filter(|o| o.method == row.method))
            .collect();
        let k = outcomes.len() as f64;
        let are_mean = outcomes.iter().map(|o| o.re_mean.unwrap()).sum::<f64>() / k;
        let are_sd = outcomes.iter().map(|o| o.re_sd.unwrap()).sum::<f64>() / k;
        assert!((row.are_mean - are_mean).abs() < 1e-15);
        assert!((row.are_sd - are_sd).abs() < 1e-15);
        assert!((row.model_probs.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sensitivity_layout() {
    let rows = sensitivity_table2(
        &SensitivityInput::default(),
        &DEFAULT_COMBOS,
        &AbcConfig::sd().with_iterations(4_000),
        &AbcConfig::bma().with_iterations(10_000),
        1,
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((r.p_beta + r.p_normal - 1.0).abs() < 1e-12);
        assert_eq!(r.re_sd_bma, (r.sd_bma - 0.1247) / 0.1247);
        assert_eq!(r.re_mean_sd_beta, (r.mean_sd_beta - 0.6814) / 0.6814);
    }
    let mut buf = Vec::new();
    write_sensitivity_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().starts_with("40,1,"));
}
