use abcmeta::engine::{simulate_draw, AcceptedDraw, SELECTION_DOMAIN};
use abcmeta::rng::{hashed_uniform, stream};
use abcmeta::summaries::compute_summary;
use abcmeta::*;

fn hospital() -> SummaryStats {
    SummaryStats::new(
        SummaryScenario::S3,
        111,
        [(Field::Q1, 1.2), (Field::Median, 2.1), (Field::Q3, 4.6)],
    )
    .unwrap()
}

fn key(d: &AcceptedDraw) -> (u64, u64) {
    (d.iteration, d.distance.to_bits())
}

/// Simulates every iteration, sorts everything and keeps the first M.
fn sort_all(draws: Vec<AcceptedDraw>, m: usize) -> Vec<AcceptedDraw> {
    let mut all = draws;
    all.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.iteration.cmp(&b.iteration))
    });
    all.truncate(m);
    all
}

#[test]
fn reservoir_equals_sort_all_oracle() {
    let stats = hospital();
    for family in [Family::Normal, Family::LogNormal, Family::Exponential] {
        let prior = default_priors(&stats, &[family]).unwrap();
        for (seed, fraction) in [(1, 0.001), (2, 0.01), (3, 0.05)] {
            let cfg = AbcConfig {
                acceptance_fraction: fraction,
                ..AbcConfig::sd().with_iterations(2_000).with_seed(seed)
            };
            let result = run_abc_sd(family, &stats, &prior, &cfg).unwrap();
            let all: Vec<AcceptedDraw> = (0..2_000)
                .filter_map(|i| simulate_draw(&stats, &prior, family, &cfg, i).unwrap())
                .collect();
            let oracle = sort_all(all, cfg.capacity());
            let got: Vec<_> = result.accepted.iter().map(key).collect();
            let want: Vec<_> = oracle.iter().map(key).collect();
            assert_eq!(got, want, "{family} seed {seed} fraction {fraction}");
            assert_eq!(result.effective_tolerance, oracle.last().unwrap().distance);
        }
    }
}

#[test]
fn bma_without_adaptation_equals_oracle() {
    let stats = hospital();
    let prior = default_priors(&stats, &Family::ALL).unwrap();
    let families = prior.families();
    let cfg = AbcConfig {
        adaptation_interval: 2_000,
        ..AbcConfig::bma().with_iterations(2_000).with_seed(5)
    };
    let result = run_abc_bma(&Family::ALL, &stats, &prior, &cfg).unwrap();
    let k = families.len() as f64;
    let all: Vec<AcceptedDraw> = (0..2_000u64)
        .filter_map(|i| {
            let u = hashed_uniform(cfg.seed, SELECTION_DOMAIN, i);
            let family = families[((u * k) as usize).min(families.len() - 1)];
            simulate_draw(&stats, &prior, family, &cfg, i).unwrap()
        })
        .collect();
    let oracle = sort_all(all, cfg.capacity());
    assert_eq!(
        result.accepted.iter().map(key).collect::<Vec<_>>(),
        oracle.iter().map(key).collect::<Vec<_>>()
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let stats = hospital();
    let prior = default_priors(&stats, &Family::ALL).unwrap();
    let cfg = AbcConfig::bma().with_iterations(20_000).with_seed(11);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            (
                run_abc_bma(&Family::ALL, &stats, &prior, &cfg).unwrap(),
                run_abc_sd(Family::LogNormal, &stats, &prior, &cfg).unwrap(),
            )
        })
    };
    let one = run(1);
    for threads in [2, 8] {
        assert_eq!(run(threads), one, "{threads} threads");
    }
}

#[test]
fn single_family_bma_is_sd() {
    let stats = hospital();
    let prior = default_priors(&stats, &[Family::Normal]).unwrap();
    let cfg = AbcConfig::sd().with_iterations(10_000).with_seed(3);
    let sd = run_abc_sd(Family::Normal, &stats, &prior, &cfg).unwrap();
    let bma = run_abc_bma(&[Family::Normal], &stats, &prior, &cfg).unwrap();
    assert_eq!(sd.accepted, bma.accepted);
    assert_eq!((sd.mean_hat, sd.sd_hat), (bma.mean_hat, bma.sd_hat));
    assert_eq!(bma.model_prob(Family::Normal), 1.0);
}

#[test]
fn exponential_from_large_sample() {
    let data = distributions::sample_n(
        &FamilyParams::exponential(10.0).unwrap(),
        10_000,
        &mut stream(77),
    )
    .unwrap();
    let (mean, _) = summaries::mean_sd(&data);
    let stats = compute_summary(&data, &SummaryScenario::S1).unwrap();
    let prior = default_priors(&stats, &[Family::Exponential]).unwrap();
    let r = run_abc_sd(
        Family::Exponential,
        &stats,
        &prior,
        &AbcConfig::sd().with_seed(2),
    )
    .unwrap();
    assert!(
        ((r.mean_hat - mean) / mean).abs() < 0.05,
        "{} vs {mean}",
        r.mean_hat
    );
}

#[test]
fn normal_family_dominates_normal_data() {
    let data = distributions::sample_n(
        &FamilyParams::normal(50.0, 17.0).unwrap(),
        10_000,
        &mut stream(78),
    )
    .unwrap();
    let stats = compute_summary(&data, &SummaryScenario::S2).unwrap();
    let prior = default_priors(&stats, &Family::ALL).unwrap();
    let r = run_abc_bma(&Family::ALL, &stats, &prior, &AbcConfig::bma().with_seed(4)).unwrap();
    assert!(r.model_prob(Family::Normal) > 0.8, "{:?}", r.model_probs);
}

#[test]
fn estimators_agree_on_well_specified_runs() {
    let cases = [
        (
            FamilyParams::normal(50.0, 17.0).unwrap(),
            SummaryScenario::S2,
        ),
        (
            FamilyParams::lognormal(4.0, 0.3).unwrap(),
            SummaryScenario::S1,
        ),
        (
            FamilyParams::weibull(2.0, 35.0).unwrap(),
            SummaryScenario::S2,
        ),
        (FamilyParams::beta(9.0, 4.0).unwrap(), SummaryScenario::S3),
        (
            FamilyParams::exponential(10.0).unwrap(),
            SummaryScenario::S1,
        ),
    ];
    for (i, (gen, scenario)) in cases.into_iter().enumerate() {
        let data = distributions::sample_n(&gen, 200, &mut stream(100 + i as u64)).unwrap();
        let stats = compute_summary(&data, &scenario).unwrap();
        let family = gen.family();
        let prior = default_priors(&stats, &[family]).unwrap();
        let base = AbcConfig::sd().with_seed(9);
        let sim = run_abc_sd(family, &stats, &prior, &base).unwrap();
        let plug = run_abc_sd(
            family,
            &stats,
            &prior,
            &base.clone().with_estimator(EstimatorMode::PlugIn),
        )
        .unwrap();
        assert_eq!(sim.accepted, plug.accepted);
        for (a, b, what) in [
            (sim.mean_hat, plug.mean_hat, "mean"),
            (sim.sd_hat, plug.sd_hat, "sd"),
        ] {
            assert!(
                ((a - b) / a).abs() < 0.10,
                "{gen} {what}: simulation {a} vs plug-in {b}"
            );
        }
    }
}

#[test]
fn result_invariants() {
    let stats = hospital();
    let prior = default_priors(&stats, &Family::ALL).unwrap();
    for seed in 0..4 {
        let r = run_abc_bma(
            &Family::ALL,
            &stats,
            &prior,
            &AbcConfig::bma().with_iterations(20_000).with_seed(seed),
        )
        .unwrap();
        assert!((r.model_probs.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.sd_hat >= 0.0);
        let lo = r
            .accepted
            .iter()
            .map(|d| d.pseudo_mean)
            .fold(f64::INFINITY, f64::min);
        let hi = r
            .accepted
            .iter()
            .map(|d| d.pseudo_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= r.mean_hat && r.mean_hat <= hi);
        assert!(r
            .accepted
            .iter()
            .all(|d| d.distance <= r.effective_tolerance));
        assert!(r
            .accepted
            .windows(2)
            .all(|w| w[0].distance <= w[1].distance));
        // per-family weighted means reproduce the overall average
        let m = r.accepted.len() as f64;
        let weighted: f64 = r
            .model_probs
            .iter()
            .filter(|(_, p)| **p > 0.0)
            .map(|(f, p)| {
                let own: Vec<f64> = r
                    .accepted
                    .iter()
                    .filter(|d| d.family == *f)
                    .map(|d| d.pseudo_mean)
                    .collect();
                p * own.iter().sum::<f64>() / own.len() as f64
            })
            .sum();
        assert!(
            (weighted - r.mean_hat).abs() < 1e-9 * r.mean_hat.abs().max(1.0),
            "{weighted} vs {} ({m})",
            r.mean_hat
        );
    }
}

#[test]
fn fixed_tolerance_keeps_everything_inside() {
    let stats = hospital();
    let prior = default_priors(&stats, &[Family::LogNormal]).unwrap();
    let cfg = AbcConfig {
        tolerance: Some(0.3),
        ..AbcConfig::sd().with_iterations(5_000).with_seed(1)
    };
    let r = run_abc_sd(Family::LogNormal, &stats, &prior, &cfg).unwrap();
    let all: Vec<AcceptedDraw> = (0..5_000)
        .filter_map(|i| simulate_draw(&stats, &prior, Family::LogNormal, &cfg, i).unwrap())
        .filter(|d| d.distance < 0.3)
        .collect();
    assert_eq!(r.accepted.len(), all.len());
    assert!(r.accepted.iter().all(|d| d.distance < 0.3));
}
