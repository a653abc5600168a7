use hazardlab::analytics::{paired_t_test, rating_time_histograms, BoxStats, TimeCenter};
use hazardlab::eventlog::{parse_event_log, segment_grasps, write_event_log};
use hazardlab::hazardmodel::{
    cumulative_hazard, exact_grad_log_likelihood, exact_log_likelihood, expand_to_intervals,
    grad_log_likelihood, hazard, log_likelihood, rating_time_cdf, survival, Censoring, Cohort,
    SurvivalRecord,
};
use hazardlab::inference::{split_r_hat, Chain, RHat};
use hazardlab::predict::{empirical_survival, posterior_survival_curves, uniform_grid};
use hazardlab::simgen::{rating_time_from_uniform, simulate_sessions, SimConfig};
use hazardlab::{CovariateRow, FitConfig, HazardParams, PosteriorChains};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = HazardParams> {
    (-6.0..0.0f64, -2.0..2.0f64, -2.0..2.0f64, -3.0..3.0f64).prop_map(|(l, bs, bt, eta)| HazardParams {
        log_lambda0: l,
        beta_success: bs,
        beta_trust: bt,
        eta,
    })
}

fn covariates() -> impl Strategy<Value = CovariateRow> {
    (any::<bool>(), 0.0..100.0f64, 0.1..20.0f64).prop_map(|(s, trust, tp)| CovariateRow::new(s, trust, tp))
}

fn small_sim(seed: u64, subjects: usize) -> SimConfig {
    SimConfig {
        n_subjects: subjects,
        trials_per_subject: 3,
        seed,
        ..SimConfig::default()
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_test_is_antisymmetric_and_shift_invariant(
        pairs in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..40),
        shift in -100.0..100.0f64,
    ) {
        let base = paired_t_test(&pairs).unwrap();
        let swapped: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let shifted: Vec<_> = pairs.iter().map(|&(a, b)| (a + shift, b + shift)).collect();
        let sw = paired_t_test(&swapped).unwrap();
        let sh = paired_t_test(&shifted).unwrap();
        prop_assert!(!base.degenerate);
        let t = base.t_statistic.unwrap();
        prop_assert!(rel_close(sw.t_statistic.unwrap(), -t, 1e-12));
        prop_assert!(rel_close(sw.p_value.unwrap(), base.p_value.unwrap(), 1e-12));
        prop_assert!(rel_close(sh.t_statistic.unwrap(), t, 1e-6));
        let p = base.p_value.unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn box_statistics_are_ordered(values in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        let b = BoxStats::from_values(&values).unwrap();
        let chain = [b.min, b.lower_whisker, b.q1, b.median, b.q3, b.upper_whisker, b.max];
        prop_assert!(chain.windows(2).all(|w| w[0] <= w[1]), "{chain:?}");
        prop_assert_eq!(b.count, values.len());
        prop_assert!(b.min <= b.mean && b.mean <= b.max);
    }

    #[test]
    fn hazard_ratio_is_exp_eta(p in params(), x in covariates()) {
        let ratio = hazard(&p, &x, true) / hazard(&p, &x, false);
        prop_assert!(rel_close(ratio, p.eta.exp(), 1e-12));
    }

    #[test]
    fn survival_is_a_survival_function(
        p in params(),
        x in covariates(),
        mut ts in prop::collection::vec(0.0..100.0f64, 2..30),
    ) {
        prop_assert_eq!(survival(&p, &x, 0.0).unwrap(), 1.0);
        ts.sort_by(f64::total_cmp);
        let s: Vec<f64> = ts.iter().map(|&t| survival(&p, &x, t).unwrap()).collect();
        prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
        for &t in &ts {
            let f = rating_time_cdf(&p, &x, t).unwrap();
            prop_assert!((f + survival(&p, &x, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trust_shift_is_absorbed_by_the_baseline(
        p in params(),
        x in covariates(),
        c in -1.0..1.0f64,
        t in 0.0..40.0f64,
    ) {
        let moved = CovariateRow { x_trust: x.x_trust + c, ..x };
        let absorbed = HazardParams { log_lambda0: p.log_lambda0 + p.beta_trust * c, ..p };
        let a = cumulative_hazard(&p, &moved, t).unwrap();
        let b = cumulative_hazard(&absorbed, &x, t).unwrap();
        prop_assert!(rel_close(a, b, 1e-12));
    }

    #[test]
    fn r_hat_is_affine_invariant(
        seed in any::<u64>(),
        scale in prop::sample::select(vec![-3.0, 0.5, 2.0, 1e3]),
        offset in -100.0..100.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..200).map(|_| rng.random::<f64>() + 0.1 * k as f64).collect())
            .collect();
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| scale * v + offset).collect()).collect();
        let (RHat::Value(a), RHat::Value(b)) = (split_r_hat(&chains).unwrap(), split_r_hat(&moved).unwrap()) else {
            panic!("finite chains have a finite r-hat");
        };
        prop_assert!(rel_close(a, b, 1e-9), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn histograms_count_every_rated_episode(
        seed in any::<u64>(),
        width in 0.1..5.0f64,
        pick in any::<bool>(),
    ) {
        let (log, _) = simulate_sessions(&small_sim(seed, 3)).unwrap();
        let episodes = segment_grasps(&log).episodes;
        let center = if pick { TimeCenter::Pick } else { TimeCenter::Place };
        let (early, last) = rating_time_histograms(&episodes, width, center).unwrap();
        let rated = |fin: bool| episodes.iter().filter(|e| e.is_final == fin && e.is_rated()).count();
        prop_assert_eq!(early.total, rated(false));
        prop_assert_eq!(last.total, rated(true));
        prop_assert_eq!(early.counts.iter().sum::<usize>(), early.total);
        prop_assert_eq!(last.counts.iter().sum::<usize>(), last.total);
        if !early.is_empty() && !last.is_empty() {
            prop_assert_eq!(&early.edges, &last.edges);
        }
    }

    #[test]
    fn expanded_gradient_matches_the_exact_one(seed in any::<u64>(), p in params(), censored in any::<bool>()) {
        let (log, _) = simulate_sessions(&small_sim(seed, 4)).unwrap();
        let records: Vec<SurvivalRecord> = segment_grasps(&log).episodes.iter().map(SurvivalRecord::from_episode).collect();
        let censoring = if censored { Censoring::RightCensored } else { Censoring::RatedOnly };
        let exact = exact_grad_log_likelihood(&p, &records, censoring).unwrap();
        let exact_ll = exact_log_likelihood(&p, &records, censoring).unwrap();
        for width in [4.0, 1.0, 0.25] {
            let table = expand_to_intervals(&records, width, censoring).unwrap();
            let g = grad_log_likelihood(&p, &table).unwrap();
            for k in 0..4 {
                prop_assert!(rel_close(g[k], exact[k], 1e-10), "width {width}, k {k}: {} vs {}", g[k], exact[k]);
            }
            // The Poisson form differs from the exact one by the constant Σ d·ln e.
            let offset: f64 = table.rows.iter().filter(|r| r.d).map(|r| r.e.ln()).sum();
            prop_assert!(rel_close(log_likelihood(&p, &table).unwrap() - offset, exact_ll, 1e-10));
        }
    }

    #[test]
    fn simulated_logs_round_trip(seed in any::<u64>(), subjects in 0usize..4) {
        let (log, truth) = simulate_sessions(&small_sim(seed, subjects)).unwrap();
        let mut buf = Vec::new();
        write_event_log(&log, &mut buf).unwrap();
        let parsed = parse_event_log(buf.as_slice()).unwrap();
        prop_assert_eq!(&parsed, &log);
        prop_assert_eq!(segment_grasps(&parsed).episodes, truth.episodes);
    }

    #[test]
    fn rated_fraction_grows_with_the_baseline(seed in any::<u64>(), a in -7.0..-2.0f64, gap in 0.1..3.0f64) {
        // With no trust effect the slider cannot feed back into the hazard,
        // so common random numbers give a pathwise ordering.
        let at = |log_lambda0: f64| {
            let config = SimConfig {
                true_params: HazardParams { log_lambda0, beta_success: 0.5, beta_trust: 0.0, eta: 2.0 },
                ..small_sim(seed, 3)
            };
            simulate_sessions(&config).unwrap().1.episodes
        };
        let low = at(a);
        let high = at(a + gap);
        prop_assert_eq!(low.len(), high.len());
        for (l, h) in low.iter().zip(&high) {
            prop_assert!(!l.is_rated() || h.is_rated());
            if let (Some(tl), Some(th)) = (l.trust_rating_time, h.trust_rating_time) {
                prop_assert!(th <= tl);
            }
        }
    }

    #[test]
    fn empirical_sampler_matches_the_cdf(p in params(), x in covariates(), seed in any::<u64>()) {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = 1e12;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..=1.0);
                rating_time_from_uniform(&p, &x, horizon, u).unwrap_or(f64::INFINITY)
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let mut sup: f64 = 0.0;
        for (i, &t) in draws.iter().enumerate().filter(|(_, t)| t.is_finite()) {
            let f = rating_time_cdf(&p, &x, t).unwrap();
            sup = sup.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        prop_assert!(sup < 0.03, "sup distance {sup}");
    }

    #[test]
    fn predictive_band_is_ordered(seed in any::<u64>(), rows in prop::collection::vec(covariates(), 1..10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains = (0..2)
            .map(|k| Chain {
                draws: (0..60 * 4)
                    .map(|i| if i % 4 == 0 { rng.random_range(-5.0..-1.0) } else { rng.random_range(-1.0..1.0) })
                    .collect(),
                dim: 4,
                acceptance_rate: 0.3,
                seed,
                stream: k,
            })
            .collect();
        let posterior = PosteriorChains {
            names: HazardParams::NAMES.iter().map(|s| s.to_string()).collect(),
            chains,
        };
        let grid = uniform_grid(30.0, 0.5);
        let curves = posterior_survival_curves(&posterior, &rows, &grid, 80, seed).unwrap();
        prop_assert_eq!(curves.curves.len(), 80);
        for i in 0..grid.len() {
            let (a, b, c) = (curves.q05.values[i], curves.q50.values[i], curves.q95.values[i]);
            prop_assert!(0.0 <= a && a <= b && b <= c && c <= 1.0);
            if i > 0 {
                prop_assert!(curves.q50.values[i] <= curves.q50.values[i - 1]);
            }
        }
        prop_assert!(curves.q05.values[0] == 1.0 && curves.q95.values[0] == 1.0);
    }

    #[test]
    fn empirical_survival_steps_down(mut times in prop::collection::vec(0.01..50.0f64, 1..100)) {
        let grid = uniform_grid(60.0, 0.25);
        let s = empirical_survival(&times, &grid);
        prop_assert_eq!(s.values[0], 1.0);
        prop_assert!(s.values.windows(2).all(|w| w[1] <= w[0]));
        times.sort_by(f64::total_cmp);
        prop_assert_eq!(*s.values.last().unwrap(), 0.0);
    }
}

#[test]
fn truncated_exponential_mean_is_reproduced() {
    // Placement after the horizon leaves a single constant hazard.
    let p = HazardParams::new(0.05, 0.0, 0.0, 1.0);
    let x = CovariateRow::new(false, 50.0, 1e6);
    let lambda = hazard(&p, &x, false);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for horizon in [5.0, 20.0, 60.0] {
        let draws: Vec<f64> = (0..200_000)
            .filter_map(|_| hazardlab::simgen::sample_rating_time(&p, &x, horizon, &mut rng))
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let tail = (-lambda * horizon).exp();
        let expected = 1.0 / lambda - horizon * tail / (1.0 - tail);
        assert!((mean - expected).abs() < 3.0 * sd / n.sqrt(), "h {horizon}: {mean} vs {expected}");
        let rated = n / 200_000.0;
        assert!((rated - (1.0 - tail)).abs() < 4.0 * (tail * (1.0 - tail) / 200_000.0).sqrt());
    }
}

#[test]
fn fit_is_deterministic_across_thread_counts() {
    let (log, _) = simulate_sessions(&small_sim(4, 6)).unwrap();
    let episodes = segment_grasps(&log).episodes;
    let records = hazardlab::hazardmodel::cohort_records(&episodes, Cohort::Early);
    let table = expand_to_intervals(&records, 0.5, Censoring::RightCensored).unwrap();
    let config = FitConfig {
        draws: 300,
        warmup: 200,
        seed: 42,
        ..FitConfig::default()
    };
    let on = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| hazardlab::inference::fit(&table, &config).unwrap())
    };
    let one = on(1);
    assert_eq!(one, on(3));
    assert_eq!(one, hazardlab::inference::fit(&table, &config).unwrap());
    let other = hazardlab::inference::fit(&table, &FitConfig { seed: 43, ..config.clone() }).unwrap();
    assert_ne!(one, other);
    assert!(one.chains.iter().all(|c| c.n_draws() == 300));
}
