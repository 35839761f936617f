use ols_risk::distributions::RngStream;
use ols_risk::fixed_design::{
    analytic_risk_distribution, risk_moments, sample_all_risks, sample_risks, testing_bound,
    FixedDesignModel, RiskKind,
};
use ols_risk::linalg::Matrix;
use ols_risk::montecarlo::{summarize, EmpiricalDistribution};
use proptest::prelude::*;

fn random_model(n: usize, m: usize, sigma: f64, seed: u64) -> FixedDesignModel {
    let mut rng = RngStream::from_seed(seed);
    let mut data = vec![0.0; n * m];
    rng.fill_normal(&mut data);
    let theta: Vec<f64> = (0..m).map(|_| rng.uniform(-3.0, 3.0)).collect();
    FixedDesignModel::new(Matrix::new(n, m, data).unwrap(), theta, sigma).unwrap()
}

#[test]
fn risks_follow_their_mixtures_on_random_designs() {
    for (n, m, seed) in [(10usize, 3usize, 1u64), (25, 12, 2), (7, 6, 3)] {
        let model = random_model(n, m, 0.7, seed);
        let draws = sample_all_risks(&model, 20_000, seed).unwrap();
        for kind in RiskKind::ALL {
            let ev = analytic_risk_distribution(kind, n, m)
                .unwrap()
                .evaluator()
                .unwrap();
            let dist = EmpiricalDistribution::new(draws.get(kind).to_vec()).unwrap();
            let ks = dist.ks_statistic(|x| ev.cdf(x));
            assert!(ks < 0.015, "({n},{m}) {}: KS {ks}", kind.name());
        }
    }
}

#[test]
fn sample_moments_match_raw_moments() {
    let (n, m, sigma) = (12, 4, 0.3);
    let model = random_model(n, m, sigma, 9);
    let draws = sample_all_risks(&model, 50_000, 4).unwrap();
    for kind in RiskKind::ALL {
        let (mean, var) = risk_moments(kind, n, m, sigma).unwrap();
        let raw: Vec<f64> = draws.get(kind).iter().map(|g| g * sigma * sigma).collect();
        let s = summarize(&raw).unwrap();
        assert!(
            (s.mean - mean).abs() <= 4.0 * s.std_error_mean,
            "{}: {} vs {mean}",
            kind.name(),
            s.mean
        );
        assert!(
            (s.variance - var).abs() <= 5.0 * s.std_error_variance,
            "{}: {} vs {var}",
            kind.name(),
            s.variance
        );
    }
}

#[test]
fn testing_bound_covers_on_a_larger_design() {
    let (n, m) = (30, 8);
    let model = random_model(n, m, 1.0, 21);
    let testing = sample_risks(&model, RiskKind::Testing, 50_000, 5).unwrap();
    let dist = EmpiricalDistribution::new(testing.values).unwrap();
    for delta in [0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
        assert!(dist.exceedance(testing_bound(n, m, delta).unwrap()) <= delta);
    }
}

#[test]
fn single_kind_sampling_matches_joint_sampling() {
    let model = FixedDesignModel::worked_example();
    let all = sample_all_risks(&model, 500, 77).unwrap();
    for kind in RiskKind::ALL {
        let one = sample_risks(&model, kind, 500, 77).unwrap();
        assert_eq!(one.kind, kind);
        assert_eq!(one.values, all.get(kind));
    }
}

#[test]
fn risks_are_nonnegative() {
    let model = random_model(6, 2, 0.5, 4);
    let draws = sample_all_risks(&model, 2000, 8).unwrap();
    assert!(draws.training.iter().all(|&g| g >= 0.0));
    assert!(draws.testing.iter().all(|&g| g >= 0.0));
    assert!(draws.true_risk.iter().all(|&g| g > 0.0));
}

proptest! {
    #[test]
    fn testing_bound_decreases_in_delta_and_exceeds_mean(
        n in 2usize..500,
        m_frac in 0.0f64..1.0,
        d1 in 0.001f64..0.999,
        d2 in 0.001f64..0.999,
    ) {
        let m = 1 + ((n - 2) as f64 * m_frac) as usize;
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let b_lo = testing_bound(n, m, lo).unwrap();
        let b_hi = testing_bound(n, m, hi).unwrap();
        prop_assert!(b_lo >= b_hi);
        prop_assert!(b_hi > (n + m) as f64);
    }

    #[test]
    fn mixture_means_match_moments(n in 2usize..300, m_frac in 0.0f64..1.0) {
        let m = 1 + ((n - 2) as f64 * m_frac) as usize;
        for kind in RiskKind::ALL {
            let mix = analytic_risk_distribution(kind, n, m).unwrap();
            let (mean, var) = risk_moments(kind, n, m, 1.0).unwrap();
            prop_assert!((mix.mean() - mean).abs() < 1e-9 * mean);
            prop_assert!((mix.variance() - var).abs() < 1e-9 * var);
        }
    }
}
