//! Linear Gaussian regression with a constant design matrix.
//!
//! All sampled and bounded quantities are in σ²-normalized "g-units":
//! a risk value is `‖y − Aθ‖² / σ²`. Multiply by σ² for raw squared norms,
//! and halve to get the `(2σ²)⁻¹`-scaled log-likelihood loss.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{gamma_cdf, ChiSquareMixture, RngStream};
use crate::error::{domain, Error, Result};
use crate::linalg::{norm_sq, Matrix, QrFactor};
use crate::montecarlo::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    /// `‖y − Aθ^LS‖²`, fit and evaluated on the same sample.
    Training,
    /// `‖y − Aθ*‖²`.
    True,
    /// `‖y_t − Aθ^LS‖²` on an independent sample.
    Testing,
}

impl RiskKind {
    pub const ALL: [RiskKind; 3] = [RiskKind::Training, RiskKind::True, RiskKind::Testing];

    pub fn name(self) -> &'static str {
        match self {
            RiskKind::Training => "training",
            RiskKind::True => "true",
            RiskKind::Testing => "testing",
        }
    }
}

/// `y = Aθ* + σz` with a fixed full-column-rank `A`.
#[derive(Clone, Debug)]
pub struct FixedDesignModel {
    design: Matrix,
    theta_star: Vec<f64>,
    sigma: f64,
    qr: QrFactor,
}

impl FixedDesignModel {
    pub fn new(design: Matrix, theta_star: Vec<f64>, sigma: f64) -> Result<Self> {
        let (n, m) = (design.rows(), design.cols());
        if n <= m {
            return domain(format!("fixed design needs n > m, got n = {n}, m = {m}"));
        }
        if theta_star.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "theta_star has length {}, design has {m} columns",
                theta_star.len()
            )));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return domain("theta_star has non-finite entries");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        let qr = QrFactor::new(&design)?;
        Ok(Self {
            design,
            theta_star,
            sigma,
            qr,
        })
    }

    /// The 4×2 worked example: σ = 0.1, θ* = (0.3, −2).
    pub fn worked_example() -> Self {
        Self::new(
            worked_example_design(),
            WORKED_EXAMPLE_THETA.to_vec(),
            WORKED_EXAMPLE_SIGMA,
        )
        .expect("worked example is valid")
    }

    pub fn n(&self) -> usize {
        self.design.rows()
    }

    pub fn m(&self) -> usize {
        self.design.cols()
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.design.clone(), self.theta_star.clone(), sigma)
    }

    /// Least-squares estimate for one training sample `y`.
    pub fn fit(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.qr.solve(y)
    }

    /// One replication: `[training, true, testing]` in g-units.
    ///
    /// Draws `z` then `z_t` (n normals each). The estimator error
    /// `θ^LS − θ* = A⁺(σz)` is solved directly from the noise, so the result
    /// is σ-free and the signal `Aθ*` cancels exactly.
    pub fn replicate(&self, stream: &mut RngStream) -> Result<[f64; 3]> {
        let n = self.n();
        let mut z = vec![0.0; n];
        let mut z_t = vec![0.0; n];
        stream.fill_normal(&mut z);
        stream.fill_normal(&mut z_t);
        let err = self.qr.solve(&z)?;
        let fitted = self.design.matvec(&err)?;
        let training = z.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let testing = z_t.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        Ok([training, norm_sq(&z), testing])
    }
}

pub const WORKED_EXAMPLE_SIGMA: f64 = 0.1;
pub const WORKED_EXAMPLE_THETA: [f64; 2] = [0.3, -2.0];

pub fn worked_example_design() -> Matrix {
    Matrix::from_rows(&[[1.0, 0.6], [3.2, -2.0], [4.0, 1.0], [3.1, -1.0]]).expect("static design")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskSampleSet {
    pub kind: RiskKind,
    /// g-units, one per replication, in replication order.
    pub values: Vec<f64>,
}

impl RiskSampleSet {
    pub fn n_samples(&self) -> usize {
        self.values.len()
    }
}

/// All three risks from the same replications.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskDraws {
    pub training: Vec<f64>,
    pub true_risk: Vec<f64>,
    pub testing: Vec<f64>,
}

impl RiskDraws {
    pub fn get(&self, kind: RiskKind) -> &[f64] {
        match kind {
            RiskKind::Training => &self.training,
            RiskKind::True => &self.true_risk,
            RiskKind::Testing => &self.testing,
        }
    }

    pub fn len(&self) -> usize {
        self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training.is_empty()
    }
}

/// Runs `n_samples` replications; replication `i` uses `substream(master_seed, i)`.
/// Results are in replication order regardless of the rayon pool size.
pub fn sample_all_risks(
    model: &FixedDesignModel,
    n_samples: usize,
    master_seed: u64,
) -> Result<RiskDraws> {
    let rows: Vec<[f64; 3]> = (0..n_samples)
        .into_par_iter()
        .map(|i| model.replicate(&mut substream(master_seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut draws = RiskDraws {
        training: Vec::with_capacity(n_samples),
        true_risk: Vec::with_capacity(n_samples),
        testing: Vec::with_capacity(n_samples),
    };
    for [tr, tru, te] in rows {
        draws.training.push(tr);
        draws.true_risk.push(tru);
        draws.testing.push(te);
    }
    Ok(draws)
}

pub fn sample_risks(
    model: &FixedDesignModel,
    kind: RiskKind,
    n_samples: usize,
    master_seed: u64,
) -> Result<RiskSampleSet> {
    let draws = sample_all_risks(model, n_samples, master_seed)?;
    let values = match kind {
        RiskKind::Training => draws.training,
        RiskKind::True => draws.true_risk,
        RiskKind::Testing => draws.testing,
    };
    Ok(RiskSampleSet { kind, values })
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if m < 1 || n <= m {
        return domain(format!("need n > m >= 1, got n = {n}, m = {m}"));
    }
    Ok(())
}

fn to_dof(k: usize) -> Result<u32> {
    u32::try_from(k).map_err(|_| Error::Domain(format!("degrees of freedom {k} too large")))
}

/// Exact law of a risk in g-units.
pub fn analytic_risk_distribution(kind: RiskKind, n: usize, m: usize) -> Result<ChiSquareMixture> {
    check_dims(n, m)?;
    let (n32, m32, r32) = (to_dof(n)?, to_dof(m)?, to_dof(n - m)?);
    match kind {
        RiskKind::Training => ChiSquareMixture::new([(1.0, r32)]),
        RiskKind::True => ChiSquareMixture::new([(1.0, n32)]),
        RiskKind::Testing => ChiSquareMixture::new([(2.0, m32), (1.0, r32)]),
    }
}

/// `(mean, variance)` of a risk in raw squared-norm units.
pub fn risk_moments(kind: RiskKind, n: usize, m: usize, sigma: f64) -> Result<(f64, f64)> {
    check_dims(n, m)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    Ok(match kind {
        RiskKind::Training => (s2 * (nf - mf), s4 * 2.0 * (nf - mf)),
        RiskKind::True => (s2 * nf, s4 * 2.0 * nf),
        RiskKind::Testing => (s2 * (nf + mf), s4 * (6.0 * mf + 2.0 * nf)),
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

/// Chebyshev bound on the testing risk in g-units: `n + m + √((6m + 2n)/δ)`,
/// which holds with probability at least `1 − δ`.
pub fn testing_bound(n: usize, m: usize, delta: f64) -> Result<f64> {
    check_dims(n, m)?;
    check_delta(delta)?;
    let (nf, mf) = (n as f64, m as f64);
    Ok(nf + mf + ((6.0 * mf + 2.0 * nf) / delta).sqrt())
}

/// CDFs of the naive `χ²(n+m)` and `χ²(n+2m)` stand-ins for the testing risk.
pub fn naive_cdfs(n: usize, m: usize, x: f64) -> Result<(f64, f64)> {
    if n < 1 || m < 1 {
        return domain(format!("need n, m >= 1, got n = {n}, m = {m}"));
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok((
        gamma_cdf(0.5 * (nf + mf), 2.0, x)?,
        gamma_cdf(0.5 * (nf + 2.0 * mf), 2.0, x)?,
    ))
}

/// `max_x |naive CDF − testing-risk CDF|` for both naive stand-ins, scanned on
/// `points` grid points up to the 0.9999 quantile of the testing risk.
pub fn naive_max_discrepancy(n: usize, m: usize, points: usize) -> Result<(f64, f64)> {
    let ev = analytic_risk_distribution(RiskKind::Testing, n, m)?.evaluator()?;
    let upper = ev.quantile(0.9999)?;
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..=points {
        let x = upper * i as f64 / points as f64;
        let exact = ev.cdf(x);
        let (a, b) = naive_cdfs(n, m, x)?;
        worst.0 = worst.0.max((a - exact).abs());
        worst.1 = worst.1.max((b - exact).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_distributions() {
        let tr = analytic_risk_distribution(RiskKind::Training, 4, 2).unwrap();
        assert_eq!(tr, ChiSquareMixture::new([(1.0, 2)]).unwrap());
        assert_eq!(tr.mean(), 2.0);

        let te = analytic_risk_distribution(RiskKind::Testing, 4, 2).unwrap();
        assert_eq!(te, ChiSquareMixture::new([(2.0, 2), (1.0, 2)]).unwrap());
        assert_eq!(te.mean(), 6.0);
        assert_eq!(te.variance(), 6.0 * 2.0 + 2.0 * 4.0);

        for m in 1..7 {
            let tru = analytic_risk_distribution(RiskKind::True, 9, m).unwrap();
            assert_eq!(tru.mean(), 9.0);
        }
        assert!(analytic_risk_distribution(RiskKind::True, 2, 2).is_err());
        assert!(analytic_risk_distribution(RiskKind::True, 2, 0).is_err());
    }

    #[test]
    fn moments_match_table() {
        let (mean, var) = risk_moments(RiskKind::Training, 4, 2, 0.1).unwrap();
        assert!((mean - 0.02).abs() < 1e-15 && (var - 4e-4).abs() < 1e-15);
        let (mean, var) = risk_moments(RiskKind::Testing, 4, 2, 0.1).unwrap();
        assert!((mean - 0.06).abs() < 1e-15 && (var - 2e-3).abs() < 1e-15);
        assert_eq!(
            risk_moments(RiskKind::True, 7, 3, 1.0).unwrap(),
            (7.0, 14.0)
        );
        assert!(risk_moments(RiskKind::True, 3, 3, 1.0).is_err());

        // Raw moments are σ² / σ⁴ times the mixture moments.
        for kind in RiskKind::ALL {
            let mix = analytic_risk_distribution(kind, 11, 4).unwrap();
            let (mean, var) = risk_moments(kind, 11, 4, 0.5).unwrap();
            assert!((mean - 0.25 * mix.mean()).abs() < 1e-12);
            assert!((var - 0.0625 * mix.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn testing_bound_examples() {
        let b = testing_bound(4, 2, 0.1).unwrap();
        assert!((b - (6.0 + 200f64.sqrt())).abs() < 1e-12);
        assert!((b - 20.142_135_6).abs() < 1e-7);
        let b = testing_bound(4, 2, 0.999).unwrap();
        assert!((b - 10.474_373_7).abs() < 1e-6);
        for delta in [0.01, 0.2, 0.9] {
            let wide = testing_bound(4, 2, delta / 4.0).unwrap() - 6.0;
            let narrow = testing_bound(4, 2, delta).unwrap() - 6.0;
            assert!((wide - 2.0 * narrow).abs() < 1e-12);
        }
        assert!(testing_bound(4, 2, 0.0).is_err());
        assert!(testing_bound(4, 2, 1.0).is_err());
    }

    #[test]
    fn naive_cdf_examples() {
        assert_eq!(naive_cdfs(4, 2, 0.0).unwrap(), (0.0, 0.0));
        let (a, b) = naive_cdfs(4, 2, 1e4).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        // Erlang(3, 2) at 6: 1 − e^{−3}(1 + 3 + 4.5).
        let (a, _) = naive_cdfs(4, 2, 6.0).unwrap();
        let want = 1.0 - (-3.0f64).exp() * 8.5;
        assert!((a - want).abs() < 1e-14);
        assert!((a - 0.57681).abs() < 1e-5);
    }

    #[test]
    fn naive_approximation_is_visibly_off() {
        let (npm, np2m) = naive_max_discrepancy(4, 2, 2000).unwrap();
        assert!(npm >= 0.05, "{npm}");
        assert!(np2m > 0.0);
    }

    #[test]
    fn model_validation() {
        let a = worked_example_design();
        assert!(FixedDesignModel::new(a.clone(), vec![1.0], 0.1).is_err());
        assert!(FixedDesignModel::new(a.clone(), vec![1.0, 2.0], 0.0).is_err());
        assert!(FixedDesignModel::new(Matrix::identity(2), vec![1.0, 2.0], 1.0).is_err());
        let rank1 = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            FixedDesignModel::new(rank1, vec![1.0, 1.0], 1.0),
            Err(Error::RankDeficient { .. })
        ));
        let model = FixedDesignModel::worked_example();
        assert_eq!((model.n(), model.m()), (4, 2));
    }

    #[test]
    fn g_values_are_sigma_free() {
        let small = FixedDesignModel::worked_example();
        let big = small.with_sigma(1.0).unwrap();
        let a = sample_all_risks(&small, 500, 11).unwrap();
        let b = sample_all_risks(&big, 500, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replicate_matches_literal_refit() {
        // Form y = Aθ* + σz, refit, and compare with the noise-only path.
        let model = FixedDesignModel::worked_example();
        let sigma = model.sigma();
        for i in 0..200 {
            let mut rng = substream(17, i);
            let got = model.replicate(&mut rng.clone()).unwrap();
            let n = model.n();
            let mut z = vec![0.0; n];
            let mut z_t = vec![0.0; n];
            rng.fill_normal(&mut z);
            rng.fill_normal(&mut z_t);
            let signal = model.design().matvec(model.theta_star()).unwrap();
            let y: Vec<f64> = signal.iter().zip(&z).map(|(s, e)| s + sigma * e).collect();
            let y_t: Vec<f64> = signal
                .iter()
                .zip(&z_t)
                .map(|(s, e)| s + sigma * e)
                .collect();
            let theta = model.fit(&y).unwrap();
            let pred = model.design().matvec(&theta).unwrap();
            let g = |obs: &[f64], fit: &[f64]| {
                obs.iter()
                    .zip(fit)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / (sigma * sigma)
            };
            let want = [g(&y, &pred), g(&y, &signal), g(&y_t, &pred)];
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sample_risks_extracts_one_kind() {
        let model = FixedDesignModel::worked_example();
        let all = sample_all_risks(&model, 50, 3).unwrap();
        for kind in RiskKind::ALL {
            let set = sample_risks(&model, kind, 50, 3).unwrap();
            assert_eq!(set.kind, kind);
            assert_eq!(set.n_samples(), 50);
            assert_eq!(set.values, all.get(kind));
            assert!(set.values.iter().all(|&v| v >= 0.0));
        }
    }
}
