//! Ordinary least squares with Gaussian random features.
//!
//! Features are drawn directly as `φ = Lq`, `q ∼ N(0, I_m)`, with `L` the
//! Cholesky factor of the feature covariance. The loss of one trial is the
//! squared prediction error `(ŷ − φ̂ᵀθ^LS)²` on a fresh point. Every closed
//! form below is independent of the feature covariance.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{mix64, RngStream};
use crate::error::{domain, Error, Result};
use crate::linalg::{cholesky, dot, spd_inverse, Matrix, QrFactor};
use crate::montecarlo::{derive_seed, pairwise_sum, substream, summarize};

const THETA_STREAM_TAG: u64 = 0x7468_6574_612a_0001;
const RETRY_STREAM_TAG: u64 = 0x7265_7472_7900_0002;

/// Which closed form to use for `Var[ℓ]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    /// `σ⁴[m³ − m²(n−3) − 3m(n−3)(n−1) + 3(n−3)(n−1)²] / [(n−m−1)²(n−m−3)]`.
    ///
    /// Equals `E[ℓ²] − (σ²m/(n−m−1))²`, which exceeds the true variance by
    /// `σ⁴(n+m−1)/(n−m−1)`; bounds built on it stay valid but loose.
    #[serde(rename = "paper")]
    PaperPolynomial,
    /// `E[ℓ²] − E[ℓ]²`.
    Corrected,
}

impl VarianceMode {
    pub const ALL: [VarianceMode; 2] = [VarianceMode::PaperPolynomial, VarianceMode::Corrected];

    pub fn name(self) -> &'static str {
        match self {
            VarianceMode::PaperPolynomial => "paper",
            VarianceMode::Corrected => "corrected",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThetaStarSpec {
    Explicit(Vec<f64>),
    /// `t/‖t‖` with `t ∼ N(0, I_m)`, drawn once per experiment.
    RandomUnit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomDesignConfig {
    pub n: usize,
    pub m: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub feature_cov: Matrix,
    pub theta_star: ThetaStarSpec,
    pub master_seed: u64,
}

impl RandomDesignConfig {
    /// Identity feature covariance and a random unit `θ*`.
    pub fn new(n: usize, m: usize, sigma: f64, master_seed: u64) -> Self {
        Self {
            n,
            m,
            sigma,
            feature_cov: Matrix::identity(m.max(1)),
            theta_star: ThetaStarSpec::RandomUnit,
            master_seed,
        }
    }

    pub fn with_feature_cov(mut self, cov: Matrix) -> Self {
        self.feature_cov = cov;
        self
    }

    pub fn with_theta_star(mut self, spec: ThetaStarSpec) -> Self {
        self.theta_star = spec;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return domain("feature dimension m must be at least 1");
        }
        check_variance_dims(self.n, self.m)?;
        check_sigma(self.sigma)?;
        if self.feature_cov.rows() != self.m || !self.feature_cov.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "feature covariance is {}x{}, expected {m}x{m}",
                self.feature_cov.rows(),
                self.feature_cov.cols(),
                m = self.m
            )));
        }
        if let ThetaStarSpec::Explicit(theta) = &self.theta_star {
            if theta.len() != self.m {
                return Err(Error::DimensionMismatch(format!(
                    "theta_star has length {}, expected {}",
                    theta.len(),
                    self.m
                )));
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return domain("theta_star has non-finite entries");
            }
        }
        Ok(())
    }
}

/// A validated configuration with its Cholesky factor and drawn `θ*`.
#[derive(Clone, Debug)]
pub struct Experiment {
    config: RandomDesignConfig,
    chol: Matrix,
    theta_star: Vec<f64>,
}

impl Experiment {
    pub fn new(config: RandomDesignConfig) -> Result<Self> {
        config.validate()?;
        let chol = cholesky(&config.feature_cov)?;
        let theta_star = match &config.theta_star {
            ThetaStarSpec::Explicit(theta) => theta.clone(),
            ThetaStarSpec::RandomUnit => {
                let mut rng = substream(mix64(config.master_seed ^ THETA_STREAM_TAG), 0);
                random_unit_vector(config.m, &mut rng)
            }
        };
        Ok(Self {
            config,
            chol,
            theta_star,
        })
    }

    pub fn config(&self) -> &RandomDesignConfig {
        &self.config
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// Loss of trial `trial_index`. A rank-deficient draw (a probability-zero
    /// event) is retried once on a fresh substream.
    pub fn trial(&self, trial_index: u64) -> Result<f64> {
        match self.trial_with(&mut substream(self.config.master_seed, trial_index)) {
            Err(Error::RankDeficient { .. }) => {
                let retry_seed = mix64(self.config.master_seed ^ RETRY_STREAM_TAG);
                self.trial_with(&mut substream(retry_seed, trial_index))
            }
            other => other,
        }
    }

    /// Draws `Q` (row by row), `z`, `q̂`, `ẑ` in that order.
    ///
    /// The fit is computed through its error `θ^LS − θ* = Φ⁺(σz)`, so the
    /// residual `ŷ − φ̂ᵀθ^LS = σẑ − φ̂ᵀ(θ^LS − θ*)` carries no cancellation
    /// against the signal and is exactly zero when σ = 0.
    fn trial_with(&self, rng: &mut RngStream) -> Result<f64> {
        let TrialDraw {
            phi,
            noise,
            phi_hat,
            z_hat,
        } = self.draw(rng);
        let sigma = self.config.sigma;
        let scaled: Vec<f64> = noise.iter().map(|z| sigma * z).collect();
        let err = QrFactor::new(&phi)?.solve(&scaled)?;
        let resid = sigma * z_hat - dot(&phi_hat, &err);
        Ok(resid * resid)
    }

    fn draw(&self, rng: &mut RngStream) -> TrialDraw {
        let (n, m) = (self.config.n, self.config.m);
        let mut q = vec![0.0; m];
        let mut phi = Vec::with_capacity(n * m);
        for _ in 0..n {
            rng.fill_normal(&mut q);
            phi.extend(self.whiten(&q));
        }
        let mut noise = vec![0.0; n];
        rng.fill_normal(&mut noise);
        rng.fill_normal(&mut q);
        let phi_hat = self.whiten(&q);
        let z_hat = rng.normal();
        TrialDraw {
            phi: Matrix::new(n, m, phi).expect("finite draws"),
            noise,
            phi_hat,
            z_hat,
        }
    }

    /// `L q` for lower-triangular `L`.
    fn whiten(&self, q: &[f64]) -> Vec<f64> {
        (0..q.len())
            .map(|j| dot(&self.chol.row(j)[..=j], &q[..=j]))
            .collect()
    }

    /// Losses of trials `0..trials`, in index order for any pool size.
    pub fn run(&self, trials: usize) -> Result<Vec<f64>> {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| self.trial(i))
            .collect()
    }

    /// Trial `i` computed the long way: form `y = Φθ* + σz`, refit, and
    /// evaluate `(ŷ − φ̂ᵀθ^LS)²` against `ŷ = φ̂ᵀθ* + σẑ`.
    pub fn trial_by_refit(&self, trial_index: u64) -> Result<f64> {
        let mut rng = substream(self.config.master_seed, trial_index);
        let TrialDraw {
            phi,
            noise,
            phi_hat,
            z_hat,
        } = self.draw(&mut rng);
        let sigma = self.config.sigma;
        let signal = phi.matvec(&self.theta_star)?;
        let y: Vec<f64> = signal
            .iter()
            .zip(&noise)
            .map(|(s, z)| s + sigma * z)
            .collect();
        let theta_ls = QrFactor::new(&phi)?.solve(&y)?;
        let y_hat = dot(&phi_hat, &self.theta_star) + sigma * z_hat;
        let resid = y_hat - dot(&phi_hat, &theta_ls);
        Ok(resid * resid)
    }
}

struct TrialDraw {
    phi: Matrix,
    noise: Vec<f64>,
    phi_hat: Vec<f64>,
    z_hat: f64,
}

fn random_unit_vector(m: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let mut t = vec![0.0; m];
        rng.fill_normal(&mut t);
        let norm = dot(&t, &t).sqrt();
        if norm > 0.0 {
            return t.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Loss of one trial of `config`.
pub fn run_trial(config: &RandomDesignConfig, trial_index: u64) -> Result<f64> {
    Experiment::new(config.clone())?.trial(trial_index)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return domain(format!(
            "sigma must be finite and non-negative, got {sigma}"
        ));
    }
    Ok(())
}

fn check_mean_dims(n: usize, m: usize) -> Result<()> {
    if n <= m + 1 {
        return domain(format!("mean needs n > m + 1, got n = {n}, m = {m}"));
    }
    Ok(())
}

fn check_variance_dims(n: usize, m: usize) -> Result<()> {
    if n <= m + 3 {
        return domain(format!("variance needs n > m + 3, got n = {n}, m = {m}"));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

/// `E[ℓ] = σ²(n−1)/(n−m−1)`.
pub fn mean_mse(n: usize, m: usize, sigma: f64) -> Result<f64> {
    check_mean_dims(n, m)?;
    check_sigma(sigma)?;
    let (nf, mf) = (n as f64, m as f64);
    Ok(sigma * sigma * (nf - 1.0) / (nf - mf - 1.0))
}

/// `E[ℓ²] = 3σ⁴(n−1)(n−3)/((n−m−1)(n−m−3))`.
pub fn second_moment_mse(n: usize, m: usize, sigma: f64) -> Result<f64> {
    check_variance_dims(n, m)?;
    check_sigma(sigma)?;
    let (nf, mf) = (n as f64, m as f64);
    let s4 = sigma.powi(4);
    Ok(s4 * 3.0 * (nf - 1.0) * (nf - 3.0) / ((nf - mf - 1.0) * (nf - mf - 3.0)))
}

/// `E[ℓ²]` assembled term by term, `σ⁴(3 + 6t₁ + 6t₂ + 3t₁₁)`.
pub fn second_moment_from_traces(n: usize, m: usize, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let t = inv_wishart_trace_moments(n, m)?;
    Ok(sigma.powi(4) * (3.0 + 6.0 * t.t1 + 6.0 * t.t2 + 3.0 * t.t11))
}

/// Numerator of the cubic variance polynomial behind [`VarianceMode::PaperPolynomial`], exact in integers.
pub fn paper_variance_numerator(n: usize, m: usize) -> i128 {
    let (n, m) = (n as i128, m as i128);
    m.pow(3) - m * m * (n - 3) - 3 * m * (n - 3) * (n - 1) + 3 * (n - 3) * (n - 1) * (n - 1)
}

/// Numerator of `E[ℓ²] − E[ℓ]²` over the same denominator, exact in integers.
pub fn corrected_variance_numerator(n: usize, m: usize) -> i128 {
    let (n, m) = (n as i128, m as i128);
    2 * (n - 1) * ((n - 1) * (n - 3) - m * (n - 4))
}

/// Common denominator `(n−m−1)²(n−m−3)`.
pub fn variance_denominator(n: usize, m: usize) -> i128 {
    let (n, m) = (n as i128, m as i128);
    (n - m - 1).pow(2) * (n - m - 3)
}

pub fn variance_mse(n: usize, m: usize, sigma: f64, mode: VarianceMode) -> Result<f64> {
    check_variance_dims(n, m)?;
    check_sigma(sigma)?;
    let num = match mode {
        VarianceMode::PaperPolynomial => paper_variance_numerator(n, m),
        VarianceMode::Corrected => corrected_variance_numerator(n, m),
    };
    Ok(sigma.powi(4) * num as f64 / variance_denominator(n, m) as f64)
}

/// Chebyshev upper bound `E[ℓ] + √(Var[ℓ]/δ)`, exceeded with probability ≤ δ.
pub fn mse_bound(n: usize, m: usize, sigma: f64, delta: f64, mode: VarianceMode) -> Result<f64> {
    check_delta(delta)?;
    let mean = mean_mse(n, m, sigma)?;
    let var = variance_mse(n, m, sigma, mode)?;
    Ok(mean + (var / delta).sqrt())
}

/// Bound with location `σ²m/(n−m−1)` and the cubic-polynomial spread,
/// `σ²/(n−m−1)·[m + δ^{-1/2}·√(numerator/(n−m−3))]`.
///
/// Its location term is `σ²m/(n−m−1)`, which omits the `σ²` contained in
/// `E[ℓ]`; [`mse_bound`] uses the full mean.
pub fn bracket_bound(n: usize, m: usize, sigma: f64, delta: f64) -> Result<f64> {
    check_variance_dims(n, m)?;
    check_sigma(sigma)?;
    check_delta(delta)?;
    let (nf, mf) = (n as f64, m as f64);
    let inner = paper_variance_numerator(n, m) as f64 / (nf - mf - 3.0);
    Ok(sigma * sigma / (nf - mf - 1.0) * (mf + (inner / delta).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ApproxRegime {
    /// Large but finite `n`, in terms of `α = n/m`.
    LargeN,
    /// `α → ∞`.
    Asymptotic,
}

/// Closed-form approximations in `α = n/m`:
/// `LargeN → σ²/(α−1)·[1 + √((3α²−1)/δ)]`, `Asymptotic → σ²√(3/δ)`.
pub fn approx_bound(alpha: f64, sigma: f64, delta: f64, regime: ApproxRegime) -> Result<f64> {
    if alpha.is_nan() || alpha <= 1.0 {
        return domain(format!("alpha = n/m must exceed 1, got {alpha}"));
    }
    check_sigma(sigma)?;
    check_delta(delta)?;
    let s2 = sigma * sigma;
    Ok(match regime {
        ApproxRegime::LargeN => {
            s2 / (alpha - 1.0) * (1.0 + ((3.0 * alpha * alpha - 1.0) / delta).sqrt())
        }
        ApproxRegime::Asymptotic => s2 * (3.0 / delta).sqrt(),
    })
}

/// `α → ∞` Chebyshev bound keeping the limiting mean: `σ²(1 + √(3/δ))`.
pub fn asymptotic_chebyshev_bound(sigma: f64, delta: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_delta(delta)?;
    Ok(sigma * sigma * (1.0 + (3.0 / delta).sqrt()))
}

/// Trace moments of `W⁻¹` for `W ∼ Wishart_m(I, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvWishartTraceMoments {
    /// `E[Tr W⁻¹]`
    pub t1: f64,
    /// `E[Tr W⁻²]`
    pub t2: f64,
    /// `E[(Tr W⁻¹)²]`
    pub t11: f64,
}

pub fn inv_wishart_trace_moments(n: usize, m: usize) -> Result<InvWishartTraceMoments> {
    if m < 1 {
        return domain("Wishart dimension m must be at least 1");
    }
    check_variance_dims(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    let d = (nf - mf - 3.0) * (nf - mf - 1.0) * (nf - mf);
    Ok(InvWishartTraceMoments {
        t1: mf / (nf - mf - 1.0),
        t2: (nf - 1.0) * mf / d,
        t11: mf * (mf * (nf - mf - 2.0) + 2.0) / d,
    })
}

/// One draw of `W = QQᵀ`, `Q` an `m × n` standard normal matrix.
pub fn sample_wishart_identity(n: usize, m: usize, rng: &mut RngStream) -> Matrix {
    let mut q = vec![0.0; m * n];
    rng.fill_normal(&mut q);
    Matrix::new(m, n, q).expect("finite draws").gram_outer()
}

/// Monte Carlo estimate of [`inv_wishart_trace_moments`]; draw `i` uses
/// `substream(seed, i)`.
pub fn inv_wishart_trace_moments_mc(
    n: usize,
    m: usize,
    draws: usize,
    seed: u64,
) -> Result<InvWishartTraceMoments> {
    if m < 1 || n < m {
        return domain(format!("need n >= m >= 1, got n = {n}, m = {m}"));
    }
    let per_draw: Vec<[f64; 3]> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_wishart_identity(n, m, &mut substream(seed, i));
            let inv = spd_inverse(&w)?;
            let tr = inv.trace();
            // W⁻¹ is symmetric, so Tr(W⁻²) is its squared Frobenius norm.
            let tr_sq = dot(inv.as_slice(), inv.as_slice());
            Ok([tr, tr_sq, tr * tr])
        })
        .collect::<Result<_>>()?;
    let avg = |k: usize| {
        let col: Vec<f64> = per_draw.iter().map(|r| r[k]).collect();
        pairwise_sum(&col) / draws as f64
    };
    Ok(InvWishartTraceMoments {
        t1: avg(0),
        t2: avg(1),
        t11: avg(2),
    })
}

/// `E[‖Ax + a‖⁴]` for `x ∼ N(0, I)`:
/// `2·Tr(AAᵀAAᵀ) + 4aᵀAAᵀa + (Tr(AAᵀ) + aᵀa)²`.
pub fn gaussian_quartic_moment(a_mat: &Matrix, a_vec: &[f64]) -> Result<f64> {
    if a_mat.rows() != a_vec.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, vector has length {}",
            a_mat.rows(),
            a_vec.len()
        )));
    }
    let b = a_mat.gram_outer();
    let tr_b2 = dot(b.as_slice(), b.as_slice());
    let ba = b.matvec(a_vec)?;
    let a_sq = dot(a_vec, a_vec);
    Ok(2.0 * tr_b2 + 4.0 * dot(a_vec, &ba) + (b.trace() + a_sq).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundPoint {
    pub delta: f64,
    pub bound: f64,
}

/// `(δ, bound)` pairs for one variance mode, sorted by increasing δ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCurve {
    pub mode: VarianceMode,
    pub points: Vec<BoundPoint>,
}

pub fn bound_curve(
    n: usize,
    m: usize,
    sigma: f64,
    deltas: &[f64],
    mode: VarianceMode,
) -> Result<BoundCurve> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let points = sorted
        .into_iter()
        .map(|delta| {
            Ok(BoundPoint {
                delta,
                bound: mse_bound(n, m, sigma, delta, mode)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundCurve { mode, points })
}

/// Mean and variance of the loss aggregated over independent experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepStats {
    pub m: usize,
    pub experiments: usize,
    pub trials_per_experiment: usize,
    /// Average of the per-experiment sample means.
    pub mean: f64,
    /// Standard error of that average across experiments.
    pub mean_se: f64,
    /// Average of the per-experiment unbiased sample variances.
    pub variance: f64,
    pub variance_se: f64,
}

/// Runs `experiments` independent experiments at `(n, m)`, each drawing a
/// fresh random unit `θ*` and `trials_per_experiment` trials.
pub fn sweep_point(
    n: usize,
    m: usize,
    sigma: f64,
    experiments: usize,
    trials_per_experiment: usize,
    seed: u64,
) -> Result<SweepStats> {
    if experiments < 2 || trials_per_experiment < 2 {
        return domain("sweep needs at least 2 experiments of at least 2 trials");
    }
    let base = derive_seed(seed, m as u64);
    let mut means = Vec::with_capacity(experiments);
    let mut vars = Vec::with_capacity(experiments);
    for k in 0..experiments {
        let config = RandomDesignConfig::new(n, m, sigma, derive_seed(base, k as u64));
        let losses = Experiment::new(config)?.run(trials_per_experiment)?;
        let s = summarize(&losses)?;
        means.push(s.mean);
        vars.push(s.variance);
    }
    let mean_stats = summarize(&means)?;
    let var_stats = summarize(&vars)?;
    Ok(SweepStats {
        m,
        experiments,
        trials_per_experiment,
        mean: mean_stats.mean,
        mean_se: mean_stats.std_error_mean,
        variance: var_stats.mean,
        variance_se: var_stats.std_error_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn mean_examples() {
        let v = mean_mse(60, 10, 0.2).unwrap();
        assert!(rel(v, 0.04 * 59.0 / 49.0) < 1e-15);
        assert!((v - 0.048_163_27).abs() < 1e-8);
        assert!(rel(mean_mse(30, 0, 0.3).unwrap(), 0.09) < 1e-15);
        assert_eq!(mean_mse(12, 10, 1.0).unwrap(), 11.0);
        assert!(mean_mse(11, 10, 1.0).is_err());
        assert!(mean_mse(20, 3, -1.0).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let v = second_moment_mse(60, 10, 1.0).unwrap();
        assert!(rel(v, 10089.0 / 2303.0) < 1e-15);
        assert!((v - 4.380_807_6).abs() < 1e-7);
        let v = second_moment_mse(20, 5, 1.0).unwrap();
        assert!(rel(v, 969.0 / 168.0) < 1e-15);
        assert!(
            rel(
                second_moment_from_traces(20, 5, 1.0).unwrap(),
                969.0 / 168.0
            ) < 1e-14
        );
        assert!(rel(second_moment_mse(40, 0, 0.5).unwrap(), 3.0 * 0.0625) < 1e-15);
        assert!(second_moment_mse(13, 10, 1.0).is_err());
    }

    #[test]
    fn variance_examples() {
        let p = variance_mse(60, 10, 1.0, VarianceMode::PaperPolynomial).unwrap();
        assert!(rel(p, 489_661.0 / 112_847.0) < 1e-15);
        assert!((p - 4.339_158_3).abs() < 1e-7);
        let c = variance_mse(60, 10, 1.0, VarianceMode::Corrected).unwrap();
        assert!(rel(c, 330_754.0 / 112_847.0) < 1e-15);
        assert!((c - 2.930_995_0).abs() < 1e-7);
        assert!(
            rel(
                variance_mse(50, 0, 1.0, VarianceMode::Corrected).unwrap(),
                2.0
            ) < 1e-15
        );
        assert!(variance_mse(13, 10, 1.0, VarianceMode::Corrected).is_err());
    }

    #[test]
    fn variance_numerators_differ_by_exact_polynomial() {
        // paper − corrected = (n+m−1)(n−m−1)(n−m−3) as integer polynomials.
        for n in 5..300usize {
            for m in 0..n - 3 {
                let lhs = paper_variance_numerator(n, m) - corrected_variance_numerator(n, m);
                let (ni, mi) = (n as i128, m as i128);
                assert_eq!(
                    lhs,
                    (ni + mi - 1) * (ni - mi - 1) * (ni - mi - 3),
                    "n={n} m={m}"
                );
                // corrected·den⁻¹ + mean² = E[ℓ²] in exact rationals:
                // num_c·(n−m−1)(n−m−3)·… cross-multiplied.
                let den = variance_denominator(n, m);
                let second_num = 3 * (ni - 1) * (ni - 3) * (ni - mi - 1);
                let mean_sq_num = (ni - 1) * (ni - 1) * (ni - mi - 3);
                assert_eq!(corrected_variance_numerator(n, m) + mean_sq_num, second_num);
                assert!(den > 0);
            }
        }
    }

    #[test]
    fn identity_chain_holds_everywhere() {
        for n in 5..=203usize {
            for m in 1..n - 3 {
                let simple = second_moment_mse(n, m, 1.0).unwrap();
                let traces = second_moment_from_traces(n, m, 1.0).unwrap();
                assert!(rel(traces, simple) <= 1e-10, "n={n} m={m}");
                let mean = mean_mse(n, m, 1.0).unwrap();
                let c = variance_mse(n, m, 1.0, VarianceMode::Corrected).unwrap();
                assert!(rel(c + mean * mean, simple) <= 1e-12, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn bound_examples() {
        let p = mse_bound(60, 10, 0.2, 0.1, VarianceMode::PaperPolynomial).unwrap();
        let want = 0.04 * 59.0 / 49.0 + 0.04 * (489_661.0f64 / 112_847.0 / 0.1).sqrt();
        assert!(rel(p, want) < 1e-14);
        assert!((p - 0.3117).abs() < 1e-4);
        let c = mse_bound(60, 10, 0.2, 0.1, VarianceMode::Corrected).unwrap();
        assert!((c - 0.2647).abs() < 1e-4);
        let mean = mean_mse(60, 10, 0.2).unwrap();
        let near_one = mse_bound(60, 10, 0.2, 1.0 - 1e-12, VarianceMode::Corrected).unwrap();
        assert!(near_one > mean);
        assert!(mse_bound(60, 10, 0.2, 1.0, VarianceMode::Corrected).is_err());

        // Bracket = σ²m/(n−m−1) + σ_ℓ/√δ with the polynomial variance.
        let bracket = bracket_bound(60, 10, 0.2, 0.1).unwrap();
        assert!(rel(bracket, p - mean + 0.04 * 10.0 / 49.0) < 1e-13);
    }

    #[test]
    fn approx_bound_examples() {
        let v = approx_bound(6.0, 0.2, 0.1, ApproxRegime::LargeN).unwrap();
        assert!(rel(v, 0.04 / 5.0 * (1.0 + 1070f64.sqrt())) < 1e-14);
        assert!((v - 0.2697).abs() < 1e-4);
        let v = approx_bound(6.0, 0.2, 0.1, ApproxRegime::Asymptotic).unwrap();
        assert!(rel(v, 0.04 * 30f64.sqrt()) < 1e-14);
        assert!((v - 0.2191).abs() < 1e-4);
        assert!(approx_bound(6.0, 0.2, 3.0, ApproxRegime::Asymptotic).is_err());
        let v = approx_bound(6.0, 0.2, 0.75, ApproxRegime::Asymptotic).unwrap();
        assert!((v - 0.08).abs() < 1e-15);
        assert!(approx_bound(1.0, 0.2, 0.1, ApproxRegime::LargeN).is_err());
        assert!(rel(asymptotic_chebyshev_bound(0.2, 0.75).unwrap(), 0.12) < 1e-14);
    }

    #[test]
    fn trace_moment_examples() {
        let t = inv_wishart_trace_moments(30, 1).unwrap();
        assert!(rel(t.t1, 1.0 / 28.0) < 1e-15);
        let t = inv_wishart_trace_moments(60, 10).unwrap();
        assert!(rel(t.t1, 10.0 / 49.0) < 1e-15);
        assert!(rel(t.t2, 590.0 / (47.0 * 49.0 * 50.0)) < 1e-15);
        let t = inv_wishart_trace_moments(20, 5).unwrap();
        assert!(rel(t.t11, 335.0 / 2520.0) < 1e-15);
        assert!((t.t11 - 0.132_936_5).abs() < 1e-7);
        assert!(inv_wishart_trace_moments(8, 5).is_err());
    }

    #[test]
    fn quartic_examples() {
        let zero = Matrix::zeros(1, 1);
        assert_eq!(
            gaussian_quartic_moment(&zero, &[1.5]).unwrap(),
            1.5f64.powi(4)
        );
        assert_eq!(
            gaussian_quartic_moment(&Matrix::identity(1), &[0.0]).unwrap(),
            3.0
        );
        assert_eq!(
            gaussian_quartic_moment(&Matrix::identity(2), &[0.0, 0.0]).unwrap(),
            8.0
        );
        assert!(gaussian_quartic_moment(&Matrix::identity(2), &[0.0]).is_err());
    }

    #[test]
    fn quartic_matches_small_monte_carlo() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let shift = [0.0, 0.0];
        let mut rng = substream(1, 1);
        let n = 400_000;
        let mut acc = Vec::with_capacity(n);
        for _ in 0..n {
            let x = [rng.normal(), rng.normal()];
            let v: Vec<f64> = a
                .matvec(&x)
                .unwrap()
                .iter()
                .zip(&shift)
                .map(|(p, q)| p + q)
                .collect();
            acc.push(dot(&v, &v).powi(2));
        }
        let mc = pairwise_sum(&acc) / n as f64;
        assert!((mc - 3.0).abs() < 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(RandomDesignConfig::new(13, 10, 0.2, 1).validate().is_err());
        assert!(RandomDesignConfig::new(60, 0, 0.2, 1).validate().is_err());
        assert!(RandomDesignConfig::new(60, 10, f64::NAN, 1)
            .validate()
            .is_err());
        let bad_cov = RandomDesignConfig::new(60, 3, 0.2, 1).with_feature_cov(Matrix::identity(2));
        assert!(bad_cov.validate().is_err());
        let bad_theta = RandomDesignConfig::new(60, 3, 0.2, 1)
            .with_theta_star(ThetaStarSpec::Explicit(vec![1.0]));
        assert!(bad_theta.validate().is_err());
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let cfg = RandomDesignConfig::new(60, 2, 0.2, 1).with_feature_cov(indefinite);
        assert!(matches!(
            Experiment::new(cfg),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn noiseless_trials_have_zero_loss() {
        let exp = Experiment::new(RandomDesignConfig::new(20, 5, 0.0, 3)).unwrap();
        for i in 0..200 {
            assert_eq!(exp.trial(i).unwrap(), 0.0);
        }
    }

    #[test]
    fn random_unit_theta_is_unit_and_per_experiment() {
        let a = Experiment::new(RandomDesignConfig::new(30, 6, 0.2, 9)).unwrap();
        let b = Experiment::new(RandomDesignConfig::new(30, 6, 0.2, 9)).unwrap();
        let c = Experiment::new(RandomDesignConfig::new(30, 6, 0.2, 10)).unwrap();
        assert!((dot(a.theta_star(), a.theta_star()) - 1.0).abs() < 1e-14);
        assert_eq!(a.theta_star(), b.theta_star());
        assert_ne!(a.theta_star(), c.theta_star());
    }

    #[test]
    fn feature_covariance_scaling_leaves_losses_unchanged() {
        let cov = Matrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 1.5]]).unwrap();
        let base = RandomDesignConfig::new(25, 3, 0.2, 5).with_feature_cov(cov.clone());
        let scaled = base.clone().with_feature_cov(cov.scale(7.5));
        let a = Experiment::new(base).unwrap();
        let b = Experiment::new(scaled).unwrap();
        for i in 0..500 {
            let (x, y) = (a.trial(i).unwrap(), b.trial(i).unwrap());
            assert!((x - y).abs() <= 1e-10 * x.max(y), "trial {i}: {x} vs {y}");
        }
    }

    #[test]
    fn refit_path_agrees() {
        let exp = Experiment::new(RandomDesignConfig::new(40, 8, 0.2, 21).with_theta_star(
            ThetaStarSpec::Explicit(vec![0.5, -1.0, 2.0, 0.0, 1.0, 3.0, -2.0, 0.1]),
        ))
        .unwrap();
        for i in 0..300 {
            let fast = exp.trial(i).unwrap();
            let slow = exp.trial_by_refit(i).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-12 + 1e-8 * slow,
                "trial {i}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn bound_curve_is_decreasing() {
        let curve =
            bound_curve(60, 10, 0.2, &[0.5, 0.01, 0.1, 0.1], VarianceMode::Corrected).unwrap();
        assert_eq!(curve.points.len(), 3);
        for w in curve.points.windows(2) {
            assert!(w[0].delta < w[1].delta && w[0].bound > w[1].bound);
        }
    }
}
