//! `ols-risk` command-line harness.
//!
//! Every subcommand writes its artifacts into `--out-dir`. CSVs have one
//! header row, comma separators and floats in 17-significant-digit
//! scientific notation; JSON summaries contain no timestamps or thread
//! counts, so identical arguments give byte-identical files for any
//! `--threads`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::distributions::mix64;
use crate::error::Error;
use crate::fixed_design::{
    analytic_risk_distribution, naive_cdfs, naive_max_discrepancy, risk_moments, sample_all_risks,
    testing_bound, worked_example_design, FixedDesignModel, RiskKind, WORKED_EXAMPLE_THETA,
};
use crate::linalg::Matrix;
use crate::montecarlo::{substream, summarize, EmpiricalDistribution};
use crate::random_design::{
    approx_bound, asymptotic_chebyshev_bound, bracket_bound, inv_wishart_trace_moments, mean_mse,
    mse_bound, second_moment_from_traces, second_moment_mse, sweep_point, variance_mse,
    ApproxRegime, Experiment, RandomDesignConfig, ThetaStarSpec, VarianceMode,
};

const DESIGN_STREAM_TAG: u64 = 0x6465_7369_676e_0003;
const ANALYTIC_GRID_POINTS: usize = 512;
const ANALYTIC_GRID_QUANTILE: f64 = 0.9999;
const TAIL_GRID_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Numeric(#[from] Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Numeric(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "ols-risk",
    version,
    about = "Risk distributions and Chebyshev bounds for least-squares regression, checked by Monte Carlo"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Constant design: sampled vs exact risk laws and the testing-risk bound.
    FixedDesign(FixedDesignArgs),
    /// Gaussian random design: loss moments and tail bounds at one (n, m).
    RandomDesign(RandomDesignArgs),
    /// Mean and variance of the loss across a range of m.
    Sweep(SweepArgs),
    /// Tail bounds of every flavour against empirical quantiles.
    Tail(TailArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignSource {
    /// The 4x2 worked example.
    Paper,
    /// Standard normal entries drawn from the seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Corrected,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<VarianceMode> {
        match self {
            ModeArg::Paper => vec![VarianceMode::PaperPolynomial],
            ModeArg::Corrected => vec![VarianceMode::Corrected],
            ModeArg::Both => VarianceMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FixedDesignArgs {
    /// Rows of the design (required with --design random).
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns of the design (required with --design random).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = DesignSource::Paper)]
    pub design: DesignSource,
    /// CSV design matrix, one row per line; overrides --design.
    #[arg(long)]
    pub design_file: Option<PathBuf>,
    /// CSV with the m entries of θ*.
    #[arg(long)]
    pub theta_file: Option<PathBuf>,
    #[arg(long, default_value = "0.01,0.05,0.1,0.3,0.5")]
    pub delta_grid: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RandomDesignArgs {
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
    #[arg(long, default_value = "0.02,0.05,0.1,0.2,0.5")]
    pub delta_grid: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub variance_mode: ModeArg,
    /// CSV with the m entries of θ* (default: random unit vector).
    #[arg(long)]
    pub theta_file: Option<PathBuf>,
    /// CSV m x m feature covariance (default: identity).
    #[arg(long)]
    pub feature_cov_file: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    /// `start..end[:step]` (inclusive) or a comma list.
    #[arg(long, default_value = "2..50:4")]
    pub m_list: String,
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100)]
    pub experiments: usize,
    /// Trials per experiment (default: 100·n).
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
    /// Comma list (default: 20 log-spaced points in [0.01, 0.5]).
    #[arg(long)]
    pub delta_grid: Option<String>,
    /// Modes whose coverage is checked and reported.
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub variance_mode: ModeArg,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::FixedDesign(a) => &a.common,
        Command::RandomDesign(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Tail(a) => &a.common,
    };
    let threads = match common.threads {
        Some(0) => return usage("--threads must be at least 1"),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::FixedDesign(a) => cmd_fixed_design(a),
        Command::RandomDesign(a) => cmd_random_design(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Tail(a) => cmd_tail(a),
    })
}

// ---------------------------------------------------------------------------
// Subcommands

pub fn cmd_fixed_design(args: &FixedDesignArgs) -> CliResult<()> {
    if !(args.sigma > 0.0 && args.sigma.is_finite()) {
        return usage(format!("sigma must be > 0, got {}", args.sigma));
    }
    if args.samples < 2 {
        return usage("--samples must be at least 2");
    }
    let deltas = parse_delta_grid(&args.delta_grid)?;
    let seed = args.common.seed;

    let (design, source) = match (&args.design_file, args.design) {
        (Some(path), _) => (read_matrix(path)?, "file"),
        (None, DesignSource::Paper) => {
            if args.n.is_some_and(|n| n != 4) || args.m.is_some_and(|m| m != 2) {
                return usage(
                    "the worked-example design is 4x2; use --design random or --design-file",
                );
            }
            (worked_example_design(), "paper")
        }
        (None, DesignSource::Random) => {
            let (Some(n), Some(m)) = (args.n, args.m) else {
                return usage("--design random needs --n and --m");
            };
            if m < 1 || n <= m {
                return usage(format!("need n > m >= 1, got n = {n}, m = {m}"));
            }
            let mut rng = substream(mix64(seed ^ DESIGN_STREAM_TAG), 0);
            let mut data = vec![0.0; n * m];
            rng.fill_normal(&mut data);
            (Matrix::new(n, m, data)?, "random")
        }
    };
    let (n, m) = (design.rows(), design.cols());
    if args.n.is_some_and(|v| v != n) || args.m.is_some_and(|v| v != m) {
        return usage(format!("--n/--m disagree with the {n}x{m} design"));
    }
    if n <= m {
        return usage(format!("need n > m, design is {n}x{m}"));
    }
    let theta_star = match &args.theta_file {
        Some(path) => read_vector(path)?,
        None if source == "paper" => WORKED_EXAMPLE_THETA.to_vec(),
        None => {
            let mut rng = substream(mix64(seed ^ DESIGN_STREAM_TAG), 1);
            let mut t = vec![0.0; m];
            rng.fill_normal(&mut t);
            t
        }
    };
    if theta_star.len() != m {
        return usage(format!(
            "theta has {} entries, design has {m} columns",
            theta_star.len()
        ));
    }
    let model = FixedDesignModel::new(design, theta_star, args.sigma)?;
    let draws = sample_all_risks(&model, args.samples, seed)?;
    let out = prepare_out_dir(&args.common.out_dir)?;

    let mut risks = String::from("sample_index,g_training,g_true,g_testing\n");
    for i in 0..draws.len() {
        let _ = writeln!(
            risks,
            "{i},{},{},{}",
            f(draws.training[i]),
            f(draws.true_risk[i]),
            f(draws.testing[i])
        );
    }
    write_file(&out.join("risks.csv"), &risks)?;

    let laws: Vec<_> = RiskKind::ALL
        .iter()
        .map(|&k| analytic_risk_distribution(k, n, m)?.evaluator())
        .collect::<Result<_, _>>()?;
    let upper = laws[2].quantile(ANALYTIC_GRID_QUANTILE)?;
    let mut analytic = String::from(
        "x,pdf_training,pdf_true,pdf_testing,cdf_testing,cdf_naive_npm,cdf_naive_np2m\n",
    );
    for i in 0..ANALYTIC_GRID_POINTS {
        let x = upper * i as f64 / (ANALYTIC_GRID_POINTS - 1) as f64;
        let (naive_a, naive_b) = naive_cdfs(n, m, x)?;
        let _ = writeln!(
            analytic,
            "{},{},{},{},{},{},{}",
            f(x),
            f(laws[0].pdf(x)?),
            f(laws[1].pdf(x)?),
            f(laws[2].pdf(x)?),
            f(laws[2].cdf(x)),
            f(naive_a),
            f(naive_b)
        );
    }
    write_file(&out.join("analytic.csv"), &analytic)?;

    let testing = EmpiricalDistribution::new(draws.testing.clone())?;
    let mut bounds = String::from("delta,bound_g,empirical_violation_rate\n");
    let mut bound_json = Vec::new();
    for &delta in &deltas {
        let b = testing_bound(n, m, delta)?;
        let rate = testing.exceedance(b);
        let _ = writeln!(bounds, "{},{},{}", f(delta), f(b), f(rate));
        bound_json.push(json!({
            "delta": delta,
            "bound_g": b,
            "bound_raw": b * args.sigma * args.sigma,
            "empirical_violation_rate": rate,
            "holds": rate <= delta,
        }));
    }
    write_file(&out.join("bounds.csv"), &bounds)?;

    let mut risk_json = serde_json::Map::new();
    for (idx, &kind) in RiskKind::ALL.iter().enumerate() {
        let values = draws.get(kind);
        let mix = analytic_risk_distribution(kind, n, m)?;
        let (mean_raw, var_raw) = risk_moments(kind, n, m, args.sigma)?;
        let emp = summarize(values)?;
        let dist = EmpiricalDistribution::new(values.to_vec())?;
        let ks = dist.ks_statistic(|x| laws[idx].cdf(x));
        risk_json.insert(
            kind.name().to_string(),
            json!({
                "analytic": {
                    "components": mix.components(),
                    "mean_g": mix.mean(),
                    "variance_g": mix.variance(),
                    "mean_raw": mean_raw,
                    "variance_raw": var_raw,
                },
                "empirical": emp,
                "empirical_mean_raw": emp.mean * args.sigma * args.sigma,
                "ks_distance": ks,
            }),
        );
    }
    let (gap_npm, gap_np2m) = naive_max_discrepancy(n, m, 2000)?;
    let summary = json!({
        "command": "fixed-design",
        "config": {
            "n": n,
            "m": m,
            "sigma": args.sigma,
            "samples": args.samples,
            "seed": seed,
            "design": source,
            "design_matrix": (0..n).map(|i| model.design().row(i).to_vec()).collect::<Vec<_>>(),
            "theta_star": model.theta_star(),
        },
        "units": "g = squared norm / sigma^2; raw = g * sigma^2; log-likelihood loss = g / 2",
        "risks": Value::Object(risk_json),
        "naive_max_cdf_gap": { "chi2_n_plus_m": gap_npm, "chi2_n_plus_2m": gap_np2m },
        "bounds": bound_json,
        "paper_discrepancies": [
            "training sample noise: the stated model scales z by sigma^2 in one place and by sigma elsewhere; sigma z is implemented",
            "testing-risk bound n+m+sqrt((6m+2n)/delta) is stated for the raw squared norm; it holds for the sigma^2-normalized g, reported here (raw = g * sigma^2)",
        ],
    });
    write_json(&out.join("summary.json"), &summary)
}

pub fn cmd_random_design(args: &RandomDesignArgs) -> CliResult<()> {
    check_random_args(args.n, args.m, args.sigma, args.trials)?;
    let deltas = parse_delta_grid(&args.delta_grid)?;
    let mut config = RandomDesignConfig::new(args.n, args.m, args.sigma, args.common.seed);
    if let Some(path) = &args.theta_file {
        config = config.with_theta_star(ThetaStarSpec::Explicit(read_vector(path)?));
    }
    if let Some(path) = &args.feature_cov_file {
        config = config.with_feature_cov(read_matrix(path)?);
    }
    let experiment = Experiment::new(config).map_err(usage_if_domain)?;
    let losses = experiment.run(args.trials)?;
    let out = prepare_out_dir(&args.common.out_dir)?;

    let mut samples = String::from("trial_index,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(samples, "{i},{}", f(*l));
    }
    write_file(&out.join("samples.csv"), &samples)?;

    let (n, m, sigma) = (args.n, args.m, args.sigma);
    let mean = mean_mse(n, m, sigma)?;
    let second = second_moment_mse(n, m, sigma)?;
    let var_paper = variance_mse(n, m, sigma, VarianceMode::PaperPolynomial)?;
    let var_corr = variance_mse(n, m, sigma, VarianceMode::Corrected)?;
    let emp = summarize(&losses)?;
    let squares: Vec<f64> = losses.iter().map(|l| l * l).collect();
    let sq = summarize(&squares)?;
    let dist = EmpiricalDistribution::new(losses)?;

    let mut bounds = String::from(
        "delta,bound_paper,bound_corrected,empirical_quantile_1_minus_delta,violation_rate_paper,violation_rate_corrected\n",
    );
    let mut coverage = serde_json::Map::new();
    let mut brackets = Vec::new();
    let selected = args.variance_mode.modes();
    let mut per_mode_ok: Vec<bool> = vec![true; selected.len()];
    for &delta in &deltas {
        let bp = mse_bound(n, m, sigma, delta, VarianceMode::PaperPolynomial)?;
        let bc = mse_bound(n, m, sigma, delta, VarianceMode::Corrected)?;
        let (rp, rc) = (dist.exceedance(bp), dist.exceedance(bc));
        let _ = writeln!(
            bounds,
            "{},{},{},{},{},{}",
            f(delta),
            f(bp),
            f(bc),
            f(dist.quantile(1.0 - delta)?),
            f(rp),
            f(rc)
        );
        for (ok, mode) in per_mode_ok.iter_mut().zip(&selected) {
            let rate = if *mode == VarianceMode::PaperPolynomial {
                rp
            } else {
                rc
            };
            *ok &= rate <= delta;
        }
        brackets.push(json!({
            "delta": delta,
            "chebyshev_paper_variance": bp,
            "chebyshev_corrected_variance": bc,
            "bracket_bound": bracket_bound(n, m, sigma, delta)?,
            "asymptotic": approx_bound(n as f64 / m as f64, sigma, delta, ApproxRegime::Asymptotic)?,
            "asymptotic_with_mean": asymptotic_chebyshev_bound(sigma, delta)?,
        }));
    }
    write_file(&out.join("bounds.csv"), &bounds)?;
    for (ok, mode) in per_mode_ok.iter().zip(&selected) {
        coverage.insert(mode.name().to_string(), json!(ok));
    }

    let z_corr = (emp.variance - var_corr) / emp.std_error_variance;
    let z_paper = (emp.variance - var_paper) / emp.std_error_variance;
    let summary = json!({
        "command": "random-design",
        "config": {
            "n": n,
            "m": m,
            "sigma": sigma,
            "trials": args.trials,
            "seed": args.common.seed,
            "theta_star": experiment.theta_star(),
            "feature_cov_identity": args.feature_cov_file.is_none(),
            "variance_mode": selected.iter().map(|m| m.name()).collect::<Vec<_>>(),
        },
        "analytic": {
            "mean": mean,
            "second_moment": second,
            "second_moment_from_traces": second_moment_from_traces(n, m, sigma)?,
            "variance_paper": var_paper,
            "variance_corrected": var_corr,
            "inverse_wishart_trace_moments": inv_wishart_trace_moments(n, m)?,
        },
        "empirical": {
            "summary": emp,
            "second_moment": sq.mean,
            "second_moment_se": sq.std_error_mean,
        },
        "flags": {
            "mean_within_3se": (emp.mean - mean).abs() <= 3.0 * emp.std_error_mean,
            "second_moment_within_3se": (sq.mean - second).abs() <= 3.0 * sq.std_error_mean,
            "variance_z_corrected": z_corr,
            "variance_z_paper": z_paper,
            "variance_closer_to": if z_corr.abs() <= z_paper.abs() { "corrected" } else { "paper" },
            "bound_coverage": Value::Object(coverage),
        },
        "bound_forms": brackets,
        "paper_discrepancies": [
            "cubic variance polynomial equals E[l^2] - (sigma^2 m/(n-m-1))^2; E[l^2] - E[l]^2 is smaller by sigma^4 (n+m-1)/(n-m-1)",
            "bracket bound uses sigma^2 m/(n-m-1) as location, omitting the sigma^2 part of the mean; bound_paper/bound_corrected use the full mean",
            "asymptotic bound stated as sigma^2 sqrt(3/delta); the limiting mean sigma^2 gives sigma^2 (1 + sqrt(3/delta))",
            "stated condition n > m - 3 is too weak; the moments require n > m + 1 (mean) and n > m + 3 (variance)",
        ],
    });
    write_json(&out.join("summary.json"), &summary)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    if !(args.sigma > 0.0 && args.sigma.is_finite()) {
        return usage(format!("sigma must be > 0, got {}", args.sigma));
    }
    let m_list = parse_m_list(&args.m_list)?;
    if let Some(&bad) = m_list.iter().find(|&&m| m < 1 || args.n <= m + 3) {
        return usage(format!(
            "every m must satisfy 1 <= m < n - 3, got m = {bad} with n = {}",
            args.n
        ));
    }
    if args.experiments < 2 {
        return usage("--experiments must be at least 2");
    }
    let trials = args.trials.unwrap_or(100 * args.n);
    if trials < 2 {
        return usage("--trials must be at least 2");
    }
    let out = prepare_out_dir(&args.common.out_dir)?;
    let mut csv = String::from(
        "m,mean_analytic,mean_empirical,mean_se,var_paper,var_corrected,var_empirical,var_se\n",
    );
    for &m in &m_list {
        let stats = sweep_point(
            args.n,
            m,
            args.sigma,
            args.experiments,
            trials,
            args.common.seed,
        )?;
        let _ = writeln!(
            csv,
            "{m},{},{},{},{},{},{},{}",
            f(mean_mse(args.n, m, args.sigma)?),
            f(stats.mean),
            f(stats.mean_se),
            f(variance_mse(
                args.n,
                m,
                args.sigma,
                VarianceMode::PaperPolynomial
            )?),
            f(variance_mse(
                args.n,
                m,
                args.sigma,
                VarianceMode::Corrected
            )?),
            f(stats.variance),
            f(stats.variance_se)
        );
    }
    write_file(&out.join("sweep.csv"), &csv)
}

pub fn cmd_tail(args: &TailArgs) -> CliResult<()> {
    check_random_args(args.n, args.m, args.sigma, args.trials)?;
    let deltas = match &args.delta_grid {
        Some(s) => parse_delta_grid(s)?,
        None => log_spaced(0.01, 0.5, TAIL_GRID_POINTS),
    };
    let (n, m, sigma) = (args.n, args.m, args.sigma);
    let experiment = Experiment::new(RandomDesignConfig::new(n, m, sigma, args.common.seed))
        .map_err(usage_if_domain)?;
    let dist = EmpiricalDistribution::new(experiment.run(args.trials)?)?;
    let alpha = n as f64 / m as f64;
    let selected = args.variance_mode.modes();
    let mut violations = Vec::new();
    let mut csv = String::from(
        "delta,bound_paper,bound_corrected,bound_largen,bound_asymptotic,empirical_quantile\n",
    );
    for &delta in &deltas {
        let bp = mse_bound(n, m, sigma, delta, VarianceMode::PaperPolynomial)?;
        let bc = mse_bound(n, m, sigma, delta, VarianceMode::Corrected)?;
        let q = dist.quantile(1.0 - delta)?;
        for mode in &selected {
            let b = if *mode == VarianceMode::PaperPolynomial {
                bp
            } else {
                bc
            };
            if q > b {
                violations.push(format!("{} at delta = {delta}", mode.name()));
            }
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            f(delta),
            f(bp),
            f(bc),
            f(approx_bound(alpha, sigma, delta, ApproxRegime::LargeN)?),
            f(approx_bound(alpha, sigma, delta, ApproxRegime::Asymptotic)?),
            f(q)
        );
    }
    let out = prepare_out_dir(&args.common.out_dir)?;
    write_file(&out.join("tail.csv"), &csv)?;
    if violations.is_empty() {
        eprintln!("tail: empirical quantiles lie below every checked bound");
    } else {
        eprintln!(
            "tail: empirical quantile above bound: {}",
            violations.join(", ")
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Helpers

fn check_random_args(n: usize, m: usize, sigma: f64, trials: usize) -> CliResult<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return usage(format!("sigma must be > 0, got {sigma}"));
    }
    if m < 1 || n <= m + 3 {
        return usage(format!("need n > m + 3 and m >= 1, got n = {n}, m = {m}"));
    }
    if trials < 2 {
        return usage("--trials must be at least 2");
    }
    Ok(())
}

fn usage_if_domain(e: Error) -> CliError {
    match e {
        Error::Domain(msg) | Error::DimensionMismatch(msg) => CliError::Usage(msg),
        other => CliError::Numeric(other),
    }
}

/// Float in round-trip-exact 17-significant-digit scientific notation.
pub fn f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_delta_grid(s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v: f64 = tok
            .parse()
            .map_err(|_| CliError::Usage(format!("bad delta '{tok}'")))?;
        if !(v > 0.0 && v < 1.0) {
            return usage(format!("delta must lie in (0, 1), got {v}"));
        }
        out.push(v);
    }
    if out.is_empty() {
        return usage("empty delta grid");
    }
    Ok(out)
}

/// `start..end[:step]` with inclusive end, or a comma list.
pub fn parse_m_list(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad m list '{s}' (use start..end[:step] or a,b,c)"));
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let out = if let Some((start, rest)) = s.split_once("..") {
        let (end, step) = match rest.split_once(':') {
            Some((e, st)) => (parse(e)?, parse(st)?),
            None => (parse(rest)?, 1),
        };
        let start = parse(start)?;
        if step == 0 || end < start {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        s.split(',').map(parse).collect::<CliResult<Vec<_>>>()?
    };
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return usage(format!("{}: no data rows", path.display()));
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> CliResult<Matrix> {
    Matrix::from_rows(&read_rows(path)?).map_err(usage_if_domain)
}

/// A single row or a single column of numbers.
fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows.len() == 1 {
        Ok(rows.into_iter().next().unwrap_or_default())
    } else if rows.iter().all(|r| r.len() == 1) {
        Ok(rows.into_iter().map(|r| r[0]).collect())
    } else {
        usage(format!(
            "{}: expected a single row or column",
            path.display()
        ))
    }
}

fn prepare_out_dir(dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(dir.to_path_buf())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            let s = f(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(f(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn m_list_forms() {
        assert_eq!(parse_m_list("2..50:4").unwrap().len(), 13);
        assert_eq!(parse_m_list("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_m_list("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert!(parse_m_list("3..1").is_err());
        assert!(parse_m_list("1..5:0").is_err());
        assert!(parse_m_list("a").is_err());
    }

    #[test]
    fn delta_grids() {
        assert_eq!(parse_delta_grid("0.1, 0.5").unwrap(), vec![0.1, 0.5]);
        assert!(parse_delta_grid("0.1,1.0").is_err());
        assert!(parse_delta_grid("").is_err());
        let g = log_spaced(0.01, 0.5, 20);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[19] - 0.5).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
