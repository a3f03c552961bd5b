//! Command-line front end.
//!
//! Experiment configs are flat TOML documents whose keys mirror
//! [`ExperimentConfig`]:
//!
//! ```toml
//! design = "usr_completion"   # usr_completion | column_mask | gaussian_full | rademacher_full
//! m1 = 75
//! m2 = 75
//! rank_r = 2
//! entry_bound_a = 1.0
//! noise = "gaussian"          # gaussian | bounded_response | none
//! sigma = 0.1
//! n_grid = [3000]
//! trials = 200
//! seed = 42
//! lambda_rule = "oracle_delta" # oracle_delta | corollary1 | regression
//! margin = 1.01
//! schatten_qs = [2.0, 4.0, inf]
//! ```
//!
//! `complete` writes `trials.csv` with columns `n, trial_index, rank_a0,
//! rank_hat, fro_err_normalized, l2_err, spec_err, schatten_err_q<q>...,
//! delta, lambda_used, tuning_condition_met, thm1_i_ok, thm1_ii_ok,
//! thm1_iii_ok, thm3_i_ok, thm3_ii_ok, thm3_iii_ok, thm3_iv_ok,
//! hypothesis_flags` and `report.json` with the per-`n` aggregates.
//! `regress` writes `trials.csv` with columns `trial_index, rank_a0,
//! rank_hat, fit_err, coef_err, delta, lambda_used, tuning_condition_met,
//! rank_ok, fit_ok, fit_sq_ok, hypothesis_flags` and `report.json`.
//! Reals are printed with 17 significant digits; flags are `;`-separated.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 guarantee violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bounds::{
    c_star, default_completion_c, gamma_bound_holds, lambda_completion, lambda_regression, lemma2_s_bound, n_star, rho,
    thm3_bounds, NoiseSetting,
};
use crate::designs::{DesignKind, DesignSpec, StreamRng};
use crate::error::{Error, Result};
use crate::estimators::{estimate_completion, estimate_rsc, rsc_objective};
use crate::harness::{
    q_label, run_experiment, run_regression_experiment, ExperimentConfig, ExperimentReport, LambdaRule, NoiseModel,
    RegressionReport, Sampling, VERDICT_NAMES,
};
use crate::linalg::{column_projector, hard_threshold, pseudo_inverse, restricted_rank_approx, svd, Matrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

pub const SEED_ENV: &str = "RANKTHRESH_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "rankthresh",
    version,
    about = "Rank-penalized trace regression by singular-value hard thresholding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo matrix completion / isometric-design experiment.
    Complete(CompleteArgs),
    /// Monte Carlo matrix regression experiment with a fixed design.
    Regress(RegressArgs),
    /// Evaluate tuning constants and bound formulas.
    Bounds(BoundsArgs),
    /// Run the built-in verification suites.
    Selftest,
}

#[derive(Debug, clap::Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Sample sizes, replacing `n_grid`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Plain text: "rows cols" then row-major reals.
    #[arg(long)]
    pub design_matrix: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    A,
    B,
}

#[derive(Debug, clap::Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "a")]
    pub setting: SettingArg,
    #[arg(long, default_value_t = 100)]
    pub m1: usize,
    #[arg(long, default_value_t = 100)]
    pub m2: usize,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    /// Defaults to `log(m1 + m2)`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Response bound of setting A.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Orlicz scale of setting B.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Entry bound of setting B.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_tilde: f64,
    #[arg(long, default_value_t = 1.0)]
    pub varrho: f64,
    /// Rank used in the spectral bounds.
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    /// Noise level used in the regression penalty.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

/// Raw contents of a config file. Missing keys take defaults in
/// [`FileConfig::into_experiment`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub design: Option<DesignKind>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub rank_r: Option<usize>,
    pub entry_bound_a: Option<f64>,
    pub noise: Option<String>,
    pub sigma: Option<f64>,
    pub eta: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub varrho: Option<f64>,
    pub lambda_rule: Option<String>,
    pub margin: Option<f64>,
    pub c: Option<f64>,
    pub schatten_qs: Option<Vec<f64>>,
    pub sampling: Option<Sampling>,
    pub c_tilde: Option<f64>,
}

fn required<T: Copy>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(field, "missing"))
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn noise_model(&self) -> Result<NoiseModel> {
        match self.noise.as_deref().unwrap_or("none") {
            "gaussian" => Ok(NoiseModel::Gaussian {
                sigma: required(self.sigma, "sigma")?,
            }),
            "bounded_response" => Ok(NoiseModel::BoundedResponse {
                eta: required(self.eta, "eta")?,
            }),
            "none" => Ok(NoiseModel::None),
            other => Err(Error::config("noise", format!("unknown noise model `{other}`"))),
        }
    }

    fn lambda_rule(&self) -> Result<LambdaRule> {
        match self.lambda_rule.as_deref().unwrap_or("oracle_delta") {
            "oracle_delta" => Ok(LambdaRule::OracleDelta {
                margin: self.margin.unwrap_or(1.01),
            }),
            "corollary1" => Ok(LambdaRule::Corollary1 { c: self.c }),
            "regression" => Ok(LambdaRule::Regression {
                sigma: self.sigma.unwrap_or(0.0),
            }),
            other => Err(Error::config("lambda_rule", format!("unknown rule `{other}`"))),
        }
    }

    fn common(
        &self,
        design: DesignSpec,
        noise: NoiseModel,
        lambda_rule: LambdaRule,
        n_grid: Vec<usize>,
    ) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            design,
            rank_r: required(self.rank_r, "rank_r")?,
            entry_bound_a: self.entry_bound_a.unwrap_or(1.0),
            noise,
            n_grid,
            trials: self.trials.unwrap_or(100),
            seed: self.seed.unwrap_or(0),
            varrho: self.varrho.unwrap_or(1.0),
            lambda_rule,
            schatten_qs: self.schatten_qs.clone().unwrap_or_else(|| vec![2.0, f64::INFINITY]),
            sampling: self.sampling.unwrap_or_default(),
            c_tilde: self.c_tilde.unwrap_or(1.0),
        };
        config.validate()?;
        Ok(config)
    }

    /// Completion or isometric-design experiment.
    pub fn into_experiment(self) -> Result<ExperimentConfig> {
        let kind = self.design.unwrap_or(DesignKind::UsrCompletion);
        if kind == DesignKind::RegressionFixed {
            return Err(Error::config(
                "design",
                "use the regress subcommand for regression designs",
            ));
        }
        let design = DesignSpec::new(kind, required(self.m1, "m1")?, required(self.m2, "m2")?, None)
            .map_err(|e| Error::config("m1/m2", e.to_string()))?;
        let n_grid = self.n_grid.clone().ok_or_else(|| Error::config("n_grid", "missing"))?;
        self.common(design, self.noise_model()?, self.lambda_rule()?, n_grid)
    }

    /// Regression experiment around the fixed design `v`; `m1` is taken from
    /// its column count and the noise is Gaussian with the configured `sigma`.
    pub fn into_regression(self, v: Matrix) -> Result<ExperimentConfig> {
        if let Some(m1) = self.m1 {
            if m1 != v.cols() {
                return Err(Error::config(
                    "m1",
                    format!("design matrix has {} columns, config says {m1}", v.cols()),
                ));
            }
        }
        if let Some(rule) = self.lambda_rule.as_deref() {
            if rule != "regression" {
                return Err(Error::config(
                    "lambda_rule",
                    "regression experiments use the regression rule",
                ));
            }
        }
        if let Some(noise) = self.noise.as_deref() {
            if noise != "gaussian" && noise != "none" {
                return Err(Error::config(
                    "noise",
                    "regression experiments use Gaussian or no noise",
                ));
            }
        }
        let sigma = self.sigma.unwrap_or(0.0);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config("sigma", format!("must be non-negative, got {sigma}")));
        }
        let noise = if sigma > 0.0 {
            NoiseModel::Gaussian { sigma }
        } else {
            NoiseModel::None
        };
        let design =
            DesignSpec::regression(v, required(self.m2, "m2")?).map_err(|e| Error::config("m2", e.to_string()))?;
        self.common(design, noise, LambdaRule::Regression { sigma }, Vec::new())
    }
}

/// Parses a design-matrix file: first line `rows cols`, then row-major reals.
pub fn parse_design_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("design matrix file is empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("design matrix header `{header}`: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::InvalidInput(format!(
            "design matrix header must be `rows cols`, got `{header}`"
        )));
    };
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("design matrix entry `{t}`: {e}")))
        })
        .collect::<Result<_>>()?;
    Matrix::from_row_major(rows, cols, &values)
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|e| Error::config(SEED_ENV, format!("`{v}` is not a 64-bit seed: {e}"))),
        Err(_) => Ok(file),
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_freq(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub fn trials_csv(report: &ExperimentReport) -> String {
    let mut header = vec![
        "n",
        "trial_index",
        "rank_a0",
        "rank_hat",
        "fro_err_normalized",
        "l2_err",
        "spec_err",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend(report.header.schatten_qs.iter().map(|q| format!("schatten_err_q{q}")));
    header.extend(["delta", "lambda_used", "tuning_condition_met"].map(String::from));
    header.extend(VERDICT_NAMES.map(String::from));
    header.push("hypothesis_flags".into());
    let mut out = header.join(",");
    out.push('\n');
    for t in &report.trials {
        let mut fields = vec![
            t.n.to_string(),
            t.trial_index.to_string(),
            t.rank_a0.to_string(),
            t.rank_hat.to_string(),
            real(t.fro_err_normalized),
            real(t.l2_err),
            real(t.spec_err),
        ];
        fields.extend(t.schatten_errs.iter().copied().map(real));
        fields.extend([real(t.delta), real(t.lambda_used), t.tuning_condition_met.to_string()]);
        fields.extend(t.verdicts().map(|v| v.to_string()));
        fields.push(t.hypothesis_flags.join(";"));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn regression_csv(report: &RegressionReport) -> String {
    let mut out = String::from(
        "trial_index,rank_a0,rank_hat,fit_err,coef_err,delta,lambda_used,tuning_condition_met,rank_ok,fit_ok,fit_sq_ok,hypothesis_flags\n",
    );
    for t in &report.trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial_index,
            t.rank_a0,
            t.rank_hat,
            real(t.fit_err),
            real(t.coef_err),
            real(t.delta),
            real(t.lambda_used),
            t.tuning_condition_met,
            t.rank_ok,
            t.fit_ok,
            t.fit_sq_ok,
            t.hypothesis_flags.join(";")
        );
    }
    out
}

pub fn completion_summary(report: &ExperimentReport) -> String {
    let h = &report.header;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "design={} m1={} m2={} r={} a={} varrho={} seed={} trials={}",
        h.design, h.m1, h.m2, h.rank_r, h.entry_bound_a, h.varrho, h.seed, h.trials
    );
    let _ = writeln!(
        out,
        "{:>8} {:>12} {:>12} {:>12} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>5}",
        "n",
        "mean_fro",
        "median_fro",
        "cor1_rhs",
        "rank",
        "tuned",
        "t1_i",
        "t1_ii",
        "t1_iii",
        "t3_i",
        "t3_ii",
        "t3_iii",
        "t3_iv",
        "viol"
    );
    for row in &report.rows {
        let f = row.tuned.as_array();
        let _ = writeln!(
            out,
            "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3} {:>7.3} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>5}",
            row.n,
            row.mean_fro_err,
            row.median_fro_err,
            row.corollary1_rhs,
            row.mean_rank_hat,
            row.tuning_met_freq,
            opt_freq(f[0]),
            opt_freq(f[1]),
            opt_freq(f[2]),
            opt_freq(f[3]),
            opt_freq(f[4]),
            opt_freq(f[5]),
            opt_freq(f[6]),
            row.guarantee_violations
        );
    }
    match report.frobenius_slope {
        Some(s) => {
            let _ = writeln!(out, "log-log slope of mean_fro vs n: {s:.4}");
        }
        None => {
            let _ = writeln!(out, "log-log slope of mean_fro vs n: n/a");
        }
    }
    let _ = writeln!(out, "verdict frequencies are over trials meeting the tuning condition");
    out
}

pub fn regression_summary(report: &RegressionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "l={} m1={} m2={} rank(V)={} r={} sigma={} lambda={:.6e} trials={}",
        report.l,
        report.header.m1,
        report.header.m2,
        report.design_rank,
        report.header.rank_r,
        report.sigma,
        report.lambda,
        report.header.trials
    );
    let _ = writeln!(out, "mean fit err ||V(A-A0)||_2   {:.6e}", report.mean_fit_err);
    let _ = writeln!(out, "mean coef err ||A-A0||_2     {:.6e}", report.mean_coef_err);
    let _ = writeln!(out, "mean rank_hat                {:.3}", report.mean_rank_hat);
    let _ = writeln!(
        out,
        "mean ||P_V E||_inf           {:.6e} (SE {:.2e}), bound sigma(sqrt(m2)+sqrt(r)) = {:.6e} [{}]",
        report.mean_delta,
        report.se_delta,
        report.delta_expectation_bound,
        if report.delta_bound_ok { "ok" } else { "exceeded" }
    );
    let _ = writeln!(
        out,
        "tuned {:.3}; rank_ok {} fit_ok {} fit_sq_ok {}; violations {}",
        report.tuning_met_freq,
        opt_freq(report.rank_ok_freq),
        opt_freq(report.fit_ok_freq),
        opt_freq(report.fit_sq_ok_freq),
        report.guarantee_violations
    );
    out
}

fn write_outputs(dir: &Path, csv: &str, json: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), csv)?;
    fs::write(dir.join("report.json"), json)?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("serializing report: {e}")))
}

pub fn cmd_complete(args: &CompleteArgs) -> Result<i32> {
    let mut file = FileConfig::load(&args.config)?;
    if !args.n.is_empty() {
        file.n_grid = Some(args.n.clone());
    }
    if args.trials.is_some() {
        file.trials = args.trials;
    }
    file.seed = resolve_seed(args.seed, file.seed)?;
    let config = file.into_experiment()?;
    let report = run_experiment(&config)?;
    write_outputs(&args.out, &trials_csv(&report), &to_json(&report)?)?;
    print!("{}", completion_summary(&report));
    Ok(if report.guarantee_violations() > 0 {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

pub fn cmd_regress(args: &RegressArgs) -> Result<i32> {
    let mut file = FileConfig::load(&args.config)?;
    let text = fs::read_to_string(&args.design_matrix).map_err(|e| {
        Error::InvalidInput(format!(
            "cannot read design matrix {}: {e}",
            args.design_matrix.display()
        ))
    })?;
    let v = parse_design_matrix(&text)?;
    if args.sigma.is_some() {
        file.sigma = args.sigma;
    }
    if args.trials.is_some() {
        file.trials = args.trials;
    }
    file.seed = resolve_seed(args.seed, file.seed)?;
    let config = file.into_regression(v)?;
    let report = run_regression_experiment(&config)?;
    write_outputs(&args.out, &regression_csv(&report), &to_json(&report)?)?;
    print!("{}", regression_summary(&report));
    Ok(if report.guarantee_violations > 0 {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

/// Grid `2, 2.01, ..., 50` used for the Gamma-function check.
pub fn gamma_grid() -> Vec<f64> {
    (0..=4800).map(|i| 2.0 + i as f64 / 100.0).collect()
}

pub fn bounds_table(args: &BoundsArgs) -> Result<String> {
    let setting = match args.setting {
        SettingArg::A => NoiseSetting::StatisticalLearning { eta: args.eta },
        SettingArg::B => NoiseSetting::SubExponential {
            omega: args.omega,
            a: args.a,
            alpha: args.alpha,
            c_tilde: args.c_tilde,
        },
    };
    setting.validate()?;
    let (m1, m2, n) = (args.m1, args.m2, args.n);
    let t = args.t.unwrap_or(((m1 + m2) as f64).ln());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "setting={:?} m1={m1} m2={m2} n={n} t={t:.6} varrho={} rank={} sigma={}",
        setting, args.varrho, args.rank, args.sigma
    );
    let c = default_completion_c(&setting)?;
    let lambda = lambda_completion(args.varrho, c, m1, m2, n)?;
    let s = lemma2_s_bound(&setting, m1, m2, n)?;
    let flags: Vec<&str> = s.flags.iter().map(|f| f.name()).collect();
    let mut rows: Vec<(String, f64)> = vec![
        ("rho".into(), rho(&setting, m1, m2, n, t)?),
        ("n_star".into(), n_star(&setting, m1, m2)?),
        ("c_star".into(), c_star(&setting)?),
        ("c = c_star * e".into(), c),
        ("lambda_completion".into(), lambda),
        (
            "lambda_regression".into(),
            lambda_regression(args.varrho, args.sigma, args.rank, m2)?,
        ),
        ("s_bound".into(), s.value),
    ];
    for q in [2.0, f64::INFINITY] {
        let b = thm3_bounds(lambda, m1, m2, args.rank, q)?;
        if q == 2.0 {
            rows.push(("thm3 sv_deviation".into(), b.sv_deviation));
            rows.push(("thm3 spectral".into(), b.spectral));
        }
        rows.push((format!("thm3 schatten_q{}", q_label(q)), b.schatten_q));
    }
    for (name, value) in rows {
        let _ = writeln!(out, "{name:<24} {value:.6e}");
    }
    let _ = writeln!(
        out,
        "{:<24} {}",
        "s_bound flags",
        if flags.is_empty() {
            "none".to_string()
        } else {
            flags.join(",")
        }
    );
    let grid = gamma_grid();
    let mut held = 0;
    for &x in &grid {
        held += usize::from(gamma_bound_holds(x)?.holds);
    }
    let at_two = gamma_bound_holds(2.0)?;
    let _ = writeln!(
        out,
        "gamma bound on [2, 50] step 0.01: {held}/{} hold; |lhs - rhs| at x=2: {:.1e}",
        grid.len(),
        (at_two.lhs - at_two.rhs).abs()
    );
    Ok(out)
}

pub fn cmd_bounds(args: &BoundsArgs) -> Result<i32> {
    print!("{}", bounds_table(args)?);
    Ok(EXIT_OK)
}

/// Outcome of one self-test suite.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    let mut values = vec![0.0; rows * cols];
    values.iter_mut().for_each(|v| *v = rng.standard_normal());
    Matrix::from_fn(rows, cols, |i, j| values[i * cols + j])
}

fn threshold_objective(a: &Matrix, estimate: &Matrix, rank: usize, tau: f64) -> f64 {
    (a - estimate).frobenius_norm().powi(2) + tau * tau * rank as f64
}

fn suite_hard_threshold() -> Result<SuiteResult> {
    let mut rng = StreamRng::new(0x5e1f, 0);
    let mut cases = 0;
    let mut failures = 0;
    for i in 0..100 {
        let (m1, m2) = (2 + i % 5, 2 + (i / 5) % 5);
        let a = random_matrix(m1, m2, &mut rng);
        let sv = svd(&a)?.singular_values;
        let mut taus: Vec<f64> = sv.clone();
        taus.extend([0.0, 0.5 * sv[0], 2.0 * sv[0]]);
        for tau in taus {
            let (estimate, rank) = hard_threshold(&a, tau)?;
            let got = threshold_objective(&a, &estimate, rank, tau);
            let mut best = f64::INFINITY;
            for k in 0..=sv.len() {
                best = best.min(threshold_objective(&a, &restricted_rank_approx(&a, k)?, k, tau));
            }
            cases += 1;
            failures += usize::from((got - best).abs() > 1e-9 * best.max(1.0));
        }
    }
    Ok(SuiteResult {
        name: "hard-threshold optimality",
        passed: failures == 0,
        detail: format!("{}/{cases} cases optimal", cases - failures),
    })
}

fn suite_tau_tie() -> Result<SuiteResult> {
    let a = Matrix::from_diagonal(3, 3, &[3.0, 2.0, 1.0]);
    let (estimate, rank) = hard_threshold(&a, 2.0)?;
    let passed = rank == 2 && (&estimate - &Matrix::from_diagonal(3, 3, &[3.0, 2.0, 0.0])).max_abs() < 1e-12;
    Ok(SuiteResult {
        name: "threshold tie keeps sigma = tau",
        passed,
        detail: format!("rank {rank} at tau = sigma_2"),
    })
}

fn suite_rsc() -> Result<SuiteResult> {
    let mut rng = StreamRng::new(0x75c, 0);
    let (l, m1, m2) = (20, 6, 5);
    let mut failures = 0;
    let cases = 50;
    for _ in 0..cases {
        let v = random_matrix(l, m1, &mut rng);
        let u = random_matrix(l, m2, &mut rng);
        let lambda = 0.05 * (1.0 + 10.0 * rng.standard_normal().abs());
        let report = estimate_rsc(&v, &u, lambda)?;
        let got = rsc_objective(&v, &u, &report.estimate, report.rank, lambda)?;
        let fit = &column_projector(&v)? * &u;
        let v_pinv = pseudo_inverse(&v)?;
        let mut best = f64::INFINITY;
        for k in 0..=m2 {
            let candidate = &v_pinv * &restricted_rank_approx(&fit, k)?;
            best = best.min(rsc_objective(&v, &u, &candidate, k, lambda)?);
        }
        failures += usize::from((got - best).abs() > 1e-9 * best.max(1.0));
    }
    Ok(SuiteResult {
        name: "rank selection exhaustive-k equivalence",
        passed: failures == 0,
        detail: format!("{}/{cases} instances optimal", cases - failures),
    })
}

fn suite_guarantees() -> Result<SuiteResult> {
    let mut total = 0;
    let mut violations = 0;
    let mut untuned = 0;
    for (kind, noise, n) in [
        (DesignKind::UsrCompletion, NoiseModel::Gaussian { sigma: 0.1 }, 600),
        (DesignKind::UsrCompletion, NoiseModel::BoundedResponse { eta: 2.0 }, 600),
        (DesignKind::ColumnMask, NoiseModel::Gaussian { sigma: 0.1 }, 400),
        (DesignKind::GaussianFull, NoiseModel::Gaussian { sigma: 0.1 }, 300),
        (DesignKind::RademacherFull, NoiseModel::Gaussian { sigma: 0.1 }, 300),
    ] {
        let config = ExperimentConfig {
            design: DesignSpec::new(kind, 12, 10, None)?,
            rank_r: 2,
            entry_bound_a: 1.0,
            noise,
            n_grid: vec![n],
            trials: 10,
            seed: 7,
            varrho: 1.0,
            lambda_rule: LambdaRule::OracleDelta { margin: 1.01 },
            schatten_qs: vec![2.0, 3.0, f64::INFINITY],
            sampling: Sampling::Iid,
            c_tilde: 1.0,
        };
        let report = run_experiment(&config)?;
        total += report.trials.len();
        violations += report.guarantee_violations();
        untuned += report.trials.iter().filter(|t| !t.tuning_condition_met).count();
    }
    Ok(SuiteResult {
        name: "deterministic guarantees on small instances",
        passed: violations == 0 && untuned == 0,
        detail: format!("{total} trials, {untuned} untuned, {violations} violations"),
    })
}

fn suite_exact_recovery() -> Result<SuiteResult> {
    let mut rng = StreamRng::new(0xe4ac7, 0);
    let mut failures = 0;
    let cases = 20;
    for _ in 0..cases {
        let truth = crate::harness::generate_ground_truth(8, 7, 3, 1.0, &mut rng)?;
        let observations = crate::harness::sample_cover_data(&truth, &NoiseModel::None, 56, &mut rng)?;
        let report = estimate_completion(&observations, 8, 7, 1e-12)?;
        let err = (&report.estimate - &truth.a0).frobenius_norm();
        failures += usize::from(err > 1e-10 * truth.a0.frobenius_norm());
    }
    Ok(SuiteResult {
        name: "noiseless single-cover exact recovery",
        passed: failures == 0,
        detail: format!("{}/{cases} truths recovered", cases - failures),
    })
}

fn suite_formulas() -> Result<SuiteResult> {
    let mut problems = Vec::new();
    let setting = NoiseSetting::StatisticalLearning { eta: 1.0 };
    let value = rho(&setting, 100, 100, 100_000, 200f64.ln())?;
    if (value - 4.118e-3).abs() > 5e-4 * 4.118e-3 {
        problems.push(format!("rho = {value:.6e}"));
    }
    let held = gamma_grid()
        .into_iter()
        .map(gamma_bound_holds)
        .collect::<Result<Vec<_>>>()?
        .iter()
        .filter(|g| !g.holds)
        .count();
    if held > 0 {
        problems.push(format!("gamma bound fails at {held} grid points"));
    }
    let at_two = gamma_bound_holds(2.0)?;
    if (at_two.lhs - at_two.rhs).abs() > 1e-12 {
        problems.push("gamma bound not tight at x = 2".into());
    }
    let b = thm3_bounds(0.25, 2, 2, 1, 2.0)?;
    if (b.sv_deviation - 0.5).abs() > 1e-12 || (b.spectral - 1.5).abs() > 1e-12 {
        problems.push("spectral bounds".into());
    }
    Ok(SuiteResult {
        name: "formula cross-checks",
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            "rho, gamma and spectral bounds agree".into()
        } else {
            problems.join("; ")
        },
    })
}

pub fn run_selftest() -> Result<Vec<SuiteResult>> {
    Ok(vec![
        suite_hard_threshold()?,
        suite_tau_tie()?,
        suite_rsc()?,
        suite_guarantees()?,
        suite_exact_recovery()?,
        suite_formulas()?,
    ])
}

pub fn cmd_selftest() -> Result<i32> {
    let results = run_selftest()?;
    for r in &results {
        println!("{} {:<46} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_ERROR
    })
}

pub fn run(cli: &Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Complete(args) => cmd_complete(args),
        Command::Regress(args) => cmd_regress(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Selftest => cmd_selftest(),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
