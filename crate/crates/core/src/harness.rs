//! Monte Carlo experiments.
//!
//! Every trial draws a fresh ground truth from the class of rank-`r`
//! matrices with entries bounded by `a`, simulates observations, tunes
//! `lambda`, estimates, and records whether each deterministic guarantee
//! holds. Randomness is a pure function of `(seed, trial_index)`, so results
//! do not depend on how trials are scheduled across threads.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    completion_frobenius_rate, default_completion_c, expectation_rhs, hypothesis_flags, lambda_completion,
    lambda_regression, lemma2_s_bound, oracle_rhs_prob, rank_bound, regression_noise_expectation_bound, rho,
    spectral_bounds, HypothesisFlag, NoiseSetting,
};
use crate::designs::{
    mu_squared, sample_design, trace_inner, DesignKind, DesignSample, DesignSpec, Observation, StreamRng,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate_isometry, estimate_rsc, oracle_delta, oracle_delta_regression, EstimatorConfig};
use crate::linalg::{schatten_from_values, svd, Matrix, Svd};

/// Smallest penalty used when a tuning rule would produce zero (noiseless
/// exact cover, or zero regression noise). Keeps `lambda > 0` while staying
/// below any non-negligible singular value.
pub const LAMBDA_MIN: f64 = 1e-12;

/// Relative slack for the floating-point comparisons behind each verdict.
const VERDICT_RTOL: f64 = 1e-9;
const VERDICT_ATOL: f64 = 1e-12;

const TRUTH_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + VERDICT_RTOL) + VERDICT_ATOL
}

/// A matrix of rank at most `rank` with entries bounded by `entry_bound`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub a0: Matrix,
    pub rank: usize,
    pub entry_bound: f64,
    pub svd: Svd,
}

impl GroundTruth {
    /// Numerical rank of `a0`.
    pub fn numerical_rank(&self) -> usize {
        self.svd.numerical_rank()
    }

    /// `||A0 - A0_k||_2` for the best rank-`k` truncation `A0_k`.
    pub fn truncation_bias(&self, k: usize) -> f64 {
        self.svd.singular_values[k.min(self.svd.singular_values.len())..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

/// Draws `A0 = L R^T` with Gaussian factors, rescaled so that the largest
/// entry has magnitude exactly `a` (up to rounding).
pub fn generate_ground_truth(m1: usize, m2: usize, r: usize, a: f64, rng: &mut StreamRng) -> Result<GroundTruth> {
    if r == 0 || r > m1.min(m2) {
        return Err(Error::param(
            "rank_r",
            format!("must lie in 1..={}, got {r}", m1.min(m2)),
        ));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("entry_bound_a", format!("must be positive, got {a}")));
    }
    let mut left = vec![0.0; m1 * r];
    let mut right = vec![0.0; m2 * r];
    left.iter_mut().for_each(|v| *v = rng.standard_normal());
    right.iter_mut().for_each(|v| *v = rng.standard_normal());
    let l = Matrix::from_fn(m1, r, |i, j| left[i * r + j]);
    let rt = Matrix::from_fn(r, m2, |i, j| right[j * r + i]);
    let product = &l * &rt;
    let a0 = product.scale(a / product.max_abs());
    let svd = svd(&a0)?;
    let truth = GroundTruth {
        a0,
        rank: r,
        entry_bound: a,
        svd,
    };
    if truth.numerical_rank() != r {
        return Err(Error::Numeric(format!(
            "generated truth has numerical rank {} instead of {r}",
            truth.numerical_rank()
        )));
    }
    Ok(truth)
}

/// Noise added to `tr(X_i^T A0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian {
        sigma: f64,
    },
    /// Uniform noise on `[-b, b]` with `b = eta - max|A0|`, so `|Y_i| <= eta`
    /// for entry designs.
    BoundedResponse {
        eta: f64,
    },
    None,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::config("sigma", format!("must be positive, got {sigma}")))
            }
            NoiseModel::BoundedResponse { eta } if !(eta > 0.0 && eta.is_finite()) => {
                Err(Error::config("eta", format!("must be positive, got {eta}")))
            }
            _ => Ok(()),
        }
    }

    /// Noise regime used for the theoretical tuning constants. Gaussian
    /// noise is treated as sub-exponential with `alpha = 2` and
    /// `omega = 2 sigma`, for which `E exp(xi^2 / omega^2)` is finite.
    pub fn setting(&self, entry_bound: f64, c_tilde: f64) -> NoiseSetting {
        match *self {
            NoiseModel::Gaussian { sigma } => NoiseSetting::SubExponential {
                omega: 2.0 * sigma,
                a: entry_bound,
                alpha: 2.0,
                c_tilde,
            },
            NoiseModel::BoundedResponse { eta } => NoiseSetting::StatisticalLearning { eta },
            NoiseModel::None => NoiseSetting::StatisticalLearning { eta: entry_bound },
        }
    }

    fn draw(&self, rng: &mut StreamRng, half_width: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma * rng.standard_normal(),
            NoiseModel::BoundedResponse { .. } if half_width > 0.0 => rng.random_range(-half_width..=half_width),
            NoiseModel::BoundedResponse { .. } | NoiseModel::None => 0.0,
        }
    }
}

/// How entry designs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Independent uniform draws.
    #[default]
    Iid,
    /// Sweeps of a random permutation of all cells; every cell is observed
    /// exactly `n / (m1 m2)` times.
    Cover,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `lambda = (margin * 2 varrho mu Delta)^2` using the realized noise
    /// level; guarantees the tuning condition for `margin >= 1`.
    OracleDelta { margin: f64 },
    /// `lambda = (2 varrho c)^2 (m1 ∨ m2) log(m) / n`; `c = None` uses `c* e`.
    Corollary1 { c: Option<f64> },
    /// `lambda = (4 varrho sigma (sqrt(rank V) + sqrt(m2)))^2` on the scale
    /// of the unnormalized regression fit.
    Regression { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub rank_r: usize,
    pub entry_bound_a: f64,
    pub noise: NoiseModel,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub varrho: f64,
    pub lambda_rule: LambdaRule,
    pub schatten_qs: Vec<f64>,
    pub sampling: Sampling,
    /// Constant of the sub-exponential setting; verdicts that depend on it
    /// are conditional on the supplied value.
    pub c_tilde: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let (m1, m2) = (self.design.m1(), self.design.m2());
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.rank_r == 0 || self.rank_r > m1.min(m2) {
            return Err(Error::config("rank_r", format!("must lie in 1..={}", m1.min(m2))));
        }
        if !(self.entry_bound_a > 0.0 && self.entry_bound_a.is_finite()) {
            return Err(Error::config("entry_bound_a", "must be positive"));
        }
        if !(self.varrho >= 1.0 && self.varrho.is_finite()) {
            return Err(Error::config("varrho", "must be >= 1"));
        }
        if !(self.c_tilde > 0.0 && self.c_tilde.is_finite()) {
            return Err(Error::config("c_tilde", "must be positive"));
        }
        self.noise.validate()?;
        if let Some(q) = self.schatten_qs.iter().find(|q| q.is_nan() || **q < 2.0) {
            return Err(Error::config(
                "schatten_qs",
                format!("entries must lie in [2, inf], got {q}"),
            ));
        }
        if self.design.kind() == DesignKind::RegressionFixed {
            if !matches!(self.lambda_rule, LambdaRule::Regression { .. }) {
                return Err(Error::config(
                    "lambda_rule",
                    "regression designs use the regression rule",
                ));
            }
            if matches!(self.noise, NoiseModel::BoundedResponse { .. }) {
                return Err(Error::config(
                    "noise",
                    "regression experiments use Gaussian or no noise",
                ));
            }
            return Ok(());
        }
        if self.n_grid.is_empty() {
            return Err(Error::config("n_grid", "must not be empty"));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::config("n_grid", "sample sizes must be positive"));
        }
        match self.lambda_rule {
            LambdaRule::OracleDelta { margin } if !(margin >= 1.0 && margin.is_finite()) => {
                return Err(Error::config("margin", "must be >= 1"));
            }
            LambdaRule::Corollary1 { c: Some(c) } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::config("c", "must be positive"));
            }
            LambdaRule::Regression { .. } => {
                return Err(Error::config(
                    "lambda_rule",
                    "the regression rule needs a regression design",
                ));
            }
            _ => {}
        }
        if matches!(self.noise, NoiseModel::BoundedResponse { .. }) && self.design.kind() != DesignKind::UsrCompletion {
            return Err(Error::config(
                "noise",
                "bounded responses require the entry-sampling design",
            ));
        }
        if self.sampling == Sampling::Cover {
            if self.design.kind() != DesignKind::UsrCompletion {
                return Err(Error::config(
                    "sampling",
                    "cover sampling requires the entry-sampling design",
                ));
            }
            let cells = m1 * m2;
            if let Some(n) = self.n_grid.iter().find(|n| **n % cells != 0) {
                return Err(Error::config(
                    "n_grid",
                    format!("cover sampling needs multiples of {cells}, got {n}"),
                ));
            }
        }
        Ok(())
    }

    pub fn noise_setting(&self) -> NoiseSetting {
        self.noise.setting(self.entry_bound_a, self.c_tilde)
    }

    fn truth_rng(&self, trial_index: usize) -> StreamRng {
        StreamRng::new(self.seed ^ TRUTH_SEED_SALT, trial_index as u64)
    }

    fn data_rng(&self, trial_index: usize) -> StreamRng {
        StreamRng::new(self.seed, trial_index as u64)
    }
}

fn bounded_half_width(truth: &GroundTruth, noise: &NoiseModel) -> Result<f64> {
    match *noise {
        NoiseModel::BoundedResponse { eta } => {
            let top = truth.a0.max_abs();
            if eta <= truth.entry_bound || eta <= top {
                return Err(Error::InfeasibleNoise(format!(
                    "bounded responses need eta > a, got eta = {eta}, a = {}",
                    truth.entry_bound
                )));
            }
            Ok(eta - top)
        }
        _ => Ok(0.0),
    }
}

/// `n` i.i.d. observations `Y_i = tr(X_i^T A0) + xi_i`.
pub fn sample_trial_data(
    truth: &GroundTruth,
    spec: &DesignSpec,
    noise: &NoiseModel,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Observation>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if matches!(noise, NoiseModel::BoundedResponse { .. }) && spec.kind() != DesignKind::UsrCompletion {
        return Err(Error::InfeasibleNoise(
            "bounded responses require the entry-sampling design".into(),
        ));
    }
    let half_width = bounded_half_width(truth, noise)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let design = sample_design(spec, rng);
        let signal = trace_inner(&design, &truth.a0)?;
        let response = signal + noise.draw(rng, half_width);
        out.push(Observation::new(design, response));
    }
    Ok(out)
}

/// Observations that visit every cell exactly `n / (m1 m2)` times, each sweep
/// in a fresh random order.
pub fn sample_cover_data(
    truth: &GroundTruth,
    noise: &NoiseModel,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Observation>> {
    let (m1, m2) = truth.a0.shape();
    let cells = m1 * m2;
    if n == 0 || !n.is_multiple_of(cells) {
        return Err(Error::param(
            "n",
            format!("cover sampling needs a positive multiple of {cells}"),
        ));
    }
    let half_width = bounded_half_width(truth, noise)?;
    let mut order: Vec<usize> = (0..cells).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / cells {
        order.shuffle(rng);
        for &cell in &order {
            let (row, col) = (cell / m2, cell % m2);
            let response = truth.a0[(row, col)] + noise.draw(rng, half_width);
            out.push(Observation::new(DesignSample::EntryIndex { row, col }, response));
        }
    }
    Ok(out)
}

/// Per-trial metrics and verdicts. Verdicts are only guaranteed when
/// `tuning_condition_met` is true.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialVerdict {
    pub n: usize,
    pub trial_index: usize,
    pub rank_a0: usize,
    pub rank_hat: usize,
    /// `||Â - A0||_2 / sqrt(m1 m2)`.
    pub fro_err_normalized: f64,
    /// `||Â - A0||_{L2(Pi)} = ||Â - A0||_2 / mu`.
    pub l2_err: f64,
    pub spec_err: f64,
    /// Aligned with `ExperimentConfig::schatten_qs`.
    pub schatten_errs: Vec<f64>,
    pub delta: f64,
    pub lambda_used: f64,
    pub tuning_condition_met: bool,
    pub thm1_i_ok: bool,
    pub thm1_ii_ok: bool,
    pub thm1_iii_ok: bool,
    pub thm3_i_ok: bool,
    pub thm3_ii_ok: bool,
    pub thm3_iii_ok: bool,
    pub thm3_iv_ok: bool,
    pub hypothesis_flags: Vec<String>,
}

impl TrialVerdict {
    pub fn verdicts(&self) -> [bool; 7] {
        [
            self.thm1_i_ok,
            self.thm1_ii_ok,
            self.thm1_iii_ok,
            self.thm3_i_ok,
            self.thm3_ii_ok,
            self.thm3_iii_ok,
            self.thm3_iv_ok,
        ]
    }

    pub fn all_ok(&self) -> bool {
        self.verdicts().iter().all(|&v| v)
    }

    /// A tuned trial with a failing verdict contradicts a deterministic
    /// guarantee.
    pub fn is_violation(&self) -> bool {
        self.tuning_condition_met && !self.all_ok()
    }
}

pub const VERDICT_NAMES: [&str; 7] = [
    "thm1_i_ok",
    "thm1_ii_ok",
    "thm1_iii_ok",
    "thm3_i_ok",
    "thm3_ii_ok",
    "thm3_iii_ok",
    "thm3_iv_ok",
];

fn choose_lambda(config: &ExperimentConfig, mu_sq: f64, delta: f64, n: usize) -> Result<f64> {
    let (m1, m2) = (config.design.m1(), config.design.m2());
    let lambda = match config.lambda_rule {
        LambdaRule::OracleDelta { margin } => (margin * 2.0 * config.varrho * mu_sq.sqrt() * delta).powi(2),
        LambdaRule::Corollary1 { c } => {
            let c = match c {
                Some(c) => c,
                None => default_completion_c(&config.noise_setting())?,
            };
            lambda_completion(config.varrho, c, m1, m2, n)?
        }
        LambdaRule::Regression { .. } => {
            return Err(Error::config(
                "lambda_rule",
                "the regression rule needs a regression design",
            ))
        }
    };
    Ok(lambda.max(LAMBDA_MIN))
}

/// One simulated trial at sample size `n`, data drawn from stream
/// `trial_index`.
pub fn run_trial(config: &ExperimentConfig, truth: &GroundTruth, n: usize, trial_index: usize) -> Result<TrialVerdict> {
    let spec = &config.design;
    let (m1, m2) = (spec.m1(), spec.m2());
    let mut rng = config.data_rng(trial_index);
    let observations = match config.sampling {
        Sampling::Iid => sample_trial_data(truth, spec, &config.noise, n, &mut rng)?,
        Sampling::Cover => sample_cover_data(truth, &config.noise, n, &mut rng)?,
    };
    let mu_sq = mu_squared(spec)?;
    let mu = mu_sq.sqrt();
    let delta = oracle_delta(&observations, spec, &truth.a0)?;
    let lambda = choose_lambda(config, mu_sq, delta, n)?;
    let estimator = EstimatorConfig::new(lambda, mu_sq, config.varrho)?;
    let report = estimate_isometry(&observations, m1, m2, mu_sq, lambda)?;

    let error = &report.estimate - &truth.a0;
    let error_svd = svd(&error)?;
    let fro = error.frobenius_norm();
    let l2_err = fro / mu;
    let spec_err = error_svd.singular_values.first().copied().unwrap_or(0.0);
    let schatten_errs = config
        .schatten_qs
        .iter()
        .map(|&q| schatten_from_values(&error_svd.singular_values, q))
        .collect::<Result<Vec<_>>>()?;

    let rank_a0 = truth.numerical_rank();
    let thm1_i_ok = report.rank as f64 <= rank_bound(config.varrho, rank_a0)? + VERDICT_ATOL;

    // The infimum over all A is bounded above by each candidate, so checking
    // A0 and its truncations can only falsify, never overstate, the bound.
    let mut thm1_ii_ok = true;
    let mut thm1_iii_ok = true;
    for k in 0..=rank_a0 {
        let bias = truth.truncation_bias(k) / mu;
        let rhs = oracle_rhs_prob(config.varrho, lambda, rank_a0, k, bias)?;
        thm1_ii_ok &= within(l2_err, rhs.linear);
        thm1_iii_ok &= within(l2_err * l2_err, rhs.squared);
    }

    let thm3_i_ok = report.rank <= rank_a0;
    let base = spectral_bounds(lambda, mu_sq, rank_a0, f64::INFINITY)?;
    let thm3_ii_ok = report
        .kept_singular_values
        .iter()
        .enumerate()
        .all(|(j, s)| within((s - truth.svd.singular_values[j]).abs(), base.sv_deviation));
    let thm3_iii_ok = within(spec_err, base.spectral);
    let mut thm3_iv_ok = true;
    for (&q, &err) in config.schatten_qs.iter().zip(&schatten_errs) {
        thm3_iv_ok &= within(err, spectral_bounds(lambda, mu_sq, rank_a0, q)?.schatten_q);
    }

    let setting = config.noise_setting();
    let mut flags: Vec<String> = hypothesis_flags(&setting, m1, m2, n)?
        .into_iter()
        .map(HypothesisFlag::name)
        .map(String::from)
        .collect();
    if matches!(setting, NoiseSetting::SubExponential { .. }) {
        flags.push("c_tilde_conditional".into());
    }

    Ok(TrialVerdict {
        n,
        trial_index,
        rank_a0,
        rank_hat: report.rank,
        fro_err_normalized: fro / ((m1 * m2) as f64).sqrt(),
        l2_err,
        spec_err,
        schatten_errs,
        delta,
        lambda_used: lambda,
        tuning_condition_met: estimator.tuning_condition_met(delta),
        thm1_i_ok,
        thm1_ii_ok,
        thm1_iii_ok,
        thm3_i_ok,
        thm3_ii_ok,
        thm3_iii_ok,
        thm3_iv_ok,
        hypothesis_flags: flags,
    })
}

/// Fraction of trials passing each verdict, `None` when no trial qualifies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictFrequencies {
    pub trials: usize,
    pub thm1_i: Option<f64>,
    pub thm1_ii: Option<f64>,
    pub thm1_iii: Option<f64>,
    pub thm3_i: Option<f64>,
    pub thm3_ii: Option<f64>,
    pub thm3_iii: Option<f64>,
    pub thm3_iv: Option<f64>,
}

impl VerdictFrequencies {
    fn from_trials<'a>(trials: impl Iterator<Item = &'a TrialVerdict>) -> Self {
        let mut count = 0usize;
        let mut passes = [0usize; 7];
        for t in trials {
            count += 1;
            for (p, v) in passes.iter_mut().zip(t.verdicts()) {
                *p += usize::from(v);
            }
        }
        let freq = |i: usize| (count > 0).then(|| passes[i] as f64 / count as f64);
        Self {
            trials: count,
            thm1_i: freq(0),
            thm1_ii: freq(1),
            thm1_iii: freq(2),
            thm3_i: freq(3),
            thm3_ii: freq(4),
            thm3_iii: freq(5),
            thm3_iv: freq(6),
        }
    }

    pub fn as_array(&self) -> [Option<f64>; 7] {
        [
            self.thm1_i,
            self.thm1_ii,
            self.thm1_iii,
            self.thm3_i,
            self.thm3_ii,
            self.thm3_iii,
            self.thm3_iv,
        ]
    }
}

/// Monte Carlo comparison of the in-expectation bounds at `A = A0`, using the
/// mean penalty. The tuning hypothesis is checked against the closed-form
/// upper bound on `S`, so these results are statistical and conditional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationCheck {
    pub s_bound: f64,
    pub s_bound_flags: Vec<String>,
    pub condition_met: bool,
    pub mean_rank: f64,
    pub rank_rhs: f64,
    pub rank_ok: bool,
    pub mean_l2_err: f64,
    pub se_l2_err: f64,
    pub l2_rhs: f64,
    pub l2_ok: bool,
    pub mean_sq_l2_err: f64,
    pub se_sq_l2_err: f64,
    pub sq_rhs: f64,
    pub sq_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSizeSummary {
    pub n: usize,
    pub trials: usize,
    pub mean_fro_err: f64,
    pub median_fro_err: f64,
    pub se_fro_err: f64,
    pub mean_spec_err: f64,
    pub median_spec_err: f64,
    pub mean_schatten_errs: Vec<f64>,
    pub mean_delta: f64,
    pub mean_lambda: f64,
    pub mean_rank_hat: f64,
    pub tuning_met_freq: f64,
    pub tuned: VerdictFrequencies,
    pub untuned: VerdictFrequencies,
    pub guarantee_violations: usize,
    /// `4 c sqrt((m1 ∨ m2) log(m) r / n)`.
    pub corollary1_rhs: f64,
    /// `rho(m1, m2, n, t = log m)`.
    pub rho_log_m: f64,
    pub delta_le_rho_freq: f64,
    pub expectation: ExpectationCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub design: String,
    pub m1: usize,
    pub m2: usize,
    pub rank_r: usize,
    pub entry_bound_a: f64,
    pub noise: NoiseModel,
    pub noise_setting: NoiseSetting,
    pub sampling: Sampling,
    pub lambda_rule: LambdaRule,
    pub varrho: f64,
    pub seed: u64,
    pub trials: usize,
    pub schatten_qs: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub header: ReportHeader,
    pub rows: Vec<SampleSizeSummary>,
    /// Least-squares slope of `log(mean_fro_err)` against `log(n)`.
    pub frobenius_slope: Option<f64>,
    #[serde(skip)]
    pub trials: Vec<TrialVerdict>,
}

impl ExperimentReport {
    pub fn guarantee_violations(&self) -> usize {
        self.rows.iter().map(|r| r.guarantee_violations).sum()
    }
}

pub fn q_label(q: f64) -> String {
    if q == f64::INFINITY {
        "inf".into()
    } else {
        format!("{q}")
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn summarize(config: &ExperimentConfig, n: usize, trials: &[TrialVerdict]) -> Result<SampleSizeSummary> {
    let (m1, m2) = (config.design.m1(), config.design.m2());
    let setting = config.noise_setting();
    let mu_sq = mu_squared(&config.design)?;
    let col = |f: fn(&TrialVerdict) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let fro = col(|t| t.fro_err_normalized);
    let spec = col(|t| t.spec_err);
    let l2 = col(|t| t.l2_err);
    let l2_sq: Vec<f64> = l2.iter().map(|e| e * e).collect();
    let ranks = col(|t| t.rank_hat as f64);
    let lambdas = col(|t| t.lambda_used);
    let deltas = col(|t| t.delta);
    let mean_schatten_errs = (0..config.schatten_qs.len())
        .map(|i| mean(&trials.iter().map(|t| t.schatten_errs[i]).collect::<Vec<_>>()))
        .collect();

    let tuned_count = trials.iter().filter(|t| t.tuning_condition_met).count();
    let c = match config.lambda_rule {
        LambdaRule::Corollary1 { c: Some(c) } => c,
        _ => default_completion_c(&setting)?,
    };
    let rank_r = config.rank_r;
    let rho_log_m = rho(&setting, m1, m2, n, ((m1 + m2) as f64).ln())?;
    let delta_le_rho = trials.iter().filter(|t| t.delta <= rho_log_m).count();

    let mean_lambda = mean(&lambdas);
    let s_bound = lemma2_s_bound(&setting, m1, m2, n)?;
    let rhs = expectation_rhs(config.varrho, mean_lambda, rank_r, rank_r, 0.0)?;
    let (mean_l2, se_l2) = (mean(&l2), standard_error(&l2));
    let (mean_sq, se_sq) = (mean(&l2_sq), standard_error(&l2_sq));
    let (mean_rank, se_rank) = (mean(&ranks), standard_error(&ranks));
    let expectation = ExpectationCheck {
        s_bound: s_bound.value,
        s_bound_flags: s_bound.flags.iter().map(|f| f.name().to_string()).collect(),
        condition_met: mean_lambda.sqrt() >= 2.0 * config.varrho * mu_sq.sqrt() * s_bound.value.sqrt(),
        mean_rank,
        rank_rhs: rhs.rank,
        rank_ok: mean_rank <= rhs.rank + 2.0 * se_rank,
        mean_l2_err: mean_l2,
        se_l2_err: se_l2,
        l2_rhs: rhs.linear,
        l2_ok: mean_l2 <= rhs.linear + 2.0 * se_l2,
        mean_sq_l2_err: mean_sq,
        se_sq_l2_err: se_sq,
        sq_rhs: rhs.squared,
        sq_ok: mean_sq <= rhs.squared + 2.0 * se_sq,
    };

    Ok(SampleSizeSummary {
        n,
        trials: trials.len(),
        mean_fro_err: mean(&fro),
        median_fro_err: median(&fro),
        se_fro_err: standard_error(&fro),
        mean_spec_err: mean(&spec),
        median_spec_err: median(&spec),
        mean_schatten_errs,
        mean_delta: mean(&deltas),
        mean_lambda,
        mean_rank_hat: mean_rank,
        tuning_met_freq: tuned_count as f64 / trials.len() as f64,
        tuned: VerdictFrequencies::from_trials(trials.iter().filter(|t| t.tuning_condition_met)),
        untuned: VerdictFrequencies::from_trials(trials.iter().filter(|t| !t.tuning_condition_met)),
        guarantee_violations: trials.iter().filter(|t| t.is_violation()).count(),
        corollary1_rhs: completion_frobenius_rate(c, m1, m2, n, rank_r)?,
        rho_log_m,
        delta_le_rho_freq: delta_le_rho as f64 / trials.len() as f64,
        expectation,
    })
}

fn header(config: &ExperimentConfig) -> ReportHeader {
    let mut notes = vec![
        "fresh ground truth per trial; frequencies average over noise and truth".to_string(),
        "expectation checks compare Monte Carlo means (+2 SE) to the bound at A = A0 and are statistical".to_string(),
        "the infimum in the oracle inequalities is checked at A0 and its rank-k truncations".to_string(),
    ];
    if matches!(config.noise_setting(), NoiseSetting::SubExponential { .. }) {
        notes.push(format!(
            "sub-exponential constants use c_tilde = {}; dependent quantities are conditional on it",
            config.c_tilde
        ));
    }
    ReportHeader {
        design: config.design.kind().name().to_string(),
        m1: config.design.m1(),
        m2: config.design.m2(),
        rank_r: config.rank_r,
        entry_bound_a: config.entry_bound_a,
        noise: config.noise,
        noise_setting: config.noise_setting(),
        sampling: config.sampling,
        lambda_rule: config.lambda_rule,
        varrho: config.varrho,
        seed: config.seed,
        trials: config.trials,
        schatten_qs: config.schatten_qs.iter().copied().map(q_label).collect(),
        notes,
    }
}

/// Runs `trials` trials for every `n` in the grid and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.design.kind() == DesignKind::RegressionFixed {
        return Err(Error::config(
            "design",
            "use run_regression_experiment for regression designs",
        ));
    }
    let (m1, m2) = (config.design.m1(), config.design.m2());
    let truths = (0..config.trials)
        .into_par_iter()
        .map(|i| generate_ground_truth(m1, m2, config.rank_r, config.entry_bound_a, &mut config.truth_rng(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(config.n_grid.len());
    let mut all_trials = Vec::with_capacity(config.n_grid.len() * config.trials);
    for &n in &config.n_grid {
        let trials = truths
            .par_iter()
            .enumerate()
            .map(|(i, truth)| run_trial(config, truth, n, i))
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(config, n, &trials)?);
        all_trials.extend(trials);
    }

    let (log_n, log_err): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mean_fro_err > 0.0)
        .map(|r| ((r.n as f64).ln(), r.mean_fro_err.ln()))
        .unzip();
    let frobenius_slope = if log_n.len() == rows.len() {
        least_squares_slope(&log_n, &log_err)
    } else {
        None
    };

    Ok(ExperimentReport {
        header: header(config),
        rows,
        frobenius_slope,
        trials: all_trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTrial {
    pub trial_index: usize,
    pub rank_a0: usize,
    pub rank_hat: usize,
    /// `||V (Â - A0)||_2`.
    pub fit_err: f64,
    /// `||Â - A0||_2`.
    pub coef_err: f64,
    /// `||P_V E||_inf`.
    pub delta: f64,
    pub lambda_used: f64,
    /// `sqrt(lambda) >= 2 varrho Delta`.
    pub tuning_condition_met: bool,
    pub rank_ok: bool,
    pub fit_ok: bool,
    pub fit_sq_ok: bool,
    pub hypothesis_flags: Vec<String>,
}

impl RegressionTrial {
    pub fn all_ok(&self) -> bool {
        self.rank_ok && self.fit_ok && self.fit_sq_ok
    }

    pub fn is_violation(&self) -> bool {
        self.tuning_condition_met && !self.all_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub header: ReportHeader,
    pub l: usize,
    pub design_rank: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub mean_fit_err: f64,
    pub mean_coef_err: f64,
    pub mean_rank_hat: f64,
    /// Monte Carlo mean of `||P_V E||_inf`.
    pub mean_delta: f64,
    pub se_delta: f64,
    /// `sigma (sqrt(m2) + sqrt(rank V))`.
    pub delta_expectation_bound: f64,
    pub delta_bound_ok: bool,
    pub tuning_met_freq: f64,
    pub tuned_trials: usize,
    pub rank_ok_freq: Option<f64>,
    pub fit_ok_freq: Option<f64>,
    pub fit_sq_ok_freq: Option<f64>,
    pub guarantee_violations: usize,
    #[serde(skip)]
    pub trials: Vec<RegressionTrial>,
}

/// Matrix regression `U = V A0 + E` with the fixed design carried by the
/// config and `E` i.i.d. `N(0, sigma^2)`.
pub fn run_regression_experiment(config: &ExperimentConfig) -> Result<RegressionReport> {
    config.validate()?;
    let v = config
        .design
        .fixed_design()
        .ok_or_else(|| Error::config("design_matrix", "regression experiments need a fixed design"))?;
    let LambdaRule::Regression { sigma: rule_sigma } = config.lambda_rule else {
        return Err(Error::config(
            "lambda_rule",
            "regression experiments use the regression rule",
        ));
    };
    let sigma = match config.noise {
        NoiseModel::Gaussian { sigma } => sigma,
        NoiseModel::None => 0.0,
        NoiseModel::BoundedResponse { .. } => {
            return Err(Error::config(
                "noise",
                "regression experiments use Gaussian or no noise",
            ))
        }
    };
    let (l, m1, m2) = (v.rows(), config.design.m1(), config.design.m2());
    let design_rank = svd(v)?.numerical_rank();
    let lambda = lambda_regression(config.varrho, rule_sigma, design_rank, m2)?.max(LAMBDA_MIN);
    // estimate_rsc thresholds at sqrt(l m2 lambda); rescale so the effective
    // threshold is sqrt(lambda) on the unnormalized fit.
    let lambda_normalized = lambda / (l * m2) as f64;
    let mut flags = Vec::new();
    if (m2 as f64).ln() < 4.0 {
        flags.push("log_m2_lt_4".to_string());
    }

    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| -> Result<RegressionTrial> {
            let truth = generate_ground_truth(m1, m2, config.rank_r, config.entry_bound_a, &mut config.truth_rng(i))?;
            let mut rng = config.data_rng(i);
            let mut noise = vec![0.0; l * m2];
            noise.iter_mut().for_each(|e| *e = sigma * rng.standard_normal());
            let e = Matrix::from_fn(l, m2, |r, c| noise[r * m2 + c]);
            let signal = v * &truth.a0;
            let u = &signal + &e;
            let report = estimate_rsc(v, &u, lambda_normalized)?;
            let delta = oracle_delta_regression(v, &e)?;
            let fit_err = (&(v * &report.estimate) - &signal).frobenius_norm();

            let rank_a0 = truth.numerical_rank();
            let mut fit_ok = true;
            let mut fit_sq_ok = true;
            for k in 0..=rank_a0 {
                let candidate = truth.svd.truncate(k);
                let bias = (&(v * &candidate) - &signal).frobenius_norm();
                let rhs = oracle_rhs_prob(config.varrho, lambda, rank_a0, k, bias)?;
                fit_ok &= within(fit_err, rhs.linear);
                fit_sq_ok &= within(fit_err * fit_err, rhs.squared);
            }
            Ok(RegressionTrial {
                trial_index: i,
                rank_a0,
                rank_hat: report.rank,
                fit_err,
                coef_err: (&report.estimate - &truth.a0).frobenius_norm(),
                delta,
                lambda_used: lambda,
                tuning_condition_met: lambda.sqrt() >= 2.0 * config.varrho * delta,
                rank_ok: report.rank as f64 <= rank_bound(config.varrho, rank_a0)? + VERDICT_ATOL,
                fit_ok,
                fit_sq_ok,
                hypothesis_flags: flags.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let deltas: Vec<f64> = trials.iter().map(|t| t.delta).collect();
    let (mean_delta, se_delta) = (mean(&deltas), standard_error(&deltas));
    let bound = regression_noise_expectation_bound(sigma, design_rank, m2)?;
    let tuned: Vec<&RegressionTrial> = trials.iter().filter(|t| t.tuning_condition_met).collect();
    let freq = |f: fn(&RegressionTrial) -> bool| {
        (!tuned.is_empty()).then(|| tuned.iter().filter(|t| f(t)).count() as f64 / tuned.len() as f64)
    };

    Ok(RegressionReport {
        header: header(config),
        l,
        design_rank,
        sigma,
        lambda,
        mean_fit_err: mean(&trials.iter().map(|t| t.fit_err).collect::<Vec<_>>()),
        mean_coef_err: mean(&trials.iter().map(|t| t.coef_err).collect::<Vec<_>>()),
        mean_rank_hat: mean(&trials.iter().map(|t| t.rank_hat as f64).collect::<Vec<_>>()),
        mean_delta,
        se_delta,
        delta_expectation_bound: bound,
        delta_bound_ok: mean_delta <= bound + 2.0 * se_delta,
        tuning_met_freq: tuned.len() as f64 / trials.len() as f64,
        tuned_trials: tuned.len(),
        rank_ok_freq: freq(|t| t.rank_ok),
        fit_ok_freq: freq(|t| t.fit_ok),
        fit_sq_ok_freq: freq(|t| t.fit_sq_ok),
        guarantee_violations: trials.iter().filter(|t| t.is_violation()).count(),
        trials,
    })
}
