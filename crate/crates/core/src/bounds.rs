//! Closed-form tuning rules and bound right-hand sides.
//!
//! Notation: `m = m1 + m2`, `m1 ∧ m2 = min`, `m1 ∨ m2 = max`, logs are natural.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Noise regime used to derive `rho`, `n*` and `c*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSetting {
    /// Responses bounded by `eta` in absolute value.
    StatisticalLearning { eta: f64 },
    /// Sub-exponential noise with Orlicz scale `omega` and exponent
    /// `alpha >= 1`, entries of the truth bounded by `a`. `c_tilde` is the
    /// unspecified "large enough" constant; any verdict derived from it is
    /// conditional on the supplied value.
    SubExponential {
        omega: f64,
        a: f64,
        alpha: f64,
        c_tilde: f64,
    },
}

impl NoiseSetting {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        match *self {
            NoiseSetting::StatisticalLearning { eta } => positive("eta", eta),
            NoiseSetting::SubExponential {
                omega,
                a,
                alpha,
                c_tilde,
            } => {
                positive("omega", omega)?;
                positive("a", a)?;
                positive("c_tilde", c_tilde)?;
                if alpha >= 1.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("alpha", format!("must be >= 1, got {alpha}")))
                }
            }
        }
    }
}

/// Preconditions of a bound that failed for the supplied arguments. They are
/// reported, not raised, so small regimes can still be explored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisFlag {
    /// `n <= n*`.
    SampleSizeBelowNStar,
    /// `log(m1 + m2) < 5`.
    LogDimensionBelowFive,
}

impl HypothesisFlag {
    pub fn name(self) -> &'static str {
        match self {
            HypothesisFlag::SampleSizeBelowNStar => "n_le_n_star",
            HypothesisFlag::LogDimensionBelowFive => "log_m_lt_5",
        }
    }
}

fn dims(m1: usize, m2: usize) -> (f64, f64, f64) {
    let lo = m1.min(m2) as f64;
    let hi = m1.max(m2) as f64;
    (lo, hi, ((m1 + m2) as f64).ln())
}

fn check_dims(m1: usize, m2: usize) -> Result<()> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::param(
            "m1/m2",
            format!("dimensions must be positive, got {m1}x{m2}"),
        ));
    }
    Ok(())
}

fn check_varrho(varrho: f64) -> Result<()> {
    if varrho >= 1.0 && varrho.is_finite() {
        Ok(())
    } else {
        Err(Error::param("varrho", format!("must be >= 1, got {varrho}")))
    }
}

/// High-probability bound `rho(m1, m2, n, t)` on the noise level.
pub fn rho(setting: &NoiseSetting, m1: usize, m2: usize, n: usize, t: f64) -> Result<f64> {
    setting.validate()?;
    check_dims(m1, m2)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be positive, got {t}")));
    }
    let (lo, _, log_m) = dims(m1, m2);
    let n = n as f64;
    let tl = t + log_m;
    let sqrt_branch = (tl / (lo * n)).sqrt();
    Ok(match *setting {
        NoiseSetting::StatisticalLearning { eta } => 4.0 * eta * sqrt_branch.max(2.0 * tl / n),
        NoiseSetting::SubExponential {
            omega,
            a,
            alpha,
            c_tilde,
        } => {
            let linear = tl * lo.ln().powf(1.0 / alpha) / n;
            c_tilde * omega.max(a) * sqrt_branch.max(linear)
        }
    })
}

/// Minimal sample size `n*` of the high-probability results.
pub fn n_star(setting: &NoiseSetting, m1: usize, m2: usize) -> Result<f64> {
    setting.validate()?;
    check_dims(m1, m2)?;
    let (lo, _, log_m) = dims(m1, m2);
    Ok(match *setting {
        NoiseSetting::StatisticalLearning { .. } => 4.0 * lo * log_m,
        NoiseSetting::SubExponential { alpha, .. } => lo * log_m.powf(1.0 + 2.0 / alpha),
    })
}

pub fn c_star(setting: &NoiseSetting) -> Result<f64> {
    setting.validate()?;
    Ok(match *setting {
        NoiseSetting::StatisticalLearning { eta } => 4.0 * eta,
        NoiseSetting::SubExponential { omega, a, c_tilde, .. } => c_tilde * omega.max(a),
    })
}

/// Default `c` of the completion tuning rule: `c* e`.
pub fn default_completion_c(setting: &NoiseSetting) -> Result<f64> {
    Ok(c_star(setting)? * std::f64::consts::E)
}

/// `lambda = (2 varrho c)^2 (m1 ∨ m2) log(m) / n`.
pub fn lambda_completion(varrho: f64, c: f64, m1: usize, m2: usize, n: usize) -> Result<f64> {
    check_varrho(varrho)?;
    check_dims(m1, m2)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let (_, hi, log_m) = dims(m1, m2);
    Ok((2.0 * varrho * c).powi(2) * hi * log_m / n as f64)
}

/// `lambda = (4 varrho sigma (sqrt(r) + sqrt(m2)))^2`, on the scale of the
/// unnormalized fit `||U - V A||_2^2 + lambda rank(A)`.
pub fn lambda_regression(varrho: f64, sigma: f64, r: usize, m2: usize) -> Result<f64> {
    check_varrho(varrho)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be non-negative, got {sigma}")));
    }
    Ok((4.0 * varrho * sigma * ((r as f64).sqrt() + (m2 as f64).sqrt())).powi(2))
}

/// Rank bound `(1 + 2 / (4 varrho^2 - 1)) rank(A0)`.
pub fn rank_bound(varrho: f64, rank_a0: usize) -> Result<f64> {
    check_varrho(varrho)?;
    Ok((1.0 + 2.0 / (4.0 * varrho * varrho - 1.0)) * rank_a0 as f64)
}

/// Right-hand sides of the high-probability oracle inequality for one
/// candidate `A`, in the `L2(Pi)` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleRhs {
    /// `||A - A0|| + 2 sqrt(lambda max(rank(A0) / varrho^2, rank(A)))`.
    pub linear: f64,
    /// `(1 + 2/(2 varrho^2 - 1)) ||A - A0||^2 + 2 lambda (1 + 1/(2 varrho^2 - 1)) rank(A)`.
    pub squared: f64,
}

pub fn oracle_rhs_prob(varrho: f64, lambda: f64, rank_a0: usize, rank_a: usize, bias: f64) -> Result<OracleRhs> {
    check_varrho(varrho)?;
    check_nonneg("lambda", lambda)?;
    check_nonneg("bias", bias)?;
    let v2 = varrho * varrho;
    let effective_rank = (rank_a0 as f64 / v2).max(rank_a as f64);
    let k = 2.0 * v2 - 1.0;
    Ok(OracleRhs {
        linear: bias + 2.0 * (lambda * effective_rank).sqrt(),
        squared: (1.0 + 2.0 / k) * bias * bias + 2.0 * lambda * (1.0 + 1.0 / k) * rank_a as f64,
    })
}

/// Right-hand sides of the in-expectation bounds for one candidate `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationRhs {
    /// Bound on `E rank(Â)`.
    pub rank: f64,
    /// Bound on `E ||Â - A0||`.
    pub linear: f64,
    /// Bound on `E ||Â - A0||^2`.
    pub squared: f64,
}

pub fn expectation_rhs(varrho: f64, lambda: f64, rank_a0: usize, rank_a: usize, bias: f64) -> Result<ExpectationRhs> {
    check_varrho(varrho)?;
    check_nonneg("lambda", lambda)?;
    check_nonneg("bias", bias)?;
    let v2 = varrho * varrho;
    let floor = 1.0 / (4.0 * v2);
    let k = 2.0 * v2 - 1.0;
    let effective_rank = (rank_a as f64).max(rank_a0 as f64 / v2).max(floor);
    Ok(ExpectationRhs {
        rank: (rank_bound(varrho, rank_a0)?).max(floor),
        linear: bias + 2.5 * (lambda * effective_rank).sqrt(),
        squared: (1.0 + 2.0 / k) * bias * bias + 2.0 * lambda * (1.0 + 1.0 / k) * (rank_a as f64).max(0.5),
    })
}

/// Normalized Frobenius rate `4 c sqrt((m1 ∨ m2) log(m) rank(A0) / n)` of the
/// completion estimator under the default tuning rule.
pub fn completion_frobenius_rate(c: f64, m1: usize, m2: usize, n: usize, rank_a0: usize) -> Result<f64> {
    check_dims(m1, m2)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let (_, hi, log_m) = dims(m1, m2);
    Ok(4.0 * c * (hi * log_m * rank_a0 as f64 / n as f64).sqrt())
}

/// Spectral-type error bounds for the hard-threshold estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    /// Bound on `|sigma_j(Â) - sigma_j(A0)|` for `j <= rank(Â)`.
    pub sv_deviation: f64,
    /// Bound on `||Â - A0||_inf`.
    pub spectral: f64,
    /// Bound on `||Â - A0||_q`.
    pub schatten_q: f64,
}

/// Completion form, `mu^2 = m1 m2`.
pub fn thm3_bounds(lambda: f64, m1: usize, m2: usize, rank_a0: usize, q: f64) -> Result<SpectralBounds> {
    check_dims(m1, m2)?;
    spectral_bounds(lambda, (m1 * m2) as f64, rank_a0, q)
}

/// Same bounds for any design with isometry constant `mu^2`: the threshold
/// `sqrt(lambda) mu` replaces `sqrt(lambda m1 m2)`.
pub fn spectral_bounds(lambda: f64, mu_sq: f64, rank_a0: usize, q: f64) -> Result<SpectralBounds> {
    check_nonneg("lambda", lambda)?;
    if q.is_nan() || q < 2.0 {
        return Err(Error::param("q", format!("must lie in [2, inf], got {q}")));
    }
    let tau = (lambda * mu_sq).sqrt();
    let (shape, rank_factor) = if q == f64::INFINITY {
        (1.0, 1.0)
    } else {
        ((4.0f64 / 3.0).powf(2.0 / q), (rank_a0 as f64).powf(1.0 / q))
    };
    Ok(SpectralBounds {
        sv_deviation: tau / 2.0,
        spectral: 1.5 * tau,
        schatten_q: 1.5 * shape * tau * rank_factor,
    })
}

/// Bound on `S` under an exponential concentration tail
/// `P(Delta >= E Delta + t) <= exp(-c t^alpha)`, with the smallest admissible
/// `p = max(2 log(m1 ∧ m2) + 1, alpha)`.
pub fn s_concentration_bound(e_delta: f64, c: f64, alpha: f64, m1: usize, m2: usize) -> Result<f64> {
    check_dims(m1, m2)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    let p = (2.0 * (m1.min(m2) as f64).ln() + 1.0).max(alpha);
    s_concentration_bound_at(e_delta, c, alpha, p)
}

/// Same bound for an explicit exponent `p`.
pub fn s_concentration_bound_at(e_delta: f64, c: f64, alpha: f64, p: f64) -> Result<f64> {
    check_nonneg("e_delta", e_delta)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    if !(p >= alpha && p > 0.0) {
        return Err(Error::param("p", format!("must be >= alpha, got {p}")));
    }
    let tail = std::f64::consts::E * 2f64.powf(1.0 + 1.0 / p) * (p / (c * alpha)).powf(2.0 / alpha);
    Ok(2.0 * e_delta * e_delta + tail)
}

/// Bound on `S` for Gaussian regression noise:
/// `2 (E ||P_V E||)^2 + 4 e sigma^2 (2 log(m1 ∧ m2) + 1)`.
pub fn regression_s_bound(e_delta: f64, sigma: f64, m1: usize, m2: usize) -> Result<f64> {
    check_dims(m1, m2)?;
    check_nonneg("e_delta", e_delta)?;
    check_nonneg("sigma", sigma)?;
    let lo = m1.min(m2) as f64;
    Ok(2.0 * e_delta * e_delta + 4.0 * std::f64::consts::E * sigma * sigma * (2.0 * lo.ln() + 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedBound {
    pub value: f64,
    pub flags: Vec<HypothesisFlag>,
}

/// `(c* e)^2 log(m) / (n (m1 ∧ m2))`, flagged when `n <= n*` or `log m < 5`.
pub fn lemma2_s_bound(setting: &NoiseSetting, m1: usize, m2: usize, n: usize) -> Result<FlaggedBound> {
    let cs = c_star(setting)?;
    let value = s_bound_value(cs, m1, m2, n)?;
    Ok(FlaggedBound {
        value,
        flags: hypothesis_flags(setting, m1, m2, n)?,
    })
}

/// The bare formula with `c*` supplied directly.
pub fn s_bound_value(c_star: f64, m1: usize, m2: usize, n: usize) -> Result<f64> {
    check_dims(m1, m2)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(c_star > 0.0 && c_star.is_finite()) {
        return Err(Error::param("c_star", format!("must be positive, got {c_star}")));
    }
    let (lo, _, log_m) = dims(m1, m2);
    Ok((c_star * std::f64::consts::E).powi(2) * log_m / (n as f64 * lo))
}

/// Which of `n > n*` and `log m >= 5` fail.
pub fn hypothesis_flags(setting: &NoiseSetting, m1: usize, m2: usize, n: usize) -> Result<Vec<HypothesisFlag>> {
    let mut flags = Vec::new();
    if (n as f64) <= n_star(setting, m1, m2)? {
        flags.push(HypothesisFlag::SampleSizeBelowNStar);
    }
    if ((m1 + m2) as f64).ln() < 5.0 {
        flags.push(HypothesisFlag::LogDimensionBelowFive);
    }
    Ok(flags)
}

/// `E ||P_V E||_inf <= sigma (sqrt(m2) + sqrt(r))` for i.i.d. `N(0, sigma^2)` noise.
pub fn regression_noise_expectation_bound(sigma: f64, r: usize, m2: usize) -> Result<f64> {
    check_nonneg("sigma", sigma)?;
    Ok(sigma * ((m2 as f64).sqrt() + (r as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCheck {
    /// `log Gamma(x)`.
    pub lhs: f64,
    /// `(x - 1) log(x / 2)`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `Gamma(x) <= (x/2)^(x-1)` in log space.
pub fn gamma_bound_holds(x: f64) -> Result<GammaCheck> {
    if !(x >= 2.0 && x.is_finite()) {
        return Err(Error::param("x", format!("must be >= 2, got {x}")));
    }
    let lhs = ln_gamma(x);
    let rhs = (x - 1.0) * (x / 2.0).ln();
    Ok(GammaCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12,
    })
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be non-negative, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: NoiseSetting = NoiseSetting::StatisticalLearning { eta: 1.0 };

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rho_statistical_learning_example() {
        let t = 200f64.ln();
        let value = rho(&A1, 100, 100, 100_000, t).unwrap();
        assert!((value - 4.118e-3).abs() < 5e-7, "{value}");
    }

    #[test]
    fn rho_decreases_in_n() {
        let mut last = f64::INFINITY;
        for n in [10, 100, 1_000, 10_000, 100_000, 1_000_000] {
            let v = rho(&A1, 30, 40, n, 2.0).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn c_star_values() {
        assert_eq!(c_star(&NoiseSetting::StatisticalLearning { eta: 2.0 }).unwrap(), 8.0);
        assert_eq!(c_star(&A1).unwrap(), 4.0);
        let b = NoiseSetting::SubExponential {
            omega: 1.0,
            a: 3.0,
            alpha: 1.0,
            c_tilde: 5.0,
        };
        assert_eq!(c_star(&b).unwrap(), 15.0);
    }

    #[test]
    fn n_star_trivial_case() {
        assert!(rel(n_star(&A1, 1, 1).unwrap(), 4.0 * 2f64.ln()) < 1e-15);
    }

    #[test]
    fn lambda_scalings() {
        let base = lambda_completion(1.0, 1.0, 75, 75, 3000).unwrap();
        assert!(rel(lambda_completion(2.0, 1.0, 75, 75, 3000).unwrap(), 4.0 * base) < 1e-14);
        assert!(rel(lambda_completion(1.0, 1.0, 75, 75, 6000).unwrap(), base / 2.0) < 1e-14);

        assert_eq!(lambda_regression(1.0, 1.0, 4, 9).unwrap(), 400.0);
        assert_eq!(lambda_regression(1.0, 0.0, 4, 9).unwrap(), 0.0);
        assert!(rel(lambda_regression(1.0, 2.0, 4, 9).unwrap(), 1600.0) < 1e-14);
    }

    #[test]
    fn rank_bound_values() {
        assert!(rel(rank_bound(1.0, 3).unwrap(), 5.0) < 1e-15);
        assert!(rel(rank_bound(1e6, 3).unwrap(), 3.0) < 1e-9);
        assert_eq!(rank_bound(1.0, 0).unwrap(), 0.0);
        assert!(rank_bound(0.9, 1).is_err());
        assert!(rank_bound(2.0, 3).unwrap() < rank_bound(1.5, 3).unwrap());
    }

    #[test]
    fn oracle_rhs_cases() {
        let rhs = oracle_rhs_prob(1.0, 0.3, 2, 2, 0.0).unwrap();
        assert!(rel(rhs.linear, 2.0 * (0.6f64).sqrt()) < 1e-15);
        assert!(rel(rhs.squared, 4.0 * 0.3 * 2.0) < 1e-15);

        let rhs = oracle_rhs_prob(2.0, 0.3, 2, 0, 1.7).unwrap();
        assert!(rel(rhs.linear, 1.7 + 2.0 * (0.3f64 * 2.0 / 4.0).sqrt()) < 1e-15);
    }

    #[test]
    fn spectral_bound_cases() {
        let b = thm3_bounds(0.01, 10, 20, 3, f64::INFINITY).unwrap();
        assert_eq!(b.schatten_q, b.spectral);
        let b2 = thm3_bounds(0.01, 10, 20, 3, 2.0).unwrap();
        assert!(rel(b2.schatten_q, 2.0 * (200.0f64 * 0.01 * 3.0).sqrt()) < 1e-14);
        let z = thm3_bounds(0.0, 10, 20, 3, 3.0).unwrap();
        assert_eq!((z.sv_deviation, z.spectral, z.schatten_q), (0.0, 0.0, 0.0));
        assert!(thm3_bounds(0.1, 2, 2, 1, 1.5).is_err());
    }

    #[test]
    fn concentration_bound_p_selection() {
        // m1 ∧ m2 = 3 gives p = 2 log 3 + 1 ≈ 3.197; alpha = 10 overrides it.
        let small = s_concentration_bound(0.0, 1.0, 1.0, 3, 5).unwrap();
        let p = 2.0 * 3f64.ln() + 1.0;
        assert!(rel(small, s_concentration_bound_at(0.0, 1.0, 1.0, p).unwrap()) < 1e-15);
        let big = s_concentration_bound(0.0, 1.0, 10.0, 3, 5).unwrap();
        assert!(rel(big, s_concentration_bound_at(0.0, 1.0, 10.0, 10.0).unwrap()) < 1e-15);
        assert!(s_concentration_bound(1.0, 1.0, 1.0, 3, 5).unwrap() > small);
    }

    #[test]
    fn lemma2_flags() {
        let b = lemma2_s_bound(&A1, 75, 75, 3000).unwrap();
        assert!(b.flags.is_empty());
        let half = lemma2_s_bound(&A1, 75, 75, 6000).unwrap();
        assert!(rel(half.value, b.value / 2.0) < 1e-14);
        let small_n = lemma2_s_bound(&A1, 75, 75, 1000).unwrap();
        assert_eq!(small_n.flags, vec![HypothesisFlag::SampleSizeBelowNStar]);
        // e^5 ≈ 148.41: m = 149 clears the dimension flag, m = 148 does not.
        assert!(!lemma2_s_bound(&A1, 74, 75, 100_000)
            .unwrap()
            .flags
            .contains(&HypothesisFlag::LogDimensionBelowFive));
        assert!(lemma2_s_bound(&A1, 74, 74, 100_000)
            .unwrap()
            .flags
            .contains(&HypothesisFlag::LogDimensionBelowFive));
    }

    #[test]
    fn regression_expectation_bound() {
        assert_eq!(regression_noise_expectation_bound(1.0, 4, 9).unwrap(), 5.0);
        assert_eq!(regression_noise_expectation_bound(0.0, 4, 9).unwrap(), 0.0);
        assert_eq!(regression_noise_expectation_bound(2.0, 0, 9).unwrap(), 6.0);
    }

    #[test]
    fn gamma_bound_points() {
        let at2 = gamma_bound_holds(2.0).unwrap();
        assert!(at2.lhs.abs() < 1e-12 && at2.rhs == 0.0 && at2.holds);
        let at4 = gamma_bound_holds(4.0).unwrap();
        assert!(rel(at4.lhs, 6f64.ln()) < 1e-12 && rel(at4.rhs, 8f64.ln()) < 1e-12);
        let at50 = gamma_bound_holds(50.0).unwrap();
        assert!(at50.lhs < at50.rhs - 1.0);
        assert!(gamma_bound_holds(1.5).is_err());
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(rho(&NoiseSetting::StatisticalLearning { eta: 0.0 }, 2, 2, 1, 1.0).is_err());
        let b = NoiseSetting::SubExponential {
            omega: 1.0,
            a: 1.0,
            alpha: 0.5,
            c_tilde: 1.0,
        };
        assert!(n_star(&b, 2, 2).is_err());
        assert!(rho(&A1, 2, 2, 0, 1.0).is_err());
        assert!(rho(&A1, 2, 2, 10, 0.0).is_err());
    }
}
