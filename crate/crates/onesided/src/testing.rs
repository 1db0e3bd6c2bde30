//! One-sided multi-parameter tests.
//!
//! All tests address `H0: mu <= 0` against `H1: mu not<= 0` given an estimate
//! `x_hat` and a covariance estimate:
//!
//! - [`lrt_test`]: the likelihood ratio test calibrated against its least
//!   favorable configuration (perfect negative correlation);
//! - [`mlr_test`]: the same statistic calibrated against the mixture null
//!   implied by the *estimated* correlation, which restores power when the
//!   true correlation is away from -1;
//! - [`pw_test`]: extends the least-favorable region with a two-stage rule
//!   (large unprojected quadratic plus at least one significant marginal t
//!   statistic); bivariate only;
//! - [`uit_test`]: union-intersection / Bonferroni on the marginals.
//!
//! Under the null boundary the projected statistic is distributed as a finite
//! mixture over active sets `s`: `P(T_n > c) = sum_s w_s P(F_{|s|, n-|s|} >
//! (1/|s| - 1/n) c)` with `w_s = Pr{(Sigma_s)^{-1}} Pr{Sigma_{s'|s}}` built
//! from orthant probabilities. Both the finite-sample F calibration and its
//! large-sample chi-square limit are provided.

use crate::cone::{t_statistic, TStatistic};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::linalg::{CovEstimate, CovKind, SpdMatrix};
use crate::rng::RngStream;
use crate::special::{norm_quantile, norm_sf};

use serde::Deserialize;

/// Monte Carlo sample size for orthant probabilities beyond the closed-form
/// dimensions.
pub const DEFAULT_ORTHANT_MC: usize = 200_000;

/// Statistics in p-values at or below this are treated as an exact zero of
/// the projected statistic.
const T_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrt,
    Pw,
    MLr,
    Uit,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lrt => "LRT",
            Method::Pw => "PW",
            Method::MLr => "mLR",
            Method::Uit => "UIT",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrt" => Ok(Method::Lrt),
            "pw" => Ok(Method::Pw),
            "mlr" => Ok(Method::MLr),
            "uit" => Ok(Method::Uit),
            other => Err(Error::BadInput(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Finite-sample F mixture.
    #[default]
    ExactF,
    /// Large-sample chi-square mixture.
    AsymptoticChisq,
}

impl Calibration {
    pub fn name(&self) -> &'static str {
        match self {
            Calibration::ExactF => "exact_f",
            Calibration::AsymptoticChisq => "asymptotic_chisq",
        }
    }
}

/// Stage details reported by the PW test.
#[derive(Debug, Clone)]
pub struct PwParts {
    /// Unprojected quadratic `n x' S^{-1} x`.
    pub full_quadratic: f64,
    pub t_stats: [f64; 2],
    pub t_pvalues: [f64; 2],
    /// p-value of the full quadratic under least-favorable calibration.
    pub quadratic_pvalue: f64,
    /// `max(quadratic_pvalue, min(t_pvalues))`: the two-stage component of
    /// the test.
    pub two_stage_pvalue: f64,
}

/// Outcome of a one-sided test.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub method: Method,
    /// Projected statistic `T_n` (the UIT reports its marginal maximum).
    pub statistic: f64,
    pub p_value: f64,
    pub calibration: Calibration,
    pub alpha: f64,
    pub reject: bool,
    /// Plug-in correlation used by the calibration (bivariate case).
    pub rho: Option<f64>,
    /// Full plug-in correlation matrix.
    pub correlation: SpdMatrix,
    /// PW-specific detail.
    pub pw: Option<PwParts>,
}

/// Mixture weights over nonempty active sets plus the atom at zero.
#[derive(Debug, Clone)]
pub struct MixtureWeights {
    /// `(subset, weight)` for every nonempty subset of coordinates.
    pub subsets: Vec<(Vec<usize>, f64)>,
    /// Mass of the atom at `T_n = 0`.
    pub zero_mass: f64,
}

impl MixtureWeights {
    /// Sum of the continuous-part weights.
    pub fn total(&self) -> f64 {
        self.subsets.iter().map(|(_, w)| w).sum()
    }

    /// Weights aggregated by subset size; index `k-1` holds the size-`k` sum.
    pub fn by_size(&self, p: usize) -> Vec<f64> {
        let mut agg = vec![0.0; p];
        for (s, w) in &self.subsets {
            agg[s.len() - 1] += w;
        }
        agg
    }
}

/// `Pr{X > 0}` for `X ~ N(0, Sigma)`. Closed form for one and two
/// dimensions, Monte Carlo above that.
pub fn orthant_probability(sigma: &SpdMatrix, n_mc: usize, rng: &mut RngStream) -> Result<f64> {
    match sigma.dim() {
        0 => Err(Error::Domain("orthant probability of an empty vector".into())),
        1 => {
            if sigma.get(0, 0) <= 0.0 {
                return Err(Error::DegenerateMatrix);
            }
            Ok(0.5)
        }
        2 => {
            let rho = sigma.correlation_of(0, 1)?;
            Ok(0.25 + rho.asin() / (2.0 * std::f64::consts::PI))
        }
        p => {
            if n_mc == 0 {
                return Err(Error::BadInput("orthant Monte Carlo size must be positive".into()));
            }
            let factor = sigma.factor()?;
            let mut z = vec![0.0; p];
            let mut y = vec![0.0; p];
            let mut hits = 0usize;
            for _ in 0..n_mc {
                for zi in z.iter_mut() {
                    *zi = norm_quantile(rng.uniform());
                }
                factor.multiply(&z, &mut y);
                if y.iter().all(|&v| v > 0.0) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / n_mc as f64)
        }
    }
}

/// Mixture weights of the null distribution of the projected statistic for a
/// covariance `Sigma`: for every nonempty subset `s`,
/// `w_s = Pr{(Sigma_s)^{-1}} * Pr{Sigma_{s'|s}}` (the second factor is 1 when
/// `s` covers everything), and the remaining mass sits in the atom at zero.
pub fn mixture_weights(sigma: &SpdMatrix, n_mc: usize, rng: &mut RngStream) -> Result<MixtureWeights> {
    let p = sigma.dim();
    if p == 0 || p > 8 {
        return Err(Error::UnsupportedDimension { dim: p, reason: "mixture weights enumerate subsets; dimensions 1..=8 are supported" });
    }
    let mut subsets = Vec::with_capacity((1usize << p) - 1);
    for mask in 1u32..(1 << p) {
        let s: Vec<usize> = (0..p).filter(|i| mask >> i & 1 == 1).collect();
        let w_inv = match s.len() {
            1 => 0.5,
            2 => {
                // inverting a 2x2 block flips the sign of its correlation:
                // Pr{(Sigma_s)^{-1}} = 1/4 + asin(-rho)/2pi = acos(rho)/2pi
                let sub = sigma.submatrix(&s);
                let rho = sub.correlation_of(0, 1)?;
                rho.acos() / (2.0 * std::f64::consts::PI)
            }
            _ => {
                let inv = sigma.submatrix(&s).inverse()?;
                orthant_probability(&inv, n_mc, rng)?
            }
        };
        let w_cond = if s.len() == p {
            1.0
        } else {
            let cond = sigma.conditional_cov(&s)?;
            orthant_probability(&cond, n_mc, rng)?
        };
        subsets.push((s, w_inv * w_cond));
    }
    let total: f64 = subsets.iter().map(|(_, w)| w).sum();
    Ok(MixtureWeights { subsets, zero_mass: 1.0 - total })
}

/// Survival of the mixture null at `c`: `sum_s w_s P(F_{|s|, n-|s|} >
/// (1/|s| - 1/n) c)` in finite-sample mode, with the F terms replaced by
/// `chi-square_{|s|}` survivals at `c` asymptotically. `c = 0` returns the
/// total continuous mass.
pub fn mixture_survival(
    c: f64,
    weights: &MixtureWeights,
    n: usize,
    calibration: Calibration,
) -> Result<f64> {
    if c < 0.0 {
        return Err(Error::Domain(format!("mixture survival needs c >= 0, got {c}")));
    }
    let p = weights.subsets.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
    if calibration == Calibration::ExactF && n <= p {
        return Err(Error::BadInput(format!(
            "finite-sample calibration needs n > p, got n={n}, p={p}"
        )));
    }
    if c == 0.0 {
        return Ok(weights.total());
    }
    let by_size = weights.by_size(p);
    let mut acc = 0.0;
    for (idx, &w) in by_size.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let k = (idx + 1) as f64;
        let term = match calibration {
            Calibration::ExactF => {
                let nf = n as f64;
                Dist::f(k, nf - k)?.survival((1.0 / k - 1.0 / nf) * c)
            }
            Calibration::AsymptoticChisq => Dist::chi_square(k)?.survival(c),
        };
        acc += w * term;
    }
    Ok(acc)
}

/// Least-favorable p-value of the projected statistic: equal weights on the
/// two largest active-set sizes. `t_obs = 0` sits in the atom and returns 1.
pub fn lrt_pvalue(t_obs: f64, n: usize, p: usize, calibration: Calibration) -> Result<f64> {
    if p < 1 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if t_obs < 0.0 {
        return Err(Error::Domain(format!("statistic must be nonnegative, got {t_obs}")));
    }
    if calibration == Calibration::ExactF && n <= p {
        return Err(Error::BadInput(format!(
            "finite-sample calibration needs n > p, got n={n}, p={p}"
        )));
    }
    if t_obs <= T_ZERO {
        return Ok(1.0);
    }
    let nf = n as f64;
    let upper = match calibration {
        Calibration::ExactF => {
            let k = p as f64;
            Dist::f(k, nf - k)?.survival((1.0 / k - 1.0 / nf) * t_obs)
        }
        Calibration::AsymptoticChisq => Dist::chi_square(p as f64)?.survival(t_obs),
    };
    let lower = if p == 1 {
        0.0
    } else {
        match calibration {
            Calibration::ExactF => {
                let k = (p - 1) as f64;
                Dist::f(k, nf - k)?.survival((1.0 / k - 1.0 / nf) * t_obs)
            }
            Calibration::AsymptoticChisq => Dist::chi_square((p - 1) as f64)?.survival(t_obs),
        }
    };
    Ok(0.5 * (lower + upper))
}

/// Critical value of the least-favorable test: the root of
/// `lrt_pvalue(c) = alpha`, by bracketed bisection to 1e-8.
pub fn lrt_critical(alpha: f64, n: usize, p: usize) -> Result<f64> {
    lrt_critical_impl(alpha, |c| lrt_pvalue(c, n, p, Calibration::ExactF))
}

/// Critical value when the bivariate correlation is known: the root of the
/// known-correlation mixture at level `alpha`.
pub fn lrt_critical_known_rho(alpha: f64, n: usize, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation must lie in [-1,1], got {rho}")));
    }
    if n <= 2 {
        return Err(Error::BadInput("need n > 2".into()));
    }
    let w2 = rho.acos() / (2.0 * std::f64::consts::PI);
    let nf = n as f64;
    lrt_critical_impl(alpha, move |c| {
        let f1 = Dist::f(1.0, nf - 1.0)?.survival((1.0 - 1.0 / nf) * c);
        let f2 = Dist::f(2.0, nf - 2.0)?.survival((0.5 - 1.0 / nf) * c);
        Ok(0.5 * f1 + w2 * f2)
    })
}

fn lrt_critical_impl(alpha: f64, pvalue: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while pvalue(hi)? > alpha {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::NoBracket);
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if pvalue(mid)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-favorable LRT as a full test outcome.
pub fn lrt_test(
    x_hat: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    calibration: Calibration,
) -> Result<TestOutcome> {
    let ts = t_statistic(x_hat, cov)?;
    let p_value = lrt_pvalue(ts.t_n, cov.sample_size, x_hat.len(), calibration)?;
    Ok(outcome(Method::Lrt, ts, p_value, calibration, alpha, None))
}

/// Mixture-calibrated test: the projected statistic is referred to the
/// mixture null with weights computed from the estimated correlation matrix.
/// Dimensions above two use Monte Carlo orthant probabilities on a fixed
/// internal stream, so results are deterministic.
pub fn mlr_test(
    x_hat: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    calibration: Calibration,
) -> Result<TestOutcome> {
    let ts = t_statistic(x_hat, cov)?;
    let mut rng = RngStream::new(0x6f72_7468_616e_7470, 0);
    let weights = mixture_weights(&ts.correlation, DEFAULT_ORTHANT_MC, &mut rng)?;
    let p_value = if ts.t_n <= T_ZERO {
        1.0
    } else {
        mixture_survival(ts.t_n, &weights, cov.sample_size, calibration)?
    };
    Ok(outcome(Method::MLr, ts, p_value, calibration, alpha, None))
}

/// PW test (bivariate only). The rejection region extends the
/// least-favorable region with a two-stage escape hatch: reject when the
/// projected statistic exceeds the least-favorable critical value, or when
/// the unprojected quadratic exceeds it and at least one marginal t
/// statistic is significant. The region therefore covers the LRT region by
/// construction, and the reported p-value is
/// `min(p_projected, max(p_quadratic, min(p_t1, p_t2)))`, whose comparison
/// with `alpha` reproduces the region membership exactly.
pub fn pw_test(
    x_hat: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    calibration: Calibration,
) -> Result<TestOutcome> {
    if x_hat.len() != 2 || cov.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            dim: x_hat.len(),
            reason: "the PW construction is defined for two parameters",
        });
    }
    let ts = t_statistic(x_hat, cov)?;
    let n = cov.sample_size;
    let nf = n as f64;
    let projected_pvalue = lrt_pvalue(ts.t_n, n, 2, calibration)?;
    let full_quadratic = match cov.kind {
        CovKind::PerObservation => nf * cov.matrix.quad_form(x_hat)?,
        CovKind::OfEstimator => cov.matrix.quad_form(x_hat)?,
    };
    let quadratic_pvalue = lrt_pvalue(full_quadratic, n, 2, calibration)?;
    // marginal t statistics against the working matrix S (= n S* in the
    // estimator-covariance case)
    let mut t_stats = [0.0f64; 2];
    let mut t_pvalues = [0.0f64; 2];
    let t_dist = Dist::student_t(nf - 1.0)?;
    for j in 0..2 {
        let s_jj = match cov.kind {
            CovKind::PerObservation => cov.matrix.get(j, j),
            CovKind::OfEstimator => nf * cov.matrix.get(j, j),
        };
        if s_jj <= 0.0 {
            return Err(Error::DegenerateMatrix);
        }
        let t = x_hat[j] / (s_jj / (nf - 1.0)).sqrt();
        t_stats[j] = t;
        t_pvalues[j] = match calibration {
            Calibration::ExactF => t_dist.survival(t),
            Calibration::AsymptoticChisq => norm_sf(t),
        };
    }
    let two_stage_pvalue = quadratic_pvalue.max(t_pvalues[0].min(t_pvalues[1]));
    let p_value = if x_hat.iter().all(|&v| v <= T_ZERO) {
        1.0
    } else {
        projected_pvalue.min(two_stage_pvalue)
    };
    let pw = PwParts { full_quadratic, t_stats, t_pvalues, quadratic_pvalue, two_stage_pvalue };
    Ok(outcome(Method::Pw, ts, p_value, calibration, alpha, Some(pw)))
}

/// Union-intersection test. With a known identity covariance the rule
/// compares the largest componentwise mean against
/// `z_{(1-alpha)^{1/p}} / sqrt(n)`; otherwise each margin gets a one-sided t
/// test and the p-value is Bonferroni-combined.
pub fn uit_test(
    x_hat: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    known_identity: bool,
) -> Result<TestOutcome> {
    let p = x_hat.len();
    if p == 0 || cov.dim() != p {
        return Err(Error::DimensionMismatch { expected: cov.dim(), got: p });
    }
    let ts = t_statistic(x_hat, cov)?;
    let n = cov.sample_size;
    let nf = n as f64;
    let (statistic, p_value) = if known_identity {
        let max_mean = x_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cdf_each = 1.0 - norm_sf(nf.sqrt() * max_mean);
        (max_mean, 1.0 - cdf_each.powi(p as i32))
    } else {
        let t_dist = Dist::student_t(nf - 1.0)?;
        let mut min_p = f64::INFINITY;
        let mut max_t = f64::NEG_INFINITY;
        for j in 0..p {
            let s_jj = match cov.kind {
                CovKind::PerObservation => cov.matrix.get(j, j),
                CovKind::OfEstimator => nf * cov.matrix.get(j, j),
            };
            if s_jj <= 0.0 {
                return Err(Error::DegenerateMatrix);
            }
            let t = x_hat[j] / (s_jj / (nf - 1.0)).sqrt();
            max_t = max_t.max(t);
            min_p = min_p.min(t_dist.survival(t));
        }
        (max_t, (p as f64 * min_p).min(1.0))
    };
    let mut out = outcome(Method::Uit, ts, p_value, Calibration::ExactF, alpha, None);
    out.statistic = statistic;
    Ok(out)
}

/// Critical value for the known-identity union-intersection rule.
pub fn uit_identity_critical(alpha: f64, p: usize, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if p == 0 || n == 0 {
        return Err(Error::Domain("p and n must be positive".into()));
    }
    Ok(norm_quantile((1.0 - alpha).powf(1.0 / p as f64)) / (n as f64).sqrt())
}

/// Map an estimate and its target into the canonical frame: testing
/// `theta >= theta*` is testing `mu <= 0` for `mu = -(theta - theta*)`, so
/// the returned vector is `x = -(theta_hat - theta_star)`.
pub fn monitor_transform(theta_hat: &[f64], theta_star: &[f64]) -> Result<Vec<f64>> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::DimensionMismatch { expected: theta_hat.len(), got: theta_star.len() });
    }
    Ok(theta_hat.iter().zip(theta_star).map(|(h, s)| -(h - s)).collect())
}

fn outcome(
    method: Method,
    ts: TStatistic,
    p_value: f64,
    calibration: Calibration,
    alpha: f64,
    pw: Option<PwParts>,
) -> TestOutcome {
    TestOutcome {
        method,
        statistic: ts.t_n,
        p_value,
        calibration,
        alpha,
        reject: p_value < alpha,
        rho: ts.rho(),
        correlation: ts.correlation,
        pw,
    }
}
