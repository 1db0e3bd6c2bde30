//! Distribution CDFs, survival functions, quantiles, and samplers for the
//! families used by the tests and the simulation harness.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::{norm_cdf, norm_quantile, norm_sf, reg_gamma_p, reg_gamma_q, reg_inc_beta};

/// A fully parameterized distribution. Parameters are validated at
/// construction; degrees of freedom, shapes, and rates are positive reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64 },
    ChiSquare { df: f64 },
    F { df1: f64, df2: f64 },
    /// Shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
    Beta { shape1: f64, shape2: f64 },
}

fn require_positive(value: f64, what: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {value}")))
    }
}

impl Dist {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidParameter(format!("normal mean must be finite, got {mean}")));
        }
        require_positive(sd, "normal sd")?;
        Ok(Dist::Normal { mean, sd })
    }

    pub fn standard_normal() -> Self {
        Dist::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn student_t(df: f64) -> Result<Self> {
        require_positive(df, "t df")?;
        Ok(Dist::StudentT { df })
    }

    pub fn chi_square(df: f64) -> Result<Self> {
        require_positive(df, "chi-square df")?;
        Ok(Dist::ChiSquare { df })
    }

    pub fn f(df1: f64, df2: f64) -> Result<Self> {
        require_positive(df1, "F df1")?;
        require_positive(df2, "F df2")?;
        Ok(Dist::F { df1, df2 })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        require_positive(shape, "gamma shape")?;
        require_positive(rate, "gamma rate")?;
        Ok(Dist::Gamma { shape, rate })
    }

    pub fn beta(shape1: f64, shape2: f64) -> Result<Self> {
        require_positive(shape1, "beta shape1")?;
        require_positive(shape2, "beta shape2")?;
        Ok(Dist::Beta { shape1, shape2 })
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Dist::StudentT { df } => {
                if x >= 0.0 {
                    1.0 - t_tail(df, x)
                } else {
                    t_tail(df, -x)
                }
            }
            Dist::ChiSquare { df } => {
                if x <= 0.0 {
                    0.0
                } else {
                    reg_gamma_p(0.5 * df, 0.5 * x)
                }
            }
            Dist::F { df1, df2 } => {
                if x <= 0.0 {
                    0.0
                } else {
                    reg_inc_beta(0.5 * df1, 0.5 * df2, df1 * x / (df1 * x + df2))
                }
            }
            Dist::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    reg_gamma_p(shape, rate * x)
                }
            }
            Dist::Beta { shape1, shape2 } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    reg_inc_beta(shape1, shape2, x)
                }
            }
        }
    }

    /// Survival function `P(X > x)`, evaluated directly on the upper tail so
    /// tiny probabilities keep full relative accuracy.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => norm_sf((x - mean) / sd),
            Dist::StudentT { df } => {
                if x >= 0.0 {
                    t_tail(df, x)
                } else {
                    1.0 - t_tail(df, -x)
                }
            }
            Dist::ChiSquare { df } => {
                if x <= 0.0 {
                    1.0
                } else {
                    reg_gamma_q(0.5 * df, 0.5 * x)
                }
            }
            Dist::F { df1, df2 } => {
                if x <= 0.0 {
                    1.0
                } else {
                    // I_{1-y}(b, a) with 1-y computed without cancellation
                    reg_inc_beta(0.5 * df2, 0.5 * df1, df2 / (df1 * x + df2))
                }
            }
            Dist::Gamma { shape, rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    reg_gamma_q(shape, rate * x)
                }
            }
            Dist::Beta { shape1, shape2 } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    reg_inc_beta(shape2, shape1, 1.0 - x)
                }
            }
        }
    }

    /// Quantile function. Errors when `p` is outside (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level must be in (0,1), got {p}")));
        }
        Ok(match *self {
            Dist::Normal { mean, sd } => mean + sd * norm_quantile(p),
            Dist::StudentT { .. } => {
                if p == 0.5 {
                    0.0
                } else if p < 0.5 {
                    -self.bisect_quantile(1.0 - p, 0.0, 1.0)
                } else {
                    self.bisect_quantile(p, 0.0, 1.0)
                }
            }
            Dist::ChiSquare { df } => {
                let seed = df.max(1e-2);
                self.bisect_quantile(p, 0.0, seed)
            }
            Dist::F { .. } => self.bisect_quantile(p, 0.0, 1.0),
            Dist::Gamma { shape, rate } => {
                let seed = (shape / rate).max(1e-2);
                self.bisect_quantile(p, 0.0, seed)
            }
            Dist::Beta { .. } => {
                // support is (0, 1); plain bisection on the closed interval
                let mut lo = 0.0;
                let mut hi = 1.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-16 {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }

    /// Bisection on `[lo, ∞)` after doubling `hi` until it brackets `p`.
    fn bisect_quantile(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut guard = 0;
        while self.cdf(hi) < p && guard < 2100 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-15 * hi.abs().max(1e-12) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Draw one value from the distribution.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => mean + sd * sample_standard_normal(rng),
            Dist::StudentT { df } => {
                let z = sample_standard_normal(rng);
                let w = sample_gamma(0.5 * df, rng) * 2.0 / df;
                z / w.sqrt()
            }
            Dist::ChiSquare { df } => 2.0 * sample_gamma(0.5 * df, rng),
            Dist::F { df1, df2 } => {
                let a = 2.0 * sample_gamma(0.5 * df1, rng) / df1;
                let b = 2.0 * sample_gamma(0.5 * df2, rng) / df2;
                a / b
            }
            Dist::Gamma { shape, rate } => sample_gamma(shape, rng) / rate,
            Dist::Beta { shape1, shape2 } => {
                let g1 = sample_gamma(shape1, rng);
                let g2 = sample_gamma(shape2, rng);
                g1 / (g1 + g2)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Normal { mean, .. } => mean,
            Dist::StudentT { .. } => 0.0,
            Dist::ChiSquare { df } => df,
            Dist::F { df2, .. } => df2 / (df2 - 2.0),
            Dist::Gamma { shape, rate } => shape / rate,
            Dist::Beta { shape1, shape2 } => shape1 / (shape1 + shape2),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Dist::Normal { sd, .. } => sd * sd,
            Dist::StudentT { df } => df / (df - 2.0),
            Dist::ChiSquare { df } => 2.0 * df,
            Dist::F { df1, df2 } => {
                2.0 * df2 * df2 * (df1 + df2 - 2.0) / (df1 * (df2 - 2.0).powi(2) * (df2 - 4.0))
            }
            Dist::Gamma { shape, rate } => shape / (rate * rate),
            Dist::Beta { shape1, shape2 } => {
                let s = shape1 + shape2;
                shape1 * shape2 / (s * s * (s + 1.0))
            }
        }
    }
}

/// Standard normal draw by inverse-CDF transform of one uniform.
#[inline]
pub fn sample_standard_normal(rng: &mut RngStream) -> f64 {
    norm_quantile(rng.uniform())
}

/// Gamma(shape, 1) draw by the Marsaglia–Tsang squeeze; shapes below one use
/// the boost `G(a) = G(a + 1) * U^{1/a}`.
pub fn sample_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boost = rng.uniform().powf(1.0 / shape);
        return sample_gamma(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = sample_standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

fn t_tail(df: f64, x: f64) -> f64 {
    // P(T > x) for x >= 0
    0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + x * x))
}
