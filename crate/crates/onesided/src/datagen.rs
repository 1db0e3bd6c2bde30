//! Scenario generators for clustered data: a random-effect normal model and
//! a multivariate gamma construction, plus the analytic marginal quantiles
//! used to validate configurations.

use serde::Deserialize;

use crate::dist::{sample_gamma, sample_standard_normal, Dist};
use crate::drm::{ClusteredDataset, Population};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::norm_quantile;

/// Random-effect normal model: `y_{k,j,l} = mu_k + gamma_{k,j} + eps_{k,j,l}`
/// with `gamma ~ N(0, sigma_gamma_k^2)` shared inside a cluster and
/// `eps ~ N(0, sigma_e^2)` independent. The marginal of an observation from
/// population `k` is `N(mu_k, sigma_gamma_k^2 + sigma_e^2)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalScenario {
    pub mu: Vec<f64>,
    pub sigma_gamma: Vec<f64>,
    pub sigma_e: f64,
    pub n_clusters: Vec<usize>,
    pub d: usize,
}

/// Clustered multivariate gamma: per cluster draw `W ~ Gamma(a_k + b, rate
/// beta_k)` and `U_1..U_d` iid `Beta(a_k, b)`, and emit `W * U_l`. Marginals
/// are `Gamma(a_k, rate beta_k)` with within-cluster correlation
/// `a_k / (a_k + b)`. An infinite `b` means independent units, emitted
/// directly as gamma draws.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaScenario {
    pub a: Vec<f64>,
    pub beta: Vec<f64>,
    pub b: f64,
    pub n_clusters: Vec<usize>,
    pub d: usize,
}

impl NormalScenario {
    pub fn validate(&self) -> Result<()> {
        let m1 = self.mu.len();
        if m1 == 0 {
            return Err(Error::InvalidParameter("need at least one population".into()));
        }
        if self.sigma_gamma.len() != m1 || self.n_clusters.len() != m1 {
            return Err(Error::DimensionMismatch { expected: m1, got: self.sigma_gamma.len().min(self.n_clusters.len()) });
        }
        if self.sigma_gamma.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) || !(self.sigma_e >= 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be nonnegative".into()));
        }
        if self.n_clusters.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("need at least two clusters per population".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("cluster size must be positive".into()));
        }
        Ok(())
    }

    pub fn n_populations(&self) -> usize {
        self.mu.len()
    }

    pub fn generate(&self, rng: &mut RngStream) -> Result<ClusteredDataset> {
        self.validate()?;
        let mut pops = Vec::with_capacity(self.mu.len());
        for k in 0..self.mu.len() {
            let mut clusters = Vec::with_capacity(self.n_clusters[k]);
            for _ in 0..self.n_clusters[k] {
                let shared = self.sigma_gamma[k] * sample_standard_normal(rng);
                let cluster: Vec<f64> = (0..self.d)
                    .map(|_| self.mu[k] + shared + self.sigma_e * sample_standard_normal(rng))
                    .collect();
                clusters.push(cluster);
            }
            pops.push(Population::new(k.to_string(), clusters));
        }
        ClusteredDataset::new(pops)
    }

    /// Marginal quantile of population `k`:
    /// `mu_k + z_alpha sqrt(sigma_gamma_k^2 + sigma_e^2)`.
    pub fn quantile(&self, k: usize, alpha: f64) -> Result<f64> {
        self.validate()?;
        if k >= self.mu.len() {
            return Err(Error::Domain(format!("population index {k} out of range")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("quantile level must be in (0,1), got {alpha}")));
        }
        let sd = (self.sigma_gamma[k].powi(2) + self.sigma_e.powi(2)).sqrt();
        Ok(self.mu[k] + norm_quantile(alpha) * sd)
    }

    /// Within-cluster correlation of population `k`.
    pub fn cluster_correlation(&self, k: usize) -> f64 {
        let vg = self.sigma_gamma[k].powi(2);
        vg / (vg + self.sigma_e.powi(2))
    }
}

impl GammaScenario {
    pub fn validate(&self) -> Result<()> {
        let m1 = self.a.len();
        if m1 == 0 {
            return Err(Error::InvalidParameter("need at least one population".into()));
        }
        if self.beta.len() != m1 || self.n_clusters.len() != m1 {
            return Err(Error::DimensionMismatch { expected: m1, got: self.beta.len().min(self.n_clusters.len()) });
        }
        if self.a.iter().chain(self.beta.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("shapes and rates must be positive".into()));
        }
        if !(self.b > 0.0) {
            return Err(Error::InvalidParameter("beta shape b must be positive (may be inf)".into()));
        }
        if self.n_clusters.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("need at least two clusters per population".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("cluster size must be positive".into()));
        }
        Ok(())
    }

    pub fn n_populations(&self) -> usize {
        self.a.len()
    }

    pub fn independent_units(&self) -> bool {
        self.b.is_infinite()
    }

    pub fn generate(&self, rng: &mut RngStream) -> Result<ClusteredDataset> {
        self.validate()?;
        let mut pops = Vec::with_capacity(self.a.len());
        for k in 0..self.a.len() {
            let (a_k, rate_k) = (self.a[k], self.beta[k]);
            let mut clusters = Vec::with_capacity(self.n_clusters[k]);
            for _ in 0..self.n_clusters[k] {
                let cluster: Vec<f64> = if self.independent_units() {
                    (0..self.d).map(|_| sample_gamma(a_k, rng) / rate_k).collect()
                } else {
                    let w = sample_gamma(a_k + self.b, rng) / rate_k;
                    (0..self.d)
                        .map(|_| {
                            let g1 = sample_gamma(a_k, rng);
                            let g2 = sample_gamma(self.b, rng);
                            w * g1 / (g1 + g2)
                        })
                        .collect()
                };
                clusters.push(cluster);
            }
            pops.push(Population::new(k.to_string(), clusters));
        }
        ClusteredDataset::new(pops)
    }

    /// Marginal quantile of population `k`: the `Gamma(a_k, rate beta_k)`
    /// quantile.
    pub fn quantile(&self, k: usize, alpha: f64) -> Result<f64> {
        self.validate()?;
        if k >= self.a.len() {
            return Err(Error::Domain(format!("population index {k} out of range")));
        }
        Dist::gamma(self.a[k], self.beta[k])?.quantile(alpha)
    }

    /// Within-cluster correlation `a_k / (a_k + b)` (zero when independent).
    pub fn cluster_correlation(&self, k: usize) -> f64 {
        if self.independent_units() {
            0.0
        } else {
            self.a[k] / (self.a[k] + self.b)
        }
    }
}
