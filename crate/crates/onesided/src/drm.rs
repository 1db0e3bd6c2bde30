//! Density ratio model over clustered multi-sample data.
//!
//! `m + 1` populations share a baseline distribution through
//! `dG_k(y)/dG_0(y) = exp(beta_k' q(y))` for a basis `q`. Estimation
//! maximizes the dual of the composite empirical likelihood,
//!
//! ```text
//! l(beta) = - sum_{k,j,l} log( sum_r rho_r exp(beta_r' q(y_{k,j,l})) )
//!           + sum_{k,j,l} beta_k' q(y_{k,j,l}),
//! ```
//!
//! with `rho_r` the observation share of population `r` and `beta_0 = 0`.
//! The dual is smooth and concave, so a quasi-Newton ascent from zero is
//! reliable. Cluster structure plays no role in the point fit (the composite
//! likelihood treats observations as independent); it matters only for the
//! bootstrap.

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::optim;

pub const DRM_GRADIENT_TOL: f64 = 1e-8;
pub const DRM_MAX_ITER: usize = 500;

/// One population: a label and its clusters of responses.
#[derive(Debug, Clone)]
pub struct Population {
    pub label: String,
    pub clusters: Vec<Vec<f64>>,
}

impl Population {
    pub fn new(label: impl Into<String>, clusters: Vec<Vec<f64>>) -> Self {
        Population { label: label.into(), clusters }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn observations(&self) -> impl Iterator<Item = f64> + '_ {
        self.clusters.iter().flatten().copied()
    }

    pub fn n_observations(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }
}

/// Clustered responses from `m + 1` populations; population 0 is the
/// baseline. Cluster size is uniform across the whole dataset.
#[derive(Debug, Clone)]
pub struct ClusteredDataset {
    populations: Vec<Population>,
}

impl ClusteredDataset {
    pub fn new(populations: Vec<Population>) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::BadInput("dataset needs at least one population".into()));
        }
        let mut d: Option<usize> = None;
        for pop in &populations {
            if pop.clusters.is_empty() {
                return Err(Error::BadInput(format!(
                    "population '{}' has no clusters",
                    pop.label
                )));
            }
            for cluster in &pop.clusters {
                if cluster.is_empty() {
                    return Err(Error::BadInput("clusters must be nonempty".into()));
                }
                match d {
                    None => d = Some(cluster.len()),
                    Some(d0) if d0 != cluster.len() => {
                        return Err(Error::BadInput(format!(
                            "cluster size must be uniform: found {} and {}",
                            d0,
                            cluster.len()
                        )))
                    }
                    _ => {}
                }
                if cluster.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BadInput("responses must be finite".into()));
                }
            }
        }
        Ok(ClusteredDataset { populations })
    }

    /// Number of non-baseline populations.
    pub fn m(&self) -> usize {
        self.populations.len() - 1
    }

    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn cluster_size(&self) -> usize {
        self.populations[0].clusters[0].len()
    }

    pub fn population(&self, k: usize) -> &Population {
        &self.populations[k]
    }

    pub fn populations(&self) -> &[Population] {
        &self.populations
    }

    pub fn total_observations(&self) -> usize {
        self.populations.iter().map(Population::n_observations).sum()
    }

    /// Observation shares `rho_r`.
    pub fn observation_shares(&self) -> Vec<f64> {
        let n = self.total_observations() as f64;
        self.populations.iter().map(|p| p.n_observations() as f64 / n).collect()
    }
}

/// Basis `q(y)` linking the populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    /// `(1, y, y^2)`
    #[default]
    Quadratic,
    /// `(1, y, y^2, log y)`; responses must be strictly positive.
    QuadraticLog,
}

impl BasisSpec {
    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::Quadratic => 3,
            BasisSpec::QuadraticLog => 4,
        }
    }

    pub fn requires_positive(&self) -> bool {
        matches!(self, BasisSpec::QuadraticLog)
    }

    #[inline]
    fn eval(&self, y: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = y;
        out[2] = y * y;
        if let BasisSpec::QuadraticLog = self {
            out[3] = y.ln();
        }
    }

    fn check_domain(&self, data: &ClusteredDataset) -> Result<()> {
        if self.requires_positive() {
            for pop in data.populations() {
                if pop.observations().any(|y| y <= 0.0) {
                    return Err(Error::Domain(
                        "quadratic_log basis requires strictly positive responses".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Dual composite empirical log-likelihood at `beta` (an `m x q` array;
/// population 0 is pinned at zero). Zero at `beta = 0` by construction.
pub fn dual_loglik(beta: &[Vec<f64>], data: &ClusteredDataset, basis: BasisSpec) -> Result<f64> {
    let (m, q) = (data.m(), basis.dim());
    check_beta_dims(beta, m, q)?;
    basis.check_domain(data)?;
    let rho = data.observation_shares();
    let mut qy = vec![0.0; q];
    let mut acc = 0.0;
    for (k, pop) in data.populations().iter().enumerate() {
        for y in pop.observations() {
            basis.eval(y, &mut qy);
            let mut denom = rho[0];
            for r in 1..=m {
                denom += rho[r] * dot(&beta[r - 1], &qy).exp();
            }
            acc -= denom.ln();
            if k >= 1 {
                acc += dot(&beta[k - 1], &qy);
            }
        }
    }
    Ok(acc)
}

/// Analytic gradient of [`dual_loglik`] with respect to the free `beta` rows.
pub fn dual_gradient(
    beta: &[Vec<f64>],
    data: &ClusteredDataset,
    basis: BasisSpec,
) -> Result<Vec<Vec<f64>>> {
    let (m, q) = (data.m(), basis.dim());
    check_beta_dims(beta, m, q)?;
    basis.check_domain(data)?;
    let rho = data.observation_shares();
    let mut grad = vec![vec![0.0; q]; m];
    let mut qy = vec![0.0; q];
    let mut ex = vec![0.0; m];
    for (k, pop) in data.populations().iter().enumerate() {
        for y in pop.observations() {
            basis.eval(y, &mut qy);
            let mut denom = rho[0];
            for r in 1..=m {
                ex[r - 1] = rho[r] * dot(&beta[r - 1], &qy).exp();
                denom += ex[r - 1];
            }
            for r in 1..=m {
                let w = ex[r - 1] / denom;
                for c in 0..q {
                    grad[r - 1][c] -= w * qy[c];
                }
            }
            if k >= 1 {
                for c in 0..q {
                    grad[k - 1][c] += qy[c];
                }
            }
        }
    }
    Ok(grad)
}

fn check_beta_dims(beta: &[Vec<f64>], m: usize, q: usize) -> Result<()> {
    if beta.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: beta.len() });
    }
    for row in beta {
        if row.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: row.len() });
        }
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual objective over the distinct pooled support; observations collapse to
/// `(support value, multiplicity)` pairs because the mixture denominator
/// depends on an observation only through `q(y)`.
struct DualProblem<'a> {
    m: usize,
    q: usize,
    support_q: &'a [f64],
    counts: &'a [f64],
    rho: &'a [f64],
    lin: &'a [Vec<f64>],
}

impl DualProblem<'_> {
    fn value_and_grad(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let (m, q) = (self.m, self.q);
        let mut value = 0.0;
        grad.fill(0.0);
        let mut ex = vec![0.0; m];
        for j in 0..self.counts.len() {
            let qj = &self.support_q[j * q..(j + 1) * q];
            let mut denom = self.rho[0];
            for r in 1..=m {
                let e = self.rho[r] * dot(&flat[(r - 1) * q..r * q], qj).exp();
                ex[r - 1] = e;
                denom += e;
            }
            if !denom.is_finite() || denom <= 0.0 {
                return f64::NEG_INFINITY;
            }
            value -= self.counts[j] * denom.ln();
            for r in 1..=m {
                let w = self.counts[j] * ex[r - 1] / denom;
                for c in 0..q {
                    grad[(r - 1) * q + c] -= w * qj[c];
                }
            }
        }
        for r in 0..m {
            for c in 0..q {
                value += flat[r * q + c] * self.lin[r][c];
                grad[r * q + c] += self.lin[r][c];
            }
        }
        value
    }

    /// Negated Hessian (positive semidefinite): block `(r, t)` is
    /// `sum_j count_j w_r (delta_rt - w_t) q_j q_j'`.
    fn negated_hessian(&self, flat: &[f64]) -> SpdMatrix {
        let (m, q) = (self.m, self.q);
        let dim = m * q;
        let mut h = vec![0.0; dim * dim];
        let mut w = vec![0.0; m];
        for j in 0..self.counts.len() {
            let qj = &self.support_q[j * q..(j + 1) * q];
            let mut denom = self.rho[0];
            for r in 1..=m {
                let e = self.rho[r] * dot(&flat[(r - 1) * q..r * q], qj).exp();
                w[r - 1] = e;
                denom += e;
            }
            for r in 0..m {
                w[r] /= denom;
            }
            for r in 0..m {
                for t in 0..=r {
                    let coef =
                        self.counts[j] * w[r] * (if r == t { 1.0 - w[t] } else { -w[t] });
                    if coef == 0.0 {
                        continue;
                    }
                    for a in 0..q {
                        for b in 0..q {
                            h[(r * q + a) * dim + t * q + b] += coef * qj[a] * qj[b];
                        }
                    }
                }
            }
        }
        SpdMatrix::from_fn(dim, |i, j| if j <= i { h[i * dim + j] } else { h[j * dim + i] })
    }

    /// Damped Newton ascent from `flat`; returns (iterations, final gradient
    /// max-norm). Steps are accepted on a strict decrease of the gradient
    /// max-norm: near the optimum the objective itself changes by less than
    /// its evaluation noise, so a value-based test cannot see progress.
    fn newton_polish(&self, flat: &mut [f64], tol: f64, max_iter: usize) -> (usize, f64) {
        let dim = flat.len();
        let mut grad = vec![0.0; dim];
        self.value_and_grad(flat, &mut grad);
        let mut gnorm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        for it in 0..max_iter {
            if gnorm < tol {
                return (it, gnorm);
            }
            let step = match self.negated_hessian(flat).solve(&grad) {
                Ok(s) => s,
                Err(_) => return (it, gnorm),
            };
            let mut tau = 1.0;
            let mut accepted = false;
            while tau > 1e-12 {
                let cand: Vec<f64> =
                    flat.iter().zip(&step).map(|(x, s)| x + tau * s).collect();
                let mut cand_grad = vec![0.0; dim];
                let cand_value = self.value_and_grad(&cand, &mut cand_grad);
                let cand_gnorm = cand_grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
                if cand_value.is_finite() && cand_gnorm < gnorm * 0.999 {
                    flat.copy_from_slice(&cand);
                    grad = cand_grad;
                    gnorm = cand_gnorm;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
            if !accepted {
                return (it, gnorm);
            }
        }
        (max_iter, gnorm)
    }
}

/// Fitted density ratio model.
#[derive(Debug, Clone)]
pub struct DrmFit {
    pub basis: BasisSpec,
    /// `m` coefficient vectors; the baseline is identically zero.
    pub beta: Vec<Vec<f64>>,
    /// Sorted distinct pooled responses.
    pub support: Vec<f64>,
    /// Baseline mass at each support point (tied responses merged).
    pub baseline_mass: Vec<f64>,
    /// Observation shares `rho_0..rho_m`.
    pub rho: Vec<f64>,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub iterations: usize,
    /// Cumulative fitted mass per population over the support.
    cum_mass: Vec<Vec<f64>>,
    /// Pointwise fitted mass per population over the support.
    point_mass: Vec<Vec<f64>>,
}

impl DrmFit {
    /// Fitted CDF of population `r` at `y`. The fitted distribution puts
    /// mass only on the pooled support, counted with strict inequality
    /// (`support point < y`), so the function is left-continuous.
    pub fn fitted_cdf(&self, r: usize, y: f64) -> f64 {
        let below = self.support.partition_point(|&s| s < y);
        if below == 0 {
            0.0
        } else {
            self.cum_mass[r][below - 1].min(1.0)
        }
    }

    /// Left-continuous generalized inverse over the discrete support: the
    /// smallest support point whose inclusive cumulative mass reaches
    /// `alpha`.
    pub fn quantile(&self, r: usize, alpha: f64) -> f64 {
        debug_assert!(alpha > 0.0 && alpha < 1.0);
        let cum = &self.cum_mass[r];
        let idx = cum.partition_point(|&c| c < alpha);
        if idx >= self.support.len() {
            *self.support.last().unwrap()
        } else {
            self.support[idx]
        }
    }

    /// Fitted mean of population `r`.
    pub fn mean(&self, r: usize) -> f64 {
        self.point_mass[r].iter().zip(&self.support).map(|(w, s)| w * s).sum()
    }

    /// Largest deviation of `sum_j p_j exp(beta_r' q(s_j))` from one across
    /// populations.
    pub fn normalization_error(&self) -> f64 {
        self.point_mass
            .iter()
            .map(|w| (w.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Maximize the dual composite empirical likelihood. Non-convergence is
/// reported through the `converged` flag and diagnostics rather than an
/// error; callers decide whether a non-converged fit is fatal.
pub fn fit_drm(
    data: &ClusteredDataset,
    basis: BasisSpec,
    init: Option<&[Vec<f64>]>,
) -> Result<DrmFit> {
    let m = data.m();
    let q = basis.dim();
    basis.check_domain(data)?;
    if let Some(b) = init {
        check_beta_dims(b, m, q)?;
    }

    // canonical per-population views: sorted observations, so the fit is a
    // function of the pooled multisets only
    let mut sorted_pops: Vec<Vec<f64>> = data
        .populations()
        .iter()
        .map(|p| {
            let mut v: Vec<f64> = p.observations().collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        })
        .collect();
    let n_total: usize = sorted_pops.iter().map(Vec::len).sum();
    let nf = n_total as f64;
    let rho: Vec<f64> = sorted_pops.iter().map(|v| v.len() as f64 / nf).collect();

    // pooled sorted distinct support with multiplicities
    let mut pooled: Vec<f64> = Vec::with_capacity(n_total);
    for pop in &sorted_pops {
        pooled.extend_from_slice(pop);
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut support: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for &y in &pooled {
        match support.last() {
            Some(&s) if s == y => *counts.last_mut().unwrap() += 1.0,
            _ => {
                support.push(y);
                counts.push(1.0);
            }
        }
    }
    if support.len() < q + 1 {
        return Err(Error::CollinearBasis);
    }

    // basis values over the support, with column scales for preconditioning
    // and a collinearity screen
    let n_support = support.len();
    let mut support_q = vec![0.0; n_support * q];
    let mut qbuf = vec![0.0; q];
    for (j, &s) in support.iter().enumerate() {
        basis.eval(s, &mut qbuf);
        support_q[j * q..(j + 1) * q].copy_from_slice(&qbuf);
    }
    let mut col_scale = vec![0.0; q];
    for c in 0..q {
        let ms: f64 =
            (0..n_support).map(|j| support_q[j * q + c].powi(2)).sum::<f64>() / n_support as f64;
        col_scale[c] = ms.sqrt().max(1e-12);
    }
    let gram = SpdMatrix::from_fn(q, |a, b| {
        (0..n_support)
            .map(|j| {
                (support_q[j * q + a] / col_scale[a]) * (support_q[j * q + b] / col_scale[b])
            })
            .sum::<f64>()
            / n_support as f64
    });
    if gram.factor().is_err() {
        return Err(Error::CollinearBasis);
    }

    if m == 0 {
        let masses: Vec<f64> = counts.iter().map(|c| c / nf).collect();
        let cum: Vec<f64> = masses
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        return Ok(DrmFit {
            basis,
            beta: Vec::new(),
            support,
            baseline_mass: masses.clone(),
            rho,
            converged: true,
            final_grad_norm: 0.0,
            iterations: 0,
            cum_mass: vec![cum],
            point_mass: vec![masses],
        });
    }

    // linear-term coefficients: sum of q over each non-baseline population,
    // accumulated in sorted order
    let mut lin = vec![vec![0.0; q]; m];
    for k in 1..=m {
        let mut acc = vec![0.0; q];
        for &y in &sorted_pops[k] {
            basis.eval(y, &mut qbuf);
            for c in 0..q {
                acc[c] += qbuf[c];
            }
        }
        lin[k - 1] = acc;
    }
    sorted_pops.clear();

    let problem = DualProblem { m, q, support_q: &support_q, counts: &counts, rho: &rho, lin: &lin };
    let objective = |flat: &[f64], grad: &mut [f64]| problem.value_and_grad(flat, grad);

    let x0: Vec<f64> = match init {
        Some(b) => b.iter().flatten().copied().collect(),
        None => vec![0.0; m * q],
    };
    let h0: Vec<f64> = (0..m * q).map(|i| 4.0 / (nf * col_scale[i % q].powi(2))).collect();
    let result = optim::maximize(objective, x0, &h0, DRM_GRADIENT_TOL, DRM_MAX_ITER);

    // the quasi-Newton ascent can stall in the last digits on the badly
    // scaled polynomial columns; a couple of damped Newton steps with the
    // exact Hessian finish the job
    let mut flat = result.x;
    let mut iterations = result.iterations;
    let mut grad_norm = result.grad_max_norm;
    let mut converged = result.converged;
    if !converged {
        let polished = problem.newton_polish(&mut flat, DRM_GRADIENT_TOL, 30);
        iterations += polished.0;
        grad_norm = polished.1;
        converged = grad_norm < DRM_GRADIENT_TOL;
    }

    let beta: Vec<Vec<f64>> = (0..m).map(|r| flat[r * q..(r + 1) * q].to_vec()).collect();

    // baseline masses and per-population fitted masses over the support
    let mut baseline_mass = vec![0.0; n_support];
    let mut point_mass = vec![vec![0.0; n_support]; m + 1];
    for j in 0..n_support {
        let qj = &support_q[j * q..(j + 1) * q];
        let mut denom = rho[0];
        let mut ratios = vec![1.0; m + 1];
        for r in 1..=m {
            let e = dot(&beta[r - 1], qj).exp();
            ratios[r] = e;
            denom += rho[r] * e;
        }
        let p0 = counts[j] / (nf * denom);
        baseline_mass[j] = p0;
        for r in 0..=m {
            point_mass[r][j] = p0 * ratios[r];
        }
    }
    let cum_mass: Vec<Vec<f64>> = point_mass
        .iter()
        .map(|w| {
            w.iter()
                .scan(0.0, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect();

    let mut fit = DrmFit {
        basis,
        beta,
        support,
        baseline_mass,
        rho,
        converged,
        final_grad_norm: grad_norm,
        iterations,
        cum_mass,
        point_mass,
    };
    if fit.converged && fit.normalization_error() > 1e-6 {
        fit.converged = false;
    }
    Ok(fit)
}
