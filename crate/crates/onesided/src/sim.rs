//! Monte Carlo harness: rejection-rate grids for multivariate normal
//! samples, clustered monitoring experiments driven by the density ratio
//! model with bootstrap covariances, and known-correlation critical-value
//! tables.
//!
//! Replicates draw from substreams keyed by `(seed, cell, replicate)`, and
//! aggregation sums integer counts in replicate order, so a report is a pure
//! function of its configuration regardless of how many workers run it.

use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::bootstrap::{cluster_bootstrap_cov, BootstrapSpec, DEFAULT_BOOTSTRAP_B};
use crate::datagen::{GammaScenario, NormalScenario};
use crate::drm::{fit_drm, BasisSpec, ClusteredDataset, DrmFit};
use crate::error::{Error, Result};
use crate::linalg::{CovEstimate, SpdMatrix};
use crate::rng::RngStream;
use crate::testing::{
    lrt_critical_known_rho, lrt_test, mlr_test, monitor_transform, pw_test, uit_test, Calibration,
    Method, TestOutcome,
};

/// Quantile levels monitored by the clustered experiments: the 5th
/// percentile and the median.
pub const MONITOR_LEVELS: [f64; 2] = [0.05, 0.5];

/// Redraw budget for a replicate whose model fit or bootstrap fails.
const MAX_REPLICATE_REDRAWS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    MvnGrid,
    DrmNormal,
    DrmGamma,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::MvnGrid => "mvn_grid",
            Experiment::DrmNormal => "drm_normal",
            Experiment::DrmGamma => "drm_gamma",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scenario {
    Normal(NormalScenario),
    Gamma(GammaScenario),
}

fn default_methods() -> Vec<Method> {
    vec![Method::Lrt, Method::Pw, Method::MLr]
}

fn default_alpha() -> f64 {
    0.05
}

fn default_bootstrap_b() -> usize {
    DEFAULT_BOOTSTRAP_B
}

fn default_mvn_n() -> usize {
    50
}

/// Configuration of one simulation run; parseable from TOML.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub experiment: Experiment,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_reps: usize,
    #[serde(default = "default_bootstrap_b")]
    pub bootstrap_b: usize,
    pub seed: u64,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub basis: BasisSpec,
    /// Sample size per replicate for the normal grid.
    #[serde(default = "default_mvn_n")]
    pub n: usize,
    #[serde(default)]
    pub mu_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub rho_grid: Vec<f64>,
    pub scenario: Option<Scenario>,
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            toml::from_str(text).map_err(|e| Error::BadInput(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps < 100 {
            return Err(Error::BadInput(format!(
                "n_reps must be at least 100, got {}",
                self.n_reps
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::BadInput(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::BadInput("at least one method is required".into()));
        }
        if self.bootstrap_b < 2 {
            return Err(Error::BadInput("bootstrap_b must be at least 2".into()));
        }
        match self.experiment {
            Experiment::MvnGrid => {
                if self.mu_grid.is_empty() || self.rho_grid.is_empty() {
                    return Err(Error::BadInput(
                        "mvn_grid needs non-empty mu_grid and rho_grid".into(),
                    ));
                }
                if self.rho_grid.iter().any(|r| !(-1.0 < *r && *r < 1.0)) {
                    return Err(Error::BadInput("rho values must lie in (-1, 1)".into()));
                }
                if self.n < 5 {
                    return Err(Error::BadInput("mvn_grid needs n >= 5".into()));
                }
            }
            Experiment::DrmNormal => match &self.scenario {
                Some(Scenario::Normal(s)) => s.validate()?,
                _ => {
                    return Err(Error::BadInput(
                        "drm_normal needs a [scenario] table with mu/sigma_gamma/sigma_e/n_clusters/d"
                            .into(),
                    ))
                }
            },
            Experiment::DrmGamma => match &self.scenario {
                Some(Scenario::Gamma(s)) => s.validate()?,
                _ => {
                    return Err(Error::BadInput(
                        "drm_gamma needs a [scenario] table with a/beta/b/n_clusters/d".into(),
                    ))
                }
            },
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub experiment: &'static str,
    pub cell: String,
    /// Whether the configuration satisfies the null hypothesis in this cell.
    pub hypothesis: &'static str,
    pub method: Method,
    pub rejection_pct: f64,
    pub mc_se_pct: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    pub seed: u64,
    pub n_reps: usize,
    /// Replicates redrawn after a fit or bootstrap failure.
    pub redraws: usize,
    pub wall_clock_secs: f64,
    pub config_echo: String,
}

impl SimulationReport {
    /// Deterministic CSV: one row per cell and method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,cell,hypothesis,method,rejection_pct,mc_se_pct,n_reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{}\n",
                r.experiment, r.cell, r.hypothesis, r.method.name(), r.rejection_pct, r.mc_se_pct, r.n_reps
            ));
        }
        out
    }

    /// Aligned text table: one line per cell, one column per method.
    pub fn to_table(&self) -> String {
        let mut cells: Vec<String> = Vec::new();
        for r in &self.rows {
            if !cells.contains(&r.cell) {
                cells.push(r.cell.clone());
            }
        }
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let cell_width = cells.iter().map(String::len).max().unwrap_or(4).max(24);
        let mut out = String::new();
        out.push_str(&format!("# seed={} n_reps={} redraws={}\n", self.seed, self.n_reps, self.redraws));
        out.push_str(&format!("{:<cell_width$} {:>12}", "cell", "hypothesis"));
        for m in &methods {
            out.push_str(&format!(" {:>8}", m.name()));
        }
        out.push('\n');
        for cell in &cells {
            let hyp = self
                .rows
                .iter()
                .find(|r| &r.cell == cell)
                .map(|r| r.hypothesis)
                .unwrap_or("");
            out.push_str(&format!("{cell:<cell_width$} {hyp:>12}"));
            for m in &methods {
                let pct = self
                    .rows
                    .iter()
                    .find(|r| &r.cell == cell && r.method == *m)
                    .map(|r| r.rejection_pct);
                match pct {
                    Some(p) => out.push_str(&format!(" {p:>8.2}")),
                    None => out.push_str(&format!(" {:>8}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Dispatch on the experiment type.
pub fn run(cfg: &SimulationConfig) -> Result<SimulationReport> {
    match cfg.experiment {
        Experiment::MvnGrid => run_mvn_grid(cfg),
        Experiment::DrmNormal | Experiment::DrmGamma => run_drm_experiment(cfg),
    }
}

fn run_method(
    method: Method,
    x: &[f64],
    cov: &CovEstimate,
    alpha: f64,
    cal: Calibration,
) -> Result<TestOutcome> {
    match method {
        Method::Lrt => lrt_test(x, cov, alpha, cal),
        Method::MLr => mlr_test(x, cov, alpha, cal),
        Method::Pw => pw_test(x, cov, alpha, cal),
        Method::Uit => uit_test(x, cov, alpha, false),
    }
}

/// Rejection rates over a grid of bivariate normal configurations. Each
/// replicate draws `n` observations from `MVN(mu, Sigma(rho))`, forms the
/// sample mean and the divisor-`n` covariance, and applies every requested
/// method to `H0: mu <= 0`.
pub fn run_mvn_grid(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.experiment != Experiment::MvnGrid {
        return Err(Error::BadInput("configuration is not an mvn_grid experiment".into()));
    }
    let start = Instant::now();
    let root = RngStream::new(cfg.seed, 0);
    let n = cfg.n;
    let nf = n as f64;
    let mut rows = Vec::new();
    let mut cell_index = 0u64;
    for mu in &cfg.mu_grid {
        for &rho in &cfg.rho_grid {
            let corr = SpdMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])
                .expect("correlation matrix is symmetric by construction");
            let chol = corr.factor()?.clone();
            let cell_stream = root.substream(cell_index);
            cell_index += 1;

            let counts: Result<Vec<u32>> = (0..cfg.n_reps)
                .into_par_iter()
                .map(|rep| -> Result<u32> {
                    let mut rng = cell_stream.substream(rep as u64);
                    let mut z = [0.0f64; 2];
                    let mut y = [0.0f64; 2];
                    let mut sum = [0.0f64; 2];
                    let mut ssq = [0.0f64; 3]; // yy', packed (00, 10, 11)
                    for _ in 0..n {
                        z[0] = crate::dist::sample_standard_normal(&mut rng);
                        z[1] = crate::dist::sample_standard_normal(&mut rng);
                        chol.multiply(&z, &mut y);
                        y[0] += mu[0];
                        y[1] += mu[1];
                        sum[0] += y[0];
                        sum[1] += y[1];
                        ssq[0] += y[0] * y[0];
                        ssq[1] += y[1] * y[0];
                        ssq[2] += y[1] * y[1];
                    }
                    let xbar = [sum[0] / nf, sum[1] / nf];
                    let s = SpdMatrix::from_fn(2, |i, j| {
                        let m2 = match (i, j) {
                            (0, 0) => ssq[0],
                            (1, 1) => ssq[2],
                            _ => ssq[1],
                        };
                        m2 / nf - xbar[i] * xbar[j]
                    });
                    let cov = CovEstimate::per_observation(s, n)?;
                    let mut mask = 0u32;
                    for (mi, &method) in cfg.methods.iter().enumerate() {
                        let out = run_method(method, &xbar, &cov, cfg.alpha, cfg.calibration)?;
                        if out.reject {
                            mask |= 1 << mi;
                        }
                    }
                    Ok(mask)
                })
                .collect();
            let counts = counts?;
            let in_null = mu.iter().all(|&v| v <= 0.0);
            for (mi, &method) in cfg.methods.iter().enumerate() {
                let hits = counts.iter().filter(|&&m| m >> mi & 1 == 1).count();
                let phat = hits as f64 / cfg.n_reps as f64;
                rows.push(ReportRow {
                    experiment: "mvn_grid",
                    cell: format!("mu={}|{} rho={}", mu[0], mu[1], rho),
                    hypothesis: if in_null { "null" } else { "alternative" },
                    method,
                    rejection_pct: 100.0 * phat,
                    mc_se_pct: 100.0 * (phat * (1.0 - phat) / cfg.n_reps as f64).sqrt(),
                    n_reps: cfg.n_reps,
                });
            }
        }
    }
    Ok(SimulationReport {
        rows,
        seed: cfg.seed,
        n_reps: cfg.n_reps,
        redraws: 0,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config_echo: format!("{cfg:?}"),
    })
}

/// Monitored quantile differences of population `k` against the baseline.
fn theta_from_fit(fit: &DrmFit, k: usize) -> [f64; 2] {
    [
        fit.quantile(k, MONITOR_LEVELS[0]) - fit.quantile(0, MONITOR_LEVELS[0]),
        fit.quantile(k, MONITOR_LEVELS[1]) - fit.quantile(0, MONITOR_LEVELS[1]),
    ]
}

fn theta_vector(fit: &DrmFit, m: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * m);
    for k in 1..=m {
        let t = theta_from_fit(fit, k);
        v.push(t[0]);
        v.push(t[1]);
    }
    v
}

enum DrmScenario<'a> {
    Normal(&'a NormalScenario),
    Gamma(&'a GammaScenario),
}

impl DrmScenario<'_> {
    fn generate(&self, rng: &mut RngStream) -> Result<ClusteredDataset> {
        match self {
            DrmScenario::Normal(s) => s.generate(rng),
            DrmScenario::Gamma(s) => s.generate(rng),
        }
    }

    fn n_populations(&self) -> usize {
        match self {
            DrmScenario::Normal(s) => s.n_populations(),
            DrmScenario::Gamma(s) => s.n_populations(),
        }
    }

    fn quantile(&self, k: usize, alpha: f64) -> Result<f64> {
        match self {
            DrmScenario::Normal(s) => s.quantile(k, alpha),
            DrmScenario::Gamma(s) => s.quantile(k, alpha),
        }
    }
}

/// Clustered monitoring experiment: per replicate, generate a clustered
/// dataset, fit the density ratio model, estimate the monitored quantile
/// differences for every population against the baseline, estimate their
/// covariance by the cluster bootstrap, and apply each test to
/// `H0: theta_k >= 0`. Replicates whose fit or bootstrap degenerates are
/// redrawn from a fresh substream and counted.
pub fn run_drm_experiment(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let scenario = match (cfg.experiment, &cfg.scenario) {
        (Experiment::DrmNormal, Some(Scenario::Normal(s))) => DrmScenario::Normal(s),
        (Experiment::DrmGamma, Some(Scenario::Gamma(s))) => DrmScenario::Gamma(s),
        _ => return Err(Error::BadInput("configuration is not a drm experiment".into())),
    };
    let start = Instant::now();
    let m = scenario.n_populations() - 1;
    if m == 0 {
        return Err(Error::BadInput("monitoring experiments need at least two populations".into()));
    }
    let root = RngStream::new(cfg.seed, 0);
    let basis = cfg.basis;

    struct RepOutcome {
        rejects: Vec<u32>, // per k: method bitmask
        redraws: usize,
    }

    let results: Result<Vec<RepOutcome>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome> {
            let rep_stream = root.substream(rep as u64);
            let mut redraws = 0usize;
            'attempt: for attempt in 0..MAX_REPLICATE_REDRAWS {
                let mut data_rng = rep_stream.substream(2 * attempt as u64);
                let data = scenario.generate(&mut data_rng)?;
                let fit = match fit_drm(&data, basis, None) {
                    Ok(f) if f.converged => f,
                    Ok(_) | Err(_) => {
                        redraws += 1;
                        continue 'attempt;
                    }
                };
                let theta = theta_vector(&fit, m);
                let boot_spec = BootstrapSpec::new(
                    cfg.bootstrap_b,
                    rep_stream.substream(2 * attempt as u64 + 1),
                )?;
                let fitted_beta = fit.beta.clone();
                let functional = |ds: &ClusteredDataset| -> Result<Vec<f64>> {
                    let f = fit_drm(ds, basis, Some(&fitted_beta))?;
                    if !f.converged {
                        return Err(Error::NonConvergence {
                            grad_norm: f.final_grad_norm,
                            iterations: f.iterations,
                        });
                    }
                    Ok(theta_vector(&f, m))
                };
                let boot = match cluster_bootstrap_cov(&data, functional, &boot_spec) {
                    Ok(b) => b,
                    Err(_) => {
                        redraws += 1;
                        continue 'attempt;
                    }
                };
                let n_obs = data.total_observations();
                let mut rejects = vec![0u32; m];
                for k in 1..=m {
                    let block = SpdMatrix::from_fn(2, |i, j| {
                        boot.cov.matrix.get(2 * (k - 1) + i, 2 * (k - 1) + j)
                    });
                    let cov = match CovEstimate::of_estimator(block, n_obs) {
                        Ok(c) => c,
                        Err(_) => {
                            redraws += 1;
                            continue 'attempt;
                        }
                    };
                    let x = monitor_transform(&theta[2 * (k - 1)..2 * k], &[0.0, 0.0])?;
                    for (mi, &method) in cfg.methods.iter().enumerate() {
                        let out = match run_method(method, &x, &cov, cfg.alpha, cfg.calibration) {
                            Ok(o) => o,
                            Err(_) => {
                                redraws += 1;
                                continue 'attempt;
                            }
                        };
                        if out.reject {
                            rejects[k - 1] |= 1 << mi;
                        }
                    }
                }
                return Ok(RepOutcome { rejects, redraws });
            }
            Err(Error::BootstrapDegenerate { failures: redraws, replicates: MAX_REPLICATE_REDRAWS })
        })
        .collect();
    let results = results?;

    let total_redraws: usize = results.iter().map(|r| r.redraws).sum();
    let mut rows = Vec::new();
    for k in 1..=m {
        // label the cell by whether theta_k >= 0 actually holds
        let q5 = scenario.quantile(k, MONITOR_LEVELS[0])? - scenario.quantile(0, MONITOR_LEVELS[0])?;
        let q50 = scenario.quantile(k, MONITOR_LEVELS[1])? - scenario.quantile(0, MONITOR_LEVELS[1])?;
        let in_null = q5 >= -1e-12 && q50 >= -1e-12;
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let hits = results.iter().filter(|r| r.rejects[k - 1] >> mi & 1 == 1).count();
            let phat = hits as f64 / cfg.n_reps as f64;
            rows.push(ReportRow {
                experiment: cfg.experiment.name(),
                cell: format!("theta_{k}"),
                hypothesis: if in_null { "null" } else { "alternative" },
                method,
                rejection_pct: 100.0 * phat,
                mc_se_pct: 100.0 * (phat * (1.0 - phat) / cfg.n_reps as f64).sqrt(),
                n_reps: cfg.n_reps,
            });
        }
    }
    Ok(SimulationReport {
        rows,
        seed: cfg.seed,
        n_reps: cfg.n_reps,
        redraws: total_redraws,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config_echo: format!("{cfg:?}"),
    })
}

/// Critical values of the projected statistic when the bivariate correlation
/// is known, one per entry of `rho_list`; the `rho = -1` entry coincides
/// with the least-favorable calibration.
pub fn critical_value_table(
    n: usize,
    p: usize,
    rho_list: &[f64],
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    if p != 2 {
        return Err(Error::UnsupportedDimension {
            dim: p,
            reason: "known-correlation critical values use the bivariate mixture",
        });
    }
    rho_list
        .iter()
        .map(|&rho| Ok((rho, lrt_critical_known_rho(alpha, n, rho)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_mvn_config() -> SimulationConfig {
        SimulationConfig {
            experiment: Experiment::MvnGrid,
            methods: vec![Method::Lrt, Method::Pw, Method::MLr],
            alpha: 0.05,
            n_reps: 400,
            bootstrap_b: 199,
            seed: 99,
            calibration: Calibration::ExactF,
            basis: BasisSpec::Quadratic,
            n: 50,
            mu_grid: vec![[0.0, 0.0], [-5.0, -5.0]],
            rho_grid: vec![0.0],
            scenario: None,
        }
    }

    #[test]
    fn config_parses_from_toml_with_defaults() {
        let cfg = SimulationConfig::from_toml(
            r#"
            experiment = "mvn_grid"
            n_reps = 100
            seed = 7
            mu_grid = [[0.0, 0.0]]
            rho_grid = [-0.5, 0.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.n, 50);
        assert_eq!(cfg.methods, vec![Method::Lrt, Method::Pw, Method::MLr]);
        assert_eq!(cfg.calibration, Calibration::ExactF);
    }

    #[test]
    fn config_parses_drm_scenarios() {
        let cfg = SimulationConfig::from_toml(
            r#"
            experiment = "drm_normal"
            n_reps = 100
            seed = 1
            bootstrap_b = 19
            calibration = "asymptotic_chisq"

            [scenario]
            mu = [15.5, 15.5]
            sigma_gamma = [1.2, 1.2]
            sigma_e = 2.0
            n_clusters = [10, 12]
            d = 5
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.scenario, Some(Scenario::Normal(_))));

        let cfg = SimulationConfig::from_toml(
            r#"
            experiment = "drm_gamma"
            n_reps = 100
            seed = 1
            [scenario]
            a = [8.0, 8.0]
            beta = [1.0, 1.0]
            b = inf
            n_clusters = [10, 12]
            d = 5
            "#,
        )
        .unwrap();
        match cfg.scenario {
            Some(Scenario::Gamma(g)) => assert!(g.independent_units()),
            _ => panic!("expected a gamma scenario"),
        }
    }

    #[test]
    fn config_validation_errors() {
        assert!(SimulationConfig::from_toml("experiment = \"mvn_grid\"\nn_reps = 50\nseed = 1")
            .is_err());
        // mismatched scenario type
        let bad = SimulationConfig::from_toml(
            r#"
            experiment = "drm_normal"
            n_reps = 100
            seed = 1
            [scenario]
            a = [8.0, 8.0]
            beta = [1.0, 1.0]
            b = 14.0
            n_clusters = [10, 12]
            d = 5
            "#,
        );
        assert!(bad.is_err());
        assert!(SimulationConfig::from_toml("experiment = \"nope\"\nn_reps = 100\nseed = 1").is_err());
    }

    #[test]
    fn critical_value_table_matches_known_values() {
        let table =
            critical_value_table(50, 2, &[-1.0, -0.9, -0.5, 0.0, 0.5, 0.9], 0.05).unwrap();
        let want = [5.64, 5.37, 4.98, 4.58, 4.12, 3.47];
        for ((_, c), w) in table.iter().zip(want) {
            assert!((c - w).abs() < 0.01, "{c} vs {w}");
        }
        assert!(critical_value_table(50, 3, &[0.0], 0.05).is_err());
    }

    #[test]
    fn critical_values_decrease_in_rho_and_alpha() {
        let t1 = critical_value_table(50, 2, &[-0.9, -0.5, 0.0, 0.5, 0.9], 0.05).unwrap();
        for w in t1.windows(2) {
            assert!(w[0].1 > w[1].1);
        }
        let t2 = critical_value_table(50, 2, &[-0.9, -0.5, 0.0, 0.5, 0.9], 0.2).unwrap();
        for (a, b) in t1.iter().zip(&t2) {
            assert!(a.1 > b.1, "larger alpha gives a smaller critical value");
        }
    }

    #[test]
    fn asymptotic_limit_of_the_independent_critical_value() {
        // at n -> infinity and rho = 0 the root of
        // 0.5 P(chi2_1 >= c) + 0.25 P(chi2_2 >= c) = 0.05 is 4.2306
        let c = lrt_critical_known_rho(0.05, 1_000_000, 0.0).unwrap();
        assert!((c - 4.2306).abs() < 1e-3, "{c}");
    }

    #[test]
    fn mvn_grid_runs_and_is_deterministic() {
        let cfg = smoke_mvn_config();
        let a = run_mvn_grid(&cfg).unwrap();
        let b = run_mvn_grid(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        for row in &a.rows {
            assert!((0.0..=100.0).contains(&row.rejection_pct));
        }
        // deep-interior null cell rejects (essentially) never
        for row in a.rows.iter().filter(|r| r.cell.contains("mu=-5|-5")) {
            assert!(row.rejection_pct < 0.5, "{}: {}", row.cell, row.rejection_pct);
            assert_eq!(row.hypothesis, "null");
        }
    }

    #[test]
    fn mvn_grid_null_rates_are_at_plausible_levels() {
        let mut cfg = smoke_mvn_config();
        cfg.n_reps = 2000;
        cfg.mu_grid = vec![[0.0, 0.0]];
        let report = run_mvn_grid(&cfg).unwrap();
        for row in &report.rows {
            // all three tests are level-ish at rho = 0; 2000 reps gives a
            // generous 4-sigma band around 3-5%
            assert!(row.rejection_pct < 8.0, "{} rate {}", row.method.name(), row.rejection_pct);
            assert!(row.rejection_pct > 1.0, "{} rate {}", row.method.name(), row.rejection_pct);
        }
    }

    #[test]
    fn drm_experiment_smoke_runs_deterministically() {
        let cfg = SimulationConfig::from_toml(
            r#"
            experiment = "drm_normal"
            n_reps = 100
            seed = 5
            bootstrap_b = 29
            calibration = "asymptotic_chisq"
            methods = ["lrt", "mlr"]

            [scenario]
            mu = [15.5, 14.2]
            sigma_gamma = [1.0, 1.0]
            sigma_e = 1.5
            n_clusters = [12, 14]
            d = 4
            "#,
        )
        .unwrap();
        let a = run_drm_experiment(&cfg).unwrap();
        let b = run_drm_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 2);
        // the shifted population is far below baseline: high power
        let mlr = a.rows.iter().find(|r| r.method == Method::MLr).unwrap();
        assert_eq!(mlr.hypothesis, "alternative");
        assert!(mlr.rejection_pct > 50.0, "{}", mlr.rejection_pct);
        // mLR dominates LRT replicate by replicate
        let lrt = a.rows.iter().find(|r| r.method == Method::Lrt).unwrap();
        assert!(mlr.rejection_pct >= lrt.rejection_pct);
    }

    #[test]
    fn identical_populations_reject_rarely() {
        let cfg = SimulationConfig::from_toml(
            r#"
            experiment = "drm_gamma"
            n_reps = 100
            seed = 11
            bootstrap_b = 29
            calibration = "asymptotic_chisq"
            methods = ["mlr"]

            [scenario]
            a = [8.0, 8.0]
            beta = [1.0, 1.0]
            b = 14.0
            n_clusters = [15, 15]
            d = 5
            "#,
        )
        .unwrap();
        let report = run_drm_experiment(&cfg).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.hypothesis, "null");
        // size sanity: below 3 * alpha at a generous desk scale
        assert!(row.rejection_pct <= 15.0, "{}", row.rejection_pct);
    }

    #[test]
    fn report_renderings_are_consistent() {
        let cfg = smoke_mvn_config();
        let report = run_mvn_grid(&cfg).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("experiment,cell,hypothesis,method,"));
        assert_eq!(csv.lines().count(), 1 + report.rows.len());
        let table = report.to_table();
        assert!(table.contains("LRT") && table.contains("mLR"));
        assert!(table.contains("mu=0|0 rho=0"));
    }
}
