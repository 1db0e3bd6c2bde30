//! Raw-data monitoring pipeline: clustered CSV in, per-population quantile
//! differences, bootstrap covariance, and one-sided tests out.

use std::collections::BTreeMap;

use onesided::bootstrap::{cluster_bootstrap_cov, BootstrapSpec};
use onesided::drm::{fit_drm, BasisSpec, ClusteredDataset, DrmFit, Population};
use onesided::error::{Error, Result};
use onesided::linalg::{CovEstimate, SpdMatrix};
use onesided::rng::RngStream;
use onesided::testing::{monitor_transform, Calibration, Method, TestOutcome};

use crate::summary::SummaryInput;

/// Parse a clustered CSV with header columns `population`, `cluster`,
/// `value` (any order). Populations keep file order; clusters are sorted by
/// their integer id so the dataset layout is canonical.
pub fn parse_clustered_csv(text: &str) -> Result<Vec<(String, BTreeMap<i64, Vec<f64>>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::BadInput("empty file: expected a CSV header".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::BadInput(format!("missing column '{name}' in header")))
    };
    let c_pop = find("population")?;
    let c_cluster = find("cluster")?;
    let c_value = find("value")?;

    let mut pops: Vec<(String, BTreeMap<i64, Vec<f64>>)> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::BadInput(format!(
                "line {}: expected {} fields, got {}",
                lineno + 1,
                cols.len(),
                fields.len()
            )));
        }
        let label = fields[c_pop].to_string();
        let cluster: i64 = fields[c_cluster].parse().map_err(|_| {
            Error::BadInput(format!("line {}: cluster id must be an integer", lineno + 1))
        })?;
        let value: f64 = fields[c_value].parse().map_err(|_| {
            Error::BadInput(format!("line {}: value must be a number", lineno + 1))
        })?;
        match pops.iter_mut().find(|(l, _)| *l == label) {
            Some((_, clusters)) => {
                clusters.entry(cluster).or_default().push(value);
            }
            None => {
                let mut clusters = BTreeMap::new();
                clusters.insert(cluster, vec![value]);
                pops.push((label, clusters));
            }
        }
    }
    if pops.is_empty() {
        return Err(Error::BadInput("no data rows".into()));
    }
    Ok(pops)
}

/// Assemble the dataset with the baseline population first.
pub fn build_dataset(
    mut raw: Vec<(String, BTreeMap<i64, Vec<f64>>)>,
    baseline: Option<&str>,
) -> Result<ClusteredDataset> {
    if raw.len() < 2 {
        return Err(Error::BadInput(
            "monitoring needs the baseline and at least one comparison population".into(),
        ));
    }
    let baseline_label = match baseline {
        Some(label) => {
            if !raw.iter().any(|(l, _)| l == label) {
                return Err(Error::BadInput(format!(
                    "baseline population '{label}' not present in the data"
                )));
            }
            label.to_string()
        }
        None => raw[0].0.clone(),
    };
    let base_idx = raw.iter().position(|(l, _)| *l == baseline_label).unwrap();
    let base = raw.remove(base_idx);
    let mut populations = Vec::with_capacity(raw.len() + 1);
    for (label, clusters) in std::iter::once(base).chain(raw) {
        populations.push(Population::new(label, clusters.into_values().collect()));
    }
    ClusteredDataset::new(populations)
}

pub struct MonitorOptions {
    pub basis: BasisSpec,
    pub levels: Vec<f64>,
    pub bootstrap_b: usize,
    pub alpha: f64,
    pub calibration: Calibration,
    pub methods: Vec<Method>,
    pub seed: u64,
}

pub struct PopulationResult {
    pub label: String,
    pub theta_hat: Vec<f64>,
    pub outcomes: Vec<TestOutcome>,
    pub summary: SummaryInput,
}

pub struct MonitorReport {
    pub fit: DrmFit,
    pub results: Vec<PopulationResult>,
    pub n_observations: usize,
    pub bootstrap_failures: usize,
}

fn theta_vector(fit: &DrmFit, m: usize, levels: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(m * levels.len());
    for k in 1..=m {
        for &a in levels {
            v.push(fit.quantile(k, a) - fit.quantile(0, a));
        }
    }
    v
}

/// Run the full monitoring pipeline on a dataset.
pub fn run_monitor(data: &ClusteredDataset, opts: &MonitorOptions) -> Result<MonitorReport> {
    let m = data.m();
    let p = opts.levels.len();
    let fit = fit_drm(data, opts.basis, None)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            grad_norm: fit.final_grad_norm,
            iterations: fit.iterations,
        });
    }
    let theta = theta_vector(&fit, m, &opts.levels);
    let spec = BootstrapSpec::new(opts.bootstrap_b, RngStream::new(opts.seed, 0))?;
    let beta = fit.beta.clone();
    let basis = opts.basis;
    let levels = opts.levels.clone();
    let functional = move |ds: &ClusteredDataset| -> Result<Vec<f64>> {
        let f = fit_drm(ds, basis, Some(&beta))?;
        if !f.converged {
            return Err(Error::NonConvergence {
                grad_norm: f.final_grad_norm,
                iterations: f.iterations,
            });
        }
        Ok(theta_vector(&f, m, &levels))
    };
    let boot = cluster_bootstrap_cov(data, functional, &spec)?;
    let n_obs = data.total_observations();

    let mut results = Vec::with_capacity(m);
    for k in 1..=m {
        let theta_k = &theta[(k - 1) * p..k * p];
        let block =
            SpdMatrix::from_fn(p, |i, j| boot.cov.matrix.get((k - 1) * p + i, (k - 1) * p + j));
        let cov = CovEstimate::of_estimator(block.clone(), n_obs)?;
        let x = monitor_transform(theta_k, &vec![0.0; p])?;
        let mut outcomes = Vec::new();
        for &method in &opts.methods {
            let out = match method {
                Method::Lrt => onesided::testing::lrt_test(&x, &cov, opts.alpha, opts.calibration)?,
                Method::MLr => onesided::testing::mlr_test(&x, &cov, opts.alpha, opts.calibration)?,
                Method::Pw => onesided::testing::pw_test(&x, &cov, opts.alpha, opts.calibration)?,
                Method::Uit => onesided::testing::uit_test(&x, &cov, opts.alpha, false)?,
            };
            outcomes.push(out);
        }
        let label = data.population(k).label.clone();
        let summary = SummaryInput {
            theta_hat: theta_k.to_vec(),
            theta_star: vec![0.0; p],
            n: n_obs,
            cov: block,
        };
        results.push(PopulationResult { label, theta_hat: theta_k.to_vec(), outcomes, summary });
    }
    Ok(MonitorReport {
        fit,
        results,
        n_observations: n_obs,
        bootstrap_failures: boot.failed_evaluations,
    })
}
