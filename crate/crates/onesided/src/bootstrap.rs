//! Cluster bootstrap covariance estimation.
//!
//! Clusters are resampled whole, with replacement, independently within each
//! population, so the per-population cluster counts are preserved and
//! within-cluster dependence survives the resampling. Each replicate draws
//! from its own substream keyed by the replicate index, so results are
//! bit-identical regardless of evaluation order or parallelism.

use rayon::prelude::*;

use crate::drm::{ClusteredDataset, Population};
use crate::error::{Error, Result};
use crate::linalg::{CovEstimate, SpdMatrix};
use crate::rng::RngStream;

pub const DEFAULT_BOOTSTRAP_B: usize = 999;

/// Retries allowed for a single replicate whose functional evaluation fails.
const MAX_REDRAWS_PER_REPLICATE: usize = 25;

#[derive(Debug, Clone)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub stream: RngStream,
}

impl BootstrapSpec {
    pub fn new(replicates: usize, stream: RngStream) -> Result<Self> {
        if replicates < 2 {
            return Err(Error::InvalidParameter(format!(
                "bootstrap needs at least 2 replicates, got {replicates}"
            )));
        }
        Ok(BootstrapSpec { replicates, stream })
    }
}

/// Covariance estimate plus resampling diagnostics.
#[derive(Debug, Clone)]
pub struct BootstrapCov {
    pub cov: CovEstimate,
    /// Functional evaluations that failed and were redrawn.
    pub failed_evaluations: usize,
}

/// Resample clusters within each population.
pub fn resample_clusters(data: &ClusteredDataset, rng: &mut RngStream) -> ClusteredDataset {
    let pops = data
        .populations()
        .iter()
        .map(|p| {
            let n = p.n_clusters();
            let clusters =
                (0..n).map(|_| p.clusters[rng.uniform_index(n)].clone()).collect();
            Population::new(p.label.clone(), clusters)
        })
        .collect();
    ClusteredDataset::new(pops).expect("resampled dataset preserves the shape of its source")
}

/// Bootstrap covariance (divisor `B - 1`) of a vector functional of the
/// dataset. Failed evaluations are redrawn with fresh substreams so `B`
/// stays fixed; more than 10% failures aborts with a degeneracy error.
pub fn cluster_bootstrap_cov<F>(
    data: &ClusteredDataset,
    functional: F,
    spec: &BootstrapSpec,
) -> Result<BootstrapCov>
where
    F: Fn(&ClusteredDataset) -> Result<Vec<f64>> + Sync,
{
    let base = functional(data)?;
    let dim = base.len();
    if dim == 0 {
        return Err(Error::BadInput("functional must return a nonempty vector".into()));
    }
    let b_total = spec.replicates;

    let replicate = |b: usize| -> Result<(Vec<f64>, usize)> {
        let rep_stream = spec.stream.substream(b as u64);
        let mut failures = 0usize;
        for attempt in 0..MAX_REDRAWS_PER_REPLICATE {
            let mut draw_stream = rep_stream.substream(attempt as u64);
            let resampled = resample_clusters(data, &mut draw_stream);
            debug_assert!(resampled
                .populations()
                .iter()
                .zip(data.populations())
                .all(|(r, o)| r.n_clusters() == o.n_clusters()));
            match functional(&resampled) {
                Ok(v) if v.len() == dim => return Ok((v, failures)),
                Ok(v) => {
                    return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
                }
                Err(_) => failures += 1,
            }
        }
        Err(Error::BootstrapDegenerate { failures, replicates: b_total })
    };

    let results: Vec<Result<(Vec<f64>, usize)>> =
        (0..b_total).into_par_iter().map(replicate).collect();

    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(b_total);
    let mut failed = 0usize;
    for r in results {
        let (v, f) = r?;
        failed += f;
        draws.push(v);
    }
    if failed * 10 > b_total {
        return Err(Error::BootstrapDegenerate { failures: failed, replicates: b_total });
    }

    // shifted two-pass covariance anchored at the first replicate; exact
    // zero for a constant functional
    let bf = b_total as f64;
    let anchor = draws[0].clone();
    let mut shifted_mean = vec![0.0; dim];
    for v in &draws {
        for ((m, x), a) in shifted_mean.iter_mut().zip(v).zip(&anchor) {
            *m += (x - a) / bf;
        }
    }
    let matrix = SpdMatrix::from_fn(dim, |i, j| {
        let sum: f64 = draws
            .iter()
            .map(|v| (v[i] - anchor[i] - shifted_mean[i]) * (v[j] - anchor[j] - shifted_mean[j]))
            .sum();
        sum / (bf - 1.0)
    });
    let cov = CovEstimate::of_estimator(matrix, data.total_observations())?;
    Ok(BootstrapCov { cov, failed_evaluations: failed })
}
