//! Projection onto the non-positive orthant under a Mahalanobis metric, and
//! the projected test statistic built on it.
//!
//! The minimizer of `(x - mu)' A^{-1} (x - mu)` over `mu <= 0` is found by
//! enumerating all `2^p` candidate active sets. For an active set `s` the
//! stationarity conditions reduce to `w = A_ss^{-1} x_s` with multipliers `w`
//! and free coordinates `mu_{s'} = x_{s'} - A_{s's} w`; the candidate is
//! KKT-consistent when `w >= 0` and `mu_{s'} <= 0`, and its squared distance
//! is `x_s' w`. Exact for the small dimensions this library targets.

use crate::error::{Error, Result};
use crate::linalg::{CovEstimate, CovKind, SpdMatrix};

/// Feasibility slack on KKT multipliers and projected coordinates.
pub const KKT_TOL: f64 = 1e-9;

const MAX_DIM: usize = 8;

/// Result of projecting a point onto the non-positive orthant.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Projected point; componentwise non-positive.
    pub mu0: Vec<f64>,
    /// Coordinates pinned to zero by the projection.
    pub active_set: Vec<usize>,
    /// Squared Mahalanobis distance from the input to `mu0`.
    pub distance_sq: f64,
}

/// Minimize `(x - mu)' metric^{-1} (x - mu)` over `mu <= 0`.
pub fn project_nonpositive(x: &[f64], metric: &SpdMatrix) -> Result<ProjectionResult> {
    let p = metric.dim();
    if x.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: x.len() });
    }
    if p == 0 || p > MAX_DIM {
        return Err(Error::UnsupportedDimension {
            dim: p,
            reason: "projection enumerates active sets; dimensions 1..=8 are supported",
        });
    }
    metric.factor()?;

    let mut best: Option<ProjectionResult> = None;
    for mask in 0u32..(1 << p) {
        let active: Vec<usize> = (0..p).filter(|i| mask >> i & 1 == 1).collect();
        let candidate = match candidate_for(x, metric, &active) {
            Some(c) => c,
            None => continue,
        };
        best = Some(match best {
            None => candidate,
            Some(b) => {
                if candidate.distance_sq < b.distance_sq
                    || (candidate.distance_sq == b.distance_sq && candidate.active_set < b.active_set)
                {
                    candidate
                } else {
                    b
                }
            }
        });
    }
    best.ok_or(Error::DegenerateMatrix)
}

fn candidate_for(x: &[f64], metric: &SpdMatrix, active: &[usize]) -> Option<ProjectionResult> {
    let p = metric.dim();
    if active.is_empty() {
        // mu = x itself; feasible only when x is already in the cone
        if x.iter().all(|&v| v <= KKT_TOL) {
            let mu0 = x.iter().map(|&v| v.min(0.0)).collect();
            return Some(ProjectionResult { mu0, active_set: Vec::new(), distance_sq: 0.0 });
        }
        return None;
    }
    let xs: Vec<f64> = active.iter().map(|&i| x[i]).collect();
    let a_ss = metric.submatrix(active);
    let w = a_ss.solve(&xs).ok()?;
    // multipliers for the pinned coordinates must be nonnegative
    if w.iter().any(|&wi| wi < -KKT_TOL) {
        return None;
    }
    let mut mu0 = vec![0.0; p];
    for (slot, &i) in active.iter().enumerate() {
        debug_assert_eq!(active[slot], i);
        mu0[i] = 0.0;
    }
    for i in 0..p {
        if active.contains(&i) {
            continue;
        }
        let coupling: f64 = active.iter().enumerate().map(|(r, &s)| metric.get(i, s) * w[r]).sum();
        let mu_i = x[i] - coupling;
        if mu_i > KKT_TOL {
            return None;
        }
        mu0[i] = mu_i.min(0.0);
    }
    let distance_sq: f64 = xs.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    Some(ProjectionResult { mu0, active_set: active.to_vec(), distance_sq })
}

/// Projected statistic plus the monotone log form and the plug-in
/// correlation extracted from the covariance estimate.
#[derive(Debug, Clone)]
pub struct TStatistic {
    /// `T_n`: the scaled squared distance from the observed point to the cone.
    pub t_n: f64,
    /// `R_n = n log(1 + T_n / n)`, monotone in `T_n`.
    pub r_n: f64,
    pub projection: ProjectionResult,
    /// Correlation matrix of the covariance estimate.
    pub correlation: SpdMatrix,
}

impl TStatistic {
    /// Scalar correlation for the bivariate case.
    pub fn rho(&self) -> Option<f64> {
        if self.correlation.dim() == 2 {
            Some(self.correlation.get(0, 1))
        } else {
            None
        }
    }
}

/// Compute the one-sided statistic for an estimate `x_hat` with covariance
/// `cov`. With a per-observation covariance `S`, `T_n = n d²` for the squared
/// projection distance `d²` under `S`; with an estimator covariance the
/// scaling by `n` cancels and `T_n` is the squared distance itself.
pub fn t_statistic(x_hat: &[f64], cov: &CovEstimate) -> Result<TStatistic> {
    let projection = project_nonpositive(x_hat, &cov.matrix)?;
    let n = cov.sample_size as f64;
    let t_n = match cov.kind {
        CovKind::PerObservation => n * projection.distance_sq,
        CovKind::OfEstimator => projection.distance_sq,
    };
    let r_n = n * (t_n / n).ln_1p();
    let correlation = cov.matrix.correlation_matrix()?;
    Ok(TStatistic { t_n, r_n, projection, correlation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn spd(rows: &[Vec<f64>]) -> SpdMatrix {
        SpdMatrix::from_rows(rows).unwrap()
    }

    fn random_spd(dim: usize, rng: &mut RngStream) -> SpdMatrix {
        let b: Vec<Vec<f64>> =
            (0..dim).map(|_| (0..dim).map(|_| 2.0 * rng.uniform() - 1.0).collect()).collect();
        SpdMatrix::from_fn(dim, |i, j| {
            let dot: f64 = (0..dim).map(|k| b[i][k] * b[j][k]).sum();
            dot + if i == j { 0.3 } else { 0.0 }
        })
    }

    #[test]
    fn point_already_in_cone_projects_to_itself() {
        let m = spd(&[vec![2.0, 0.3], vec![0.3, 1.0]]);
        let r = project_nonpositive(&[-1.0, -2.0], &m).unwrap();
        assert_eq!(r.mu0, vec![-1.0, -2.0]);
        assert_eq!(r.distance_sq, 0.0);
        assert!(r.active_set.is_empty());
    }

    #[test]
    fn interior_positive_point_projects_to_origin() {
        // metric^{-1} x >= 0, so the origin is KKT-optimal
        let m = spd(&[vec![0.01282, 0.01586], vec![0.01586, 0.04022]]);
        let r = project_nonpositive(&[0.69, 1.53], &m).unwrap();
        assert_eq!(r.mu0, vec![0.0, 0.0]);
        assert_eq!(r.active_set, vec![0, 1]);
        assert!((r.distance_sq - 59.34651818685797).abs() < 1e-9);
    }

    #[test]
    fn face_projection_matches_hand_kkt_solve() {
        let m = spd(&[vec![0.0081, 0.0156], vec![0.0156, 0.0545]]);
        let r = project_nonpositive(&[0.166, 0.009], &m).unwrap();
        assert_eq!(r.active_set, vec![0]);
        assert!(r.mu0[0] == 0.0);
        assert!((r.mu0[1] - (-0.3107037037037037)).abs() < 1e-12, "{}", r.mu0[1]);
        assert!((r.distance_sq - 3.401975308641977).abs() < 1e-10, "{}", r.distance_sq);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = RngStream::new(1, 2);
        for _ in 0..200 {
            let m = random_spd(3, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let r1 = project_nonpositive(&x, &m).unwrap();
            let r2 = project_nonpositive(&r1.mu0, &m).unwrap();
            assert_eq!(r1.mu0, r2.mu0);
            assert_eq!(r2.distance_sq, 0.0);
        }
    }

    #[test]
    fn projection_is_scale_equivariant() {
        let mut rng = RngStream::new(2, 2);
        for _ in 0..200 {
            let m = random_spd(2, &mut rng);
            let x: Vec<f64> = (0..2).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let c = 0.1 + 5.0 * rng.uniform();
            let r = project_nonpositive(&x, &m).unwrap();
            let xc: Vec<f64> = x.iter().map(|v| c * v).collect();
            let rc = project_nonpositive(&xc, &m).unwrap();
            for i in 0..2 {
                assert!(
                    (rc.mu0[i] - c * r.mu0[i]).abs() <= 1e-10 * (1.0 + r.mu0[i].abs() * c),
                    "{} vs {}",
                    rc.mu0[i],
                    c * r.mu0[i]
                );
            }
            assert!((rc.distance_sq - c * c * r.distance_sq).abs() <= 1e-9 * (1.0 + rc.distance_sq));
        }
    }

    #[test]
    fn distance_is_zero_iff_point_in_cone() {
        let mut rng = RngStream::new(3, 3);
        for _ in 0..500 {
            let m = random_spd(3, &mut rng);
            // components bounded away from zero so the classification is unambiguous
            let x: Vec<f64> = (0..3)
                .map(|_| {
                    let v = 2.0 * rng.uniform() - 1.0;
                    v.signum() * (0.01 + v.abs())
                })
                .collect();
            let r = project_nonpositive(&x, &m).unwrap();
            let in_cone = x.iter().all(|&v| v <= 0.0);
            if in_cone {
                assert!(r.distance_sq <= 1e-12);
            } else {
                assert!(r.distance_sq > 1e-12);
            }
        }
    }

    #[test]
    fn projection_beats_dense_grid_oracle() {
        // small-scale version of the acceptance sweep
        let mut rng = RngStream::new(4, 4);
        for _ in 0..50 {
            let m = random_spd(2, &mut rng);
            let x = vec![2.0 * rng.uniform() - 0.5, 2.0 * rng.uniform() - 0.5];
            let r = project_nonpositive(&x, &m).unwrap();
            let step = 0.01;
            let mut best = f64::INFINITY;
            let lo0 = r.mu0[0] - 0.5;
            let lo1 = r.mu0[1] - 0.5;
            let mut g0 = lo0;
            while g0 <= 0.0 + 1e-12 {
                let mut g1 = lo1;
                while g1 <= 0.0 + 1e-12 {
                    let d = vec![x[0] - g0, x[1] - g1];
                    best = best.min(m.quad_form(&d).unwrap());
                    g1 += step;
                }
                g0 += step;
            }
            assert!(
                r.distance_sq <= best + 1e-9,
                "projection {} worse than grid {best}",
                r.distance_sq
            );
        }
    }

    #[test]
    fn t_statistic_zero_inside_cone() {
        let cov = CovEstimate::per_observation(spd(&[vec![1.0, 0.2], vec![0.2, 1.0]]), 50).unwrap();
        let t = t_statistic(&[-0.4, -0.1], &cov).unwrap();
        assert_eq!(t.t_n, 0.0);
        assert_eq!(t.r_n, 0.0);
    }

    #[test]
    fn t_statistic_estimator_kind_reproduces_fixture() {
        let cov = CovEstimate::of_estimator(
            spd(&[vec![0.01282, 0.01586], vec![0.01586, 0.04022]]),
            806,
        )
        .unwrap();
        let t = t_statistic(&[0.69, 1.53], &cov).unwrap();
        assert!((t.t_n - 59.34651818685797).abs() < 1e-9);
        assert!((t.rho().unwrap() - 0.698454528133613).abs() < 1e-12);

        let cov2 = CovEstimate::of_estimator(
            spd(&[vec![0.0081, 0.0156], vec![0.0156, 0.0545]]),
            806,
        )
        .unwrap();
        let t2 = t_statistic(&[0.166, 0.009], &cov2).unwrap();
        assert!((t2.t_n - 3.401975308641977).abs() < 1e-10, "{}", t2.t_n);
    }

    #[test]
    fn t_statistic_per_observation_scales_by_n() {
        let s = spd(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let cov = CovEstimate::per_observation(s, 50).unwrap();
        let t = t_statistic(&[0.3, -1.0], &cov).unwrap();
        assert!((t.t_n - 50.0 * 0.09).abs() < 1e-10);
        assert!((t.r_n - 50.0 * (1.0 + 0.09f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn kkt_tolerance_absorbs_boundary_noise() {
        let m = SpdMatrix::identity(2);
        let r = project_nonpositive(&[1e-10, -0.5], &m).unwrap();
        assert_eq!(r.distance_sq, 0.0);
        assert!(r.mu0[0] <= 0.0);
    }
}
