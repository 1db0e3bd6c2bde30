//! Small dense symmetric positive-definite matrix algebra.
//!
//! Dimensions are small (p <= 8 in the tests and harness); everything is
//! dense, Cholesky-based, and allocation-light. Matrices are immutable after
//! construction and safe to share across threads; the factorization is
//! computed once on first use.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Relative pivot floor: factor diagonals below this fraction of the largest
/// factor diagonal flag the matrix as numerically degenerate instead of
/// silently regularizing it.
const PIVOT_RATIO_FLOOR: f64 = 1e-10;

/// Symmetric positive-definite matrix. Only the lower triangle is stored, so
/// symmetry is exact by construction.
#[derive(Debug)]
pub struct SpdMatrix {
    dim: usize,
    lower: Vec<f64>, // packed row-major lower triangle: (i, j<=i) at i(i+1)/2 + j
    chol: OnceLock<Result<CholeskyFactor>>,
}

impl Clone for SpdMatrix {
    fn clone(&self) -> Self {
        SpdMatrix { dim: self.dim, lower: self.lower.clone(), chol: OnceLock::new() }
    }
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

impl SpdMatrix {
    /// Build from full rows; entries must be finite and symmetric to within
    /// 1e-9 relative. The (averaged) lower triangle is kept.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::BadInput("matrix must have at least one row".into()));
        }
        let mut scale = 0.0f64;
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::BadInput("matrix entries must be finite".into()));
                }
                scale = scale.max(v.abs());
            }
        }
        let tol = 1e-9 * scale.max(1.0);
        let mut lower = vec![0.0; dim * (dim + 1) / 2];
        for i in 0..dim {
            for j in 0..=i {
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(Error::BadInput(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
                lower[packed(i, j)] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        Ok(SpdMatrix { dim, lower, chol: OnceLock::new() })
    }

    /// Build from a function of (i, j); only the lower triangle is evaluated.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut lower = vec![0.0; dim * (dim + 1) / 2];
        for i in 0..dim {
            for j in 0..=i {
                lower[packed(i, j)] = f(i, j);
            }
        }
        SpdMatrix { dim, lower, chol: OnceLock::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower[packed(i, j)]
        } else {
            self.lower[packed(j, i)]
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.lower.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Cholesky factor, computed on first use. Fails on non-positive pivots
    /// and on pivots small enough to make results meaningless.
    pub fn factor(&self) -> Result<&CholeskyFactor> {
        self.chol
            .get_or_init(|| CholeskyFactor::compute(self))
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Whether the factorization succeeds.
    pub fn usable(&self) -> bool {
        self.factor().is_ok()
    }

    /// Quadratic form under the inverse metric, `v' A^{-1} v`, evaluated via
    /// the factorization without forming an explicit inverse. Nonnegative by
    /// construction.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let f = self.factor()?;
        let mut w = v.to_vec();
        f.forward_solve(&mut w);
        Ok(w.iter().map(|x| x * x).sum())
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: b.len() });
        }
        let f = self.factor()?;
        let mut x = b.to_vec();
        f.forward_solve(&mut x);
        f.backward_solve(&mut x);
        Ok(x)
    }

    /// Correlation between coordinates `i != j`, clamped away from ±1 so a
    /// downstream `acos` stays finite.
    pub fn correlation_of(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::Domain("correlation requires two distinct indices".into()));
        }
        if i >= self.dim || j >= self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: i.max(j) + 1 });
        }
        let vii = self.get(i, i);
        let vjj = self.get(j, j);
        if vii <= 0.0 || vjj <= 0.0 {
            return Err(Error::DegenerateMatrix);
        }
        let r = self.get(i, j) / (vii * vjj).sqrt();
        Ok(clamp_correlation(r))
    }

    /// Correlation matrix with unit diagonal and clamped off-diagonals.
    pub fn correlation_matrix(&self) -> Result<SpdMatrix> {
        for i in 0..self.dim {
            if self.get(i, i) <= 0.0 {
                return Err(Error::DegenerateMatrix);
            }
        }
        Ok(SpdMatrix::from_fn(self.dim, |i, j| {
            if i == j {
                1.0
            } else {
                clamp_correlation(self.get(i, j) / (self.get(i, i) * self.get(j, j)).sqrt())
            }
        }))
    }

    /// Principal submatrix on `idx` (indices must be strictly increasing).
    pub fn submatrix(&self, idx: &[usize]) -> SpdMatrix {
        SpdMatrix::from_fn(idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    /// Covariance of the complement coordinates conditional on the `s`
    /// coordinates being fixed: the Schur complement `A_{s's'} - A_{s's}
    /// A_{ss}^{-1} A_{ss'}`.
    pub fn conditional_cov(&self, s: &[usize]) -> Result<SpdMatrix> {
        if s.is_empty() || s.len() >= self.dim {
            return Err(Error::Domain(
                "conditioning set must be a nonempty proper subset of the indices".into(),
            ));
        }
        let mut sorted = s.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s.len() || *sorted.last().unwrap() >= self.dim {
            return Err(Error::Domain("conditioning set has repeated or out-of-range indices".into()));
        }
        let comp: Vec<usize> = (0..self.dim).filter(|i| !sorted.contains(i)).collect();
        let a_ss = self.submatrix(&sorted);
        // columns of A_{ss'}: solve A_ss z_c = A_{s, comp[c]}
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(comp.len());
        for &c in &comp {
            let col: Vec<f64> = sorted.iter().map(|&r| self.get(r, c)).collect();
            z.push(a_ss.solve(&col)?);
        }
        Ok(SpdMatrix::from_fn(comp.len(), |i, j| {
            let dot: f64 = sorted
                .iter()
                .enumerate()
                .map(|(r, &sr)| self.get(sr, comp[i]) * z[j][r])
                .sum();
            self.get(comp[i], comp[j]) - dot
        }))
    }

    /// Explicit inverse (used only for low-dimensional orthant work).
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            cols.push(self.solve(&e)?);
        }
        Ok(SpdMatrix::from_fn(self.dim, |i, j| 0.5 * (cols[j][i] + cols[i][j])))
    }

    /// Positive semidefiniteness check by pivoted elimination with a zero
    /// tolerance; used for bootstrap outputs that may be exactly singular.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let n = self.dim;
        let mut a = self.rows();
        let floor = tol * self.max_abs().max(1.0);
        for k in 0..n {
            let pivot = a[k][k];
            if pivot < -floor {
                return false;
            }
            if pivot <= floor {
                // pivot is numerically zero: the whole row/column must vanish
                if (0..n).any(|j| a[k][j].abs() > floor) {
                    return false;
                }
                continue;
            }
            for i in (k + 1)..n {
                let f = a[i][k] / pivot;
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        true
    }
}

fn clamp_correlation(r: f64) -> f64 {
    r.clamp(-1.0 + 1e-12, 1.0 - 1e-12)
}

/// Lower-triangular Cholesky factor of an [`SpdMatrix`].
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>, // packed like SpdMatrix
}

impl CholeskyFactor {
    fn compute(a: &SpdMatrix) -> Result<Self> {
        let n = a.dim;
        let mut l = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a.get(i, j);
                for k in 0..j {
                    sum -= l[packed(i, k)] * l[packed(j, k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[packed(i, i)] = sum.sqrt();
                } else {
                    l[packed(i, j)] = sum / l[packed(j, j)];
                }
            }
        }
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        for i in 0..n {
            let d = l[packed(i, i)];
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin < PIVOT_RATIO_FLOOR * dmax {
            return Err(Error::DegenerateMatrix);
        }
        Ok(CholeskyFactor { dim: n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower[packed(i, j)]
        } else {
            0.0
        }
    }

    /// Solve `L w = v` in place.
    pub fn forward_solve(&self, v: &mut [f64]) {
        for i in 0..self.dim {
            let mut sum = v[i];
            for k in 0..i {
                sum -= self.lower[packed(i, k)] * v[k];
            }
            v[i] = sum / self.lower[packed(i, i)];
        }
    }

    /// Solve `L' x = w` in place.
    pub fn backward_solve(&self, v: &mut [f64]) {
        for i in (0..self.dim).rev() {
            let mut sum = v[i];
            for k in (i + 1)..self.dim {
                sum -= self.lower[packed(k, i)] * v[k];
            }
            v[i] = sum / self.lower[packed(i, i)];
        }
    }

    /// Multiply `L z` (used to turn iid normals into correlated draws).
    pub fn multiply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        for i in 0..self.dim {
            let mut sum = 0.0;
            for k in 0..=i {
                sum += self.lower[packed(i, k)] * z[k];
            }
            out[i] = sum;
        }
    }
}

/// Covariance estimate attached to its provenance: either a per-observation
/// covariance (to be divided by n when used for an estimator) or directly
/// the covariance of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    PerObservation,
    OfEstimator,
}

#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub matrix: SpdMatrix,
    pub sample_size: usize,
    pub kind: CovKind,
}

impl CovEstimate {
    pub fn new(matrix: SpdMatrix, sample_size: usize, kind: CovKind) -> Result<Self> {
        if kind == CovKind::PerObservation && sample_size < matrix.dim() + 1 {
            return Err(Error::BadInput(format!(
                "per-observation covariance needs sample size >= dim + 1, got n={} for dim {}",
                sample_size,
                matrix.dim()
            )));
        }
        if sample_size < 2 {
            return Err(Error::BadInput("sample size must be at least 2".into()));
        }
        Ok(CovEstimate { matrix, sample_size, kind })
    }

    pub fn per_observation(matrix: SpdMatrix, n: usize) -> Result<Self> {
        Self::new(matrix, n, CovKind::PerObservation)
    }

    pub fn of_estimator(matrix: SpdMatrix, n: usize) -> Result<Self> {
        Self::new(matrix, n, CovKind::OfEstimator)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_spd(dim: usize, rng: &mut RngStream) -> SpdMatrix {
        // A = B B' + dim * I with B uniform entries
        let b: Vec<Vec<f64>> =
            (0..dim).map(|_| (0..dim).map(|_| 2.0 * rng.uniform() - 1.0).collect()).collect();
        SpdMatrix::from_fn(dim, |i, j| {
            let dot: f64 = (0..dim).map(|k| b[i][k] * b[j][k]).sum();
            dot + if i == j { 0.5 } else { 0.0 }
        })
    }

    #[test]
    fn quad_form_identity() {
        let a = SpdMatrix::identity(2);
        assert!((a.quad_form(&[3.0, 4.0]).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn quad_form_reproduces_data_analysis_statistic() {
        let s = SpdMatrix::from_rows(&[vec![0.01282, 0.01586], vec![0.01586, 0.04022]]).unwrap();
        let t = s.quad_form(&[0.69, 1.53]).unwrap();
        assert!((t - 59.34651818685797).abs() < 1e-9, "{t}");
    }

    #[test]
    fn quad_form_agrees_with_adjugate_inverse_on_3x3() {
        // independent oracle: explicit inverse by cofactor expansion
        let mut rng = RngStream::new(100, 0);
        for _ in 0..100 {
            let a = random_spd(3, &mut rng);
            let m = a.rows();
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            let inv = [
                [
                    (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
                    (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                    (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
                ],
                [
                    (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
                    (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                    (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
                ],
                [
                    (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
                    (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                    (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
                ],
            ];
            let v = [rng.uniform(), rng.uniform(), rng.uniform()];
            let mut want = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    want += v[i] * inv[i][j] * v[j];
                }
            }
            let got = a.quad_form(&v).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn factor_multiply_roundtrip() {
        let mut rng = RngStream::new(7, 7);
        for dim in 1..=8 {
            for _ in 0..50 {
                let a = random_spd(dim, &mut rng);
                let f = a.factor().unwrap();
                let mut err = 0.0f64;
                for i in 0..dim {
                    for j in 0..dim {
                        let mut s = 0.0;
                        for k in 0..dim {
                            s += f.get(i, k) * f.get(j, k);
                        }
                        err = err.max((s - a.get(i, j)).abs());
                    }
                }
                assert!(err <= 1e-10 * a.max_abs(), "dim {dim}: err {err}");
            }
        }
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(SpdMatrix::identity(3).correlation_of(0, 1).unwrap(), 0.0);
        let s = SpdMatrix::from_rows(&[vec![0.01282, 0.01586], vec![0.01586, 0.04022]]).unwrap();
        let r = s.correlation_of(0, 1).unwrap();
        assert!((r - 0.698454528133613).abs() < 1e-12);
        // clamped boundary
        let ridge = SpdMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(ridge.correlation_of(0, 1).unwrap(), -1.0 + 1e-12);
        assert!(SpdMatrix::identity(2).correlation_of(1, 1).is_err());
        let zero_diag = SpdMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(zero_diag.correlation_of(0, 1), Err(Error::DegenerateMatrix)));
    }

    #[test]
    fn conditional_cov_of_diagonal_is_restriction() {
        let a = SpdMatrix::from_fn(4, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let c = a.conditional_cov(&[1]).unwrap();
        assert_eq!(c.dim(), 3);
        let want = [1.0, 3.0, 4.0];
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { want[i] } else { 0.0 };
                assert!((c.get(i, j) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conditional_cov_bivariate_closed_form() {
        for rho in [-0.9, -0.3, 0.0, 0.4, 0.85] {
            let a = SpdMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
            let c = a.conditional_cov(&[0]).unwrap();
            assert!((c.get(0, 0) - (1.0 - rho * rho)).abs() < 1e-14, "rho={rho}");
        }
    }

    #[test]
    fn conditional_cov_matches_brute_force_schur_and_stays_pd() {
        let mut rng = RngStream::new(31, 0);
        for trial in 0..1000 {
            let a = random_spd(4, &mut rng);
            let mask = 1 + (trial % 14); // nonempty proper subsets of 4 indices
            let s: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            if s.len() == 4 || s.is_empty() {
                continue;
            }
            let got = a.conditional_cov(&s).unwrap();
            assert!(got.usable(), "conditional covariance must stay PD");
            // brute force oracle via explicit Gauss-Jordan inverse of A_ss
            let comp: Vec<usize> = (0..4).filter(|i| !s.contains(i)).collect();
            let k = s.len();
            let mut inv: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let mut row = vec![0.0; 2 * k];
                    for j in 0..k {
                        row[j] = a.get(s[i], s[j]);
                    }
                    row[k + i] = 1.0;
                    row
                })
                .collect();
            for col in 0..k {
                let piv = inv[col][col];
                for j in 0..2 * k {
                    inv[col][j] /= piv;
                }
                for r in 0..k {
                    if r != col {
                        let f = inv[r][col];
                        for j in 0..2 * k {
                            inv[r][j] -= f * inv[col][j];
                        }
                    }
                }
            }
            for i in 0..comp.len() {
                for j in 0..comp.len() {
                    let mut dot = 0.0;
                    for r in 0..k {
                        for c in 0..k {
                            dot += a.get(comp[i], s[r]) * inv[r][k + c] * a.get(s[c], comp[j]);
                        }
                    }
                    let want = a.get(comp[i], comp[j]) - dot;
                    assert!(
                        (got.get(i, j) - want).abs() <= 1e-10 * a.max_abs(),
                        "trial {trial}: ({i},{j}) {} vs {want}",
                        got.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn near_singular_matrices_are_rejected() {
        let a = SpdMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-24]]).unwrap();
        assert!(matches!(a.factor(), Err(Error::NotPositiveDefinite | Error::DegenerateMatrix)));
        let b = SpdMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(b.factor(), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        assert!(SpdMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        let mut rng = RngStream::new(5, 1);
        for _ in 0..50 {
            let a = random_spd(4, &mut rng);
            let inv = a.inverse().unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for k in 0..4 {
                        s += a.get(i, k) * inv.get(k, j);
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s - want).abs() < 1e-8, "({i},{j}): {s}");
                }
            }
        }
    }

    #[test]
    fn psd_check_accepts_zero_and_rejects_indefinite() {
        let zero = SpdMatrix::from_fn(3, |_, _| 0.0);
        assert!(zero.is_positive_semidefinite(1e-12));
        let indef = SpdMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(!indef.is_positive_semidefinite(1e-12));
        let psd = SpdMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(psd.is_positive_semidefinite(1e-12));
    }

    #[test]
    fn cov_estimate_validates_sample_size() {
        let m = SpdMatrix::identity(3);
        assert!(CovEstimate::per_observation(m.clone(), 3).is_err());
        assert!(CovEstimate::per_observation(m.clone(), 4).is_ok());
        assert!(CovEstimate::of_estimator(m, 2).is_ok());
    }
}
