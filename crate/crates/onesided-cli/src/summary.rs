//! Summary-level input: a hand-editable `key = value` file carrying an
//! estimate vector, its covariance matrix, and the sample size behind it.
//!
//! ```text
//! # estimate and covariance
//! theta_hat = -0.69, -1.53
//! theta_star = 0, 0
//! n = 806
//! cov = 0.01282, 0.01586; 0.01586, 0.04022
//! ```
//!
//! Vector entries are comma-separated; matrix rows are comma-separated lists
//! joined by semicolons. `theta_star` is optional and defaults to zero.

use onesided::error::{Error, Result};
use onesided::linalg::SpdMatrix;

#[derive(Debug, Clone)]
pub struct SummaryInput {
    pub theta_hat: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub n: usize,
    pub cov: SpdMatrix,
}

impl SummaryInput {
    pub fn parse(text: &str) -> Result<Self> {
        let mut theta_hat: Option<Vec<f64>> = None;
        let mut theta_star: Option<Vec<f64>> = None;
        let mut n: Option<usize> = None;
        let mut cov_rows: Option<Vec<Vec<f64>>> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::BadInput(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "theta_hat" => theta_hat = Some(parse_vector(value, lineno)?),
                "theta_star" => theta_star = Some(parse_vector(value, lineno)?),
                "n" => {
                    n = Some(value.parse().map_err(|_| {
                        Error::BadInput(format!("line {}: n must be a positive integer", lineno + 1))
                    })?)
                }
                "cov" => {
                    let rows: Result<Vec<Vec<f64>>> =
                        value.split(';').map(|row| parse_vector(row, lineno)).collect();
                    cov_rows = Some(rows?);
                }
                other => {
                    return Err(Error::BadInput(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }

        let theta_hat = theta_hat.ok_or_else(|| Error::BadInput("missing theta_hat".into()))?;
        let n = n.ok_or_else(|| Error::BadInput("missing n".into()))?;
        let cov_rows = cov_rows.ok_or_else(|| Error::BadInput("missing cov".into()))?;
        let p = theta_hat.len();
        if p == 0 {
            return Err(Error::BadInput("theta_hat must be nonempty".into()));
        }
        let theta_star = theta_star.unwrap_or_else(|| vec![0.0; p]);
        if theta_star.len() != p {
            return Err(Error::BadInput(format!(
                "theta_star has {} entries but theta_hat has {p}",
                theta_star.len()
            )));
        }
        if cov_rows.len() != p || cov_rows.iter().any(|r| r.len() != p) {
            return Err(Error::BadInput(format!("cov must be a {p}x{p} matrix")));
        }
        let cov = SpdMatrix::from_rows(&cov_rows)?;
        Ok(SummaryInput { theta_hat, theta_star, n, cov })
    }

    /// Render in the same format, with full-precision (round-trippable)
    /// floats.
    pub fn render(&self, header: &str) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let p = self.theta_hat.len();
        let cov = (0..p)
            .map(|i| join(&(0..p).map(|j| self.cov.get(i, j)).collect::<Vec<f64>>()))
            .collect::<Vec<_>>()
            .join("; ");
        format!(
            "# {header}\ntheta_hat = {}\ntheta_star = {}\nn = {}\ncov = {}\n",
            join(&self.theta_hat),
            join(&self.theta_star),
            self.n,
            cov
        )
    }
}

fn parse_vector(text: &str, lineno: usize) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::BadInput(format!("line {}: '{}' is not a number", lineno + 1, tok.trim()))
            })
        })
        .collect()
}
