//! Dense quasi-Newton maximizer (BFGS inverse-curvature updates with a
//! backtracking line search). Sized for the low-dimensional concave duals
//! fitted by the density ratio model.

pub(crate) struct MaximizeResult {
    pub x: Vec<f64>,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize `f`; the closure evaluates the objective and writes its gradient.
/// `h0_diag` seeds the inverse-curvature approximation (a per-coordinate
/// scale preconditioner), `tol` is the gradient max-norm target.
pub(crate) fn maximize<F>(
    f: F,
    x0: Vec<f64>,
    h0_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> MaximizeResult
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        f(&[], &mut []);
        return MaximizeResult { x: x0, grad_max_norm: 0.0, iterations: 0, converged: true };
    }
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    // inverse Hessian approximation of the *negated* objective
    let mut h: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { h0_diag[i].max(1e-300) } else { 0.0 }).collect())
        .collect();

    let mut iterations = 0;
    let mut stalls = 0u32;
    while iterations < max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < tol {
            return MaximizeResult { x, grad_max_norm: gnorm, iterations, converged: true };
        }
        iterations += 1;

        // ascent direction d = H g
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += h[i][j] * g[j];
            }
            d[i] = s;
        }
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !slope.is_finite() || slope <= 0.0 {
            // reset a stale approximation and retry along the gradient
            for i in 0..n {
                for j in 0..n {
                    h[i][j] = if i == j { h0_diag[i].max(1e-300) } else { 0.0 };
                }
            }
            d.copy_from_slice(&g);
            for (di, h0) in d.iter_mut().zip(h0_diag) {
                *di *= h0.max(1e-300);
            }
        }
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();

        // backtracking Armijo line search
        let mut step = 1.0f64;
        let mut new_x;
        let mut new_g = vec![0.0; n];
        let mut new_value;
        let mut ok = false;
        loop {
            new_x = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect::<Vec<f64>>();
            new_value = f(&new_x, &mut new_g);
            if new_value.is_finite() && new_value >= value + 1e-4 * step * slope {
                ok = true;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if !ok {
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return MaximizeResult { x, grad_max_norm: gnorm, iterations, converged: gnorm < tol };
        }
        // near the optimum the objective change drops below evaluation
        // noise; hand off once no measurable progress is being made
        if new_value <= value + value.abs() * 1e-15 {
            stalls += 1;
            if stalls >= 3 {
                let gnorm = new_g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                return MaximizeResult {
                    x: new_x,
                    grad_max_norm: gnorm,
                    iterations,
                    converged: gnorm < tol,
                };
            }
        } else {
            stalls = 0;
        }

        // BFGS update on the negated problem: s = dx, y = -(dg)
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&new_g).map(|(old, new)| old - new).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h[i][j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }
        x = new_x;
        g.copy_from_slice(&new_g);
        value = new_value;
    }
    let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    MaximizeResult { x, grad_max_norm: gnorm, iterations, converged: gnorm < tol }
}
