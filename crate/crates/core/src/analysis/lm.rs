//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when `|dx| <= rel_step * (|x| + rel_step)`.
    pub rel_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            rel_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSolution {
    pub x: DVector<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    /// `J^T J` at `x`; its inverse is the unscaled covariance.
    pub normal: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LmSolution {
    /// `(J^T J)^-1`, or `None` when singular.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.normal.clone().try_inverse()
    }
}

/// Minimize `|r(x)|^2`. `model` returns residuals and the Jacobian
/// (rows: residuals, columns: parameters).
pub fn minimize<F>(model: F, x0: DVector<f64>, opts: &LmOptions) -> LmSolution
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut x = x0;
    let (mut r, mut j) = model(&x);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if cost == 0.0 || g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            let (rt, jt_new) = model(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let small = step.norm() <= opts.rel_step * (x.norm() + opts.rel_step);
                x = trial;
                r = rt;
                j = jt_new;
                let stalled = cost - ct <= 1e-15 * cost;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small || stalled {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let normal = j.transpose() * &j;
    LmSolution {
        x,
        cost,
        normal,
        iterations,
        converged,
    }
}
