//! Damped Newton root finding for square estimating-equation systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per Newton step.
    pub step_halvings: usize,
    /// Relative central-difference step: `h_j = jacobian_step * max(1, |x_j|)`.
    pub jacobian_step: f64,
    /// Jacobian condition estimate above which a warning is attached.
    pub condition_warn: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            step_halvings: 30,
            jacobian_step: 1e-6,
            condition_warn: 1e10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.jacobian_step > 0.0 && self.condition_warn > 0.0)
            || self.max_iter == 0
            || self.step_halvings == 0
        {
            return Err(Error::Config("solver settings must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub root: Vec<f64>,
    /// Max-norm of the residual at `root`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub jacobian_at_root: DMatrix<f64>,
    /// Ratio of extreme singular values of `jacobian_at_root`.
    pub condition: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference Jacobian; column `j` perturbs `x_j`.
pub fn numerical_jacobian<F>(f: &F, x: &[f64], cfg: &SolverConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = cfg.jacobian_step * x[j].abs().max(1.0);
        // Divide by the representable step actually taken.
        let (hi, lo) = (x[j] + h, x[j] - h);
        xp[j] = hi;
        let fp = f(&xp)?;
        xp[j] = lo;
        let fm = f(&xp)?;
        xp[j] = x[j];
        let col: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (hi - lo)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteJacobian { column: j });
        }
        columns.push(col);
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, n, |i, j| columns[j][i]))
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `f(x) = 0` by Newton iteration with monotone step halving.
///
/// Errors only when `f` cannot be evaluated at the starting point or at an
/// accepted iterate; numerical failure (singular Jacobian, stalled line
/// search, iteration limit) is reported through `converged = false`.
pub fn solve_system<F>(f: F, x0: &[f64], cfg: &SolverConfig) -> Result<SolveOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let at = |x: &[f64], e: Error| Error::Evaluation {
        iterate: x.to_vec(),
        source: Box::new(e),
    };
    let mut x = x0.to_vec();
    let mut fx = f(&x).map_err(|e| at(&x, e))?;
    if fx.len() != x.len() {
        return Err(Error::Config(format!(
            "system maps {} parameters to {} equations",
            x.len(),
            fx.len()
        )));
    }
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = max_norm(&fx) <= cfg.tol;

    while !converged && iterations < cfg.max_iter {
        let jac = numerical_jacobian(&f, &x, cfg).map_err(|e| at(&x, e))?;
        let rhs = DVector::from_iterator(fx.len(), fx.iter().map(|v| -v));
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                warnings.push(format!(
                    "singular jacobian at iteration {iterations} (condition {:e})",
                    condition_number(&jac)
                ));
                break;
            }
        };
        let base = l2_norm(&fx);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.step_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Ok(ft) = f(&trial) {
                if ft.iter().all(|v| v.is_finite()) && l2_norm(&ft) < base {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((nx, nf)) => {
                x = nx;
                fx = nf;
                converged = max_norm(&fx) <= cfg.tol;
            }
            None => {
                warnings.push(format!(
                    "line search failed to reduce the residual at iteration {iterations}"
                ));
                break;
            }
        }
    }
    if !converged && iterations >= cfg.max_iter {
        warnings.push(format!("iteration limit {} reached", cfg.max_iter));
    }

    let jacobian_at_root = numerical_jacobian(&f, &x, cfg).map_err(|e| at(&x, e))?;
    let condition = condition_number(&jacobian_at_root);
    if condition > cfg.condition_warn {
        warnings.push(format!("ill-conditioned jacobian at root (condition {condition:e})"));
    }
    Ok(SolveOutcome {
        residual_norm: max_norm(&fx),
        root: x,
        iterations,
        jacobian_at_root,
        condition,
        converged,
        warnings,
    })
}
