//! Dense ADMM solver for convex QPs in the form
//!
//! ```text
//! minimize   1/2 x' P x + q' x
//! subject to l <= A x <= u
//! ```
//!
//! with operator-splitting iterations, periodic step-size adaptation, and
//! warm starting. Deterministic: no randomization anywhere.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 20_000;

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_UPDATE_PERIOD: usize = 50;
const RHO_REFAC_RATIO: f64 = 5.0;

/// Problem data. `a` may have zero rows for an unconstrained QP.
#[derive(Debug, Clone)]
pub struct Qp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl Qp {
    pub fn validate(&self) -> Result<()> {
        let n = self.p.nrows();
        if self.p.ncols() != n || self.q.len() != n {
            return Err(Error::input("QP cost dimensions are inconsistent".to_string()));
        }
        let m = self.a.nrows();
        if (m > 0 && self.a.ncols() != n) || self.l.len() != m || self.u.len() != m {
            return Err(Error::input("QP constraint dimensions are inconsistent".to_string()));
        }
        for i in 0..m {
            if self.l[i] > self.u[i] {
                return Err(Error::input(format!(
                    "constraint {i} has lower bound {} above upper bound {}",
                    self.l[i], self.u[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers for the row constraints.
    pub y: DVector<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolverSettings {
    pub fn standard() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

fn factorize(p: &DMatrix<f64>, a: &DMatrix<f64>, rho: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = p.nrows();
    let mut kkt = p.clone();
    for i in 0..n {
        kkt[(i, i)] += SIGMA;
    }
    if a.nrows() > 0 {
        kkt += a.transpose() * a * rho;
    }
    Cholesky::new(kkt).ok_or_else(|| {
        Error::numerical("ADMM reduced system is not positive definite; the QP cost may be indefinite".to_string())
    })
}

/// Solve a QP, optionally warm-started from a previous solution's `(x, y)`.
pub fn solve_qp(
    qp: &Qp,
    settings: &SolverSettings,
    warm_start: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<QpSolution> {
    qp.validate()?;
    let n = qp.p.nrows();
    let m = qp.a.nrows();

    // no constraints: a single SPD solve is exact
    if m == 0 {
        let chol = Cholesky::new(qp.p.clone()).ok_or_else(|| {
            Error::numerical("unconstrained QP cost is not positive definite".to_string())
        })?;
        let x = chol.solve(&(-&qp.q));
        let dual = (&qp.p * &x + &qp.q).amax();
        let objective = 0.5 * (&qp.p * &x).dot(&x) + qp.q.dot(&x);
        return Ok(QpSolution {
            x,
            y: DVector::zeros(0),
            objective,
            primal_residual: 0.0,
            dual_residual: dual,
            iterations: 0,
            converged: dual <= settings.tolerance.max(1e-9),
        });
    }

    let mut rho: f64 = 0.1;
    let mut chol = factorize(&qp.p, &qp.a, rho)?;

    let (mut x, mut y) = match warm_start {
        Some((x0, y0)) if x0.len() == n && y0.len() == m => (x0.clone(), y0.clone()),
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = &qp.a * &x;
    for i in 0..m {
        z[i] = z[i].clamp(qp.l[i], qp.u[i]);
    }

    let tol = settings.tolerance;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=settings.max_iterations {
        iterations = iter;
        // x-update: (P + sigma I + rho A'A) x~ = sigma x - q + A'(rho z - y)
        let rhs = &x * SIGMA - &qp.q + qp.a.transpose() * (&z * rho - &y);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &qp.a * &x_tilde;

        let x_next = &x_tilde * ALPHA + &x * (1.0 - ALPHA);
        let z_relaxed = &z_tilde * ALPHA + &z * (1.0 - ALPHA);
        let mut z_next = &z_relaxed + &y / rho;
        for i in 0..m {
            z_next[i] = z_next[i].clamp(qp.l[i], qp.u[i]);
        }
        y += (&z_relaxed - &z_next) * rho;
        x = x_next;
        z = z_next;

        if iter % 10 == 0 || iter == settings.max_iterations {
            let ax = &qp.a * &x;
            primal_residual = (&ax - &z).amax();
            dual_residual = (&qp.p * &x + &qp.q + qp.a.transpose() * &y).amax();
            if primal_residual <= tol && dual_residual <= tol {
                converged = true;
                break;
            }
            if iter % RHO_UPDATE_PERIOD == 0 {
                let prim_scale = ax.amax().max(z.amax()).max(1e-12);
                let dual_scale = (&qp.p * &x)
                    .amax()
                    .max(qp.q.amax())
                    .max((qp.a.transpose() * &y).amax())
                    .max(1e-12);
                let ratio = ((primal_residual / prim_scale) / (dual_residual / dual_scale).max(1e-300)).sqrt();
                let rho_new = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if rho_new / rho > RHO_REFAC_RATIO || rho / rho_new > RHO_REFAC_RATIO {
                    rho = rho_new;
                    chol = factorize(&qp.p, &qp.a, rho)?;
                }
            }
        }
    }

    let objective = 0.5 * (&qp.p * &x).dot(&x) + qp.q.dot(&x);
    Ok(QpSolution {
        x,
        y,
        objective,
        primal_residual,
        dual_residual,
        iterations,
        converged,
    })
}
