//! Brute-force reference solver for small QPs.
//!
//! Every subset of inequality rows is tried as the active set. Each candidate
//! KKT system is solved with a pseudo-inverse, so singular Hessians and
//! redundant constraints are handled without special cases. By convexity any
//! consistent candidate that is primal feasible with nonnegative multipliers
//! is a global minimizer.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::DenseQp;

pub const MAX_VARIABLES: usize = 12;
pub const MAX_INEQUALITIES: usize = 14;

const FEAS_TOL: f64 = 1e-9;
const MULT_TOL: f64 = 1e-10;
const PINV_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration limit exceeded: n = {n} (max {MAX_VARIABLES}), q = {q} (max {MAX_INEQUALITIES})")]
    EnumerationLimit { n: usize, q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub status: OracleStatus,
    /// Minimizer when optimal, a feasible point when unbounded.
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub v: DVector<f64>,
    pub objective: f64,
    /// Inequality rows treated as equalities at the returned point.
    pub active_set: Vec<usize>,
    /// Descent direction of the recession cone when unbounded.
    pub direction: Option<DVector<f64>>,
}

struct Candidate {
    z: DVector<f64>,
    lambda: DVector<f64>,
    v: DVector<f64>,
    objective: f64,
    active: Vec<usize>,
}

/// Minimum-norm least-squares solution of a symmetric system through its
/// eigendecomposition.
fn pseudo_solve(k: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = k.clone().symmetric_eigen();
    let cut = PINV_EPS * eig.eigenvalues.amax().max(1.0);
    let mut coef = eig.eigenvectors.transpose() * rhs;
    for (c, &l) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
        *c = if l.abs() > cut { *c / l } else { 0.0 };
    }
    &eig.eigenvectors * coef
}

/// Minimizes `1/2 z'Hz + f'z` over `{G z = h, A z <= b}` by enumeration.
fn enumerate(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    hv: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<Candidate> {
    let n = f.len();
    let m = hv.len();
    let q = b.len();
    let mut best: Option<Candidate> = None;
    for mask in 0u32..(1u32 << q) {
        let active: Vec<usize> = (0..q).filter(|j| mask & (1 << j) != 0).collect();
        let k = active.len();
        let dim = n + m + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        rhs.rows_mut(0, n).copy_from(&(-f));
        for i in 0..m {
            for c in 0..n {
                kkt[(n + i, c)] = g[(i, c)];
                kkt[(c, n + i)] = g[(i, c)];
            }
            rhs[n + i] = hv[i];
        }
        for (i, &j) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(n + m + i, c)] = a[(j, c)];
                kkt[(c, n + m + i)] = a[(j, c)];
            }
            rhs[n + m + i] = b[j];
        }
        let sol = pseudo_solve(&kkt, &rhs);
        let scale = 1.0 + rhs.amax() + sol.amax();
        if (&kkt * &sol - &rhs).amax() > FEAS_TOL * scale {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        let mults = sol.rows(n + m, k);
        if mults.iter().any(|&w| w < -MULT_TOL * (1.0 + mults.amax())) {
            continue;
        }
        let az = a * &z;
        if (0..q).any(|j| az[j] - b[j] > FEAS_TOL * (1.0 + b[j].abs() + az[j].abs())) {
            continue;
        }
        let objective = 0.5 * z.dot(&(h * &z)) + f.dot(&z);
        if best.as_ref().is_some_and(|c| c.objective <= objective) {
            continue;
        }
        let mut v = DVector::zeros(q);
        for (i, &j) in active.iter().enumerate() {
            v[j] = mults[i].max(0.0);
        }
        best = Some(Candidate {
            z,
            // the KKT system above uses +G'lambda with Gz = h
            lambda: sol.rows(n, m).into_owned(),
            v,
            objective,
            active,
        });
    }
    best
}

/// Classifies and solves a small QP exactly (up to roundoff).
pub fn oracle_solve(p: &DenseQp) -> Result<OracleResult, OracleError> {
    let n = p.cost.len();
    let q = p.ineq_rhs.len();
    if n > MAX_VARIABLES || q > MAX_INEQUALITIES {
        return Err(OracleError::EnumerationLimit { n, q });
    }
    if let Some(c) = enumerate(
        &p.hessian,
        &p.cost,
        &p.eq_mat,
        &p.eq_rhs,
        &p.ineq_mat,
        &p.ineq_rhs,
    ) {
        return Ok(OracleResult {
            status: OracleStatus::Optimal,
            z: c.z,
            lambda: c.lambda,
            v: c.v,
            objective: c.objective,
            active_set: c.active,
            direction: None,
        });
    }

    // feasibility phase: the projection of the origin onto the feasible set
    let eye = DMatrix::identity(n, n);
    let zero = DVector::zeros(n);
    let Some(feasible) = enumerate(&eye, &zero, &p.eq_mat, &p.eq_rhs, &p.ineq_mat, &p.ineq_rhs)
    else {
        return Ok(OracleResult {
            status: OracleStatus::Infeasible,
            z: DVector::zeros(n),
            lambda: DVector::zeros(p.eq_rhs.len()),
            v: DVector::zeros(q),
            objective: f64::INFINITY,
            active_set: Vec::new(),
            direction: None,
        });
    };

    // Feasible without a minimizer: the cost is unbounded below. The
    // projection of -f onto the cone {Hd = 0, Gd = 0, Ad <= 0} is a descent
    // direction with f'd = -|d|^2.
    let m = p.eq_rhs.len();
    let mut cone_eq = DMatrix::zeros(n + m, n);
    cone_eq.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
    cone_eq.view_mut((n, 0), (m, n)).copy_from(&p.eq_mat);
    let direction = enumerate(
        &eye,
        &p.cost,
        &cone_eq,
        &DVector::zeros(n + m),
        &p.ineq_mat,
        &DVector::zeros(q),
    )
    .map(|c| c.z)
    .filter(|d| p.cost.dot(d) < 0.0);
    Ok(OracleResult {
        status: OracleStatus::Unbounded,
        objective: f64::NEG_INFINITY,
        z: feasible.z,
        lambda: DVector::zeros(m),
        v: DVector::zeros(q),
        active_set: feasible.active,
        direction,
    })
}
