//! Dense Newton-step solver.
//!
//! The third block row of `V dx = -R` is eliminated with `D > 0`, and the
//! equality duals are folded in through `dlambda = (G dz + r2) / sigma`, leaving
//! one SPD system
//!
//! ```text
//!     (E + G'G / sigma) dz = r1 - A' D^-1 r3 - G' r2 / sigma,
//!     E = H + sigma I + A' C D^-1 A
//! ```
//!
//! solved with a Cholesky factorization. At tiny `sigma` the matrix can have a
//! condition number near `1 / sigma^2`; if Cholesky breaks down, a pivoted
//! Bunch-Kaufman factorization of the same matrix is used instead. The Gram
//! products and the factorizations run on faer's blocked kernels.

use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::linalg::solvers::{Lblt, Llt, Solve};
use faer::{Accum, Mat, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;
use crate::model::{DenseQp, NewtonBackend, QpProblem, StepSolver};
use crate::pfb::{JacobianScalars, Residual};
use crate::point::PrimalDualPoint;

#[derive(Debug)]
enum Factor {
    Cholesky(Llt<f64>),
    Pivoted(Lblt<f64>),
}

/// Factorization of the reduced Newton matrix together with the diagonal
/// data needed to recover `dlambda` and `dv`.
#[derive(Debug)]
pub struct DenseFactorization<'a> {
    qp: &'a DenseQp,
    chol: Factor,
    gamma: DVector<f64>,
    d: DVector<f64>,
    sigma: f64,
}

impl<'a> DenseFactorization<'a> {
    pub fn new(qp: &'a DenseQp, s: &JacobianScalars) -> Result<Self, SolverError> {
        let sigma = s.sigma;
        let dims = qp.dims();
        if s.gamma.len() != dims.q {
            return Err(SolverError::Dimension(format!(
                "{} Jacobian scalars for {} inequality rows",
                s.gamma.len(),
                dims.q
            )));
        }
        if sigma <= 0.0 {
            return Err(SolverError::InvalidOption(format!(
                "sigma = {sigma} must be positive"
            )));
        }
        let d = s.d_diag();
        debug_assert!(d.iter().all(|&di| di > 0.0), "D must be positive");

        let k = reduced_matrix(qp, &s.gamma, &d, sigma);
        if !k.as_ref().is_all_finite() {
            return Err(SolverError::FactorizationFailure {
                context: "dense reduced Newton matrix is not finite".into(),
            });
        }
        let chol = match k.llt(Side::Lower) {
            Ok(llt) => Factor::Cholesky(llt),
            Err(_) => Factor::Pivoted(k.lblt(Side::Lower)),
        };
        Ok(Self {
            qp,
            chol,
            gamma: s.gamma.clone(),
            d,
            sigma,
        })
    }

    /// Lower-triangular Cholesky factor `L` with `L L' = E + G'G / sigma`,
    /// or `None` when the pivoted fallback was used.
    pub fn factor_l(&self) -> Option<DMatrix<f64>> {
        match &self.chol {
            Factor::Cholesky(llt) => {
                let l = llt.L();
                Some(DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| l[(i, j)]))
            }
            Factor::Pivoted(_) => None,
        }
    }
}

/// Lower triangle of `H + sigma I + A' diag(gamma / d) A + G'G / sigma`.
fn reduced_matrix(qp: &DenseQp, gamma: &DVector<f64>, d: &DVector<f64>, sigma: f64) -> Mat<f64> {
    let n = qp.cost.len();
    let q = gamma.len();
    let m = qp.eq_rhs.len();
    let mut k = Mat::from_fn(n, n, |i, j| {
        if i == j {
            qp.hessian[(i, j)] + sigma
        } else {
            qp.hessian[(i, j)]
        }
    });
    if q + m > 0 {
        // stacked square root [diag(sqrt(gamma / d)) A; G / sqrt(sigma)]
        let rs = 1.0 / sigma.sqrt();
        let w: Vec<f64> = (0..q).map(|i| (gamma[i] / d[i]).sqrt()).collect();
        let root = Mat::from_fn(q + m, n, |i, j| {
            if i < q {
                w[i] * qp.ineq_mat[(i, j)]
            } else {
                rs * qp.eq_mat[(i - q, j)]
            }
        });
        matmul(
            k.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            root.transpose(),
            BlockStructure::Rectangular,
            root.as_ref(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
    }
    k
}

impl StepSolver for DenseFactorization<'_> {
    fn solve(&self, r: &Residual) -> PrimalDualPoint {
        let qp = self.qp;
        let sigma = self.sigma;
        // right-hand side of V dx = -R
        let r1 = -&r.z;
        let r2 = -&r.lambda;
        let r3 = -&r.v;
        let d_inv_r3 = r3.component_div(&self.d);
        let mut rhs = r1 - qp.ineq_tmul(&d_inv_r3);
        rhs.axpy(-1.0 / sigma, &qp.eq_tmul(&r2), 1.0);
        let rhs = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let sol = match &self.chol {
            Factor::Cholesky(f) => f.solve(rhs),
            Factor::Pivoted(f) => f.solve(rhs),
        };
        let dz = DVector::from_fn(sol.nrows(), |i, _| sol[(i, 0)]);
        let dl = (qp.eq_mul(&dz) + &r2) / sigma;
        let adz = qp.ineq_mul(&dz);
        let dv = DVector::from_fn(r3.len(), |i, _| {
            (r3[i] + self.gamma[i] * adz[i]) / self.d[i]
        });
        PrimalDualPoint::new(dz, dl, dv)
    }
}

impl NewtonBackend for DenseQp {
    type Factorization<'a> = DenseFactorization<'a>;

    fn factor<'a>(&'a self, s: &JacobianScalars) -> Result<DenseFactorization<'a>, SolverError> {
        DenseFactorization::new(self, s)
    }
}
