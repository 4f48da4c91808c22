//! Structure-exploiting Newton-step solver for [`OcpQp`].
//!
//! After eliminating `dv` stage by stage the Newton system is a regularized
//! equality-constrained LQR problem:
//!
//! ```text
//!     W_i y_i + [dl_i; 0] - F_i' dl_{i+1} = w_i          y_i = (dx_i, du_i)
//!     dx_0     = sigma dl_0     - s_0
//!     dx_{i+1} = F_i y_i + sigma dl_{i+1} - s_{i+1}      F_i = [A_i B_i]
//! ```
//!
//! with `W_i = blkdiag-stage Hessian + sigma I + [E L]' C D^-1 [E L]`. A
//! backward sweep maintains `dl_i = -P_i dx_i + p_i`; the dual regularization
//! enters through `Pt = (I + sigma P)^-1 P`, which replaces the cost-to-go
//! matrix of the classical recursion. Every matrix factored along the way is
//! SPD for `sigma > 0` and PSD stage costs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::SolverError;
use crate::model::{NewtonBackend, OcpQp, QpProblem, StepSolver};
use crate::pfb::{JacobianScalars, Residual};
use crate::point::PrimalDualPoint;

#[derive(Debug, Clone)]
struct StageFactor {
    /// Cholesky of the control block of the stage matrix.
    muu: Cholesky<f64, Dyn>,
    /// Feedback gain `-Muu^-1 Mux`.
    gain: DMatrix<f64>,
    /// Cost-to-go `P_i`.
    p: DMatrix<f64>,
    /// Cholesky of `I + sigma P_i`.
    reg: Cholesky<f64, Dyn>,
    /// `(I + sigma P_i)^-1 P_i`
    p_tilde: DMatrix<f64>,
}

/// Stage-wise factorization of the Newton matrix of an [`OcpQp`].
#[derive(Debug, Clone)]
pub struct RiccatiFactorization<'a> {
    ocp: &'a OcpQp,
    stages: Vec<StageFactor>,
    gamma: DVector<f64>,
    d: DVector<f64>,
    sigma: f64,
}

fn chol(m: DMatrix<f64>, what: &str, stage: usize) -> Result<Cholesky<f64, Dyn>, SolverError> {
    Cholesky::new(m).ok_or_else(|| SolverError::FactorizationFailure {
        context: format!("{what} at stage {stage}"),
    })
}

impl<'a> RiccatiFactorization<'a> {
    pub fn new(ocp: &'a OcpQp, s: &JacobianScalars) -> Result<Self, SolverError> {
        let (nx, nu, nc) = (ocp.nx(), ocp.nu(), ocp.nc());
        let nz = nx + nu;
        let sigma = s.sigma;
        let horizon = ocp.horizon();
        if s.gamma.len() != ocp.dims().q {
            return Err(SolverError::Dimension(format!(
                "{} Jacobian scalars for {} inequality rows",
                s.gamma.len(),
                ocp.dims().q
            )));
        }
        if sigma <= 0.0 {
            return Err(SolverError::InvalidOption(format!(
                "sigma = {sigma} must be positive"
            )));
        }
        let d = s.d_diag();
        let mut factors: Vec<Option<StageFactor>> = vec![None; horizon + 1];
        let stages = ocp.stages();
        let dynamics = ocp.dynamics();

        for i in (0..=horizon).rev() {
            let st = &stages[i];
            let mut w = DMatrix::zeros(nz, nz);
            w.view_mut((0, 0), (nx, nx)).copy_from(&st.q);
            w.view_mut((nx, 0), (nu, nx)).copy_from(&st.s);
            w.view_mut((0, nx), (nx, nu)).copy_from(&st.s.transpose());
            w.view_mut((nx, nx), (nu, nu)).copy_from(&st.r);
            for k in 0..nz {
                w[(k, k)] += sigma;
            }
            if nc > 0 {
                // [E L] scaled by sqrt(gamma / d) row-wise
                let mut el = DMatrix::zeros(nc, nz);
                el.view_mut((0, 0), (nc, nx)).copy_from(&st.e);
                el.view_mut((0, nx), (nc, nu)).copy_from(&st.l);
                for j in 0..nc {
                    let idx = i * nc + j;
                    let scale = (s.gamma[idx] / d[idx]).sqrt();
                    el.row_mut(j).scale_mut(scale);
                }
                w.gemm(1.0, &el.transpose(), &el, 1.0);
            }
            if i < horizon {
                let next = factors[i + 1].as_ref().expect("backward sweep order");
                let dy = &dynamics[i];
                let mut f = DMatrix::zeros(nx, nz);
                f.view_mut((0, 0), (nx, nx)).copy_from(&dy.a);
                f.view_mut((0, nx), (nx, nu)).copy_from(&dy.b);
                let pf = &next.p_tilde * &f;
                w.gemm(1.0, &f.transpose(), &pf, 1.0);
            }
            let mxx = w.view((0, 0), (nx, nx)).into_owned();
            let mux = w.view((nx, 0), (nu, nx)).into_owned();
            let muu = w.view((nx, nx), (nu, nu)).into_owned();
            let muu = chol(symmetrized(muu), "control block", i)?;
            let gain = -muu.solve(&mux);
            let p = symmetrized(mxx + mux.transpose() * &gain);
            let mut reg = &p * sigma;
            for k in 0..nx {
                reg[(k, k)] += 1.0;
            }
            let reg = chol(reg, "regularized cost-to-go", i)?;
            let p_tilde = symmetrized(reg.solve(&p));
            factors[i] = Some(StageFactor {
                muu,
                gain,
                p,
                reg,
                p_tilde,
            });
        }
        Ok(Self {
            ocp,
            stages: factors
                .into_iter()
                .map(|f| f.expect("every stage factored"))
                .collect(),
            gamma: s.gamma.clone(),
            d,
            sigma,
        })
    }
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl StepSolver for RiccatiFactorization<'_> {
    fn solve(&self, r: &Residual) -> PrimalDualPoint {
        let ocp = self.ocp;
        let (nx, nu, nc) = (ocp.nx(), ocp.nu(), ocp.nc());
        let nz = nx + nu;
        let horizon = ocp.horizon();
        let sigma = self.sigma;
        let dynamics = ocp.dynamics();

        let r1 = -&r.z;
        let r2 = -&r.lambda;
        let r3 = -&r.v;
        let w = r1 - ocp.ineq_tmul(&r3.component_div(&self.d));

        // backward sweep over the right-hand side
        let mut feedforward: Vec<DVector<f64>> = vec![DVector::zeros(nu); horizon + 1];
        let mut p_tilde_vec: Vec<DVector<f64>> = vec![DVector::zeros(nx); horizon + 1];
        for i in (0..=horizon).rev() {
            let sf = &self.stages[i];
            let mut m = w.rows(i * nz, nz).into_owned();
            if i < horizon {
                let dy = &dynamics[i];
                let pt = &p_tilde_vec[i + 1];
                m.rows_mut(0, nx).axpy(1.0, &dy.a.tr_mul(pt), 1.0);
                m.rows_mut(nx, nu).axpy(1.0, &dy.b.tr_mul(pt), 1.0);
            }
            let mx = m.rows(0, nx);
            let mu = m.rows(nx, nu).into_owned();
            let k = sf.muu.solve(&mu);
            let p_vec = mx + sf.gain.tr_mul(&mu);
            let s_i = r2.rows(i * nx, nx);
            p_tilde_vec[i] = sf.reg.solve(&(&sf.p * s_i + p_vec));
            feedforward[i] = k;
        }

        // forward sweep
        let mut dz = DVector::zeros(ocp.dims().n);
        let mut dl = DVector::zeros(ocp.dims().m);
        let l0 = p_tilde_vec[0].clone();
        let mut x = &l0 * sigma - r2.rows(0, nx);
        dl.rows_mut(0, nx).copy_from(&l0);
        for i in 0..=horizon {
            let sf = &self.stages[i];
            let u = &sf.gain * &x + &feedforward[i];
            dz.rows_mut(i * nz, nx).copy_from(&x);
            dz.rows_mut(i * nz + nx, nu).copy_from(&u);
            if i < horizon {
                let dy = &dynamics[i];
                let fy = &dy.a * &x + &dy.b * &u;
                let next = &self.stages[i + 1];
                let l = &p_tilde_vec[i + 1] - &next.p_tilde * &fy;
                x = fy + &l * sigma - r2.rows((i + 1) * nx, nx);
                dl.rows_mut((i + 1) * nx, nx).copy_from(&l);
            }
        }

        let adz = ocp.ineq_mul(&dz);
        let dv = DVector::from_fn(nc * (horizon + 1), |j, _| {
            (r3[j] + self.gamma[j] * adz[j]) / self.d[j]
        });
        PrimalDualPoint::new(dz, dl, dv)
    }
}

impl NewtonBackend for OcpQp {
    type Factorization<'a> = RiccatiFactorization<'a>;

    fn factor<'a>(&'a self, s: &JacobianScalars) -> Result<RiccatiFactorization<'a>, SolverError> {
        RiccatiFactorization::new(self, s)
    }
}
