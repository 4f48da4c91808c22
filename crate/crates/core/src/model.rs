//! Problem data containers and the structured operators the solver needs.
//!
//! The solver never touches problem matrices directly. Everything goes through
//! [`QpProblem`] (products with `H`, `G`, `A` and their transposes) and
//! [`NewtonBackend`] (factorization of the Newton-step system), so the dense and
//! optimal-control forms share a single algorithm.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ModelError, SolverError};
use crate::pfb::{JacobianScalars, Residual};
use crate::point::PrimalDualPoint;

/// Relative entrywise tolerance used when checking symmetry of Hessians.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Number of primal variables, equality rows and inequality rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpDims {
    pub n: usize,
    pub m: usize,
    pub q: usize,
}

impl QpDims {
    pub fn total(&self) -> usize {
        self.n + self.m + self.q
    }
}

/// Linear operators describing a convex QP.
pub trait QpProblem {
    fn dims(&self) -> QpDims;
    /// Linear cost `f`.
    fn cost(&self) -> &DVector<f64>;
    /// Equality right-hand side `h`.
    fn eq_rhs(&self) -> &DVector<f64>;
    /// Inequality right-hand side `b`.
    fn ineq_rhs(&self) -> &DVector<f64>;
    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn eq_tmul(&self, lambda: &DVector<f64>) -> DVector<f64>;
    fn ineq_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn ineq_tmul(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `1/2 z'Hz + f'z`
    fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&self.hess_mul(z)) + self.cost().dot(z)
    }
}

/// A factorized Newton-step matrix `V`.
pub trait StepSolver {
    /// Returns `dx` with `V dx = -R`.
    fn solve(&self, r: &Residual) -> PrimalDualPoint;
}

/// Problems that can factor their own Newton-step system.
pub trait NewtonBackend: QpProblem {
    type Factorization<'a>: StepSolver
    where
        Self: 'a;

    fn factor<'a>(&'a self, s: &JacobianScalars) -> Result<Self::Factorization<'a>, SolverError>;
}

/// A validation finding on problem data.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Dimension(String),
    Asymmetric { max_rel_dev: f64 },
    NotPositiveSemidefinite { min_eigenvalue: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Dimension(msg) => write!(f, "dimension: {msg}"),
            Diagnostic::Asymmetric { max_rel_dev } => {
                write!(
                    f,
                    "Hessian is not symmetric (max relative deviation {max_rel_dev:e})"
                )
            }
            Diagnostic::NotPositiveSemidefinite { min_eigenvalue } => write!(
                f,
                "Hessian is not positive semidefinite (min eigenvalue {min_eigenvalue:e})"
            ),
        }
    }
}

/// Dense QP data `(H, f, G, h, A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub hessian: DMatrix<f64>,
    pub cost: DVector<f64>,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

impl DenseQp {
    /// Validates dimensions and symmetry, then stores `(H + H')/2`.
    pub fn new(
        hessian: DMatrix<f64>,
        cost: DVector<f64>,
        eq_mat: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_mat: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let mut qp = DenseQp {
            hessian,
            cost,
            eq_mat,
            eq_rhs,
            ineq_mat,
            ineq_rhs,
        };
        let diags = validate(&qp, false);
        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        qp.hessian = symmetrize(&qp.hessian);
        Ok(qp)
    }

    pub fn unconstrained(hessian: DMatrix<f64>, cost: DVector<f64>) -> Result<Self, ModelError> {
        let n = cost.len();
        Self::new(
            hessian,
            cost,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }

    pub fn inequality_only(
        hessian: DMatrix<f64>,
        cost: DVector<f64>,
        ineq_mat: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let n = cost.len();
        Self::new(
            hessian,
            cost,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            ineq_mat,
            ineq_rhs,
        )
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Checks dimensions and symmetry of `p`; optionally also checks that the
/// smallest eigenvalue of `H` is at least `-1e-8`.
pub fn validate(p: &DenseQp, check_psd: bool) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = p.cost.len();
    let (hr, hc) = p.hessian.shape();
    let square = hr == hc;
    if !square {
        out.push(Diagnostic::Dimension(format!(
            "H is {hr}x{hc}, expected a square matrix"
        )));
    } else if hr != n {
        out.push(Diagnostic::Dimension(format!(
            "H is {hr}x{hc} but f has {n} entries"
        )));
    }
    if p.eq_mat.ncols() != n && p.eq_mat.nrows() > 0 {
        out.push(Diagnostic::Dimension(format!(
            "G has {} columns, expected {n}",
            p.eq_mat.ncols()
        )));
    }
    if p.eq_mat.nrows() != p.eq_rhs.len() {
        out.push(Diagnostic::Dimension(format!(
            "G has {} rows but h has {} entries",
            p.eq_mat.nrows(),
            p.eq_rhs.len()
        )));
    }
    if p.ineq_mat.ncols() != n && p.ineq_mat.nrows() > 0 {
        out.push(Diagnostic::Dimension(format!(
            "A has {} columns, expected {n}",
            p.ineq_mat.ncols()
        )));
    }
    if p.ineq_mat.nrows() != p.ineq_rhs.len() {
        out.push(Diagnostic::Dimension(format!(
            "A has {} rows but b has {} entries",
            p.ineq_mat.nrows(),
            p.ineq_rhs.len()
        )));
    }
    if square {
        let dev = max_asymmetry(&p.hessian);
        if dev > SYMMETRY_TOL {
            out.push(Diagnostic::Asymmetric { max_rel_dev: dev });
        }
        if check_psd && out.is_empty() && hr > 0 {
            let eig = SymmetricEigen::new(symmetrize(&p.hessian));
            let min = eig.eigenvalues.min();
            if min < -1e-8 {
                out.push(Diagnostic::NotPositiveSemidefinite {
                    min_eigenvalue: min,
                });
            }
        }
    }
    out
}

/// Largest `|H_ij - H_ji| / max(1, |H_ij|, |H_ji|)`.
fn max_asymmetry(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            let (a, b) = (h[(i, j)], h[(j, i)]);
            let scale = 1.0f64.max(a.abs()).max(b.abs());
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

impl QpProblem for DenseQp {
    fn dims(&self) -> QpDims {
        QpDims {
            n: self.cost.len(),
            m: self.eq_rhs.len(),
            q: self.ineq_rhs.len(),
        }
    }
    fn cost(&self) -> &DVector<f64> {
        &self.cost
    }
    fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }
    fn ineq_rhs(&self) -> &DVector<f64> {
        &self.ineq_rhs
    }
    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.hessian * z
    }
    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.eq_mat * z
    }
    fn eq_tmul(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.eq_mat.tr_mul(lambda)
    }
    fn ineq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.ineq_mat * z
    }
    fn ineq_tmul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.ineq_mat.tr_mul(v)
    }
}

/// Cost and constraint data for one stage of an optimal control problem.
///
/// Stage cost is `1/2 [x;u]' [Q S'; S R] [x;u] + q'x + r'u` and the stage
/// constraint is `E x + L u + d <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpStage {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub r_lin: DVector<f64>,
    pub e: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// `x_{i+1} = A x_i + B u_i + c`
#[derive(Debug, Clone, PartialEq)]
pub struct StageDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// Multiple-shooting optimal control QP with horizon `N`.
///
/// The stacked decision vector is `z = (x_0, u_0, ..., x_N, u_N)`. Equality
/// rows are `x_0 = xi` followed by `x_{i+1} - A_i x_i - B_i u_i = c_i`;
/// inequality rows are `E_i x_i + L_i u_i <= -d_i`, stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpQp {
    nx: usize,
    nu: usize,
    nc: usize,
    stages: Vec<OcpStage>,
    dynamics: Vec<StageDynamics>,
    xi: DVector<f64>,
    // stacked f, h, b
    cost: DVector<f64>,
    eq_rhs: DVector<f64>,
    ineq_rhs: DVector<f64>,
}

impl OcpQp {
    /// `stages` has `N + 1` entries and `dynamics` has `N`.
    pub fn new(
        stages: Vec<OcpStage>,
        dynamics: Vec<StageDynamics>,
        xi: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let mut diags = Vec::new();
        if stages.is_empty() {
            return Err(ModelError::Invalid(vec![Diagnostic::Dimension(
                "an OCP needs at least one stage".into(),
            )]));
        }
        if dynamics.len() + 1 != stages.len() {
            diags.push(Diagnostic::Dimension(format!(
                "{} stages require {} dynamics blocks, got {}",
                stages.len(),
                stages.len() - 1,
                dynamics.len()
            )));
        }
        let nx = xi.len();
        let nu = stages[0].r.nrows();
        let nc = stages[0].d.len();
        let mut stages = stages;
        for (i, st) in stages.iter_mut().enumerate() {
            let mut check = |name: &str, shape: (usize, usize), want: (usize, usize)| {
                if shape != want {
                    diags.push(Diagnostic::Dimension(format!(
                        "stage {i}: {name} is {}x{}, expected {}x{}",
                        shape.0, shape.1, want.0, want.1
                    )));
                }
            };
            check("Q", st.q.shape(), (nx, nx));
            check("R", st.r.shape(), (nu, nu));
            check("S", st.s.shape(), (nu, nx));
            check("q", st.q_lin.shape(), (nx, 1));
            check("r", st.r_lin.shape(), (nu, 1));
            check("E", st.e.shape(), (nc, nx));
            check("L", st.l.shape(), (nc, nu));
            check("d", st.d.shape(), (nc, 1));
            if st.q.is_square() && st.r.is_square() {
                let dev = max_asymmetry(&st.q).max(max_asymmetry(&st.r));
                if dev > SYMMETRY_TOL {
                    diags.push(Diagnostic::Asymmetric { max_rel_dev: dev });
                }
                st.q = symmetrize(&st.q);
                st.r = symmetrize(&st.r);
            }
        }
        for (i, dy) in dynamics.iter().enumerate() {
            let mut check = |name: &str, shape: (usize, usize), want: (usize, usize)| {
                if shape != want {
                    diags.push(Diagnostic::Dimension(format!(
                        "dynamics {i}: {name} is {}x{}, expected {}x{}",
                        shape.0, shape.1, want.0, want.1
                    )));
                }
            };
            check("A", dy.a.shape(), (nx, nx));
            check("B", dy.b.shape(), (nx, nu));
            check("c", dy.c.shape(), (nx, 1));
        }
        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        let mut qp = OcpQp {
            nx,
            nu,
            nc,
            stages,
            dynamics,
            xi,
            cost: DVector::zeros(0),
            eq_rhs: DVector::zeros(0),
            ineq_rhs: DVector::zeros(0),
        };
        qp.rebuild_vectors();
        Ok(qp)
    }

    fn rebuild_vectors(&mut self) {
        let nz = self.nx + self.nu;
        let stages = self.stages.len();
        let mut f = DVector::zeros(stages * nz);
        let mut b = DVector::zeros(stages * self.nc);
        let mut h = DVector::zeros(stages * self.nx);
        for (i, st) in self.stages.iter().enumerate() {
            f.rows_mut(i * nz, self.nx).copy_from(&st.q_lin);
            f.rows_mut(i * nz + self.nx, self.nu).copy_from(&st.r_lin);
            b.rows_mut(i * self.nc, self.nc).copy_from(&(-&st.d));
        }
        h.rows_mut(0, self.nx).copy_from(&self.xi);
        for (i, dy) in self.dynamics.iter().enumerate() {
            h.rows_mut((i + 1) * self.nx, self.nx).copy_from(&dy.c);
        }
        self.cost = f;
        self.eq_rhs = h;
        self.ineq_rhs = b;
    }

    /// Same problem with a different initial state.
    pub fn with_initial_state(&self, xi: DVector<f64>) -> Self {
        assert_eq!(xi.len(), self.nx, "initial state has wrong dimension");
        let mut out = self.clone();
        out.eq_rhs.rows_mut(0, self.nx).copy_from(&xi);
        out.xi = xi;
        out
    }

    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nu(&self) -> usize {
        self.nu
    }
    pub fn nc(&self) -> usize {
        self.nc
    }
    pub fn stages(&self) -> &[OcpStage] {
        &self.stages
    }
    pub fn dynamics(&self) -> &[StageDynamics] {
        &self.dynamics
    }
    pub fn initial_state(&self) -> &DVector<f64> {
        &self.xi
    }

    /// Stage-`i` state block of a stacked primal vector.
    pub fn state<'a>(&self, z: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        z.rows(i * (self.nx + self.nu), self.nx)
    }

    /// Stage-`i` control block of a stacked primal vector.
    pub fn control<'a>(&self, z: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        z.rows(i * (self.nx + self.nu) + self.nx, self.nu)
    }
}

impl QpProblem for OcpQp {
    fn dims(&self) -> QpDims {
        let stages = self.stages.len();
        QpDims {
            n: stages * (self.nx + self.nu),
            m: stages * self.nx,
            q: stages * self.nc,
        }
    }
    fn cost(&self) -> &DVector<f64> {
        &self.cost
    }
    fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }
    fn ineq_rhs(&self) -> &DVector<f64> {
        &self.ineq_rhs
    }

    fn hess_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let (nx, nu) = (self.nx, self.nu);
        let nz = nx + nu;
        let mut out = DVector::zeros(z.len());
        for (i, st) in self.stages.iter().enumerate() {
            let x = z.rows(i * nz, nx);
            let u = z.rows(i * nz + nx, nu);
            let ox = &st.q * x + st.s.tr_mul(&u);
            let ou = &st.s * x + &st.r * u;
            out.rows_mut(i * nz, nx).copy_from(&ox);
            out.rows_mut(i * nz + nx, nu).copy_from(&ou);
        }
        out
    }

    fn eq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let (nx, nu) = (self.nx, self.nu);
        let nz = nx + nu;
        let mut out = DVector::zeros(self.stages.len() * nx);
        out.rows_mut(0, nx).copy_from(&z.rows(0, nx));
        for (i, dy) in self.dynamics.iter().enumerate() {
            let x = z.rows(i * nz, nx);
            let u = z.rows(i * nz + nx, nu);
            let next = z.rows((i + 1) * nz, nx);
            let row = next - &dy.a * x - &dy.b * u;
            out.rows_mut((i + 1) * nx, nx).copy_from(&row);
        }
        out
    }

    fn eq_tmul(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let (nx, nu) = (self.nx, self.nu);
        let nz = nx + nu;
        let mut out = DVector::zeros(self.stages.len() * nz);
        out.rows_mut(0, nx).copy_from(&lambda.rows(0, nx));
        for (i, dy) in self.dynamics.iter().enumerate() {
            let l = lambda.rows((i + 1) * nx, nx);
            let ax = dy.a.tr_mul(&l);
            let bu = dy.b.tr_mul(&l);
            out.rows_mut(i * nz, nx).axpy(-1.0, &ax, 1.0);
            out.rows_mut(i * nz + nx, nu).axpy(-1.0, &bu, 1.0);
            out.rows_mut((i + 1) * nz, nx).axpy(1.0, &l, 1.0);
        }
        out
    }

    fn ineq_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let (nx, nu, nc) = (self.nx, self.nu, self.nc);
        let nz = nx + nu;
        let mut out = DVector::zeros(self.stages.len() * nc);
        for (i, st) in self.stages.iter().enumerate() {
            let x = z.rows(i * nz, nx);
            let u = z.rows(i * nz + nx, nu);
            let row = &st.e * x + &st.l * u;
            out.rows_mut(i * nc, nc).copy_from(&row);
        }
        out
    }

    fn ineq_tmul(&self, v: &DVector<f64>) -> DVector<f64> {
        let (nx, nu, nc) = (self.nx, self.nu, self.nc);
        let nz = nx + nu;
        let mut out = DVector::zeros(self.stages.len() * nz);
        for (i, st) in self.stages.iter().enumerate() {
            let vi = v.rows(i * nc, nc);
            out.rows_mut(i * nz, nx).copy_from(&st.e.tr_mul(&vi));
            out.rows_mut(i * nz + nx, nu).copy_from(&st.l.tr_mul(&vi));
        }
        out
    }
}

/// Materializes the stacked multiple-shooting QP as dense matrices.
pub fn ocp_to_dense(p: &OcpQp) -> DenseQp {
    let (nx, nu, nc) = (p.nx, p.nu, p.nc);
    let nz = nx + nu;
    let dims = p.dims();
    let mut hess = DMatrix::zeros(dims.n, dims.n);
    let mut g = DMatrix::zeros(dims.m, dims.n);
    let mut a = DMatrix::zeros(dims.q, dims.n);
    for (i, st) in p.stages.iter().enumerate() {
        let o = i * nz;
        hess.view_mut((o, o), (nx, nx)).copy_from(&st.q);
        hess.view_mut((o + nx, o), (nu, nx)).copy_from(&st.s);
        hess.view_mut((o, o + nx), (nx, nu))
            .copy_from(&st.s.transpose());
        hess.view_mut((o + nx, o + nx), (nu, nu)).copy_from(&st.r);
        a.view_mut((i * nc, o), (nc, nx)).copy_from(&st.e);
        a.view_mut((i * nc, o + nx), (nc, nu)).copy_from(&st.l);
    }
    g.view_mut((0, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));
    for (i, dy) in p.dynamics.iter().enumerate() {
        let row = (i + 1) * nx;
        g.view_mut((row, i * nz), (nx, nx)).copy_from(&(-&dy.a));
        g.view_mut((row, i * nz + nx), (nx, nu))
            .copy_from(&(-&dy.b));
        g.view_mut((row, (i + 1) * nz), (nx, nx))
            .copy_from(&DMatrix::identity(nx, nx));
    }
    DenseQp {
        hessian: hess,
        cost: p.cost.clone(),
        eq_mat: g,
        eq_rhs: p.eq_rhs.clone(),
        ineq_mat: a,
        ineq_rhs: p.ineq_rhs.clone(),
    }
}

/// Eliminates the states by forward propagation of the dynamics.
///
/// The decision vector of the result is `(u_0, ..., u_N)`; it has no equality
/// rows and `(N+1) nc` inequality rows in stage order.
pub fn condense(p: &OcpQp) -> DenseQp {
    let (nx, nu, nc) = (p.nx, p.nu, p.nc);
    let stages = p.stages.len();
    let nuu = stages * nu;
    // x_i = phi_i + gamma_i u
    let mut phi: Vec<DVector<f64>> = Vec::with_capacity(stages);
    let mut gamma: Vec<DMatrix<f64>> = Vec::with_capacity(stages);
    phi.push(p.xi.clone());
    gamma.push(DMatrix::zeros(nx, nuu));
    for (i, dy) in p.dynamics.iter().enumerate() {
        let next_phi = &dy.a * &phi[i] + &dy.c;
        let mut next_gamma = &dy.a * &gamma[i];
        let mut blk = next_gamma.view_mut((0, i * nu), (nx, nu));
        blk += &dy.b;
        phi.push(next_phi);
        gamma.push(next_gamma);
    }

    let mut hess = DMatrix::zeros(nuu, nuu);
    let mut f = DVector::zeros(nuu);
    let mut a = DMatrix::zeros(stages * nc, nuu);
    let mut b = DVector::zeros(stages * nc);
    for (i, st) in p.stages.iter().enumerate() {
        // selector for u_i
        let mut sel = DMatrix::zeros(nu, nuu);
        sel.view_mut((0, i * nu), (nu, nu))
            .copy_from(&DMatrix::identity(nu, nu));
        let gq = gamma[i].transpose() * &st.q;
        let cross = st.s.transpose() * &sel; // nx x nuu, maps u to S' u_i
        hess += &gq * &gamma[i];
        hess += gamma[i].transpose() * &cross;
        hess += cross.transpose() * &gamma[i];
        hess += sel.transpose() * &st.r * &sel;

        f += &gq * &phi[i] + gamma[i].transpose() * &st.q_lin;
        f += sel.transpose() * (&st.s * &phi[i] + &st.r_lin);

        let rows = &st.e * &gamma[i] + &st.l * &sel;
        a.view_mut((i * nc, 0), (nc, nuu)).copy_from(&rows);
        let rhs = -&st.d - &st.e * &phi[i];
        b.rows_mut(i * nc, nc).copy_from(&rhs);
    }
    DenseQp {
        hessian: symmetrize(&hess),
        cost: f,
        eq_mat: DMatrix::zeros(0, nuu),
        eq_rhs: DVector::zeros(0),
        ineq_mat: a,
        ineq_rhs: b,
    }
}
