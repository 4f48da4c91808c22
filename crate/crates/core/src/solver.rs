//! Outer proximal-point driver.

use std::time::{Duration, Instant};

use crate::error::SolverError;
use crate::feasibility::{check_infeasibility, Certificate, CertificateKind};
use crate::inner::{eval_prox, InnerOptions, InnerReport};
use crate::model::{ocp_to_dense, NewtonBackend, OcpQp};
use crate::pfb::{natural_residual, PfbParams};
use crate::point::PrimalDualPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Proximal parameter.
    pub sigma: f64,
    /// Per-iteration multiplier on sigma; 1 keeps it fixed.
    pub sigma_scaling: f64,
    pub tau_r: f64,
    pub tau_a: f64,
    /// Stall tolerance on `|x+ - x|`.
    pub tau_d: f64,
    pub tau_inf: f64,
    /// Contraction factor of the subproblem tolerance.
    pub kappa: f64,
    pub max_outer_iters: usize,
    pub inner: InnerOptions,
    pub pfb: PfbParams,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sigma: f64::EPSILON.sqrt(),
            sigma_scaling: 1.0,
            tau_r: 0.0,
            tau_a: 1e-4,
            tau_d: 1e-12,
            tau_inf: 1e-8,
            kappa: 0.1,
            max_outer_iters: 100,
            inner: InnerOptions::default(),
            pfb: PfbParams::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(SolverError::InvalidOption(what.to_string()))
            }
        };
        check(
            self.sigma > 0.0 && self.sigma.is_finite(),
            "sigma must be positive",
        )?;
        check(
            self.sigma_scaling > 0.0 && self.sigma_scaling <= 1.0,
            "sigma_scaling must lie in (0, 1]",
        )?;
        check(self.tau_r >= 0.0, "tau_r must be nonnegative")?;
        check(self.tau_a > 0.0, "tau_a must be positive")?;
        check(self.tau_d > 0.0, "tau_d must be positive")?;
        check(self.tau_inf > 0.0, "tau_inf must be positive")?;
        check(
            self.kappa > 0.0 && self.kappa < 1.0,
            "kappa must lie in (0, 1)",
        )?;
        check(
            self.pfb.is_valid(),
            "alpha must lie in (0, 1) and zeta must be positive",
        )?;
        self.inner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    PrimalDualInfeasible,
    MaxIterations,
    /// `|x+ - x| <= tau_d` without convergence or a certificate.
    Stalled,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::PrimalInfeasible => "PrimalInfeasible",
            SolveStatus::DualInfeasible => "DualInfeasible",
            SolveStatus::PrimalDualInfeasible => "PrimalDualInfeasible",
            SolveStatus::MaxIterations => "MaxIterations",
            SolveStatus::Stalled => "Stalled",
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            SolveStatus::PrimalInfeasible
                | SolveStatus::DualInfeasible
                | SolveStatus::PrimalDualInfeasible
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Largest inner iteration count of any single subproblem.
    pub max_inner_iterations: usize,
    pub initial_residual: f64,
    /// `|pi(x)|` at the returned point.
    pub residual: f64,
    /// Subproblem tolerance factors `delta_k`, one per outer iteration.
    pub deltas: Vec<f64>,
    /// `|pi(x_k)|`, starting with the initial point.
    pub residuals: Vec<f64>,
    pub factor_time: Duration,
    pub solve_time: Duration,
    pub total_time: Duration,
    /// Inner reports, kept when the inner trace is recorded.
    pub subproblems: Vec<InnerReport>,
    /// Outer iterates `x_0, x_1, ...`, kept when the inner trace is recorded.
    pub iterates: Vec<PrimalDualPoint>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: PrimalDualPoint,
    pub certificate: Option<Certificate>,
    pub stats: SolveStats,
}

/// Solves the QP with the proximally stabilized semismooth Newton method,
/// starting from `x0` (the origin if `None`).
pub fn solve<P: NewtonBackend + ?Sized>(
    p: &P,
    x0: Option<&PrimalDualPoint>,
    opts: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    let start = Instant::now();
    let dims = p.dims();
    let mut x = match x0 {
        Some(x0) if x0.dims() != dims => {
            return Err(SolverError::Dimension(format!(
                "initial point has dimensions {:?}, problem has {:?}",
                x0.dims(),
                dims
            )))
        }
        Some(x0) => x0.clone(),
        None => PrimalDualPoint::zeros(dims),
    };
    let trace = opts.inner.record_trace;
    let mut stats = SolveStats::default();

    let eps0 = natural_residual(p, &x).norm();
    stats.initial_residual = eps0;
    stats.residual = eps0;
    stats.residuals.push(eps0);
    if trace {
        stats.iterates.push(x.clone());
    }
    let target = eps0 * opts.tau_r + opts.tau_a;
    let finish = |status, x, certificate, mut stats: SolveStats| {
        stats.total_time = start.elapsed();
        Ok(SolveResult {
            status,
            x,
            certificate,
            stats,
        })
    };
    if eps0 <= target {
        return finish(SolveStatus::Optimal, x, None, stats);
    }

    let mut sigma = opts.sigma;
    let mut delta = (eps0 / sigma).min(1.0);
    for _ in 0..opts.max_outer_iters {
        stats.deltas.push(delta);
        let (xp, report) = eval_prox(p, &x, delta * sigma, sigma, &opts.pfb, &opts.inner)?;
        stats.outer_iterations += 1;
        stats.inner_iterations += report.iterations;
        stats.max_inner_iterations = stats.max_inner_iterations.max(report.iterations);
        stats.factor_time += report.factor_time;
        stats.solve_time += report.solve_time;
        if trace {
            stats.subproblems.push(report);
        }

        let dx = xp.sub(&x);
        if let Some(cert) = check_infeasibility(p, &dx, opts.tau_inf) {
            let status = match cert.kind {
                CertificateKind::Dual => SolveStatus::DualInfeasible,
                CertificateKind::Primal => SolveStatus::PrimalInfeasible,
                CertificateKind::Both => SolveStatus::PrimalDualInfeasible,
            };
            return finish(status, xp, Some(cert), stats);
        }
        x = xp;
        let eps = natural_residual(p, &x).norm();
        stats.residual = eps;
        stats.residuals.push(eps);
        if trace {
            stats.iterates.push(x.clone());
        }
        if eps <= target {
            return finish(SolveStatus::Optimal, x, None, stats);
        }
        if dx.norm() <= opts.tau_d {
            return finish(SolveStatus::Stalled, x, None, stats);
        }
        delta *= opts.kappa;
        sigma *= opts.sigma_scaling;
    }
    finish(SolveStatus::MaxIterations, x, None, stats)
}

/// Linear-algebra backend for optimal control problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Dense Cholesky on the stacked problem.
    Dense,
    /// Riccati recursion.
    #[default]
    Mpc,
}

/// Solves an [`OcpQp`] with the chosen backend. The dense path converts the
/// problem to stacked form first.
pub fn solve_ocp(
    p: &OcpQp,
    x0: Option<&PrimalDualPoint>,
    opts: &SolverOptions,
    backend: Backend,
) -> Result<SolveResult, SolverError> {
    match backend {
        Backend::Mpc => solve(p, x0, opts),
        Backend::Dense => solve(&ocp_to_dense(p), x0, opts),
    }
}
