//! Inner solver: damped semismooth Newton iteration on the proximal
//! subproblem residual `R(x) = 0`.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::error::SolverError;
use crate::model::{NewtonBackend, StepSolver};
use crate::pfb::{
    jacobian_mul, jacobian_tmul, merit, residual_noise, JacobianScalars, PfbParams, Residual,
    ResidualLine,
};
use crate::point::PrimalDualPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOptions {
    /// Backtracking factor in (0, 1).
    pub beta: f64,
    /// Sufficient-decrease parameter in (0, 0.5).
    pub eta: f64,
    pub max_inner_iters: usize,
    pub max_linesearch_steps: usize,
    /// Number of past merit values the linesearch compares against; 1 is
    /// the monotone Armijo rule.
    pub nonmonotone_window: usize,
    /// Cap on the Krylov refinement iterations applied to each Newton step.
    pub refinement_steps: usize,
    /// Residuals below this multiple of the rounding-error estimate count
    /// as solved.
    pub noise_factor: f64,
    /// Keep a per-iteration [`InnerStep`] log.
    pub record_trace: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            beta: 0.7,
            eta: 1e-8,
            max_inner_iters: 100,
            max_linesearch_steps: 60,
            nonmonotone_window: 10,
            refinement_steps: 30,
            noise_factor: 10.0,
            record_trace: false,
        }
    }
}

impl InnerOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidOption(what.to_string()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return bad("eta must lie in (0, 0.5)");
        }
        if self.nonmonotone_window == 0 {
            return bad("nonmonotone window must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerTermination {
    /// `|R(x)| <= eps min(1, |x - xbar|)`.
    Tolerance,
    /// The starting point already satisfied `|R(xbar)| <= eps`.
    EntryGuard,
    /// The residual reached the rounding-error level of its own evaluation
    /// before the requested tolerance.
    PrecisionLimit,
    /// The merit at every trial step was not finite; the best iterate is
    /// returned.
    LinesearchFailure,
    /// The best iterate is returned.
    IterationCap,
}

/// One accepted Newton iteration.
#[derive(Debug, Clone)]
pub struct InnerStep {
    /// Iterate before the step.
    pub x: PrimalDualPoint,
    pub residual_norm: f64,
    pub merit: f64,
    pub merit_ref: f64,
    pub step_length: f64,
    /// `|dx|`
    pub step_norm: f64,
    pub merit_after: f64,
    /// `(grad theta' dx + |R|^2) / |R|^2`
    pub descent_error: f64,
    /// `|V dx + R| / |R|` after refinement.
    pub step_residual: f64,
    /// The linesearch ran out of trials.
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct InnerReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub linesearch_steps: Vec<usize>,
    pub termination: InnerTermination,
    pub factor_time: Duration,
    pub solve_time: Duration,
    pub trace: Vec<InnerStep>,
}

/// Result of a backtracking search.
#[derive(Debug, Clone)]
pub struct Linesearch<T> {
    pub t: f64,
    pub merit: f64,
    pub steps: usize,
    /// Payload returned by the trial function at the returned `t`.
    pub value: T,
    /// No trial met the decrease condition.
    pub degraded: bool,
}

/// Largest `t` in `{1, beta, beta^2, ...}` with
/// `theta(x + t dx) <= theta_ref - eta t |R|^2`.
///
/// `trial(t)` returns the merit at `x + t dx` and any payload the caller wants
/// back. When every trial fails the smallest one is returned with `degraded`
/// set.
pub fn linesearch<T>(
    theta_ref: f64,
    residual_norm2: f64,
    opts: &InnerOptions,
    mut trial: impl FnMut(f64) -> (f64, T),
) -> Linesearch<T> {
    let mut t = 1.0;
    let mut steps = 0;
    loop {
        let (theta, value) = trial(t);
        steps += 1;
        let ok = theta <= theta_ref - opts.eta * t * residual_norm2;
        if ok || steps >= opts.max_linesearch_steps.max(1) {
            return Linesearch {
                t,
                merit: theta,
                steps,
                value,
                degraded: !ok,
            };
        }
        t *= opts.beta;
    }
}

/// Relative residual `|V dx + R| / |R|` at which refinement stops.
const REFINE_TOL: f64 = 1e-12;

/// Solves `V dx = -R`, then refines the result with GMRES on the unfactored
/// operator, preconditioned by the factorization.
///
/// At small `sigma` the factored (reduced) matrix has a condition number near
/// `1 / sigma^2`, so plain iterative refinement can stall. The error it leaves
/// is concentrated on the equality and nearly active rows, which a few Krylov
/// iterations remove. `max_iters` bounds the number of GMRES iterations.
pub fn refined_step<P, F>(
    p: &P,
    fact: &F,
    s: &JacobianScalars,
    r: &Residual,
    max_iters: usize,
) -> PrimalDualPoint
where
    P: NewtonBackend + ?Sized,
    F: StepSolver,
{
    let precond = |u: &PrimalDualPoint| {
        fact.solve(&Residual {
            z: u.z.clone(),
            lambda: u.lambda.clone(),
            v: u.v.clone(),
            y: r.y.clone(),
        })
        .scale(-1.0)
    };
    let rp = r.as_point();
    let target = REFINE_TOL * rp.norm();
    let mut dx = fact.solve(r);
    // b = -(V dx + R)
    let mut b = jacobian_mul(p, s, &dx).step(1.0, &rp).scale(-1.0);
    let mut beta = b.norm();
    let mut used = 0;
    while beta > target && used < max_iters {
        let k = (max_iters - used).min(30);
        let Some(corr) = gmres_cycle(p, s, &precond, &b, beta, target, k, &mut used) else {
            break;
        };
        let cand = dx.step(1.0, &corr);
        let cand_b = jacobian_mul(p, s, &cand).step(1.0, &rp).scale(-1.0);
        let cand_beta = cand_b.norm();
        if !(cand_beta < beta) {
            break;
        }
        dx = cand;
        b = cand_b;
        beta = cand_beta;
    }
    dx
}

/// One right-preconditioned GMRES cycle of at most `k` iterations for
/// `V c = b`, started from `c = 0`.
#[allow(clippy::too_many_arguments)]
fn gmres_cycle<P: NewtonBackend + ?Sized>(
    p: &P,
    s: &JacobianScalars,
    precond: &impl Fn(&PrimalDualPoint) -> PrimalDualPoint,
    b: &PrimalDualPoint,
    beta: f64,
    target: f64,
    k: usize,
    used: &mut usize,
) -> Option<PrimalDualPoint> {
    let mut basis = vec![b.scale(1.0 / beta)];
    let mut dirs: Vec<PrimalDualPoint> = Vec::with_capacity(k);
    // Hessenberg columns after the Givens rotations, and the rotations
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut rot: Vec<(f64, f64)> = Vec::with_capacity(k);
    let mut g = vec![beta];
    for j in 0..k {
        let zj = precond(&basis[j]);
        let mut w = jacobian_mul(p, s, &zj);
        *used += 1;
        let mut h = Vec::with_capacity(j + 2);
        for v in &basis {
            let hij = w.dot(v);
            w.axpy(-hij, v);
            h.push(hij);
        }
        let hnext = w.norm();
        h.push(hnext);
        for (i, &(c, sn)) in rot.iter().enumerate() {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = c * a + sn * bb;
            h[i + 1] = -sn * a + c * bb;
        }
        let (a, bb) = (h[j], h[j + 1]);
        let den = a.hypot(bb);
        if !(den > 0.0) || !den.is_finite() {
            break;
        }
        let (c, sn) = (a / den, bb / den);
        h[j] = den;
        h.truncate(j + 1);
        rot.push((c, sn));
        g.push(-sn * g[j]);
        g[j] *= c;
        cols.push(h);
        dirs.push(zj);
        // stagnation means the rounding floor of the operator is reached
        if g[j + 1].abs() <= target || g[j + 1].abs() > 0.9 * g[j].abs() || !(hnext > 0.0) {
            break;
        }
        basis.push(w.scale(1.0 / hnext));
    }
    let m = cols.len();
    if m == 0 {
        return None;
    }
    // back substitution on the triangular factor
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = g[i];
        for (jj, col) in cols.iter().enumerate().skip(i + 1) {
            acc -= col[i] * y[jj];
        }
        y[i] = acc / cols[i][i];
    }
    let mut c = dirs[0].scale(y[0]);
    for (zj, &yj) in dirs.iter().zip(&y).skip(1) {
        c.axpy(yj, zj);
    }
    Some(c)
}

/// Approximately evaluates the proximal operator at `xbar`: runs Newton's
/// method from `xbar` on the subproblem residual until
/// `|R(x)| <= eps min(1, |x - xbar|)`.
pub fn eval_prox<P: NewtonBackend + ?Sized>(
    p: &P,
    xbar: &PrimalDualPoint,
    eps: f64,
    sigma: f64,
    params: &PfbParams,
    opts: &InnerOptions,
) -> Result<(PrimalDualPoint, InnerReport), SolverError> {
    if !(eps > 0.0) || !(sigma > 0.0) {
        return Err(SolverError::InvalidOption(format!(
            "eval_prox needs eps > 0 and sigma > 0, got {eps} and {sigma}"
        )));
    }
    let mut report = InnerReport {
        iterations: 0,
        residual_norm: 0.0,
        linesearch_steps: Vec::new(),
        termination: InnerTermination::EntryGuard,
        factor_time: Duration::ZERO,
        solve_time: Duration::ZERO,
        trace: Vec::new(),
    };

    let mut x = xbar.clone();
    let mut r = Residual::evaluate(p, &x, xbar, sigma, params);
    let mut rnorm = r.norm();
    report.residual_norm = rnorm;
    if rnorm <= eps {
        return Ok((x, report));
    }
    let noise_floor = |x: &PrimalDualPoint| opts.noise_factor * residual_noise(p, x, xbar, sigma);
    if rnorm <= noise_floor(&x) {
        report.termination = InnerTermination::PrecisionLimit;
        return Ok((x, report));
    }

    report.termination = InnerTermination::IterationCap;
    let mut theta = merit(&r);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(opts.nonmonotone_window);
    history.push_back(theta);
    let mut best = (theta, x.clone(), rnorm);

    for _ in 0..opts.max_inner_iters {
        let scalars = JacobianScalars::at(&r.y, &x.v, sigma, params);
        let clock = Instant::now();
        let fact = p.factor(&scalars)?;
        report.factor_time += clock.elapsed();
        let clock = Instant::now();
        let dx = refined_step(p, &fact, &scalars, &r, opts.refinement_steps);
        report.solve_time += clock.elapsed();

        let rnorm2 = rnorm * rnorm;
        let theta_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let line = ResidualLine::new(p, &r, &x, &dx, sigma, params);
        let ls = linesearch(theta_ref, rnorm2, opts, |t| (merit(&line.at(t)), t));
        report.linesearch_steps.push(ls.steps);
        if opts.record_trace {
            let grad = jacobian_tmul(p, &scalars, &r.as_point());
            let vdx = jacobian_mul(p, &scalars, &dx).step(1.0, &r.as_point());
            report.trace.push(InnerStep {
                x: x.clone(),
                residual_norm: rnorm,
                merit: theta,
                merit_ref: theta_ref,
                step_length: ls.t,
                step_norm: dx.norm(),
                merit_after: ls.merit,
                descent_error: (grad.dot(&dx) + rnorm2) / rnorm2,
                step_residual: vdx.norm() / rnorm,
                degraded: ls.degraded,
            });
        }
        // a degraded step is still taken: it carries the iterate across the
        // kink that blocked the search, after which the Jacobian sees the row
        if !ls.merit.is_finite() {
            report.termination = InnerTermination::LinesearchFailure;
            break;
        }
        // re-evaluated so that rounding in the line updates cannot accumulate
        x = x.step(ls.value, &dx);
        r = Residual::evaluate(p, &x, xbar, sigma, params);
        rnorm = r.norm();
        theta = merit(&r);
        report.iterations += 1;
        if history.len() == opts.nonmonotone_window {
            history.pop_front();
        }
        history.push_back(theta);
        if theta < best.0 {
            best = (theta, x.clone(), rnorm);
        }
        if rnorm <= eps * x.sub(xbar).norm().min(1.0) {
            report.termination = InnerTermination::Tolerance;
            report.residual_norm = rnorm;
            return Ok((x, report));
        }
        if rnorm <= noise_floor(&x) {
            report.termination = InnerTermination::PrecisionLimit;
            report.residual_norm = rnorm;
            return Ok((x, report));
        }
    }
    report.residual_norm = best.2;
    Ok((best.1, report))
}
