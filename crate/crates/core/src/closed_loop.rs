//! Receding-horizon simulation with the prediction model as plant.

use std::fmt::Write as _;
use std::time::Duration;

use nalgebra::DVector;
use thiserror::Error;

use crate::error::SolverError;
use crate::model::{OcpQp, QpProblem};
use crate::point::PrimalDualPoint;
use crate::solver::{solve_ocp, Backend, SolveStatus, SolverOptions};

#[derive(Debug, Error)]
#[error("solver failed at step {step}: {source}")]
pub struct SimError {
    pub step: usize,
    #[source]
    pub source: SolverError,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// State at the start of the step.
    pub x: DVector<f64>,
    /// Applied input.
    pub u: DVector<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub max_inner_iters: usize,
    pub pi_norm: f64,
    pub status: SolveStatus,
    pub solve_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub nx: usize,
    pub nu: usize,
    pub steps: Vec<StepRecord>,
    /// State after the last applied input.
    pub final_state: DVector<f64>,
}

impl Trajectory {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["step".to_string(), "t".to_string()];
        cols.extend((1..=self.nx).map(|i| format!("x{i}")));
        cols.extend((1..=self.nu).map(|i| format!("u{i}")));
        cols.extend(["outer_iters", "inner_iters", "pi_norm", "status"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.steps {
            write!(out, "{},{:.16e}", r.step, r.t).unwrap();
            for v in r.x.iter().chain(r.u.iter()) {
                write!(out, ",{v:.16e}").unwrap();
            }
            writeln!(
                out,
                ",{},{},{:.16e},{}",
                r.outer_iters,
                r.inner_iters,
                r.pi_norm,
                r.status.name()
            )
            .unwrap();
        }
        out
    }
}

/// Shifts a stacked primal-dual point one stage forward in time and repeats
/// the last stage.
pub fn shift_solution(p: &OcpQp, x: &PrimalDualPoint) -> PrimalDualPoint {
    let stages = p.horizon() + 1;
    let shift = |v: &DVector<f64>, width: usize| {
        DVector::from_fn(v.len(), |i, _| {
            let stage = (i / width + 1).min(stages - 1);
            v[stage * width + i % width]
        })
    };
    PrimalDualPoint::new(
        shift(&x.z, p.nx() + p.nu()),
        shift(&x.lambda, p.nx()),
        shift(&x.v, p.nc().max(1)),
    )
}

/// Runs `steps` receding-horizon iterations starting from the problem's
/// initial state, applying the first input of each solution to the model.
pub fn closed_loop_sim(
    ocp: &OcpQp,
    ts: f64,
    opts: &SolverOptions,
    steps: usize,
    warmstart: bool,
    backend: Backend,
) -> Result<Trajectory, SimError> {
    let dyn0 = ocp
        .dynamics()
        .first()
        .expect("closed-loop simulation needs a horizon of at least 1");
    let mut state = ocp.initial_state().clone();
    let mut guess: Option<PrimalDualPoint> = None;
    let mut records = Vec::with_capacity(steps);
    for step in 0..steps {
        let problem = ocp.with_initial_state(state.clone());
        let res = solve_ocp(&problem, guess.as_ref(), opts, backend)
            .map_err(|source| SimError { step, source })?;
        let u = problem.control(&res.x.z, 0).into_owned();
        records.push(StepRecord {
            step,
            t: step as f64 * ts,
            x: state.clone(),
            u: u.clone(),
            outer_iters: res.stats.outer_iterations,
            inner_iters: res.stats.inner_iterations,
            max_inner_iters: res.stats.max_inner_iterations,
            pi_norm: res.stats.residual,
            status: res.status,
            solve_time: res.stats.total_time,
        });
        state = &dyn0.a * &state + &dyn0.b * &u + &dyn0.c;
        guess = (warmstart && res.status == SolveStatus::Optimal)
            .then(|| shift_solution(&problem, &res.x));
        debug_assert!(guess.as_ref().is_none_or(|g| g.dims() == problem.dims()));
    }
    Ok(Trajectory {
        nx: ocp.nx(),
        nu: ocp.nu(),
        steps: records,
        final_state: state,
    })
}
