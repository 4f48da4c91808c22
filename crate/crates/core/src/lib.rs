//! Proximally stabilized Fischer-Burmeister (FBstab) solver for convex
//! quadratic programs of the form
//!
//! ```text
//!     minimize     1/2 z' H z + f' z
//!     subject to   G z  = h
//!                  A z <= b
//! ```
//!
//! with `H` symmetric positive semidefinite. An outer proximal-point loop
//! regularizes the problem and an inner damped semismooth Newton method solves
//! each regularized subproblem. Primal and dual infeasibility are detected from
//! the limiting behaviour of the proximal iterates.
//!
//! Two linear-algebra backends are provided:
//!
//! * [`DenseQp`] uses a dense Cholesky factorization of the reduced Newton system.
//! * [`OcpQp`] (stage-wise optimal control problems) uses a regularized Riccati
//!   recursion whose cost grows linearly with the horizon.
//!
//! ```
//! use fbstab::{solve, DenseQp, SolveStatus, SolverOptions};
//! use nalgebra::{DMatrix, DVector};
//!
//! // minimize 1/2 |z|^2 + z1 - z2
//! let qp = DenseQp::unconstrained(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, -1.0]))
//!     .unwrap();
//! let res = solve(&qp, None, &SolverOptions::default()).unwrap();
//! assert_eq!(res.status, SolveStatus::Optimal);
//! assert!((res.x.z[0] + 1.0).abs() < 1e-6);
//! ```

pub mod benchmarks;
pub mod closed_loop;
pub mod dense;
pub mod error;
pub mod feasibility;
pub mod inner;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pfb;
pub mod point;
pub mod riccati;
pub mod solver;
pub mod zoh;

pub use error::{ModelError, SolverError};
pub use feasibility::{
    check_infeasibility, verify_dual_certificate, verify_primal_certificate, Certificate,
    CertificateKind,
};
pub use inner::{eval_prox, InnerOptions, InnerReport, InnerTermination};
pub use model::{
    condense, ocp_to_dense, validate, DenseQp, Diagnostic, NewtonBackend, OcpQp, OcpStage, QpDims,
    QpProblem, StageDynamics, StepSolver,
};
pub use pfb::{JacobianScalars, PfbParams, Residual};
pub use point::PrimalDualPoint;
pub use solver::{solve, solve_ocp, Backend, SolveResult, SolveStats, SolveStatus, SolverOptions};
