//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use fbstab::{DenseQp, OcpQp, OcpStage, StageDynamics};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

/// `B'B` with `B` of the given rank, so semidefinite when `rank < n`.
pub fn psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let b = mat(r, rank, n);
    b.transpose() * b
}

pub struct Sizes {
    pub n: usize,
    pub m: usize,
    pub q: usize,
}

pub fn sizes(r: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_q: usize) -> Sizes {
    let n = r.random_range(1..=max_n);
    let m = r.random_range(0..=max_m.min(n - 1));
    let q = r.random_range(0..=max_q);
    Sizes { n, m, q }
}

/// Feasible and bounded: a point `z0` satisfies the constraints and the cost
/// is built so that the Lagrangian dual is feasible.
pub fn feasible_qp(r: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_q: usize) -> DenseQp {
    let s = sizes(r, max_n, max_m, max_q);
    let rank = r.random_range(0..=s.n);
    let rho = if r.random_bool(0.5) { 0.0 } else { 1e-3 };
    let h = psd(r, s.n, rank) + DMatrix::identity(s.n, s.n) * rho;
    let g = mat(r, s.m, s.n);
    let a = mat(r, s.q, s.n);
    let z0 = vec(r, s.n);
    let slack = DVector::from_fn(s.q, |_, _| if r.random_bool(0.4) { 0.0 } else { r.random_range(0.0..1.0) });
    let w = vec(r, s.n);
    let mu = vec(r, s.m);
    let nu = DVector::from_fn(s.q, |_, _| if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..2.0) });
    let f = -(&h * w) - g.transpose() * mu - a.transpose() * nu;
    let hv = &g * &z0;
    let b = &a * &z0 + slack;
    DenseQp::new(h, f, g, hv, a, b).expect("generated data is consistent")
}

/// Primal infeasible: a nonnegative combination of the inequality rows
/// cancels against the equality rows while the same combination of the
/// right-hand sides is negative.
pub fn infeasible_qp(r: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_q: usize) -> DenseQp {
    let mut s = sizes(r, max_n, max_m, max_q);
    s.q = s.q.max(2);
    let rank = r.random_range(0..=s.n);
    let h = psd(r, s.n, rank);
    let g = mat(r, s.m, s.n);
    let mut a = mat(r, s.q, s.n);
    let k = r.random_range(2..=s.q);
    let nu = DVector::from_fn(k, |_, _| r.random_range(0.2..1.0));
    let mu = vec(r, s.m);
    // row k-1 closes the combination: sum nu_i a_i + G' mu = 0
    let mut comb = g.transpose() * &mu;
    for i in 0..k - 1 {
        comb += a.row(i).transpose() * nu[i];
    }
    a.set_row(k - 1, &(-comb / nu[k - 1]).transpose());
    let hv = vec(r, s.m);
    let mut b = vec(r, s.q);
    let gap = r.random_range(0.1..1.0);
    let partial: f64 = (0..k - 1).map(|i| nu[i] * b[i]).sum::<f64>() + mu.dot(&hv);
    b[k - 1] = (-gap - partial) / nu[k - 1];
    // dual feasible cost, so that only the constraints are inconsistent
    let w = vec(r, s.n);
    let f = -(&h * w) - a.transpose() * DVector::from_fn(s.q, |_, _| r.random_range(0.0..1.0));
    DenseQp::new(h, f, g, hv, a, b).expect("generated data is consistent")
}

/// Feasible with a recession direction `d` along which the cost decreases
/// linearly: `H d = 0`, `G d = 0`, `A d <= 0`, `f'd < 0`.
pub fn unbounded_qp(r: &mut ChaCha8Rng, max_n: usize, max_m: usize, max_q: usize) -> DenseQp {
    let mut s = sizes(r, max_n, max_m, max_q);
    s.n = s.n.max(2);
    s.m = s.m.min(s.n - 1);
    let d = vec(r, s.n).normalize();
    let project = |mut row: DVector<f64>| {
        let c = row.dot(&d);
        row.axpy(-c, &d, 1.0);
        row
    };
    let rank = r.random_range(0..s.n);
    let mut bmat = mat(r, rank, s.n);
    for i in 0..rank {
        let p = project(bmat.row(i).transpose());
        bmat.set_row(i, &p.transpose());
    }
    let h = bmat.transpose() * bmat;
    let mut g = mat(r, s.m, s.n);
    for i in 0..s.m {
        let p = project(g.row(i).transpose());
        g.set_row(i, &p.transpose());
    }
    let mut a = mat(r, s.q, s.n);
    for i in 0..s.q {
        let ad = a.row(i).transpose().dot(&d);
        if ad > 0.0 {
            let row = -a.row(i).into_owned();
            a.set_row(i, &row);
        }
    }
    let mut f = vec(r, s.n);
    let fd = f.dot(&d);
    f.axpy(-(fd + r.random_range(0.2..1.0)), &d, 1.0);
    let z0 = vec(r, s.n);
    let hv = &g * &z0;
    let b = &a * &z0 + DVector::from_fn(s.q, |_, _| r.random_range(0.0..1.0));
    DenseQp::new(h, f, g, hv, a, b).expect("generated data is consistent")
}

/// Random stage-wise problem with a positive definite stage cost.
pub fn random_ocp(r: &mut ChaCha8Rng, n: usize, nx: usize, nu: usize, nc: usize) -> OcpQp {
    let stage = |r: &mut ChaCha8Rng| {
        let w = mat(r, nx + nu, nx + nu);
        let cost = w.transpose() * &w + DMatrix::identity(nx + nu, nx + nu) * 0.1;
        OcpStage {
            q: cost.view((0, 0), (nx, nx)).into_owned(),
            r: cost.view((nx, nx), (nu, nu)).into_owned(),
            s: cost.view((nx, 0), (nu, nx)).into_owned(),
            q_lin: vec(r, nx),
            r_lin: vec(r, nu),
            e: mat(r, nc, nx),
            l: mat(r, nc, nu),
            d: -DVector::from_fn(nc, |_, _| r.random_range(0.5..2.0)),
        }
    };
    let stages: Vec<OcpStage> = (0..=n).map(|_| stage(r)).collect();
    let dynamics: Vec<StageDynamics> = (0..n)
        .map(|_| StageDynamics {
            a: mat(r, nx, nx),
            b: mat(r, nx, nu),
            c: vec(r, nx) * 0.1,
        })
        .collect();
    OcpQp::new(stages, dynamics, vec(r, nx)).expect("generated data is consistent")
}
