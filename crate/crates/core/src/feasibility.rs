//! Infeasibility detection from proximal-point increments, and independent
//! certificate verification.
//!
//! All norms here are infinity norms.

use nalgebra::DVector;

use crate::model::{DenseQp, QpProblem};
use crate::point::{inf_norm, PrimalDualPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// `dz` is an unbounded descent direction.
    Dual,
    /// `(dlambda, dv)` is a Farkas certificate.
    Primal,
    Both,
}

impl CertificateKind {
    pub fn name(&self) -> &'static str {
        match self {
            CertificateKind::Dual => "dual",
            CertificateKind::Primal => "primal",
            CertificateKind::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub dz: DVector<f64>,
    pub dlambda: DVector<f64>,
    pub dv: DVector<f64>,
    /// Measured quantities of the dual test, when it passed.
    pub dual: Option<DualMetrics>,
    /// Measured quantities of the primal test, when it passed.
    pub primal: Option<PrimalMetrics>,
}

/// Dual-infeasibility quantities for a direction normalized to `|dz| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualMetrics {
    pub hz: f64,
    pub gz: f64,
    pub max_az: f64,
    pub fz: f64,
}

/// Primal-infeasibility quantities for `(dlambda, dv)` normalized to unit
/// infinity norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalMetrics {
    /// `|G'dlambda + A'dv|`
    pub stationarity: f64,
    /// `dlambda'h + dv'b` (solver test) or `dlambda'h + dv_+'b` (verifier).
    pub farkas: f64,
    /// `min(dv)`
    pub min_dv: f64,
}

fn max_entry(x: &DVector<f64>) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Tests a proximal increment `dx = x+ - x` against both infeasibility
/// conditions with tolerance `tau`. The primal test also requires
/// `dv >= -tau (|dlambda| + |dv|)`: away from the limit the dual increments
/// can pass the other two conditions while some `v_i` is still decreasing.
pub fn check_infeasibility<P: QpProblem + ?Sized>(
    p: &P,
    dx: &PrimalDualPoint,
    tau: f64,
) -> Option<Certificate> {
    let dual = dual_test(p, &dx.z, tau);
    let primal = primal_test(p, &dx.lambda, &dx.v, tau);
    let kind = match (dual.is_some(), primal.is_some()) {
        (true, true) => CertificateKind::Both,
        (true, false) => CertificateKind::Dual,
        (false, true) => CertificateKind::Primal,
        (false, false) => return None,
    };
    Some(Certificate {
        kind,
        dz: dx.z.clone(),
        dlambda: dx.lambda.clone(),
        dv: dx.v.clone(),
        dual,
        primal,
    })
}

fn dual_test<P: QpProblem + ?Sized>(p: &P, dz: &DVector<f64>, tau: f64) -> Option<DualMetrics> {
    let nz = inf_norm(dz);
    if nz == 0.0 {
        return None;
    }
    let hz = inf_norm(&p.hess_mul(dz));
    let gz = inf_norm(&p.eq_mul(dz));
    let az = p.ineq_mul(dz);
    let max_az = if az.is_empty() {
        f64::NEG_INFINITY
    } else {
        max_entry(&az)
    };
    let fz = p.cost().dot(dz);
    let margin = tau * inf_norm(p.cost()) * nz;
    let pass = hz <= tau * nz && gz <= tau * nz && max_az <= tau * nz && fz < -margin;
    pass.then(|| DualMetrics {
        hz: hz / nz,
        gz: gz / nz,
        max_az: max_az / nz,
        fz: fz / nz,
    })
}

fn primal_test<P: QpProblem + ?Sized>(
    p: &P,
    dl: &DVector<f64>,
    dv: &DVector<f64>,
    tau: f64,
) -> Option<PrimalMetrics> {
    let scale = inf_norm(dl) + inf_norm(dv);
    if scale == 0.0 {
        return None;
    }
    let stat = inf_norm(&(p.eq_tmul(dl) + p.ineq_tmul(dv)));
    let farkas = dv.dot(p.ineq_rhs()) + dl.dot(p.eq_rhs());
    let margin = tau * (inf_norm(p.ineq_rhs()) + inf_norm(p.eq_rhs())) * scale;
    let min_dv = if dv.is_empty() { 0.0 } else { dv.min() };
    let pass = stat <= tau * scale && farkas < -margin && min_dv >= -tau * scale;
    pass.then(|| PrimalMetrics {
        stationarity: stat / scale,
        farkas: farkas / scale,
        min_dv: min_dv / scale,
    })
}

/// Dual-certificate quantities computed directly from the dense matrices
/// after scaling `dz` to unit infinity norm. `None` for `dz = 0`.
pub fn dual_certificate_metrics(p: &DenseQp, dz: &DVector<f64>) -> Option<DualMetrics> {
    if dz.len() != p.cost.len() {
        return None;
    }
    let nz = dz.amax();
    if !(nz > 0.0) || !nz.is_finite() {
        return None;
    }
    let d = dz / nz;
    let az = &p.ineq_mat * &d;
    Some(DualMetrics {
        hz: (&p.hessian * &d).amax(),
        gz: if p.eq_mat.nrows() == 0 {
            0.0
        } else {
            (&p.eq_mat * &d).amax()
        },
        max_az: if az.is_empty() {
            f64::NEG_INFINITY
        } else {
            az.max()
        },
        fz: p.cost.dot(&d),
    })
}

/// Primal-certificate quantities computed from the dense matrices after
/// scaling `(dlambda, dv)` to unit infinity norm. `None` for a zero pair.
pub fn primal_certificate_metrics(
    p: &DenseQp,
    dlambda: &DVector<f64>,
    dv: &DVector<f64>,
) -> Option<PrimalMetrics> {
    if dlambda.len() != p.eq_rhs.len() || dv.len() != p.ineq_rhs.len() {
        return None;
    }
    let scale = dlambda.amax().max(dv.amax());
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let l = dlambda / scale;
    let v = dv / scale;
    let stat = p.eq_mat.transpose() * &l + p.ineq_mat.transpose() * &v;
    let vplus = v.map(|x| x.max(0.0));
    Some(PrimalMetrics {
        stationarity: stat.amax(),
        farkas: l.dot(&p.eq_rhs) + vplus.dot(&p.ineq_rhs),
        min_dv: if v.is_empty() { 0.0 } else { v.min() },
    })
}

impl DualMetrics {
    /// `Hd = 0, Gd = 0, Ad <= 0` within `tol` and `f'd < -tol |f|`.
    pub fn passes(&self, tol: f64, cost_norm: f64) -> bool {
        self.hz <= tol && self.gz <= tol && self.max_az <= tol && self.fz < -tol * cost_norm
    }
}

impl PrimalMetrics {
    /// `dv >= 0` and `G'dl + A'dv = 0` within `tol`, and
    /// `dl'h + dv_+'b < -tol (|h| + |b|)`.
    pub fn passes(&self, tol: f64, rhs_norm: f64) -> bool {
        self.min_dv >= -tol && self.stationarity <= tol && self.farkas < -tol * rhs_norm
    }
}

/// True iff `dz` proves the QP unbounded below on a nonempty feasible set
/// (or infeasible in the dual).
pub fn verify_dual_certificate(p: &DenseQp, dz: &DVector<f64>, tol: f64) -> bool {
    dual_certificate_metrics(p, dz).is_some_and(|m| m.passes(tol, p.cost.amax()))
}

/// True iff `(dlambda, dv)` proves the constraints inconsistent.
pub fn verify_primal_certificate(
    p: &DenseQp,
    dlambda: &DVector<f64>,
    dv: &DVector<f64>,
    tol: f64,
) -> bool {
    primal_certificate_metrics(p, dlambda, dv)
        .is_some_and(|m| m.passes(tol, p.eq_rhs.amax() + p.ineq_rhs.amax()))
}
