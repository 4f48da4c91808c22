//! Penalized Fischer-Burmeister reformulation of the proximal subproblem.
//!
//! For a prox-center `xbar` and regularization `sigma` the subproblem residual is
//!
//! ```text
//!     R(x) = [ Hz + f + G'lambda + A'v + sigma (z - zbar)      ]
//!            [ h - Gz + sigma (lambda - lambdabar)             ]
//!            [ phi(y, v) ],   y = b - Az + sigma (v - vbar)
//! ```
//!
//! with `phi` applied elementwise, and the merit function is `|R|^2 / 2`.

use nalgebra::DVector;

use crate::model::QpProblem;
use crate::point::PrimalDualPoint;

/// Parameters of the NCP function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfbParams {
    /// Weight between the Fischer-Burmeister term and the penalty, in (0, 1).
    pub alpha: f64,
    /// Radius below which `(y_i, v_i)` is treated as the kink at the origin.
    pub zeta: f64,
}

impl Default for PfbParams {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            zeta: 1e-14,
        }
    }
}

impl PfbParams {
    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.alpha < 1.0 && self.zeta >= 0.0
    }
}

/// `alpha (a + b - sqrt(a^2 + b^2)) + (1 - alpha) a_+ b_+`
pub fn pfb(a: f64, b: f64, alpha: f64) -> f64 {
    alpha * (a + b - a.hypot(b)) + (1.0 - alpha) * a.max(0.0) * b.max(0.0)
}

/// One element `(gamma, mu)` of the generalized gradient of `phi` at `(y, v)`.
pub fn pfb_gradient(y: f64, v: f64, params: &PfbParams) -> (f64, f64) {
    let alpha = params.alpha;
    let r = y.hypot(v);
    if r <= params.zeta {
        let g = alpha * (1.0 - std::f64::consts::FRAC_1_SQRT_2);
        (g, g)
    } else if y > 0.0 && v > 0.0 {
        (
            alpha * (1.0 - y / r) + (1.0 - alpha) * v,
            alpha * (1.0 - v / r) + (1.0 - alpha) * y,
        )
    } else {
        (alpha * (1.0 - y / r), alpha * (1.0 - v / r))
    }
}

/// Diagonal data of the complementarity rows of the Newton matrix:
/// `C = diag(gamma)` and `D = diag(mu + sigma gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianScalars {
    pub gamma: DVector<f64>,
    pub mu: DVector<f64>,
    pub sigma: f64,
}

impl JacobianScalars {
    pub fn new(gamma: DVector<f64>, mu: DVector<f64>, sigma: f64) -> Self {
        assert_eq!(gamma.len(), mu.len());
        Self { gamma, mu, sigma }
    }

    /// Generalized-gradient scalars at the cached `y` of a residual and the
    /// inequality duals `v`.
    pub fn at(y: &DVector<f64>, v: &DVector<f64>, sigma: f64, params: &PfbParams) -> Self {
        let q = y.len();
        let mut gamma = DVector::zeros(q);
        let mut mu = DVector::zeros(q);
        for i in 0..q {
            let (g, m) = pfb_gradient(y[i], v[i], params);
            gamma[i] = g;
            mu[i] = m;
        }
        Self { gamma, mu, sigma }
    }

    /// `mu + sigma gamma`
    pub fn d_diag(&self) -> DVector<f64> {
        self.mu.zip_map(&self.gamma, |m, g| m + self.sigma * g)
    }

    pub fn is_valid(&self) -> bool {
        self.sigma > 0.0
            && self
                .gamma
                .iter()
                .zip(self.mu.iter())
                .all(|(&g, &m)| g >= 0.0 && m >= 0.0 && g + m > 0.0)
    }
}

/// Residual of the proximal subproblem, split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub v: DVector<f64>,
    /// `b - Az + sigma (v - vbar)`
    pub y: DVector<f64>,
}

impl Residual {
    pub fn evaluate<P: QpProblem + ?Sized>(
        p: &P,
        x: &PrimalDualPoint,
        xbar: &PrimalDualPoint,
        sigma: f64,
        params: &PfbParams,
    ) -> Self {
        let (rz, rl, y) = smooth_blocks(p, x, xbar, sigma);
        let rv = y.zip_map(&x.v, |yi, vi| pfb(yi, vi, params.alpha));
        Residual {
            z: rz,
            lambda: rl,
            v: rv,
            y,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.z.norm_squared() + self.lambda.norm_squared() + self.v.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// The residual blocks as a primal-dual shaped vector.
    pub fn as_point(&self) -> PrimalDualPoint {
        PrimalDualPoint::new(self.z.clone(), self.lambda.clone(), self.v.clone())
    }
}

/// `R(x + t dx)` as a function of `t`. The smooth blocks are affine in the
/// point, so after one operator application per direction every trial step
/// costs only vector operations.
#[derive(Debug, Clone)]
pub struct ResidualLine<'a> {
    base: &'a Residual,
    x: &'a PrimalDualPoint,
    dx: &'a PrimalDualPoint,
    dz: DVector<f64>,
    dl: DVector<f64>,
    dy: DVector<f64>,
    alpha: f64,
}

impl<'a> ResidualLine<'a> {
    /// `base` must be the residual at `x`.
    pub fn new<P: QpProblem + ?Sized>(
        p: &P,
        base: &'a Residual,
        x: &'a PrimalDualPoint,
        dx: &'a PrimalDualPoint,
        sigma: f64,
        params: &PfbParams,
    ) -> Self {
        let mut dz = p.hess_mul(&dx.z) + p.eq_tmul(&dx.lambda) + p.ineq_tmul(&dx.v);
        dz.axpy(sigma, &dx.z, 1.0);
        let mut dl = -p.eq_mul(&dx.z);
        dl.axpy(sigma, &dx.lambda, 1.0);
        let mut dy = -p.ineq_mul(&dx.z);
        dy.axpy(sigma, &dx.v, 1.0);
        Self {
            base,
            x,
            dx,
            dz,
            dl,
            dy,
            alpha: params.alpha,
        }
    }

    pub fn at(&self, t: f64) -> Residual {
        let y = &self.base.y + &self.dy * t;
        let v = &self.x.v + &self.dx.v * t;
        let rv = y.zip_map(&v, |yi, vi| pfb(yi, vi, self.alpha));
        Residual {
            z: &self.base.z + &self.dz * t,
            lambda: &self.base.lambda + &self.dl * t,
            v: rv,
            y,
        }
    }
}

fn smooth_blocks<P: QpProblem + ?Sized>(
    p: &P,
    x: &PrimalDualPoint,
    xbar: &PrimalDualPoint,
    sigma: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut rz = p.hess_mul(&x.z) + p.cost() + p.eq_tmul(&x.lambda) + p.ineq_tmul(&x.v);
    rz.axpy(sigma, &(&x.z - &xbar.z), 1.0);
    let mut rl = p.eq_rhs() - p.eq_mul(&x.z);
    rl.axpy(sigma, &(&x.lambda - &xbar.lambda), 1.0);
    let mut y = p.ineq_rhs() - p.ineq_mul(&x.z);
    y.axpy(sigma, &(&x.v - &xbar.v), 1.0);
    (rz, rl, y)
}

/// Size of the rounding error committed when evaluating `R(x)`: the norm of
/// the magnitudes of the terms that are summed, scaled by machine epsilon.
pub fn residual_noise<P: QpProblem + ?Sized>(
    p: &P,
    x: &PrimalDualPoint,
    xbar: &PrimalDualPoint,
    sigma: f64,
) -> f64 {
    let terms_z = p.hess_mul(&x.z).norm()
        + p.cost().norm()
        + p.eq_tmul(&x.lambda).norm()
        + p.ineq_tmul(&x.v).norm()
        + sigma * (x.z.norm() + xbar.z.norm());
    let terms_l =
        p.eq_mul(&x.z).norm() + p.eq_rhs().norm() + sigma * (x.lambda.norm() + xbar.lambda.norm());
    let terms_v = p.ineq_mul(&x.z).norm()
        + p.ineq_rhs().norm()
        + sigma * (x.v.norm() + xbar.v.norm())
        + x.v.norm();
    f64::EPSILON * (terms_z + terms_l + terms_v)
}

/// `|R|^2 / 2`
pub fn merit(r: &Residual) -> f64 {
    0.5 * r.norm_squared()
}

/// `pi(x) = x - Proj(x - F(x))` onto `R^n x R^m x R^q_+`, with
/// `F(x) = (Hz + f + G'lambda + A'v, h - Gz, b - Az)`.
pub fn natural_residual<P: QpProblem + ?Sized>(p: &P, x: &PrimalDualPoint) -> PrimalDualPoint {
    let fz = p.hess_mul(&x.z) + p.cost() + p.eq_tmul(&x.lambda) + p.ineq_tmul(&x.v);
    let fl = p.eq_rhs() - p.eq_mul(&x.z);
    let fv = p.ineq_rhs() - p.ineq_mul(&x.z);
    // the z and lambda blocks are unconstrained, so the projection is the identity
    let pv = x.v.zip_map(&fv, |v, f| v - (v - f).max(0.0));
    PrimalDualPoint::new(fz, fl, pv)
}

/// Subproblem natural residual: the same blocks as [`Residual`] with
/// `min(y, v)` in place of `phi(y, v)`.
pub fn natural_residual_inner<P: QpProblem + ?Sized>(
    p: &P,
    x: &PrimalDualPoint,
    xbar: &PrimalDualPoint,
    sigma: f64,
) -> PrimalDualPoint {
    let (rz, rl, y) = smooth_blocks(p, x, xbar, sigma);
    let rv = y.zip_map(&x.v, f64::min);
    PrimalDualPoint::new(rz, rl, rv)
}

/// `V dx` for the Newton matrix
///
/// ```text
///     V = [ H + sigma I   G'        A'  ]
///         [ -G            sigma I   0   ]
///         [ -C A          0         D   ]
/// ```
pub fn jacobian_mul<P: QpProblem + ?Sized>(
    p: &P,
    s: &JacobianScalars,
    dx: &PrimalDualPoint,
) -> PrimalDualPoint {
    let sigma = s.sigma;
    let mut z = p.hess_mul(&dx.z) + p.eq_tmul(&dx.lambda) + p.ineq_tmul(&dx.v);
    z.axpy(sigma, &dx.z, 1.0);
    let mut l = -p.eq_mul(&dx.z);
    l.axpy(sigma, &dx.lambda, 1.0);
    let adz = p.ineq_mul(&dx.z);
    let d = s.d_diag();
    let v = DVector::from_fn(dx.v.len(), |i, _| -s.gamma[i] * adz[i] + d[i] * dx.v[i]);
    PrimalDualPoint::new(z, l, v)
}

/// `V' r`, the gradient of the merit function when `r = R(x)`.
pub fn jacobian_tmul<P: QpProblem + ?Sized>(
    p: &P,
    s: &JacobianScalars,
    r: &PrimalDualPoint,
) -> PrimalDualPoint {
    let sigma = s.sigma;
    let cr = s.gamma.component_mul(&r.v);
    let mut z = p.hess_mul(&r.z) - p.eq_tmul(&r.lambda) - p.ineq_tmul(&cr);
    z.axpy(sigma, &r.z, 1.0);
    let mut l = p.eq_mul(&r.z);
    l.axpy(sigma, &r.lambda, 1.0);
    let mut v = p.ineq_mul(&r.z);
    v += s.d_diag().component_mul(&r.v);
    PrimalDualPoint::new(z, l, v)
}
