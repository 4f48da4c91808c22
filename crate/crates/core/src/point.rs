use crate::model::QpDims;
use nalgebra::DVector;

/// A primal-dual triple `(z, lambda, v)`.
///
/// `v` carries no sign constraint while iterating; nonnegativity only holds at
/// an optimal point.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub v: DVector<f64>,
}

impl PrimalDualPoint {
    pub fn new(z: DVector<f64>, lambda: DVector<f64>, v: DVector<f64>) -> Self {
        Self { z, lambda, v }
    }

    pub fn zeros(dims: QpDims) -> Self {
        Self {
            z: DVector::zeros(dims.n),
            lambda: DVector::zeros(dims.m),
            v: DVector::zeros(dims.q),
        }
    }

    pub fn dims(&self) -> QpDims {
        QpDims {
            n: self.z.len(),
            m: self.lambda.len(),
            q: self.v.len(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.z.norm_squared() + self.lambda.norm_squared() + self.v.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.z)
            .max(inf_norm(&self.lambda))
            .max(inf_norm(&self.v))
    }

    /// `self + t * dir`
    pub fn step(&self, t: f64, dir: &PrimalDualPoint) -> PrimalDualPoint {
        PrimalDualPoint {
            z: &self.z + &dir.z * t,
            lambda: &self.lambda + &dir.lambda * t,
            v: &self.v + &dir.v * t,
        }
    }

    /// `self += t * dir`
    pub fn axpy(&mut self, t: f64, dir: &PrimalDualPoint) {
        self.z.axpy(t, &dir.z, 1.0);
        self.lambda.axpy(t, &dir.lambda, 1.0);
        self.v.axpy(t, &dir.v, 1.0);
    }

    pub fn sub(&self, other: &PrimalDualPoint) -> PrimalDualPoint {
        PrimalDualPoint {
            z: &self.z - &other.z,
            lambda: &self.lambda - &other.lambda,
            v: &self.v - &other.v,
        }
    }

    pub fn scale(&self, a: f64) -> PrimalDualPoint {
        PrimalDualPoint {
            z: &self.z * a,
            lambda: &self.lambda * a,
            v: &self.v * a,
        }
    }

    pub fn dot(&self, other: &PrimalDualPoint) -> f64 {
        self.z.dot(&other.z) + self.lambda.dot(&other.lambda) + self.v.dot(&other.v)
    }

    /// Concatenation `[z; lambda; v]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let d = self.dims();
        let mut out = DVector::zeros(d.total());
        out.rows_mut(0, d.n).copy_from(&self.z);
        out.rows_mut(d.n, d.m).copy_from(&self.lambda);
        out.rows_mut(d.n + d.m, d.q).copy_from(&self.v);
        out
    }

    pub fn from_vector(x: &DVector<f64>, dims: QpDims) -> Self {
        assert_eq!(x.len(), dims.total(), "vector length does not match dims");
        Self {
            z: x.rows(0, dims.n).into_owned(),
            lambda: x.rows(dims.n, dims.m).into_owned(),
            v: x.rows(dims.n + dims.m, dims.q).into_owned(),
        }
    }
}

/// Infinity norm, zero for empty vectors.
pub fn inf_norm(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
