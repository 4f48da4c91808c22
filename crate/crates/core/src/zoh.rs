//! Zero-order-hold discretization.

use nalgebra::DMatrix;

/// Discrete-time linear model `x+ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Sampling period in seconds.
    pub ts: f64,
}

/// Exact discretization of `x' = A_c x + B_c u` with inputs held constant
/// over each period `ts`. Returns `(exp(A_c ts), int_0^ts exp(A_c s) ds B_c)`,
/// read off the exponential of the augmented matrix `[A_c B_c; 0 0] ts`.
pub fn zoh_discretize(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    ts: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(ts > 0.0, "sampling period must be positive");
    assert!(
        a_c.is_square() && b_c.nrows() == a_c.nrows(),
        "inconsistent model dimensions"
    );
    let nx = a_c.nrows();
    let nu = b_c.ncols();
    let mut m = DMatrix::zeros(nx + nu, nx + nu);
    m.view_mut((0, 0), (nx, nx)).copy_from(&(a_c * ts));
    m.view_mut((0, nx), (nx, nu)).copy_from(&(b_c * ts));
    let e = m.exp();
    (
        e.view((0, 0), (nx, nx)).into_owned(),
        e.view((0, nx), (nx, nu)).into_owned(),
    )
}
