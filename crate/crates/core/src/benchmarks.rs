//! Benchmark optimal control problems: a constrained servo motor and
//! spacecraft rendezvous under the Hill-Clohessy-Wiltshire equations.

use nalgebra::{DMatrix, DVector};

use crate::model::{OcpQp, OcpStage, StageDynamics};
use crate::zoh::{zoh_discretize, LinearModel};

pub const SERVO_TS: f64 = 0.05;
/// Reference angle for the load position, in degrees. The model itself works
/// in radians; the voltage limit caps the load rate near 1 rad/s, so a
/// reference of 30 model units could not be reached within a few seconds.
pub const SERVO_REFERENCE_DEG: f64 = 30.0;
pub const SERVO_TORQUE_LIMIT: f64 = 78.5;
pub const SERVO_VOLTAGE_LIMIT: f64 = 220.0;

pub const HCW_OMEGA: f64 = 0.0011;
pub const HCW_TS: f64 = 30.0;
pub const HCW_INPUT_LIMIT: f64 = 1.0;
pub const HCW_VELOCITY_LIMIT: f64 = 1.0;

/// Continuous-time servo model: states are load angle, load rate, motor
/// angle and motor rate (rad, rad/s); outputs are load angle and shaft
/// torque.
pub fn servo_continuous() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 0.0, //
            -128.0, -2.5, 6.4, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            128.0, 0.0, -6.4, -10.2,
        ],
    );
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 1282.0, 0.0, -64.0, 0.0]);
    (a, b, c)
}

pub fn servo_model() -> LinearModel {
    let (a_c, b_c, c) = servo_continuous();
    let (a, b) = zoh_discretize(&a_c, &b_c, SERVO_TS);
    LinearModel {
        a,
        b,
        c,
        ts: SERVO_TS,
    }
}

/// Servo tracking problem with horizon `n` and initial state zero.
///
/// Constraint rows per stage are `y2 <= 78.5`, `-y2 <= 78.5`, `u <= 220`,
/// `-u <= 220`. The torque rows are dropped at stage 0, where the state is
/// fixed by the initial condition.
pub fn build_servo(n: usize) -> OcpQp {
    assert!(n >= 1, "horizon must be at least 1");
    let model = servo_model();
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1e3, 0.0, 0.0, 0.0]));
    let r = SERVO_REFERENCE_DEG.to_radians();
    let q_lin = -&q * DVector::from_vec(vec![r, 0.0, 0.0, 0.0]);
    let torque = model.c.row(1).into_owned();
    let stage = |i: usize| {
        let mut e = DMatrix::zeros(4, 4);
        if i > 0 {
            e.row_mut(0).copy_from(&torque);
            e.row_mut(1).copy_from(&(-&torque));
        }
        OcpStage {
            q: q.clone(),
            r: DMatrix::from_element(1, 1, 1e-4),
            s: DMatrix::zeros(1, 4),
            q_lin: q_lin.clone(),
            r_lin: DVector::zeros(1),
            e,
            l: DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, -1.0]),
            d: DVector::from_vec(vec![
                -SERVO_TORQUE_LIMIT,
                -SERVO_TORQUE_LIMIT,
                -SERVO_VOLTAGE_LIMIT,
                -SERVO_VOLTAGE_LIMIT,
            ]),
        }
    };
    let dynamics = StageDynamics {
        a: model.a,
        b: model.b,
        c: DVector::zeros(4),
    };
    OcpQp::new(
        (0..=n).map(stage).collect(),
        vec![dynamics; n],
        DVector::zeros(4),
    )
    .expect("servo data is consistent")
}

/// Relative-motion dynamics: position (radial, along-track, cross-track) in
/// meters followed by velocity in m/s.
pub fn hcw_continuous(omega: f64) -> DMatrix<f64> {
    let w2 = omega * omega;
    let mut a = DMatrix::zeros(6, 6);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    a[(3, 0)] = 3.0 * w2;
    a[(3, 4)] = 2.0 * omega;
    a[(4, 3)] = -2.0 * omega;
    a[(5, 2)] = -w2;
    a
}

/// Discrete model with impulsive velocity changes applied at the start of
/// each period: `x+ = A (x + [0; I] u)`.
pub fn hcw_model() -> LinearModel {
    let a = (hcw_continuous(HCW_OMEGA) * HCW_TS).exp();
    let mut impulse = DMatrix::zeros(6, 3);
    impulse.view_mut((3, 0), (3, 3)).fill_with_identity();
    let b = &a * impulse;
    LinearModel {
        a,
        b,
        c: DMatrix::identity(6, 6),
        ts: HCW_TS,
    }
}

pub fn hcw_initial_state() -> DVector<f64> {
    DVector::from_vec(vec![-2800.0, -10.0, -1000.0, 0.0, 0.0, 0.0])
}

/// Rendezvous problem with horizon `n` from the standard initial offset.
///
/// Constraint rows per stage are `v <= 1`, `-v <= 1` on the three velocity
/// components, then `u <= 1`, `-u <= 1`. Velocity rows are dropped at
/// stage 0.
pub fn build_hcw(n: usize) -> OcpQp {
    assert!(n >= 1, "horizon must be at least 1");
    let model = hcw_model();
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 1e-3, 1e-3, 1e-3]));
    let i3 = DMatrix::<f64>::identity(3, 3);
    let stage = |i: usize| {
        let mut e = DMatrix::zeros(12, 6);
        if i > 0 {
            e.view_mut((0, 3), (3, 3)).copy_from(&i3);
            e.view_mut((3, 3), (3, 3)).copy_from(&(-&i3));
        }
        let mut l = DMatrix::zeros(12, 3);
        l.view_mut((6, 0), (3, 3)).copy_from(&i3);
        l.view_mut((9, 0), (3, 3)).copy_from(&(-&i3));
        let mut d = DVector::from_element(12, -HCW_INPUT_LIMIT);
        d.rows_mut(0, 6).fill(-HCW_VELOCITY_LIMIT);
        OcpStage {
            q: q.clone(),
            r: i3.clone(),
            s: DMatrix::zeros(3, 6),
            q_lin: DVector::zeros(6),
            r_lin: DVector::zeros(3),
            e,
            l,
            d,
        }
    };
    let dynamics = StageDynamics {
        a: model.a,
        b: model.b,
        c: DVector::zeros(6),
    };
    OcpQp::new(
        (0..=n).map(stage).collect(),
        vec![dynamics; n],
        hcw_initial_state(),
    )
    .expect("HCW data is consistent")
}
