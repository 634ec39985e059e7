//! Example configurations shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use mmreach::geometry::{Hyperrect, Matrix, Parallelotope};
use mmreach::ode::Rk4;
use mmreach::system::{presets, SystemDef, VectorField};

/// Shape matrix of the bilinear example.
pub fn ex1_shape() -> Matrix {
    Matrix::from_rows(&[vec![1.0, -2.0], vec![1.0, 1.0]]).unwrap()
}

/// The bilinear example's initial parallelogram.
pub fn ex1_initial() -> Parallelotope {
    Parallelotope::new(ex1_shape(), Hyperrect::new(vec![0.0, -0.25], vec![0.25, 0.0]).unwrap()).unwrap()
}

/// Axis-aligned box around the bilinear example's initial set.
pub fn ex2_outer_box() -> Hyperrect {
    Hyperrect::new(vec![0.0, -0.25], vec![0.75, 0.25]).unwrap()
}

pub fn ex3_t1() -> Matrix {
    Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
}

pub fn ex3_t2() -> Matrix {
    Matrix::from_rows(&[vec![1.0, 4.0], vec![-1.0, 1.0]]).unwrap()
}

pub fn ex3_point() -> Vec<f64> {
    vec![1.0, 1.0]
}

pub fn arc(s: &SystemDef) -> Arc<dyn VectorField> {
    Arc::new(s.clone())
}

pub fn bilinear() -> SystemDef {
    presets::bilinear()
}

/// Closed-form tight decomposition of the bilinear system.
pub const BILINEAR_TIGHT: [&str; 2] = ["max(x1, 0)*x2 + min(x1, 0)*xh2 + w1", "x1 + 1"];

/// Integrate `field` from `x` with a constant disturbance.
pub fn integrate_constant(field: &dyn VectorField, x: &[f64], w: &[f64], horizon: f64, dt: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut rk = Rk4::new(y.len());
    for h in mmreach::ode::step_grid(horizon, dt) {
        rk.step(&mut y, h, |s, out| field.eval_into(s, w, out)).unwrap();
    }
    y
}
