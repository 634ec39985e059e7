//! Fixed-step classical Runge–Kutta.

use crate::error::Result;

/// Scratch buffers for RK4 on a state of fixed dimension.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advance `y` by `dt` under `ẏ = f(y)`.
    pub fn step<F>(&mut self, y: &mut [f64], dt: f64, mut f: F) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        f(y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4)?;
        for i in 0..n {
            y[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Step sizes covering `[0, horizon]` with nominal step `dt`; the last step is
/// shortened so the grid ends exactly at `horizon`.
pub fn step_grid(horizon: f64, dt: f64) -> Vec<f64> {
    if horizon <= 0.0 {
        return Vec::new();
    }
    let full = (horizon / dt * (1.0 - 1e-12)).floor() as usize;
    let mut steps = vec![dt; full];
    let rest = horizon - full as f64 * dt;
    if rest > 1e-12 * horizon {
        steps.push(rest);
    } else if let Some(last) = steps.last_mut() {
        *last += rest;
    }
    steps
}
