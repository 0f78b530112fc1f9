//! Stochastic advection-diffusion with a three-point upwind flux and
//! Euler-Maruyama time stepping:
//!
//! ```text
//! u_{n+1} = u_n + (s D1 (C u_n) - mu D1 D1^T u_n) dt + sigma sqrt(dt/dx) w_n
//! ```
//!
//! where `s = -1` for [`Transport::Upwind`] and `s = +1` for
//! [`Transport::Literal`].

use std::ops::Range;

use super::stencil::wrap;
use super::{check_finite, LinearDynamics, ModelConfig, Transport};
use crate::noise::NoiseIncrement;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionState {
    pub u: Vec<f64>,
    pub time_index: usize,
}

#[derive(Debug, Clone)]
pub struct AdvectionOperator {
    c: Vec<f64>,
    mu: f64,
    dx: f64,
    dt: f64,
    noise_std: f64,
    sign: f64,
}

impl AdvectionOperator {
    pub fn new(config: &ModelConfig, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), config.grid.n_points(), "velocity length must match grid");
        Self {
            c,
            mu: config.mu,
            dx: config.grid.dx(),
            dt: config.dt,
            noise_std: config.noise_std(),
            sign: config.transport.sign(),
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.c
    }
}

#[inline]
fn drift_into(u: &[f64], c: &[f64], mu: f64, dx: f64, sign: f64, out: &mut [f64]) {
    let n = u.len();
    let a = sign / (2.0 * dx);
    let b = mu / (4.0 * dx * dx);
    for (i, o) in out.iter_mut().enumerate() {
        let im1 = wrap(i as isize - 1, n);
        let im2 = wrap(i as isize - 2, n);
        let ip1 = wrap(i as isize + 1, n);
        let ip2 = wrap(i as isize + 2, n);
        let flux = 3.0 * c[i] * u[i] - 4.0 * c[im1] * u[im1] + c[im2] * u[im2];
        let diff = 3.0 * u[ip2] - 16.0 * u[ip1] + 26.0 * u[i] - 16.0 * u[im1] + 3.0 * u[im2];
        *o = a * flux - b * diff;
    }
}

/// `s D1(c * u) - mu D1 D1^T u` with periodic wrap.
pub fn advection_drift(u: &[f64], c: &[f64], mu: f64, dx: f64, transport: Transport) -> Result<Vec<f64>> {
    if u.len() != c.len() {
        return Err(Error::Dimension(format!(
            "state has {} entries but velocity has {}",
            u.len(),
            c.len()
        )));
    }
    if u.len() < 3 {
        return Err(Error::Dimension("advection needs at least 3 grid points".into()));
    }
    let mut out = vec![0.0; u.len()];
    drift_into(u, c, mu, dx, transport.sign(), &mut out);
    Ok(out)
}

/// One Euler-Maruyama step of the advection model.
pub fn advection_step(state: &AdvectionState, config: &ModelConfig, noise: &NoiseIncrement) -> Result<AdvectionState> {
    let n = config.grid.n_points();
    if state.u.len() != n || noise.values.len() != n {
        return Err(Error::Dimension(format!(
            "grid has {n} points, state {} and noise {}",
            state.u.len(),
            noise.values.len()
        )));
    }
    let op = AdvectionOperator::new(config, config.velocity.evaluate(&config.grid));
    let mut u = vec![0.0; n];
    op.apply_stochastic_step(&state.u, &noise.values, &mut u);
    check_finite(&u, "advection step", state.time_index + 1)?;
    Ok(AdvectionState {
        u,
        time_index: state.time_index + 1,
    })
}

impl LinearDynamics for AdvectionOperator {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_step(&self, x: &[f64], out: &mut [f64]) {
        drift_into(x, &self.c, self.mu, self.dx, self.sign, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.dt * *o;
        }
    }

    fn apply_drift(&self, x: &[f64], out: &mut [f64]) {
        drift_into(x, &self.c, self.mu, self.dx, self.sign, out);
    }

    fn noise_range(&self) -> Range<usize> {
        0..self.c.len()
    }

    fn noise_std(&self) -> f64 {
        self.noise_std
    }
}
