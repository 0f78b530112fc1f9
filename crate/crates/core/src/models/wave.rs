//! Stochastic wave equation in first-order form, integrated with Verlet:
//!
//! ```text
//! p_{n+1/2} = p_n       + (f(u_n)     + mu L p_n)       dt/2
//! u_{n+1}   = u_n       + p_{n+1/2} dt
//! p_{n+1}   = p_{n+1/2} + (f(u_{n+1}) + mu L p_{n+1/2}) dt/2 + sigma sqrt(dt/dx) w_n
//! ```
//!
//! with `f(u)_i = (C_{i+1} w_{i+1} - C_i w_i) / dx`, `w_i = (u_i - u_{i-1}) / dx`
//! and `L` the periodic three-point Laplacian. The second half-step evaluates
//! the viscous term at the half-step momentum. The filter state stacks
//! `(p, u)`.

use std::ops::Range;

use super::stencil::wrap;
use super::{check_finite, LinearDynamics, ModelConfig};
use crate::noise::NoiseIncrement;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub time_index: usize,
}

#[derive(Debug, Clone)]
pub struct WaveOperator {
    c: Vec<f64>,
    mu: f64,
    dx: f64,
    dt: f64,
    noise_std: f64,
}

impl WaveOperator {
    pub fn new(config: &ModelConfig, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), config.grid.n_points(), "velocity length must match grid");
        Self {
            c,
            mu: config.mu,
            dx: config.grid.dx(),
            dt: config.dt,
            noise_std: config.noise_std(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.c.len()
    }

    /// `f(u) + mu L p`, accumulated into `out` scaled by `scale`.
    fn add_acceleration(&self, u: &[f64], p: &[f64], scale: f64, out: &mut [f64]) {
        let n = u.len();
        let inv_dx = 1.0 / self.dx;
        let visc = self.mu * inv_dx * inv_dx;
        for (i, o) in out.iter_mut().enumerate() {
            let im1 = wrap(i as isize - 1, n);
            let ip1 = wrap(i as isize + 1, n);
            let w_i = (u[i] - u[im1]) * inv_dx;
            let w_ip1 = (u[ip1] - u[i]) * inv_dx;
            let force = (self.c[ip1] * w_ip1 - self.c[i] * w_i) * inv_dx;
            let lap = (p[ip1] - 2.0 * p[i] + p[im1]) * visc;
            *o += scale * (force + lap);
        }
    }

    /// Noise-free Verlet step on split `(p, u)` buffers.
    pub fn verlet(&self, p: &[f64], u: &[f64], p_out: &mut [f64], u_out: &mut [f64]) {
        let half = 0.5 * self.dt;
        let mut p_half = p.to_vec();
        self.add_acceleration(u, p, half, &mut p_half);
        for ((uo, ui), ph) in u_out.iter_mut().zip(u).zip(&p_half) {
            *uo = ui + self.dt * ph;
        }
        p_out.copy_from_slice(&p_half);
        self.add_acceleration(u_out, &p_half, half, p_out);
    }
}

impl LinearDynamics for WaveOperator {
    fn dim(&self) -> usize {
        2 * self.c.len()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_step(&self, x: &[f64], out: &mut [f64]) {
        let n = self.c.len();
        let (p, u) = x.split_at(n);
        let (p_out, u_out) = out.split_at_mut(n);
        self.verlet(p, u, p_out, u_out);
    }

    fn noise_range(&self) -> Range<usize> {
        0..self.c.len()
    }

    fn noise_std(&self) -> f64 {
        self.noise_std
    }
}

/// One stochastic Verlet step; noise enters the final momentum half-step.
pub fn wave_step(state: &WaveState, config: &ModelConfig, noise: &NoiseIncrement) -> Result<WaveState> {
    let n = config.grid.n_points();
    if state.u.len() != n || state.p.len() != n || noise.values.len() != n {
        return Err(Error::Dimension(format!(
            "grid has {n} points, state ({}, {}) and noise {}",
            state.u.len(),
            state.p.len(),
            noise.values.len()
        )));
    }
    let op = WaveOperator::new(config, config.velocity.evaluate(&config.grid));
    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];
    op.verlet(&state.p, &state.u, &mut p, &mut u);
    for (pi, w) in p.iter_mut().zip(&noise.values) {
        *pi += w;
    }
    let next = state.time_index + 1;
    check_finite(&u, "wave step", next)?;
    check_finite(&p, "wave step", next)?;
    Ok(WaveState {
        u,
        p,
        time_index: next,
    })
}

/// Discrete energy `1/2 sum_i (p_i^2 + C_i w_i^2) dx`.
pub fn wave_energy(state: &WaveState, c: &[f64], dx: f64) -> f64 {
    let n = state.u.len();
    let mut e = 0.0;
    for (i, ci) in c.iter().enumerate().take(n) {
        let w = (state.u[i] - state.u[wrap(i as isize - 1, n)]) / dx;
        e += state.p[i] * state.p[i] + ci * w * w;
    }
    0.5 * e * dx
}
