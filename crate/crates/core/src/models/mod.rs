//! Spatially discretised stochastic advection and wave equations.
//!
//! Both models are linear in the state for a fixed velocity field, so each
//! exposes its noise-free one-step map through [`LinearDynamics`]. Filters
//! build their drift operator from that map.

pub mod advection;
pub mod stencil;
pub mod wave;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::fields::{Grid, VelocityField};
use crate::noise::increment_std;
use crate::{Error, Result};

pub use advection::{advection_drift, advection_step, AdvectionOperator, AdvectionState};
pub use stencil::{apply_stencil, Stencil};
pub use wave::{wave_energy, wave_step, WaveOperator, WaveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Advection,
    Wave,
}

impl ModelKind {
    /// Length of the filter state vector on a grid of `n` points.
    pub fn state_dim(self, n: usize) -> usize {
        match self {
            ModelKind::Advection => n,
            ModelKind::Wave => 2 * n,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "advection" => Ok(ModelKind::Advection),
            "wave" => Ok(ModelKind::Wave),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

/// Sign convention of the advective flux term.
///
/// `Upwind` integrates `du/dt = -d(Cu)/dx + mu d2u/dx2`, for which the
/// backward-biased `D1` stencil is the upwind direction when `C > 0`.
/// `Literal` integrates `du/dt = +d(Cu)/dx + ...` with the same stencil; this
/// is downwind and grows without bound at the reference settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Upwind,
    Literal,
}

impl Transport {
    pub(crate) fn sign(self) -> f64 {
        match self {
            Transport::Upwind => -1.0,
            Transport::Literal => 1.0,
        }
    }
}

/// Physical and numerical settings of one model run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub grid: Grid,
    pub dt: f64,
    pub mu: f64,
    pub sigma: f64,
    pub transport: Transport,
    pub velocity: VelocityField,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            bad.push(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            bad.push(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            bad.push(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Per-entry standard deviation of the discrete model noise.
    pub fn noise_std(&self) -> f64 {
        increment_std(self.sigma, self.dt, self.grid.dx())
    }
}

/// Noise-free one-step map `x -> A x` of a linear model, with additive model
/// noise on a contiguous block of the state.
pub trait LinearDynamics: Sync {
    fn dim(&self) -> usize;

    fn dt(&self) -> f64;

    /// Writes `A x` into `out`.
    fn apply_step(&self, x: &[f64], out: &mut [f64]);

    /// Writes the drift `F x = (A x - x) / dt` into `out`.
    fn apply_drift(&self, x: &[f64], out: &mut [f64]) {
        self.apply_step(x, out);
        let dt = self.dt();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (*o - xi) / dt;
        }
    }

    /// State entries that receive model noise.
    fn noise_range(&self) -> Range<usize>;

    /// Standard deviation of the per-step model noise on `noise_range`.
    fn noise_std(&self) -> f64;

    /// Diagonal of the continuous-time diffusion `G G^T`, so that
    /// `G G^T dt` is the covariance of one noise increment.
    fn process_noise_diag(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.dim()];
        let s = self.noise_std();
        let var = s * s / self.dt();
        for v in &mut q[self.noise_range()] {
            *v = var;
        }
        q
    }

    /// `A x + noise` where `noise` covers `noise_range`.
    fn apply_stochastic_step(&self, x: &[f64], noise: &[f64], out: &mut [f64]) {
        self.apply_step(x, out);
        for (o, w) in out[self.noise_range()].iter_mut().zip(noise) {
            *o += w;
        }
    }

    /// Dense `A`, assembled column by column.
    fn step_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_step(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

/// Linear dynamics of either model for a given velocity field.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Advection(AdvectionOperator),
    Wave(WaveOperator),
}

impl Dynamics {
    /// Dynamics of `kind` with the velocity values `c` on the config grid.
    /// The config's own velocity field is ignored.
    pub fn with_velocity(kind: ModelKind, config: &ModelConfig, c: Vec<f64>) -> Self {
        match kind {
            ModelKind::Advection => Dynamics::Advection(AdvectionOperator::new(config, c)),
            ModelKind::Wave => Dynamics::Wave(WaveOperator::new(config, c)),
        }
    }

    pub fn from_config(kind: ModelKind, config: &ModelConfig) -> Self {
        Self::with_velocity(kind, config, config.velocity.evaluate(&config.grid))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Dynamics::Advection(_) => ModelKind::Advection,
            Dynamics::Wave(_) => ModelKind::Wave,
        }
    }
}

impl LinearDynamics for Dynamics {
    fn dim(&self) -> usize {
        match self {
            Dynamics::Advection(a) => a.dim(),
            Dynamics::Wave(w) => w.dim(),
        }
    }

    fn dt(&self) -> f64 {
        match self {
            Dynamics::Advection(a) => a.dt(),
            Dynamics::Wave(w) => w.dt(),
        }
    }

    fn apply_step(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Advection(a) => a.apply_step(x, out),
            Dynamics::Wave(w) => w.apply_step(x, out),
        }
    }

    fn apply_drift(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Advection(a) => a.apply_drift(x, out),
            Dynamics::Wave(w) => w.apply_drift(x, out),
        }
    }

    fn noise_range(&self) -> Range<usize> {
        match self {
            Dynamics::Advection(a) => a.noise_range(),
            Dynamics::Wave(w) => w.noise_range(),
        }
    }

    fn noise_std(&self) -> f64 {
        match self {
            Dynamics::Advection(a) => a.noise_std(),
            Dynamics::Wave(w) => w.noise_std(),
        }
    }
}

/// State of either model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Advection(AdvectionState),
    Wave(WaveState),
}

impl ModelState {
    /// Filter state vector: `u` for advection, stacked `(p, u)` for the wave.
    pub fn to_vector(&self) -> Vec<f64> {
        match self {
            ModelState::Advection(s) => s.u.clone(),
            ModelState::Wave(s) => s.p.iter().chain(&s.u).copied().collect(),
        }
    }

    pub fn from_vector(kind: ModelKind, x: &[f64], time_index: usize) -> Self {
        match kind {
            ModelKind::Advection => ModelState::Advection(AdvectionState {
                u: x.to_vec(),
                time_index,
            }),
            ModelKind::Wave => {
                let n = x.len() / 2;
                ModelState::Wave(WaveState {
                    p: x[..n].to_vec(),
                    u: x[n..].to_vec(),
                    time_index,
                })
            }
        }
    }

    /// Displacement field `u`.
    pub fn u(&self) -> &[f64] {
        match self {
            ModelState::Advection(s) => &s.u,
            ModelState::Wave(s) => &s.u,
        }
    }
}

/// `u = sin(x)` for advection; `u = exp(-4 (x - L/2)^2)`, `p = 0` for the wave.
pub fn initial_state(kind: ModelKind, grid: &Grid) -> ModelState {
    let x = grid.points();
    match kind {
        ModelKind::Advection => ModelState::Advection(AdvectionState {
            u: x.iter().map(|xi| xi.sin()).collect(),
            time_index: 0,
        }),
        ModelKind::Wave => {
            let mid = 0.5 * grid.length();
            ModelState::Wave(WaveState {
                u: x.iter().map(|xi| (-4.0 * (xi - mid).powi(2)).exp()).collect(),
                p: vec![0.0; grid.n_points()],
                time_index: 0,
            })
        }
    }
}

pub(crate) fn check_finite(x: &[f64], context: &str, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::blowup(context, step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn advection_initial_state_on_four_points() {
        let grid = Grid::new(4, TAU).unwrap();
        let s = initial_state(ModelKind::Advection, &grid);
        let want = [1.0, 0.0, -1.0, 0.0];
        for (a, b) in s.u().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wave_initial_state() {
        let grid = Grid::periodic_2pi(100).unwrap();
        let ModelState::Wave(s) = initial_state(ModelKind::Wave, &grid) else {
            panic!()
        };
        assert!(s.p.iter().all(|&v| v == 0.0));
        // x_50 (one-based) sits at L/2
        assert!((s.u[49] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_vector_layout_round_trips() {
        let s = ModelState::Wave(WaveState {
            u: vec![1.0, 2.0],
            p: vec![3.0, 4.0],
            time_index: 5,
        });
        let v = s.to_vector();
        assert_eq!(v, vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(ModelState::from_vector(ModelKind::Wave, &v, 5), s);
    }

    #[test]
    fn config_validation_lists_all_fields() {
        let cfg = ModelConfig {
            grid: Grid::periodic_2pi(8).unwrap(),
            dt: -1.0,
            mu: -0.1,
            sigma: f64::NAN,
            transport: Transport::Upwind,
            velocity: VelocityField::Fourier(crate::FourierCoefficients::zeros(1)),
        };
        match cfg.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
