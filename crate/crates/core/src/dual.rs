//! Dual state–parameter filtering.
//!
//! A cloud of `L` parameter particles `lambda^j` each carries its own state
//! filter: a Kalman–Bucy filter with its own covariance (`KbfEnkbf`), or an
//! `M`-member ensemble (`Enkbf`). After the state filters consume an
//! increment, every particle moves by
//!
//! ```text
//! lambda^j += D H^T R^{-1} (dy - (H u^j + H u_bar) dt / 2)
//! D = 1/(L-1) sum_j (lambda^j - lambda_bar)(u^j - u_bar)^T
//! ```
//!
//! where `u^j` are the analysis means. Weights stay uniform and parameters
//! have no artificial dynamics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::enkbf::{enkbf_step, initial_ensemble, EnkbfSettings, EnsembleStreams, StateEnsemble};
use crate::exec;
use crate::fields::evaluate_field;
use crate::kbf::{kbf_analysis, kbf_predict, GaussianBelief, KbfSettings};
use crate::models::{initial_state, Dynamics, ModelConfig, ModelKind};
use crate::noise::{fill_standard_normal, StreamKey, StreamTag};
use crate::observation::{ObservationIncrement, ObservationModel};
use crate::{Error, FourierCoefficients, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    KbfEnkbf,
    Enkbf,
}

/// Parameter particles and their state estimates, one column per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterParticleCloud {
    pub particles: DMatrix<f64>,
    pub states: DMatrix<f64>,
}

impl ParameterParticleCloud {
    pub fn new(particles: DMatrix<f64>, states: DMatrix<f64>) -> Result<Self> {
        if particles.ncols() != states.ncols() || particles.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "{} particles but {} state estimates",
                particles.ncols(),
                states.ncols()
            )));
        }
        Ok(Self { particles, states })
    }

    pub fn l_size(&self) -> usize {
        self.particles.ncols()
    }

    pub fn parameter_mean(&self) -> DVector<f64> {
        self.particles.column_mean()
    }

    pub fn state_mean(&self) -> DVector<f64> {
        self.states.column_mean()
    }

    pub fn particle(&self, j: usize) -> FourierCoefficients {
        FourierCoefficients::new(self.particles.column(j).iter().copied().collect())
            .expect("cloud rows form a coefficient vector")
    }
}

/// `D` with `1/(L-1)` normalisation; zero for a single particle.
pub fn cross_covariance(cloud: &ParameterParticleCloud) -> DMatrix<f64> {
    let l = cloud.l_size();
    let (p, n) = (cloud.particles.nrows(), cloud.states.nrows());
    if l < 2 {
        return DMatrix::zeros(p, n);
    }
    let mut a = cloud.particles.clone();
    let lm = cloud.parameter_mean();
    for mut c in a.column_iter_mut() {
        c -= &lm;
    }
    let mut b = cloud.states.clone();
    let um = cloud.state_mean();
    for mut c in b.column_iter_mut() {
        c -= &um;
    }
    a * b.transpose() / (l as f64 - 1.0)
}

/// Moves every particle with the cross-covariance computed from the cloud
/// as given.
pub fn parameter_update(
    cloud: &ParameterParticleCloud,
    incr: &ObservationIncrement,
    obs: &ObservationModel,
) -> Result<ParameterParticleCloud> {
    if cloud.states.nrows() != obs.state_dim() || incr.dy.len() != obs.obs_dim() {
        return Err(Error::Dimension(format!(
            "state dim {}, increment {}, H is {}x{}",
            cloud.states.nrows(),
            incr.dy.len(),
            obs.obs_dim(),
            obs.state_dim()
        )));
    }
    let d = cross_covariance(cloud);
    let dt = obs.dt();
    let hu = obs.h() * &cloud.states;
    let hu_bar = hu.column_mean();
    let dy = DVector::from_column_slice(&incr.dy);
    let mut innov = hu * (-0.5 * dt);
    let shift = dy - hu_bar * (0.5 * dt);
    for mut c in innov.column_iter_mut() {
        c += &shift;
    }
    let gain = d * obs.h().transpose() * obs.r_inv();
    Ok(ParameterParticleCloud {
        particles: &cloud.particles + gain * innov,
        states: cloud.states.clone(),
    })
}

/// Per-particle state filters.
#[derive(Debug, Clone)]
pub enum StateFilters {
    Kbf { beliefs: Vec<GaussianBelief>, settings: KbfSettings },
    Enkbf { ensembles: Vec<StateEnsemble>, settings: EnkbfSettings, taper: Option<DMatrix<f64>> },
}

fn dynamics_for(kind: ModelKind, config: &ModelConfig, cloud: &ParameterParticleCloud, j: usize) -> Dynamics {
    Dynamics::with_velocity(kind, config, evaluate_field(&cloud.particle(j), &config.grid))
}

fn write_states(cloud: &mut ParameterParticleCloud, means: Vec<DVector<f64>>) {
    for (j, m) in means.into_iter().enumerate() {
        cloud.states.set_column(j, &m);
    }
}

/// KBF analysis per particle with drift `F(lambda^j)`, then the parameter
/// update.
pub fn dual_kbf_enkbf_step(
    kind: ModelKind,
    cloud: &ParameterParticleCloud,
    beliefs: &mut [GaussianBelief],
    settings: KbfSettings,
    config: &ModelConfig,
    incr: &ObservationIncrement,
    obs: &ObservationModel,
) -> Result<ParameterParticleCloud> {
    exec::try_for_each_mut(beliefs, |j, b| {
        let dynamics = dynamics_for(kind, config, cloud, j);
        let pred = kbf_predict(b, &dynamics, settings.propagation);
        *b = kbf_analysis(&pred, incr, obs)?;
        if b.mean.iter().chain(b.cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::blowup("dual kbf", incr.time_index + 1));
        }
        Ok(())
    })?;
    let mut next = cloud.clone();
    write_states(&mut next, beliefs.iter().map(|b| b.mean.clone()).collect());
    parameter_update(&next, incr, obs)
}

/// One ensemble step per particle (streams keyed by particle index), state
/// estimates set to the member means, then the parameter update.
#[allow(clippy::too_many_arguments)]
pub fn dual_enkbf_step(
    kind: ModelKind,
    cloud: &ParameterParticleCloud,
    ensembles: &mut [StateEnsemble],
    settings: &EnkbfSettings,
    taper: Option<&DMatrix<f64>>,
    config: &ModelConfig,
    incr: &ObservationIncrement,
    obs: &ObservationModel,
    seed: u64,
) -> Result<ParameterParticleCloud> {
    exec::try_for_each_mut(ensembles, |j, ens| {
        let dynamics = dynamics_for(kind, config, cloud, j);
        let streams = EnsembleStreams { seed, outer: j };
        *ens = enkbf_step(ens, &dynamics, incr, obs, taper, settings.process_noise, streams)?.ensemble;
        Ok::<(), Error>(())
    })?;
    let mut next = cloud.clone();
    write_states(&mut next, ensembles.iter().map(|e| e.mean()).collect());
    parameter_update(&next, incr, obs)
}

/// `init + spread * N(0, 1)` per coordinate, one stream per particle.
pub fn initial_cloud(init: &FourierCoefficients, l_size: usize, spread: f64, state0: &[f64], seed: u64) -> Result<ParameterParticleCloud> {
    let p = init.len();
    let mut particles = DMatrix::from_fn(p, l_size, |i, _| init.as_slice()[i]);
    if spread > 0.0 {
        for j in 0..l_size {
            let mut w = vec![0.0; p];
            fill_standard_normal(&mut StreamKey::new(seed, StreamTag::DualInit).member(j).rng(), &mut w);
            for (i, wi) in w.into_iter().enumerate() {
                particles[(i, j)] += spread * wi;
            }
        }
    }
    let states = DMatrix::from_fn(state0.len(), l_size, |i, _| state0[i]);
    ParameterParticleCloud::new(particles, states)
}

#[derive(Debug, Clone)]
pub struct DualRun {
    /// Parameter cloud mean after each step.
    pub lambda_hat: Vec<DVector<f64>>,
    /// State cloud mean after each step.
    pub u_hat: Vec<DVector<f64>>,
    pub final_cloud: ParameterParticleCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualFilter {
    KbfEnkbf(KbfSettings),
    Enkbf(EnkbfSettings),
}

impl DualFilter {
    pub fn mode(&self) -> DualMode {
        match self {
            DualFilter::KbfEnkbf(_) => DualMode::KbfEnkbf,
            DualFilter::Enkbf(_) => DualMode::Enkbf,
        }
    }
}

/// Iterates the dual step over `obs_seq`, starting every state filter at the
/// model's initial condition.
pub fn run_dual(
    kind: ModelKind,
    filter: &DualFilter,
    config: &ModelConfig,
    obs_seq: &[ObservationIncrement],
    obs: &ObservationModel,
    init_cloud: ParameterParticleCloud,
    seed: u64,
) -> Result<DualRun> {
    if obs_seq.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    let x0 = initial_state(kind, &config.grid).to_vector();
    let l = init_cloud.l_size();
    let mut filters = match filter {
        DualFilter::KbfEnkbf(s) => StateFilters::Kbf {
            beliefs: vec![GaussianBelief::isotropic(&x0, s.initial_cov); l],
            settings: *s,
        },
        DualFilter::Enkbf(s) => {
            let taper = match &s.localization {
                Some(loc) => {
                    loc.validate(config.grid.n_points())?;
                    Some(loc.taper_matrix(&config.grid, kind.state_dim(1)))
                }
                None => None,
            };
            let ensembles = (0..l)
                .map(|j| initial_ensemble(&x0, s, EnsembleStreams { seed, outer: j }))
                .collect::<Result<Vec<_>>>()?;
            StateFilters::Enkbf {
                ensembles,
                settings: s.clone(),
                taper,
            }
        }
    };
    let mut cloud = init_cloud;
    let mut lambda_hat = Vec::with_capacity(obs_seq.len());
    let mut u_hat = Vec::with_capacity(obs_seq.len());
    for incr in obs_seq {
        cloud = match &mut filters {
            StateFilters::Kbf { beliefs, settings } => {
                dual_kbf_enkbf_step(kind, &cloud, beliefs, *settings, config, incr, obs)?
            }
            StateFilters::Enkbf {
                ensembles,
                settings,
                taper,
            } => dual_enkbf_step(kind, &cloud, ensembles, settings, taper.as_ref(), config, incr, obs, seed)?,
        };
        if cloud.particles.iter().any(|v| !v.is_finite()) {
            return Err(Error::blowup("dual parameter update", incr.time_index + 1));
        }
        lambda_hat.push(cloud.parameter_mean());
        u_hat.push(cloud.state_mean());
    }
    Ok(DualRun {
        lambda_hat,
        u_hat,
        final_cloud: cloud,
    })
}
