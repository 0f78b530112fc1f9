//! Ensemble Kalman–Bucy filter with perturbed observations and
//! Gaspari–Cohn covariance localisation.
//!
//! Members are the columns of an `n x M` matrix. Each step predicts every
//! member with its own model-noise stream, forms the (localised) prediction
//! covariance, and moves each member by `P H^T R^{-1} (dy + eps - H u dt)`,
//! `eps ~ N(0, R dt)`. The log-likelihood increment is evaluated at the
//! prediction-ensemble mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::fields::Grid;
use crate::kbf::{kalman_gain, loglik_increment, symmetrize};
use crate::models::{check_finite, Dynamics, LinearDynamics, ModelConfig, ModelKind};
use crate::noise::{fill_standard_normal, StreamKey, StreamTag};
use crate::observation::{ObservationIncrement, ObservationModel};
use crate::{Error, FourierCoefficients, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StateEnsemble {
    members: DMatrix<f64>,
}

impl StateEnsemble {
    /// Members are the columns of `members`.
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 members, got {}",
                members.ncols()
            )));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble member".into()));
        }
        Ok(Self { members })
    }

    /// `m_size` copies of `x`.
    pub fn replicate(x: &[f64], m_size: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(x.len(), m_size, |i, _| x[i]))
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn m_size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperKind {
    GaspariCohn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSpec {
    /// Half-width in grid points; the taper vanishes beyond twice this.
    pub radius: f64,
    pub kind: TaperKind,
}

impl LocalizationSpec {
    pub fn gaspari_cohn(radius: f64) -> Self {
        Self {
            radius,
            kind: TaperKind::GaspariCohn,
        }
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0 && self.radius <= n_points as f64 / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "localization radius must lie in (0, {}], got {}",
                n_points as f64 / 2.0,
                self.radius
            )));
        }
        Ok(())
    }

    pub fn taper(&self, distance: f64) -> f64 {
        match self.kind {
            TaperKind::GaspariCohn => gaspari_cohn(distance / self.radius),
        }
    }

    /// Taper for a state of `blocks` stacked grid fields: entries are
    /// compared by their grid index, so cross-block pairs at the same point
    /// are fully correlated.
    pub fn taper_matrix(&self, grid: &Grid, blocks: usize) -> DMatrix<f64> {
        let n = grid.n_points();
        DMatrix::from_fn(blocks * n, blocks * n, |i, j| {
            self.taper(grid.periodic_distance(i % n, j % n) as f64)
        })
    }
}

/// Fifth-order piecewise rational taper of Gaspari and Cohn, `z = d / c`.
pub fn gaspari_cohn(z: f64) -> f64 {
    let z = z.abs();
    if z <= 1.0 {
        ((((-0.25 * z + 0.5) * z + 0.625) * z - 5.0 / 3.0) * z * z) + 1.0
    } else if z < 2.0 {
        (((((z / 12.0 - 0.5) * z + 0.625) * z + 5.0 / 3.0) * z - 5.0) * z) + 4.0 - 2.0 / (3.0 * z)
    } else {
        0.0
    }
}

/// Member mean and `(M - 1)`-normalised covariance, Schur-multiplied by
/// `taper` when given.
pub fn ensemble_statistics(ens: &StateEnsemble, taper: Option<&DMatrix<f64>>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = ens.mean();
    let mut x = ens.members.clone();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &x * x.transpose() / (ens.m_size() as f64 - 1.0);
    if let Some(t) = taper {
        cov.component_mul_assign(t);
    }
    symmetrize(&mut cov);
    (mean, cov)
}

/// Per-run filter settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EnkbfSettings {
    pub m_size: usize,
    pub localization: Option<LocalizationSpec>,
    /// Propagate members with independent model-noise draws.
    pub process_noise: bool,
    /// Standard deviation of the initial spread around the known initial state.
    pub initial_spread: f64,
}

/// Identifies the random streams of one filter run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleStreams {
    pub seed: u64,
    /// Distinguishes runs sharing a seed (MH cycle, parameter particle).
    pub outer: usize,
}

impl EnsembleStreams {
    fn model(&self, member: usize, time: usize) -> StreamKey {
        StreamKey::new(self.seed, StreamTag::EnsembleModel)
            .outer(self.outer)
            .member(member)
            .time(time)
    }

    fn perturbation(&self, member: usize, time: usize) -> StreamKey {
        StreamKey::new(self.seed, StreamTag::EnsemblePerturbation)
            .outer(self.outer)
            .member(member)
            .time(time)
    }
}

/// Result of one ensemble step.
#[derive(Debug, Clone)]
pub struct EnkbfStep {
    pub ensemble: StateEnsemble,
    pub predicted_mean: DVector<f64>,
    pub loglik: f64,
}

/// Predicts every member; with `process_noise` each draws
/// `noise_std * N(0, 1)` on the dynamics' noise block.
pub fn predict_members<D: LinearDynamics + ?Sized>(
    ens: &StateEnsemble,
    dynamics: &D,
    process_noise: bool,
    streams: EnsembleStreams,
    time: usize,
) -> DMatrix<f64> {
    let n = ens.dim();
    let src = ens.members.as_slice();
    let range = dynamics.noise_range();
    let std = dynamics.noise_std();
    let mut out = DMatrix::zeros(n, ens.m_size());
    exec::for_each_chunk(out.as_mut_slice(), n, |j, col| {
        let x = &src[j * n..(j + 1) * n];
        dynamics.apply_step(x, col);
        if process_noise && std != 0.0 {
            let mut w = vec![0.0; range.len()];
            fill_standard_normal(&mut streams.model(j, time).rng(), &mut w);
            for (c, wi) in col[range.clone()].iter_mut().zip(&w) {
                *c += std * wi;
            }
        }
    });
    out
}

/// Perturbations `eps_j ~ N(0, R dt)` as the columns of an `r x M` matrix.
fn perturbations(obs: &ObservationModel, m: usize, streams: EnsembleStreams, time: usize) -> DMatrix<f64> {
    let r = obs.obs_dim();
    let mut out = DMatrix::zeros(r, m);
    exec::for_each_chunk(out.as_mut_slice(), r, |j, col| {
        let eps = obs.sample_noise(&mut streams.perturbation(j, time).rng());
        col.copy_from_slice(eps.as_slice());
    });
    out
}

pub fn enkbf_step<D: LinearDynamics + ?Sized>(
    ens: &StateEnsemble,
    dynamics: &D,
    incr: &ObservationIncrement,
    obs: &ObservationModel,
    taper: Option<&DMatrix<f64>>,
    process_noise: bool,
    streams: EnsembleStreams,
) -> Result<EnkbfStep> {
    if ens.dim() != dynamics.dim() || ens.dim() != obs.state_dim() || incr.dy.len() != obs.obs_dim() {
        return Err(Error::Dimension(format!(
            "ensemble dim {}, dynamics dim {}, H is {}x{}",
            ens.dim(),
            dynamics.dim(),
            obs.obs_dim(),
            obs.state_dim()
        )));
    }
    let t = incr.time_index;
    let predicted = StateEnsemble {
        members: predict_members(ens, dynamics, process_noise, streams, t),
    };
    let (mean, cov) = ensemble_statistics(&predicted, taper);
    let loglik = loglik_increment(incr, mean.as_slice(), obs)?;

    let gain = kalman_gain(&cov, obs);
    let m = ens.m_size();
    let dy = DVector::from_column_slice(&incr.dy);
    let mut innov = perturbations(obs, m, streams, t) - obs.h() * &predicted.members * obs.dt();
    for mut col in innov.column_iter_mut() {
        col += &dy;
    }
    let members = predicted.members + gain * innov;
    check_finite(members.as_slice(), "enkbf", t + 1)?;
    Ok(EnkbfStep {
        ensemble: StateEnsemble { members },
        predicted_mean: mean,
        loglik,
    })
}

/// Initial ensemble around `x0`; the spread uses the model-noise stream at
/// time index `usize::MAX` so it never collides with a step.
pub fn initial_ensemble(x0: &[f64], settings: &EnkbfSettings, streams: EnsembleStreams) -> Result<StateEnsemble> {
    let mut members = DMatrix::from_fn(x0.len(), settings.m_size, |i, _| x0[i]);
    if settings.initial_spread > 0.0 {
        let n = x0.len();
        exec::for_each_chunk(members.as_mut_slice(), n, |j, col| {
            let mut w = vec![0.0; n];
            fill_standard_normal(&mut streams.model(j, usize::MAX).rng(), &mut w);
            for (c, wi) in col.iter_mut().zip(w) {
                *c += settings.initial_spread * wi;
            }
        });
    }
    StateEnsemble::new(members)
}

#[derive(Debug, Clone)]
pub struct EnkbfRun {
    pub prediction_means: Vec<DVector<f64>>,
    pub analysis_means: Vec<DVector<f64>>,
    pub loglik: f64,
    pub final_ensemble: StateEnsemble,
}

/// Runs the ensemble filter from `ens` over `obs_seq`.
pub fn run_enkbf_with<D: LinearDynamics + ?Sized>(
    dynamics: &D,
    mut ens: StateEnsemble,
    obs_seq: &[ObservationIncrement],
    obs: &ObservationModel,
    taper: Option<&DMatrix<f64>>,
    process_noise: bool,
    streams: EnsembleStreams,
) -> Result<EnkbfRun> {
    if obs_seq.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    let mut prediction_means = Vec::with_capacity(obs_seq.len());
    let mut analysis_means = Vec::with_capacity(obs_seq.len());
    let mut loglik = 0.0;
    for incr in obs_seq {
        let s = enkbf_step(&ens, dynamics, incr, obs, taper, process_noise, streams)?;
        loglik += s.loglik;
        prediction_means.push(s.predicted_mean);
        ens = s.ensemble;
        analysis_means.push(ens.mean());
    }
    Ok(EnkbfRun {
        prediction_means,
        analysis_means,
        loglik,
        final_ensemble: ens,
    })
}

/// Runs the filter with the drift built from `coeffs`, starting around the
/// model's initial condition.
pub fn run_enkbf(
    kind: ModelKind,
    config: &ModelConfig,
    obs_seq: &[ObservationIncrement],
    obs: &ObservationModel,
    coeffs: &FourierCoefficients,
    settings: &EnkbfSettings,
    streams: EnsembleStreams,
) -> Result<EnkbfRun> {
    let c = crate::fields::evaluate_field(coeffs, &config.grid);
    let dynamics = Dynamics::with_velocity(kind, config, c);
    let taper = match &settings.localization {
        Some(loc) => {
            loc.validate(config.grid.n_points())?;
            Some(loc.taper_matrix(&config.grid, kind.state_dim(1)))
        }
        None => None,
    };
    let x0 = crate::models::initial_state(kind, &config.grid).to_vector();
    let ens = initial_ensemble(&x0, settings, streams)?;
    run_enkbf_with(
        &dynamics,
        ens,
        obs_seq,
        obs,
        taper.as_ref(),
        settings.process_noise,
        streams,
    )
}
