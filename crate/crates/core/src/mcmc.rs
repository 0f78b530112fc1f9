//! Metropolis–Hastings over the coefficient vector with the autoregressive
//! proposal `lambda' ~ N(lambda cos(phi), (omega / aleph) sin(phi))`, the
//! second argument a standard deviation.
//!
//! The proposal is asymmetric, so the acceptance ratio carries the full
//! Hastings correction. Filter blow-ups evaluate to `-inf` and are rejected.
//! The incumbent's log-likelihood is cached and never recomputed, which keeps
//! the chain exact for the noisy ensemble likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::enkbf::{run_enkbf, EnkbfSettings, EnsembleStreams};
use crate::kbf::{run_kbf, KbfSettings};
use crate::models::{ModelConfig, ModelKind};
use crate::noise::{fill_standard_normal, StreamKey, StreamTag};
use crate::observation::{ObservationIncrement, ObservationModel};
use crate::{Error, FourierCoefficients, Result};

/// Which mode number divides `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeScaling {
    /// `aleph = 1` for `A0` and `k` for the mode-`k` pair.
    #[default]
    PerCoordinate,
    /// `aleph = n_modes` for every coordinate.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub phi: f64,
    pub omega: f64,
    #[serde(default)]
    pub scaling: ModeScaling,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            phi: std::f64::consts::FRAC_PI_4,
            omega: 1.0,
            scaling: ModeScaling::PerCoordinate,
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.phi > 0.0 && self.phi < std::f64::consts::FRAC_PI_2) {
            bad.push(format!("phi must lie in (0, pi/2), got {}", self.phi));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            bad.push(format!("omega must be > 0, got {}", self.omega));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// A proposal with its per-coordinate standard deviations resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    cos_phi: f64,
    stds: Vec<f64>,
}

impl Proposal {
    /// Proposal over `2 n_modes + 1` coefficients.
    pub fn for_modes(spec: &ProposalSpec, n_modes: usize) -> Result<Self> {
        let aleph = match spec.scaling {
            ModeScaling::PerCoordinate => FourierCoefficients::mode_numbers(n_modes),
            ModeScaling::Fixed => vec![n_modes as f64; 2 * n_modes + 1],
        };
        Self::with_mode_numbers(spec, &aleph)
    }

    /// Proposal with explicit mode numbers, one per coordinate.
    pub fn with_mode_numbers(spec: &ProposalSpec, aleph: &[f64]) -> Result<Self> {
        spec.validate()?;
        let (s, c) = spec.phi.sin_cos();
        Ok(Self {
            cos_phi: c,
            stds: aleph.iter().map(|a| spec.omega / a * s).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.stds.len()
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn cos_phi(&self) -> f64 {
        self.cos_phi
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        let mut z = vec![0.0; current.len()];
        fill_standard_normal(rng, &mut z);
        current
            .iter()
            .zip(&self.stds)
            .zip(z)
            .map(|((x, s), zi)| x * self.cos_phi + s * zi)
            .collect()
    }

    /// `log rho(to | from)`.
    pub fn transition_logdensity(&self, to: &[f64], from: &[f64]) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        to.iter()
            .zip(from)
            .zip(&self.stds)
            .map(|((t, f), s)| {
                let z = (t - f * self.cos_phi) / s;
                -0.5 * z * z - s.ln() - half_ln_2pi
            })
            .sum()
    }
}

/// Chain history stored as flat rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainHistory {
    dim: usize,
    values: Vec<f64>,
    pub loglik: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl ChainHistory {
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1))
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.len() as f64
    }

    fn push(&mut self, x: &[f64], loglik: f64, accepted: bool) {
        self.values.extend_from_slice(x);
        self.loglik.push(loglik);
        self.accepted.push(accepted);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub current: Vec<f64>,
    pub current_loglik: f64,
    pub history: ChainHistory,
    /// Keep history rows; long test chains can switch this off.
    pub record: bool,
}

impl ChainState {
    pub fn new(init: Vec<f64>, loglik: f64) -> Self {
        let dim = init.len();
        Self {
            current: init,
            current_loglik: loglik,
            history: ChainHistory {
                dim,
                ..Default::default()
            },
            record: true,
        }
    }
}

/// Optional independent `N(0, prior_std^2)` prior on every coordinate.
fn log_prior(x: &[f64], prior_std: Option<f64>) -> f64 {
    match prior_std {
        Some(s) => x.iter().map(|v| -0.5 * (v / s).powi(2)).sum(),
        None => 0.0,
    }
}

/// One Metropolis–Hastings transition. Returns whether the proposal was
/// accepted.
pub fn mh_step<R, F>(
    chain: &mut ChainState,
    proposal: &Proposal,
    prior_std: Option<f64>,
    mut loglik_fn: F,
    rng: &mut R,
) -> bool
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let cand = proposal.propose(&chain.current, rng);
    let ll = loglik_fn(&cand);
    let u: f64 = rng.random();
    let accept = if ll.is_nan() || ll == f64::NEG_INFINITY {
        false
    } else {
        let log_alpha = (ll - chain.current_loglik)
            + (log_prior(&cand, prior_std) - log_prior(&chain.current, prior_std))
            + proposal.transition_logdensity(&chain.current, &cand)
            - proposal.transition_logdensity(&cand, &chain.current);
        u.ln() < log_alpha
    };
    if accept {
        chain.current = cand;
        chain.current_loglik = ll;
    }
    if chain.record {
        chain.history.push(&chain.current, chain.current_loglik, accept);
    }
    accept
}

/// Which filter supplies the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSettings {
    Kbf(KbfSettings),
    Enkbf(EnkbfSettings),
}

/// Full-trajectory filter log-likelihood as a function of the coefficients.
#[derive(Debug, Clone)]
pub struct FilterLikelihood<'a> {
    pub kind: ModelKind,
    pub config: &'a ModelConfig,
    pub obs_seq: &'a [ObservationIncrement],
    pub obs: &'a ObservationModel,
    pub filter: FilterSettings,
    pub seed: u64,
}

impl FilterLikelihood<'_> {
    /// Log-likelihood at `coeffs`; `evaluation` selects the ensemble streams.
    /// Numerical failure maps to `-inf`.
    pub fn loglik(&self, coeffs: &[f64], evaluation: usize) -> Result<f64> {
        let c = FourierCoefficients::new(coeffs.to_vec())?;
        let run = match &self.filter {
            FilterSettings::Kbf(s) => run_kbf(self.kind, self.config, self.obs_seq, self.obs, &c, *s).map(|r| r.loglik),
            FilterSettings::Enkbf(s) => {
                let streams = EnsembleStreams {
                    seed: self.seed,
                    outer: evaluation,
                };
                run_enkbf(self.kind, self.config, self.obs_seq, self.obs, &c, s, streams).map(|r| r.loglik)
            }
        };
        match run {
            Ok(ll) if ll.is_finite() => Ok(ll),
            Ok(_) | Err(Error::Blowup { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Runs `n_cycles` MH transitions from `init`. Cycle `k` draws from the
/// proposal stream `(seed, k)` and evaluates the filter with evaluation
/// index `k + 1`; the initial point uses index 0.
pub fn run_mh(
    target: &FilterLikelihood<'_>,
    proposal: &Proposal,
    prior_std: Option<f64>,
    n_cycles: usize,
    init: &FourierCoefficients,
    seed: u64,
) -> Result<ChainState> {
    if n_cycles == 0 {
        return Err(Error::InvalidArgument("n_cycles must be >= 1".into()));
    }
    if init.len() != proposal.dim() {
        return Err(Error::Dimension(format!(
            "initial point has {} coefficients, proposal {}",
            init.len(),
            proposal.dim()
        )));
    }
    let ll0 = target.loglik(init.as_slice(), 0)?;
    let mut chain = ChainState::new(init.as_slice().to_vec(), ll0);
    let mut failure = None;
    for k in 0..n_cycles {
        let mut rng = StreamKey::new(seed, StreamTag::Proposal).outer(k).rng();
        mh_step(
            &mut chain,
            proposal,
            prior_std,
            |x| match target.loglik(x, k + 1) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            &mut rng,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
    }
    Ok(chain)
}
