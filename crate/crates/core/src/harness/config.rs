//! Flat TOML experiment configuration.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enkbf::{EnkbfSettings, LocalizationSpec};
use crate::fields::{Grid, LogField, VelocityField};
use crate::kbf::{CovariancePropagation, KbfSettings};
use crate::mcmc::{ModeScaling, ProposalSpec};
use crate::models::{ModelConfig, ModelKind, Transport};
use crate::noise::{StreamKey, StreamTag};
use crate::{Error, FourierCoefficients, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MhKbf,
    MhEnkbf,
    DualKbfEnkbf,
    DualEnkbf,
}

impl Method {
    pub fn is_mh(self) -> bool {
        matches!(self, Method::MhKbf | Method::MhEnkbf)
    }
}

/// Source of the true velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// `truth_coefficients`, given explicitly.
    Coefficients,
    /// `lambda(x) = truth_amplitude * sin(truth_wavenumber * x)`.
    Sine,
    /// `2 truth_modes + 1` standard-normal coefficients drawn from `data_seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub method: Method,

    pub n_points: usize,
    pub length: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub mu: f64,
    pub sigma: f64,
    pub obs_noise: f64,
    pub transport: Transport,

    pub truth: TruthKind,
    pub truth_coefficients: Vec<f64>,
    pub truth_amplitude: f64,
    pub truth_wavenumber: f64,
    pub truth_modes: usize,

    /// Number of estimated modes; `2 n_modes + 1` coefficients.
    pub n_modes: usize,
    /// Initial coefficients (chain start, dual cloud centre); zeros if empty.
    pub init: Vec<f64>,

    pub ensemble_size: usize,
    pub n_particles: usize,
    pub n_cycles: usize,
    /// Discarded MH cycles, or dual steps, before metrics.
    pub burn_in: usize,
    pub localization_radius: Option<f64>,
    pub ensemble_process_noise: bool,
    /// Spread of the initial state ensemble around the known initial state.
    pub ensemble_spread: f64,
    /// Covariance propagation of the KBF; model-dependent default if unset.
    pub kbf_covariance: Option<CovariancePropagation>,
    pub initial_cov: f64,
    /// Spread of the initial dual parameter cloud around `init`.
    pub initial_spread: f64,

    pub phi: f64,
    pub omega: f64,
    pub proposal_scaling: ModeScaling,
    pub prior_std: Option<f64>,

    /// Seed of the filters, proposals and parameter cloud.
    #[serde(with = "seed_repr")]
    pub seed: u64,
    /// Seed of the truth trajectory and the observations.
    #[serde(with = "seed_repr")]
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Advection,
            method: Method::MhKbf,
            n_points: 32,
            length: TAU,
            dt: 0.01,
            n_steps: 1000,
            mu: 0.01,
            sigma: 0.1,
            obs_noise: 0.1,
            transport: Transport::Upwind,
            truth: TruthKind::Coefficients,
            truth_coefficients: vec![0.0, 1.0, 0.0, 0.0, 0.0],
            truth_amplitude: 1.0,
            truth_wavenumber: 1.0,
            truth_modes: 2,
            n_modes: 2,
            init: Vec::new(),
            ensemble_size: 100,
            n_particles: 100,
            n_cycles: 300,
            burn_in: 150,
            localization_radius: None,
            ensemble_process_noise: true,
            ensemble_spread: 0.0,
            kbf_covariance: None,
            initial_cov: 0.0,
            initial_spread: 0.5,
            phi: FRAC_PI_4,
            omega: 1.0,
            proposal_scaling: ModeScaling::PerCoordinate,
            prior_std: None,
            seed: 0,
            data_seed: 0,
        }
    }
}

/// Seeds above `i64::MAX` do not fit a TOML integer and are written as
/// strings.
mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(i) => u64::try_from(i).map_err(|_| serde::de::Error::custom("seed must be >= 0")),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!("{name} must be > 0, got {v}"));
            }
        };
        positive("length", self.length);
        positive("dt", self.dt);
        positive("obs_noise", self.obs_noise);
        positive("omega", self.omega);
        let mut non_negative = |name: &str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                bad.push(format!("{name} must be >= 0, got {v}"));
            }
        };
        non_negative("mu", self.mu);
        non_negative("sigma", self.sigma);
        non_negative("initial_cov", self.initial_cov);
        non_negative("initial_spread", self.initial_spread);
        non_negative("ensemble_spread", self.ensemble_spread);
        if self.n_points < 3 {
            bad.push(format!("n_points must be >= 3, got {}", self.n_points));
        }
        if self.n_steps == 0 {
            bad.push("n_steps must be >= 1".into());
        }
        if self.n_modes == 0 {
            bad.push("n_modes must be >= 1".into());
        }
        if !(self.phi > 0.0 && self.phi < std::f64::consts::FRAC_PI_2) {
            bad.push(format!("phi must lie in (0, pi/2), got {}", self.phi));
        }
        if let Some(s) = self.prior_std {
            if !(s.is_finite() && s > 0.0) {
                bad.push(format!("prior_std must be > 0, got {s}"));
            }
        }
        if !self.init.is_empty() && self.init.len() != 2 * self.n_modes + 1 {
            bad.push(format!(
                "init must have 2 n_modes + 1 = {} entries, got {}",
                2 * self.n_modes + 1,
                self.init.len()
            ));
        }
        match self.truth {
            TruthKind::Coefficients => {
                let n = self.truth_coefficients.len();
                if n < 3 || n.is_multiple_of(2) || self.truth_coefficients.iter().any(|v| !v.is_finite()) {
                    bad.push(format!(
                        "truth_coefficients must be an odd-length (>= 3) finite list, got {n} entries"
                    ));
                }
            }
            TruthKind::Sine => {
                if !(self.truth_amplitude.is_finite() && self.truth_wavenumber.is_finite()) {
                    bad.push("truth_amplitude and truth_wavenumber must be finite".into());
                }
            }
            TruthKind::Random => {
                if self.truth_modes == 0 {
                    bad.push("truth_modes must be >= 1".into());
                }
            }
        }
        if self.method.is_mh() {
            if self.n_cycles == 0 {
                bad.push("n_cycles must be >= 1".into());
            }
            if self.burn_in >= self.n_cycles {
                bad.push(format!(
                    "burn_in must be < n_cycles, got {} >= {}",
                    self.burn_in, self.n_cycles
                ));
            }
        } else {
            if self.n_particles == 0 {
                bad.push("n_particles must be >= 1".into());
            }
            if self.burn_in >= self.n_steps {
                bad.push(format!(
                    "burn_in must be < n_steps for dual filters, got {} >= {}",
                    self.burn_in, self.n_steps
                ));
            }
        }
        if matches!(self.method, Method::MhEnkbf | Method::DualEnkbf) && self.ensemble_size < 2 {
            bad.push(format!("ensemble_size must be >= 2, got {}", self.ensemble_size));
        }
        if let Some(r) = self.localization_radius {
            if !(r.is_finite() && r > 0.0 && r <= self.n_points as f64 / 2.0) {
                bad.push(format!(
                    "localization_radius must lie in (0, n_points / 2], got {r}"
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_points, self.length)
    }

    pub fn truth_field(&self) -> Result<VelocityField> {
        Ok(match self.truth {
            TruthKind::Coefficients => VelocityField::Fourier(FourierCoefficients::new(self.truth_coefficients.clone())?),
            TruthKind::Sine => VelocityField::Closed(LogField::sine(self.truth_amplitude, self.truth_wavenumber)),
            TruthKind::Random => {
                let mut rng = StreamKey::new(self.data_seed, StreamTag::TruthCoefficients).rng();
                VelocityField::Fourier(crate::fields::sample_true_coefficients(self.truth_modes, &mut rng))
            }
        })
    }

    /// Model settings with the true velocity field.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            grid: self.grid()?,
            dt: self.dt,
            mu: self.mu,
            sigma: self.sigma,
            transport: self.transport,
            velocity: self.truth_field()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn init_coefficients(&self) -> Result<FourierCoefficients> {
        if self.init.is_empty() {
            Ok(FourierCoefficients::zeros(self.n_modes))
        } else {
            FourierCoefficients::new(self.init.clone())
        }
    }

    pub fn kbf_settings(&self) -> KbfSettings {
        KbfSettings {
            propagation: self
                .kbf_covariance
                .unwrap_or_else(|| CovariancePropagation::default_for(self.model)),
            initial_cov: self.initial_cov,
        }
    }

    pub fn enkbf_settings(&self) -> EnkbfSettings {
        EnkbfSettings {
            m_size: self.ensemble_size,
            localization: self.localization_radius.map(LocalizationSpec::gaspari_cohn),
            process_noise: self.ensemble_process_noise,
            initial_spread: self.ensemble_spread,
        }
    }

    pub fn proposal_spec(&self) -> ProposalSpec {
        ProposalSpec {
            phi: self.phi,
            omega: self.omega,
            scaling: self.proposal_scaling,
        }
    }
}

/// Merges `overlay` into `base` key by key.
pub fn merge_toml(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        base.insert(k, v);
    }
}
