//! Twin experiments: simulate a truth, observe it, run the configured
//! estimator and summarise the result.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::io::{write_chain, write_coefficients, write_lambda_trajectory, write_trajectory};
use super::metrics::{boxplot_stats, compute_rmse, vector_rmse, BoxplotStats};
use crate::exec;
use crate::dual::{initial_cloud, run_dual, DualFilter};
use crate::mcmc::{run_mh, ChainHistory, FilterLikelihood, FilterSettings, Proposal};
use crate::models::{advection_step, initial_state, wave_step, ModelConfig, ModelKind, ModelState};
use crate::noise::{spacetime_noise_increment, StreamKey, StreamTag};
use crate::observation::{default_observation_model, observe, write_observations, ObservationIncrement, ObservationModel};
use crate::{FourierCoefficients, Result};

/// States `x_0, ..., x_T` of one model realisation, noise drawn from the
/// truth stream of `seed`.
pub fn simulate(kind: ModelKind, config: &ModelConfig, n_steps: usize, seed: u64) -> Result<Vec<ModelState>> {
    let n = config.grid.n_points();
    let dx = config.grid.dx();
    let key = StreamKey::new(seed, StreamTag::TruthModel);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut s = initial_state(kind, &config.grid);
    states.push(s.clone());
    for t in 0..n_steps {
        let noise = spacetime_noise_increment(n, config.sigma, config.dt, dx, &mut key.time(t).rng());
        s = match &s {
            ModelState::Advection(a) => ModelState::Advection(advection_step(a, config, &noise)?),
            ModelState::Wave(w) => ModelState::Wave(wave_step(w, config, &noise)?),
        };
        states.push(s.clone());
    }
    Ok(states)
}

/// Synthetic data of a twin experiment.
#[derive(Debug, Clone)]
pub struct TwinData {
    pub model: ModelConfig,
    pub obs: ObservationModel,
    pub states: Vec<ModelState>,
    /// `observations[t]` observes `states[t + 1]`.
    pub observations: Vec<ObservationIncrement>,
    /// True coefficients, projected onto the estimated modes if needed.
    pub reference: FourierCoefficients,
}

pub fn twin_data(cfg: &ExperimentConfig) -> Result<TwinData> {
    let model = cfg.model_config()?;
    let obs = default_observation_model(cfg.model, &model.grid, cfg.dt, cfg.obs_noise)?;
    let states = simulate(cfg.model, &model, cfg.n_steps, cfg.data_seed)?;
    let key = StreamKey::new(cfg.data_seed, StreamTag::Observation);
    let observations = states[1..]
        .iter()
        .enumerate()
        .map(|(t, s)| observe(&s.to_vector(), &obs, t, &mut key.time(t).rng()))
        .collect::<Result<Vec<_>>>()?;
    let reference = model.velocity.reference_coefficients(cfg.n_modes, &model.grid);
    Ok(TwinData {
        model,
        obs,
        states,
        observations,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub model: ModelKind,
    pub truth: Vec<f64>,
    /// Post-burn-in chain mean, or the final λ̂ of a dual filter.
    pub estimate: Vec<f64>,
    /// Per-coordinate RMSE over the post-burn-in samples.
    pub rmse: Vec<f64>,
    pub n_samples: usize,
    /// Coordinate-averaged error of the starting point and of the estimate.
    pub initial_error: f64,
    pub final_error: f64,
    pub acceptance_rate: Option<f64>,
    pub boxplot: Vec<BoxplotStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub simulate_seconds: f64,
    pub inference_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub chain: Option<ChainHistory>,
    pub lambda_trajectory: Option<Vec<Vec<f64>>>,
    pub data: TwinData,
    pub timing: Timing,
}

fn summarise(
    cfg: &ExperimentConfig,
    samples: &[&[f64]],
    reference: &FourierCoefficients,
    start: &[f64],
    estimate: Vec<f64>,
    acceptance_rate: Option<f64>,
) -> Result<Summary> {
    let truth = reference.as_slice().to_vec();
    let rmse = compute_rmse(samples.iter().copied(), &truth)?;
    let boxplot = if samples.len() >= 5 {
        (0..truth.len())
            .map(|i| boxplot_stats(&samples.iter().map(|s| s[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    Ok(Summary {
        method: cfg.method,
        model: cfg.model,
        initial_error: vector_rmse(start, &truth),
        final_error: vector_rmse(&estimate, &truth),
        truth,
        estimate,
        rmse,
        n_samples: samples.len(),
        acceptance_rate,
        boxplot,
    })
}

fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let t0 = Instant::now();
    let data = twin_data(cfg)?;
    let simulate_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let init = cfg.init_coefficients()?;
    let (summary, chain, lambda_trajectory) = match cfg.method {
        Method::MhKbf | Method::MhEnkbf => {
            let filter = if cfg.method == Method::MhKbf {
                FilterSettings::Kbf(cfg.kbf_settings())
            } else {
                FilterSettings::Enkbf(cfg.enkbf_settings())
            };
            let target = FilterLikelihood {
                kind: cfg.model,
                config: &data.model,
                obs_seq: &data.observations,
                obs: &data.obs,
                filter,
                seed: cfg.seed,
            };
            let proposal = Proposal::for_modes(&cfg.proposal_spec(), cfg.n_modes)?;
            let chain = run_mh(&target, &proposal, cfg.prior_std, cfg.n_cycles, &init, cfg.seed)?;
            let kept: Vec<&[f64]> = chain.history.samples().skip(cfg.burn_in).collect();
            let p = init.len();
            let estimate: Vec<f64> = (0..p)
                .map(|i| kept.iter().map(|s| s[i]).sum::<f64>() / kept.len() as f64)
                .collect();
            let summary = summarise(
                cfg,
                &kept,
                &data.reference,
                init.as_slice(),
                estimate,
                Some(chain.history.acceptance_rate()),
            )?;
            (summary, Some(chain.history), None)
        }
        Method::DualKbfEnkbf | Method::DualEnkbf => {
            let filter = if cfg.method == Method::DualKbfEnkbf {
                DualFilter::KbfEnkbf(cfg.kbf_settings())
            } else {
                DualFilter::Enkbf(cfg.enkbf_settings())
            };
            let x0 = initial_state(cfg.model, &data.model.grid).to_vector();
            let cloud = initial_cloud(&init, cfg.n_particles, cfg.initial_spread, &x0, cfg.seed)?;
            let start: Vec<f64> = cloud.parameter_mean().iter().copied().collect();
            let run = run_dual(
                cfg.model,
                &filter,
                &data.model,
                &data.observations,
                &data.obs,
                cloud,
                cfg.seed,
            )?;
            let traj: Vec<Vec<f64>> = run.lambda_hat.iter().map(|v| v.iter().copied().collect()).collect();
            let kept: Vec<&[f64]> = traj[cfg.burn_in..].iter().map(Vec::as_slice).collect();
            let estimate = traj.last().cloned().unwrap_or_default();
            let summary = summarise(cfg, &kept, &data.reference, &start, estimate, None)?;
            (summary, None, Some(traj))
        }
    };
    let timing = Timing {
        simulate_seconds,
        inference_seconds: t1.elapsed().as_secs_f64(),
        threads: threads(),
    };
    Ok(ResultBundle {
        config: cfg.clone(),
        summary,
        chain,
        lambda_trajectory,
        data,
        timing,
    })
}

/// Runs `n` independent replicates of `cfg`: replicate `r` shifts both the
/// filter seed and the data seed by `r`. Replicates run concurrently.
pub fn run_replicates(cfg: &ExperimentConfig, n: usize) -> Result<Vec<ResultBundle>> {
    exec::map_indexed(n, |r| {
        run_experiment(&ExperimentConfig {
            seed: cfg.seed.wrapping_add(r as u64),
            data_seed: cfg.data_seed.wrapping_add(r as u64),
            ..cfg.clone()
        })
    })
    .into_iter()
    .collect()
}

impl ResultBundle {
    /// Writes the result files into `dir`. Everything except `timing.json`
    /// is a function of the configuration alone.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml_string()?)?;
        write_observations(&dir.join("observations.csv"), &self.data.observations)?;
        let u: Vec<Vec<f64>> = self.data.states.iter().map(|s| s.u().to_vec()).collect();
        write_trajectory(&dir.join("truth_trajectory.csv"), &u)?;
        write_coefficients(&dir.join("truth.json"), &self.data.reference)?;
        if let Some(chain) = &self.chain {
            write_chain(&dir.join("chain.csv"), chain)?;
        }
        if let Some(traj) = &self.lambda_trajectory {
            write_lambda_trajectory(&dir.join("lambda_trajectory.csv"), traj)?;
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&self.timing)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke() -> ExperimentConfig {
        ExperimentConfig {
            n_points: 16,
            n_steps: 100,
            n_cycles: 50,
            burn_in: 10,
            phi: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn filter_seed_does_not_touch_data() {
        let a = twin_data(&smoke()).unwrap();
        let b = twin_data(&ExperimentConfig { seed: 99, ..smoke() }).unwrap();
        assert_eq!(a.observations, b.observations);
        let c = twin_data(&ExperimentConfig { data_seed: 1, ..smoke() }).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn smoke_run_reports_every_coordinate() {
        let r = run_experiment(&smoke()).unwrap();
        assert_eq!(r.summary.rmse.len(), 5);
        assert_eq!(r.summary.boxplot.len(), 5);
        assert_eq!(r.summary.n_samples, 40);
        assert_eq!(r.chain.as_ref().unwrap().len(), 50);
    }

    #[test]
    fn replicates_shift_both_seeds() {
        let rs = run_replicates(&smoke(), 2).unwrap();
        assert_eq!(rs[0].summary, run_experiment(&smoke()).unwrap().summary);
        assert_eq!(rs[1].config.seed, 1);
        assert_eq!(rs[1].config.data_seed, 1);
        assert_ne!(rs[0].data.observations, rs[1].data.observations);
    }

    #[test]
    fn burn_in_discipline() {
        let r = run_experiment(&smoke()).unwrap();
        let chain = r.chain.unwrap();
        let kept: Vec<&[f64]> = chain.samples().skip(10).collect();
        let want = compute_rmse(kept, &r.summary.truth).unwrap();
        assert_eq!(r.summary.rmse, want);
    }
}
