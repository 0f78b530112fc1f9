use spde_infer::harness::io::{read_coefficients, read_samples};
use spde_infer::harness::{load_config, run_experiment, ExperimentConfig, Method};
use spde_infer::models::ModelKind;
use spde_infer::observation::read_observations;

fn small(method: Method, model: ModelKind) -> ExperimentConfig {
    ExperimentConfig {
        method,
        model,
        dt: if model == ModelKind::Wave { 0.005 } else { 0.01 },
        ensemble_size: 16,
        n_particles: 8,
        n_cycles: 15,
        burn_in: 5,
        ..load_config(Some("smoke"), None).unwrap()
    }
}

#[test]
fn every_method_and_model_runs_end_to_end() {
    for model in [ModelKind::Advection, ModelKind::Wave] {
        for method in [Method::MhKbf, Method::MhEnkbf, Method::DualKbfEnkbf, Method::DualEnkbf] {
            let cfg = small(method, model);
            let r = run_experiment(&cfg).unwrap_or_else(|e| panic!("{method:?}/{model:?}: {e}"));
            assert!(r.summary.final_error.is_finite());
            assert_eq!(r.summary.estimate.len(), 5);
            if method.is_mh() {
                let acc = r.summary.acceptance_rate.unwrap();
                assert!((0.0..=1.0).contains(&acc));
                assert_eq!(r.summary.n_samples, 10);
            } else {
                assert_eq!(r.summary.n_samples, cfg.n_steps - cfg.burn_in);
            }
        }
    }
}

#[test]
fn written_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    for method in [Method::MhKbf, Method::DualKbfEnkbf] {
        let cfg = small(method, ModelKind::Advection);
        let r = run_experiment(&cfg).unwrap();
        let out = dir.path().join(format!("{method:?}"));
        r.write(&out).unwrap();

        assert_eq!(read_observations(&out.join("observations.csv")).unwrap(), r.data.observations);
        assert_eq!(read_coefficients(&out.join("truth.json")).unwrap(), r.data.reference);
        let back = ExperimentConfig::from_path(&out.join("config.toml")).unwrap();
        assert_eq!(back, cfg);

        let samples = if method.is_mh() {
            read_samples(&out.join("chain.csv")).unwrap()
        } else {
            read_samples(&out.join("lambda_trajectory.csv")).unwrap()
        };
        match &r.chain {
            Some(c) => {
                assert_eq!(samples.samples, c.samples().map(<[f64]>::to_vec).collect::<Vec<_>>());
                assert_eq!(samples.accepted.as_deref(), Some(c.accepted.as_slice()));
            }
            None => assert_eq!(&samples.samples, r.lambda_trajectory.as_ref().unwrap()),
        }
    }
}

#[test]
fn rerun_reproduces_summary() {
    let cfg = small(Method::MhEnkbf, ModelKind::Advection);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.summary, b.summary);
    let c = run_experiment(&ExperimentConfig { seed: 3, ..cfg }).unwrap();
    assert_ne!(a.summary.estimate, c.summary.estimate);
    assert_eq!(a.data.observations, c.data.observations);
}
