//! Configuration, twin-experiment runner, metrics and result files.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;

use std::path::Path;

pub use config::{ExperimentConfig, Method, TruthKind};
pub use experiment::{run_experiment, run_replicates, simulate, twin_data, ResultBundle, Summary, Timing, TwinData};
pub use metrics::{boxplot_stats, compute_rmse, BoxplotStats};

use crate::{Error, Result};

/// Shipped presets as `(name, toml)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("smoke", include_str!("../../presets/smoke.toml")),
    ("advection-desk", include_str!("../../presets/advection-desk.toml")),
    ("advection-dual-desk", include_str!("../../presets/advection-dual-desk.toml")),
    ("wave-desk", include_str!("../../presets/wave-desk.toml")),
    ("wave-dual-desk", include_str!("../../presets/wave-dual-desk.toml")),
    ("advection-full", include_str!("../../presets/advection-full.toml")),
    ("advection-dual-full", include_str!("../../presets/advection-dual-full.toml")),
    ("wave-full", include_str!("../../presets/wave-full.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Builds a configuration from an optional preset overlaid with an optional
/// file; keys in the file win.
pub fn load_config(preset_name: Option<&str>, path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut table = toml::Table::new();
    if let Some(name) = preset_name {
        let text = preset(name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(vec![format!("unknown preset '{name}', expected one of {}", names.join(", "))])
        })?;
        table = text.parse::<toml::Table>()?;
    }
    if let Some(p) = path {
        let overlay = std::fs::read_to_string(p)?.parse::<toml::Table>()?;
        config::merge_toml(&mut table, overlay);
    }
    Ok(toml::Value::Table(table).try_into()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for (name, _) in PRESETS {
            let cfg = load_config(Some(name), None).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(load_config(Some("nope"), None).is_err());
    }

    #[test]
    fn file_overrides_preset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.toml");
        std::fs::write(&p, "n_cycles = 7\nburn_in = 2\n").unwrap();
        let cfg = load_config(Some("advection-desk"), Some(&p)).unwrap();
        assert_eq!(cfg.n_cycles, 7);
        assert_eq!(cfg.n_points, load_config(Some("advection-desk"), None).unwrap().n_points);
    }
}
