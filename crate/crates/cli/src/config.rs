//! Config file loading for `simulate` and `compare`.
//!
//! A compare config is a simulate config plus `seeds`, `comparisons`,
//! `output_dir`, and optional `step_size_overrides`, all at the top level.
//! The extras are split off by hand so the remaining keys can still be
//! checked strictly against the simulation schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ofl_core::SimConfig;

/// Configuration problems exit with code 2 and list every offending field.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "configuration error:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(vec![format!("cannot read {}: {e}", path.display())]))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError(vec![format!("{} is not valid JSON: {e}", path.display())]))
}

fn sim_config_from_value(value: serde_json::Value) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig = serde_json::from_value(value)
        .map_err(|e| ConfigError(vec![format!("schema violation: {e}")]))?;
    let errs = cfg.validation_errors();
    if !errs.is_empty() {
        return Err(ConfigError(errs));
    }
    Ok(cfg)
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig, ConfigError> {
    sim_config_from_value(read_json(path)?)
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub base: SimConfig,
    pub seeds: Vec<u64>,
    pub comparisons: Vec<String>,
    pub output_dir: PathBuf,
    /// Per-mechanism eta overrides (the independent-noise runs may need a
    /// smaller step size); mechanisms not listed use the shared eta.
    pub step_size_overrides: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    /// The simulate-shaped config for one (seed, mechanism) cell.
    pub fn cell_config(&self, seed: u64, mechanism: &str) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.master_seed = seed;
        cfg.mechanism = mechanism.to_string();
        if let Some(eta) = self.step_size_overrides.get(mechanism) {
            cfg.eta = *eta;
        }
        cfg
    }
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut value = read_json(path)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ConfigError(vec!["top level must be a JSON object".into()]))?;

    let mut errs = Vec::new();

    let seeds: Vec<u64> = match obj.remove("seeds") {
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errs.push(format!("seeds: {e}"));
            Vec::new()
        }),
        None => {
            errs.push("seeds: missing (nonempty list of integers required)".into());
            Vec::new()
        }
    };
    if seeds.is_empty() && errs.is_empty() {
        errs.push("seeds: must be nonempty".into());
    }

    let comparisons: Vec<String> = match obj.remove("comparisons") {
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errs.push(format!("comparisons: {e}"));
            Vec::new()
        }),
        None => {
            errs.push("comparisons: missing (nonempty list of mechanisms required)".into());
            Vec::new()
        }
    };
    if comparisons.is_empty() && errs.is_empty() {
        errs.push("comparisons: must be nonempty".into());
    }

    let output_dir: PathBuf = match obj.remove("output_dir") {
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errs.push(format!("output_dir: {e}"));
            PathBuf::from(".")
        }),
        None => PathBuf::from("."),
    };

    let step_size_overrides: BTreeMap<String, f64> = match obj.remove("step_size_overrides") {
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errs.push(format!("step_size_overrides: {e}"));
            BTreeMap::new()
        }),
        None => BTreeMap::new(),
    };

    if !errs.is_empty() {
        return Err(ConfigError(errs));
    }

    // `mechanism` is overridden per comparison cell; allow configs that omit
    // it by defaulting to the first comparison entry.
    if !obj.contains_key("mechanism") {
        obj.insert(
            "mechanism".into(),
            serde_json::Value::String(comparisons[0].clone()),
        );
    }
    if !obj.contains_key("master_seed") {
        obj.insert("master_seed".into(), serde_json::Value::from(seeds[0]));
    }

    let base = sim_config_from_value(value)?;
    Ok(ExperimentConfig {
        base,
        seeds,
        comparisons,
        output_dir,
        step_size_overrides,
    })
}
