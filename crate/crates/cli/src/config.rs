//! Pipeline configuration: one TOML file with a section per stage.
//! Every key has a default, so a minimal config only names the input paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use seaplume::emissions::{AuxEntry, AuxPowerTable, EmissionFactors, PowerParams};
use seaplume::error::{Error, Result};
use seaplume::ingest::AisSchema;
use seaplume::synth::SynthFleetSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub ais: PathBuf,
    pub meta: PathBuf,
    pub bathy: PathBuf,
    pub truth: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            ais: "ais.csv".into(),
            meta: "meta.csv".into(),
            bathy: "bathy.asc".into(),
            truth: "truth.csv".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizeConfig {
    pub step_seconds: u32,
    pub max_gap_hours: f64,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        RegularizeConfig { step_seconds: 60, max_gap_hours: 72.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub n: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { n: 20 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CrbmConfig {
    pub n_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub cd_k: usize,
    pub seed: u64,
}

impl Default for CrbmConfig {
    fn default() -> Self {
        CrbmConfig {
            n_hidden: 10,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 2e-4,
            cd_k: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.34, seed: 42 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub task: String,
    pub model: String,
    pub features: String,
    pub vote: String,
    pub seed: u64,
    pub n_trees: usize,
    pub gb_stages: usize,
    pub gb_learning_rate: f64,
    pub gb_max_depth: usize,
    pub lasso_lambda: f64,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,
    pub logistic_epochs: usize,
    pub logistic_lr: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            task: "power".into(),
            model: "forest".into(),
            features: "act".into(),
            vote: "median".into(),
            seed: 42,
            n_trees: 200,
            gb_stages: 100,
            gb_learning_rate: 0.1,
            gb_max_depth: 3,
            lasso_lambda: 0.01,
            lasso_max_iter: 10_000,
            lasso_tol: 1e-7,
            logistic_epochs: 300,
            logistic_lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 4, seed: 42, max_iter: 300, tol: 1e-6 }
    }
}

/// TOML keys are strings, so per-type aux overrides arrive keyed by the
/// digit's string form and are converted on access.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AuxPowerConfig {
    pub default: Option<AuxEntry>,
    pub types: BTreeMap<String, AuxEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmissionsConfig {
    pub v_safety: f64,
    pub epsilon_p: f64,
    pub hotel_threshold: f64,
    pub cruise_threshold: f64,
    pub grid_cell_deg: f64,
    pub factors: EmissionFactors,
    pub aux_power: Option<AuxPowerConfig>,
}

impl Default for EmissionsConfig {
    fn default() -> Self {
        let p = PowerParams::default();
        EmissionsConfig {
            v_safety: p.v_safety,
            epsilon_p: p.epsilon_p,
            hotel_threshold: p.hotel_threshold,
            cruise_threshold: p.cruise_threshold,
            grid_cell_deg: 0.05,
            factors: EmissionFactors::default(),
            aux_power: None,
        }
    }
}

impl EmissionsConfig {
    pub fn power_params(&self) -> PowerParams {
        PowerParams {
            v_safety: self.v_safety,
            epsilon_p: self.epsilon_p,
            hotel_threshold: self.hotel_threshold,
            cruise_threshold: self.cruise_threshold,
        }
    }

    pub fn aux_table(&self) -> Result<AuxPowerTable> {
        let Some(cfg) = &self.aux_power else {
            return Ok(AuxPowerTable::default());
        };
        let mut types = BTreeMap::new();
        for (key, entry) in &cfg.types {
            let digit: u8 = key.parse().map_err(|_| {
                Error::validation(format!("aux power type key '{key}' is not a digit"))
            })?;
            if digit > 9 {
                return Err(Error::validation(format!(
                    "aux power type key '{key}' outside 0..=9"
                )));
            }
            types.insert(digit, *entry);
        }
        Ok(AuxPowerTable { default: cfg.default, types })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub schema: AisSchema,
    pub regularize: RegularizeConfig,
    pub window: WindowConfig,
    pub crbm: CrbmConfig,
    pub split: SplitConfig,
    pub learner: LearnerConfig,
    pub cluster: ClusterConfig,
    pub emissions: EmissionsConfig,
    pub synth: SynthFleetSpec,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::validation(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::validation(format!("bad config '{}': {e}", path.display())))?;
        cfg.validate()?;
        // input paths are resolved relative to the config file location
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        for p in [
            &mut self.paths.ais,
            &mut self.paths.meta,
            &mut self.paths.bathy,
            &mut self.paths.truth,
            &mut self.paths.output,
        ] {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regularize.step_seconds == 0 {
            return Err(Error::validation("regularize.step_seconds must be positive"));
        }
        if self.regularize.max_gap_hours <= 0.0 {
            return Err(Error::validation("regularize.max_gap_hours must be positive"));
        }
        if self.window.n == 0 {
            return Err(Error::validation("window.n must be at least 1"));
        }
        if !(0.0 < self.split.test_fraction && self.split.test_fraction < 1.0) {
            return Err(Error::validation("split.test_fraction must be in (0, 1)"));
        }
        if self.cluster.k == 0 {
            return Err(Error::validation("cluster.k must be at least 1"));
        }
        Ok(())
    }

    /// The global `--seed` flag replaces every per-stage seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.crbm.seed = seed;
        self.split.seed = seed;
        self.learner.seed = seed;
        self.cluster.seed = seed;
        self.synth.seed = seed;
    }
}
