use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{BinarizationRule, DEFAULT_EPS_OMEGA, DEFAULT_L2, DEFAULT_TAU_Y};
use crate::baselines::{DEFAULT_K_LEVERS, DEFAULT_STEP_MAGNITUDE};
use crate::grouping::DEFAULT_RESTARTS;
use crate::intervention::OptimizerSettings;
use crate::latent::NmfSettings;
use crate::{Error, Result};

/// Where the survey comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { n: usize, k_true: usize, seed: u64 },
    Files { dataset: PathBuf, schema: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            n: 500,
            k_true: 6,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub k_levers: usize,
    pub step_magnitude: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            k_levers: DEFAULT_K_LEVERS,
            step_magnitude: DEFAULT_STEP_MAGNITUDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub k: usize,
    #[serde(rename = "G")]
    pub groups: usize,
    /// Number of top latent factors; `ceil(k / 2)` when absent.
    pub q: Option<usize>,
    pub seeds: Vec<u64>,
    pub tau_y: f64,
    pub eps_omega: f64,
    pub l2: f64,
    pub binarization: BinarizationRule,
    pub kmeans_restarts: usize,
    pub nmf: NmfSettings,
    pub optimizer: OptimizerSettings,
    pub baselines: BaselineSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            k: 10,
            groups: 3,
            q: None,
            seeds: vec![42],
            tau_y: DEFAULT_TAU_Y,
            eps_omega: DEFAULT_EPS_OMEGA,
            l2: DEFAULT_L2,
            binarization: BinarizationRule::Median,
            kmeans_restarts: DEFAULT_RESTARTS,
            nmf: NmfSettings::default(),
            optimizer: OptimizerSettings::default(),
            baselines: BaselineSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Hyperparameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    K,
    #[serde(rename = "G")]
    G,
    Lambda,
    Eta,
    Q,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::G => "G",
            SweepParam::Lambda => "lambda",
            SweepParam::Eta => "eta",
            SweepParam::Q => "q",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParam::K),
            "G" | "g" => Ok(SweepParam::G),
            "lambda" => Ok(SweepParam::Lambda),
            "eta" => Ok(SweepParam::Eta),
            "q" => Ok(SweepParam::Q),
            other => Err(Error::invalid(format!("unknown sweep parameter `{other}` (k, G, lambda, eta, q)"))),
        }
    }
}

fn as_count(param: SweepParam, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 {
        return Err(Error::invalid(format!("{} needs a whole number, got {value}", param.name())));
    }
    Ok(value as usize)
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn q(&self) -> usize {
        self.q.unwrap_or(self.k.div_ceil(2))
    }

    /// Checks every field before any computation runs.
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.groups < 2 {
            return Err(Error::invalid(format!("G = {}: need at least two groups", self.groups)));
        }
        let q = self.q();
        if q < 1 || q > self.k {
            return Err(Error::invalid(format!("q = {q} must lie in 1..={}", self.k)));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if !(self.tau_y > 0.0 && self.tau_y < 1.0) {
            return Err(Error::invalid("tau_y must lie in (0, 1)"));
        }
        if !(self.eps_omega > 0.0) {
            return Err(Error::invalid("eps_omega must be positive"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::invalid("l2 must be nonnegative"));
        }
        if self.kmeans_restarts < 1 {
            return Err(Error::invalid("kmeans_restarts must be at least 1"));
        }
        if self.baselines.k_levers < 1 || !(self.baselines.step_magnitude > 0.0) {
            return Err(Error::invalid("baseline k_levers must be >= 1 and step_magnitude > 0"));
        }
        self.optimizer.validate()
    }

    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match param {
            SweepParam::K => c.k = as_count(param, value)?,
            SweepParam::G => c.groups = as_count(param, value)?,
            SweepParam::Q => c.q = Some(as_count(param, value)?),
            SweepParam::Lambda => c.optimizer.lambda = value,
            SweepParam::Eta => c.optimizer.eta = value,
        }
        Ok(c)
    }
}
