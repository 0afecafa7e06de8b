//! Experiment configuration files.

use std::fmt;
use std::path::Path;

use gbs_core::gaussian::SqueezingSpec;
use gbs_core::samplers::{LossMethod, VirtualMethod};
use gbs_core::validation::{BinningPartition, Expectation, DEFAULT_BINS};
use gbs_core::{GbsError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    Ideal,
    Loss,
    Distinguishable,
    Thermal,
    Coherent,
    Squashed,
}

impl ModelKind {
    pub fn is_noisy(self) -> bool {
        matches!(self, ModelKind::Loss | ModelKind::Distinguishable)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Ideal => "ideal",
            ModelKind::Loss => "loss",
            ModelKind::Distinguishable => "distinguishable",
            ModelKind::Thermal => "thermal",
            ModelKind::Coherent => "coherent",
            ModelKind::Squashed => "squashed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub n_samples: usize,
    pub n_cutoff: u16,
    pub seed: u64,
    #[serde(default)]
    pub loss_method: LossMethod,
    #[serde(default)]
    pub virtual_method: VirtualMethod,
    /// Phase of the coherent mockup amplitudes.
    #[serde(default)]
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Pipeline {
    #[default]
    PatternRecognition,
    Correlation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validation {
    #[serde(default)]
    pub pipeline: Pipeline,
    pub k: usize,
    pub training_size: usize,
    pub repetitions: usize,
    pub draw_size: usize,
    #[serde(default)]
    pub expectation: Expectation,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Binning partition such as `"1,2|3,4|5"`.
    #[serde(default)]
    pub partition: Option<String>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_orders() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Enumeration {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub short_thresh: f64,
    pub long_thresh: f64,
    /// Extra partitions whose binned tables also get statistics.
    #[serde(default)]
    pub partitions: Vec<String>,
}

fn default_top_k() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub spec: SqueezingSpec,
    /// Seed used by `generate-unitary` for this experiment.
    #[serde(default)]
    pub unitary_seed: u64,
    pub models: Vec<ModelKind>,
    /// Noise levels applied to the noisy models; ignored by the others.
    #[serde(default)]
    pub noise_grid: Vec<f64>,
    pub sampling: Sampling,
    #[serde(default)]
    pub validation: Option<Validation>,
    #[serde(default)]
    pub enumeration: Option<Enumeration>,
}

/// One model at one noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Run {
    pub model: ModelKind,
    pub eta: Option<f64>,
}

impl Run {
    /// File stem, e.g. `loss_eta0.95` or `thermal`.
    pub fn stem(&self) -> String {
        match self.eta {
            Some(eta) => format!("{}_eta{eta}", self.model),
            None => self.model.to_string(),
        }
    }
}

fn bad(msg: String) -> GbsError {
    GbsError::InvalidParameter(msg)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| GbsError::InvalidInput(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.models.is_empty() {
            return Err(bad("config lists no models".into()));
        }
        for &eta in &self.noise_grid {
            if !(0.0..=1.0).contains(&eta) {
                return Err(bad(format!("noise level {eta} outside [0, 1]")));
            }
        }
        if self.models.iter().any(|m| m.is_noisy()) && self.noise_grid.is_empty() {
            return Err(bad("noisy model without a noise grid".into()));
        }
        if self.sampling.n_samples == 0 || self.sampling.n_cutoff == 0 {
            return Err(bad("n_samples and n_cutoff must be positive".into()));
        }
        if let Some(v) = &self.validation {
            if v.k < 2 || v.training_size < v.k || v.repetitions == 0 || v.draw_size == 0 || v.bins < 4 {
                return Err(bad("validation needs k ≥ 2, training_size ≥ k, positive repetitions and draw size, bins ≥ 4".into()));
            }
            if v.orders.iter().any(|&t| !(1..=8).contains(&t)) {
                return Err(bad("correlator orders must lie in 1..=8".into()));
            }
            if let Some(p) = &v.partition {
                BinningPartition::parse(p, self.spec.m)?;
            }
        }
        if let Some(e) = &self.enumeration {
            if e.top_k == 0 {
                return Err(bad("top_k must be positive".into()));
            }
            for p in &e.partitions {
                BinningPartition::parse(p, self.spec.m)?;
            }
        }
        Ok(())
    }

    pub fn runs(&self) -> Vec<Run> {
        let mut out = Vec::new();
        for &model in &self.models {
            if model.is_noisy() {
                out.extend(self.noise_grid.iter().map(|&eta| Run { model, eta: Some(eta) }));
            } else {
                out.push(Run { model, eta: None });
            }
        }
        out
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validation(&self) -> Result<&Validation> {
        self.validation.as_ref().ok_or_else(|| bad(format!("config {} has no validation section", self.name)))
    }

    pub fn partition(&self, bins: Option<&str>) -> Result<Option<BinningPartition>> {
        let text = bins.or(self.validation.as_ref().and_then(|v| v.partition.as_deref()));
        text.map(|p| BinningPartition::parse(p, self.spec.m)).transpose()
    }
}
