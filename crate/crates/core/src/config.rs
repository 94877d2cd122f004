//! Model and training hyperparameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architectural variants used for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// Hypergraph propagation replaced by the identity.
    #[serde(rename = "w/o-hyper")]
    NoHyper,
    /// Global temporal convolution stack skipped.
    #[serde(rename = "w/o-globaltem")]
    NoGlobalTemporal,
    #[serde(rename = "w/o-infomax")]
    NoInfomax,
    #[serde(rename = "w/o-conl")]
    NoContrastive,
    /// Local convolutional encoders skipped; the global branch reads the embeddings.
    #[serde(rename = "w/o-local")]
    NoLocal,
    /// No contrastive loss; prediction reads the mean of both views.
    #[serde(rename = "fusion-w/o-conl")]
    FusionNoContrastive,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Full,
        Ablation::NoHyper,
        Ablation::NoGlobalTemporal,
        Ablation::NoInfomax,
        Ablation::NoContrastive,
        Ablation::NoLocal,
        Ablation::FusionNoContrastive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoHyper => "w/o-hyper",
            Ablation::NoGlobalTemporal => "w/o-globaltem",
            Ablation::NoInfomax => "w/o-infomax",
            Ablation::NoContrastive => "w/o-conl",
            Ablation::NoLocal => "w/o-local",
            Ablation::FusionNoContrastive => "fusion-w/o-conl",
        }
    }

    pub fn uses_hypergraph(self) -> bool {
        self != Ablation::NoHyper
    }

    pub fn uses_global_temporal(self) -> bool {
        self != Ablation::NoGlobalTemporal
    }

    pub fn uses_local(self) -> bool {
        self != Ablation::NoLocal
    }

    pub fn uses_infomax(self) -> bool {
        self != Ablation::NoInfomax
    }

    pub fn uses_contrastive(self) -> bool {
        !matches!(
            self,
            Ablation::NoContrastive | Ablation::FusionNoContrastive
        )
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!(
                    "unknown ablation '{s}', expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent dimensionality `d`.
    pub hidden_dim: usize,
    /// Number of hyperedges `H`.
    pub hyperedges: usize,
    pub spatial_kernel_rows: usize,
    pub spatial_kernel_cols: usize,
    pub temporal_kernel: usize,
    pub global_kernel: usize,
    pub local_layers: usize,
    pub global_layers: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    /// Contrastive temperature.
    pub tau: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            hyperedges: 128,
            spatial_kernel_rows: 3,
            spatial_kernel_cols: 3,
            temporal_kernel: 3,
            global_kernel: 3,
            local_layers: 2,
            global_layers: 4,
            dropout: 0.2,
            leaky_slope: 0.01,
            tau: 0.5,
            ablation: Ablation::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Infomax weight.
    pub lambda1: f64,
    /// Contrastive weight.
    pub lambda2: f64,
    /// Squared-norm weight decay.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 1e-4,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossWeights,
    /// Input window length in days.
    pub window: usize,
    pub valid_days: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            window: 30,
            valid_days: 30,
            epochs: 100,
            patience: 20,
            learning_rate: 0.001,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Hard constraints; a violating configuration cannot run.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let mut problems: Vec<String> = Vec::new();
        for (name, v) in [
            ("hidden_dim", m.hidden_dim),
            ("hyperedges", m.hyperedges),
            ("window", self.window),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("local_layers", m.local_layers),
            ("global_layers", m.global_layers),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        for (name, k) in [
            ("spatial_kernel_rows", m.spatial_kernel_rows),
            ("spatial_kernel_cols", m.spatial_kernel_cols),
            ("temporal_kernel", m.temporal_kernel),
            ("global_kernel", m.global_kernel),
        ] {
            if k % 2 == 0 {
                problems.push(format!("{name} must be odd, got {k}"));
            }
        }
        if !(0.0..1.0).contains(&m.dropout) {
            problems.push(format!("dropout {} outside [0, 1)", m.dropout));
        }
        if !(m.leaky_slope >= 0.0 && m.leaky_slope.is_finite()) {
            problems.push(format!(
                "leaky_slope {} must be non-negative",
                m.leaky_slope
            ));
        }
        if !(m.tau > 0.0 && m.tau.is_finite()) {
            problems.push(format!("tau {} must be positive", m.tau));
        }
        for (name, l) in [
            ("lambda1", self.loss.lambda1),
            ("lambda2", self.loss.lambda2),
            ("lambda3", self.loss.lambda3),
        ] {
            if !(0.0..1.0).contains(&l) {
                problems.push(format!("{name} {l} outside [0, 1)"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Values outside the published search grids. Not fatal by themselves.
    pub fn search_range_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = &self.model;
        if ![4, 8, 16, 32].contains(&m.hidden_dim) {
            out.push(format!(
                "hidden_dim {} not in {{4, 8, 16, 32}}",
                m.hidden_dim
            ));
        }
        if ![32, 64, 128, 256].contains(&m.hyperedges) {
            out.push(format!(
                "hyperedges {} not in {{32, 64, 128, 256}}",
                m.hyperedges
            ));
        }
        if ![4, 8, 16, 32].contains(&self.batch_size) {
            out.push(format!(
                "batch_size {} not in {{4, 8, 16, 32}}",
                self.batch_size
            ));
        }
        out
    }
}
