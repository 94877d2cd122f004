//! Named trainable parameters.
//!
//! Every tensor is addressed by a dotted name; iteration is in
//! lexicographic name order, which is also the optimizer's update order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Rng};
use crate::tape::{Tape, Var};

pub const EMBEDDING: &str = "embed.category";
pub const INCIDENCE: &str = "hyper.incidence";
pub const BILINEAR: &str = "infomax.bilinear";
pub const READOUT: &str = "readout.weight";

pub fn spatial_kernel(layer: usize, category: usize) -> String {
    format!("local.spatial.{layer}.{category:03}.kernel")
}

pub fn spatial_bias(layer: usize, category: usize) -> String {
    format!("local.spatial.{layer}.{category:03}.bias")
}

pub fn temporal_kernel(layer: usize, category: usize) -> String {
    format!("local.temporal.{layer}.{category:03}.kernel")
}

pub fn temporal_bias(layer: usize, category: usize) -> String {
    format!("local.temporal.{layer}.{category:03}.bias")
}

pub fn global_kernel(layer: usize) -> String {
    format!("global.temporal.{layer}.kernel")
}

pub fn global_bias(layer: usize) -> String {
    format!("global.temporal.{layer}.bias")
}

/// Data-dependent sizes the parameters are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
    pub window: usize,
}

impl ModelShape {
    pub fn regions(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelParams {
    tensors: BTreeMap<String, DenseArray>,
}

fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> DenseArray {
    let mut a = DenseArray::zeros(shape);
    for v in a.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    a
}

fn fan_in(n: usize) -> f64 {
    1.0 / libm::sqrt(n as f64)
}

impl ModelParams {
    /// Seeded initialization: fan-in uniform kernels, zero biases.
    pub fn init(cfg: &ModelConfig, shape: ModelShape, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, Purpose::Init, 0, 0);
        let (c, d) = (shape.categories, cfg.hidden_dim);
        let rc = shape.regions() * c;
        let mut p = Self::default();
        p.insert(EMBEDDING, uniform(&mut rng, &[c, d], 0.1));
        let spatial_fan = cfg.spatial_kernel_rows * cfg.spatial_kernel_cols * c;
        let temporal_fan = cfg.temporal_kernel * c;
        for layer in 0..cfg.local_layers {
            for cat in 0..c {
                p.insert(
                    &spatial_kernel(layer, cat),
                    uniform(
                        &mut rng,
                        &[cfg.spatial_kernel_rows, cfg.spatial_kernel_cols, c],
                        fan_in(spatial_fan),
                    ),
                );
                p.insert(&spatial_bias(layer, cat), DenseArray::zeros(&[d]));
            }
        }
        for layer in 0..cfg.local_layers {
            for cat in 0..c {
                p.insert(
                    &temporal_kernel(layer, cat),
                    uniform(&mut rng, &[cfg.temporal_kernel, c], fan_in(temporal_fan)),
                );
                p.insert(&temporal_bias(layer, cat), DenseArray::zeros(&[d]));
            }
        }
        p.insert(
            INCIDENCE,
            uniform(&mut rng, &[shape.window, cfg.hyperedges, rc], fan_in(rc)),
        );
        for layer in 0..cfg.global_layers {
            p.insert(
                &global_kernel(layer),
                uniform(&mut rng, &[cfg.global_kernel, 1], fan_in(cfg.global_kernel)),
            );
            p.insert(&global_bias(layer), DenseArray::zeros(&[d]));
        }
        p.insert(BILINEAR, uniform(&mut rng, &[d, d], fan_in(d)));
        p.insert(READOUT, uniform(&mut rng, &[d], fan_in(d)));
        p
    }

    pub fn insert(&mut self, name: &str, value: DenseArray) {
        self.tensors.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<&DenseArray> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Index(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseArray> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Index(format!("no parameter named {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DenseArray)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut DenseArray)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(DenseArray::len).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors.values().map(DenseArray::sum_squares).sum()
    }
}

/// Parameters attached to a tape as differentiable leaves.
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn attach(tape: &mut Tape, params: &ModelParams) -> Self {
        let vars = params
            .iter()
            .map(|(name, value)| (name.clone(), tape.leaf(value.clone())))
            .collect();
        Self { vars }
    }

    /// Attaches the parameters as constants, for inference without gradients.
    pub fn attach_frozen(tape: &mut Tape, params: &ModelParams) -> Self {
        let vars = params
            .iter()
            .map(|(name, value)| (name.clone(), tape.constant(value.clone())))
            .collect();
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Index(format!("no parameter named {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Gradients currently accumulated on the tape, by parameter name.
    pub fn gradients(&self, tape: &Tape) -> BTreeMap<String, DenseArray> {
        self.vars
            .iter()
            .map(|(name, &v)| (name.clone(), tape.grad(v)))
            .collect()
    }
}
