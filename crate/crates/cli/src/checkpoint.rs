//! Checkpoint directories: `meta.json` with everything but the tensors,
//! then one little-endian blob per parameter and per Adam moment.
//!
//! ```text
//! ckpt/meta.json
//! ckpt/params/<name>.f64
//! ckpt/adam/first/<name>.f64
//! ckpt/adam/second/<name>.f64
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sthsl_core::head::Model;
use sthsl_core::trainer::{AdamState, Checkpoint};
use sthsl_core::{DenseArray, GridSpec, ModelParams, SplitPlan, TrainConfig};

use crate::blob::{read_f64, read_json, write_f64, write_json};
use crate::error::{CliError, Result};

const FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamMeta {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format: u32,
    epoch: usize,
    valid_mae: f64,
    valid_mape: Option<f64>,
    config: TrainConfig,
    model: Model,
    grid: GridSpec,
    categories: Vec<String>,
    plan: SplitPlan,
    adam: AdamMeta,
    /// Shape of every parameter, which is also the list of blobs.
    params: BTreeMap<String, Vec<usize>>,
}

fn write_group(dir: &Path, arrays: &BTreeMap<String, DenseArray>) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for (name, a) in arrays {
        write_f64(&dir.join(format!("{name}.f64")), a.data())?;
    }
    Ok(())
}

fn read_group(
    dir: &Path,
    shapes: &BTreeMap<String, Vec<usize>>,
) -> Result<BTreeMap<String, DenseArray>> {
    shapes
        .iter()
        .map(|(name, shape)| {
            let n = shape.iter().product();
            let data = read_f64(&dir.join(format!("{name}.f64")), n)?;
            Ok((name.clone(), DenseArray::new(shape, data)?))
        })
        .collect()
}

pub fn save(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let params: BTreeMap<String, DenseArray> = ckpt
        .params
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let meta = Meta {
        format: FORMAT,
        epoch: ckpt.epoch,
        valid_mae: ckpt.valid_mae,
        valid_mape: ckpt.valid_mape,
        config: ckpt.config.clone(),
        model: ckpt.model.clone(),
        grid: ckpt.grid.clone(),
        categories: ckpt.categories.clone(),
        plan: ckpt.plan,
        adam: AdamMeta {
            step: ckpt.adam.step,
            beta1: ckpt.adam.beta1,
            beta2: ckpt.adam.beta2,
            eps: ckpt.adam.eps,
        },
        params: params
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    write_group(&dir.join("params"), &params)?;
    write_group(&dir.join("adam").join("first"), &ckpt.adam.first)?;
    write_group(&dir.join("adam").join("second"), &ckpt.adam.second)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = read_json(&meta_path)?;
    if meta.format != FORMAT {
        return Err(CliError::format(
            &meta_path,
            format!("unsupported checkpoint format {}", meta.format),
        ));
    }
    let mut params = ModelParams::default();
    for (name, value) in read_group(&dir.join("params"), &meta.params)? {
        params.insert(&name, value);
    }
    // Moments exist only once a step has been taken.
    let moments = |which: &str| -> Result<BTreeMap<String, DenseArray>> {
        if meta.adam.step == 0 {
            Ok(BTreeMap::new())
        } else {
            read_group(&dir.join("adam").join(which), &meta.params)
        }
    };
    let adam = AdamState {
        step: meta.adam.step,
        beta1: meta.adam.beta1,
        beta2: meta.adam.beta2,
        eps: meta.adam.eps,
        first: moments("first")?,
        second: moments("second")?,
    };
    Ok(Checkpoint {
        params,
        adam,
        config: meta.config,
        model: meta.model,
        grid: meta.grid,
        categories: meta.categories,
        plan: meta.plan,
        epoch: meta.epoch,
        valid_mae: meta.valid_mae,
        valid_mape: meta.valid_mape,
    })
}
