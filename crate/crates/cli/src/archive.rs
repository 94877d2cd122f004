//! Tensor archives: a directory holding `meta.json` and `counts.f64`, plus
//! `patterns.json` for synthetic data.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sthsl_core::{CrimeTensor, DenseArray, GridSpec};

use crate::blob::{read_f64, read_json, write_f64, write_json};
use crate::error::{CliError, Result};

pub const META: &str = "meta.json";
pub const COUNTS: &str = "counts.f64";
pub const PATTERNS: &str = "patterns.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveMeta {
    pub grid: GridSpec,
    pub categories: Vec<String>,
    /// Calendar date of day slot 0.
    pub day0: NaiveDate,
    pub mu: f64,
    pub sigma: f64,
    /// `[regions, days, categories]`.
    pub shape: [usize; 3],
}

/// Ground-truth pattern id of every region, indexed by region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patterns {
    pub patterns: Vec<usize>,
}

pub fn epoch_day(date: NaiveDate) -> i64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    (date - epoch).num_days()
}

pub fn date_of(day: i64) -> NaiveDate {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    epoch + chrono::Duration::days(day)
}

pub fn write_archive(dir: &Path, tensor: &CrimeTensor, patterns: Option<&[usize]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let s = tensor.counts.shape();
    let meta = ArchiveMeta {
        grid: tensor.grid.clone(),
        categories: tensor.categories.clone(),
        day0: date_of(tensor.day0),
        mu: tensor.mu,
        sigma: tensor.sigma,
        shape: [s[0], s[1], s[2]],
    };
    write_json(&dir.join(META), &meta)?;
    write_f64(&dir.join(COUNTS), tensor.counts.data())?;
    if let Some(p) = patterns {
        write_json(
            &dir.join(PATTERNS),
            &Patterns {
                patterns: p.to_vec(),
            },
        )?;
    }
    Ok(())
}

pub fn read_archive(dir: &Path) -> Result<CrimeTensor> {
    let meta_path = dir.join(META);
    let meta: ArchiveMeta = read_json(&meta_path)?;
    let [r, t, c] = meta.shape;
    let counts = read_f64(&dir.join(COUNTS), r * t * c)?;
    let counts = DenseArray::new(&meta.shape, counts)?;
    let mut tensor = CrimeTensor::new(counts, meta.grid, epoch_day(meta.day0), meta.categories)?;
    if tensor.regions() != r {
        return Err(CliError::format(&meta_path, "shape does not match grid"));
    }
    tensor.mu = meta.mu;
    tensor.sigma = meta.sigma;
    Ok(tensor)
}

pub fn read_patterns(dir: &Path) -> Result<Option<Vec<usize>>> {
    let path = dir.join(PATTERNS);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(read_json::<Patterns>(&path)?.patterns))
}
