//! Run configuration: one JSON object with flat dotted keys.
//!
//! ```json
//! { "model.hidden_dim": 8, "train.epochs": 30, "paths.data": "archive" }
//! ```
//!
//! Sections:
//! - `model.*`, `loss.*` and `train.*` cover the training configuration.
//! - `gradcheck.*` covers the gradient-check instance.
//! - `grid.*`, `data.*`, `paths.*` and `eval.*` cover ingestion, file
//!   locations and evaluation.
//!
//! Unknown keys and ill-typed values are rejected. Command-line flags are
//! applied through the same keys after the file, so a flag always wins.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use sthsl_core::gradcheck::GradcheckConfig;
use sthsl_core::TrainConfig;

use crate::error::{CliError, Result};

/// Grid keys; bounds have no sensible default for real data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridKeys {
    pub lat_min: Option<f64>,
    pub lat_max: Option<f64>,
    pub lon_min: Option<f64>,
    pub lon_max: Option<f64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub cell_km: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub gradcheck: GradcheckConfig,
    pub grid: GridKeys,
    /// Ingestion category list; all categories in the file when absent.
    pub categories: Option<Vec<String>>,
    /// First ingested day as `YYYY-MM-DD`; the first event's day when absent.
    pub start: Option<String>,
    /// Ingested day count; through the last event's day when absent.
    pub days: Option<usize>,
    pub paths: Paths,
    pub clip_nonneg: bool,
}

fn typed<T: DeserializeOwned>(key: &str, v: &Value) -> Result<T> {
    T::deserialize(v).map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
}

/// Replaces the leaf at `path` inside a serialized struct. Returns false
/// when no such leaf exists.
fn set_leaf(tree: &mut Value, path: &[&str], v: &Value) -> bool {
    let mut node = tree;
    for seg in path {
        match node.get_mut(*seg) {
            Some(next) => node = next,
            None => return false,
        }
    }
    if node.is_object() {
        return false;
    }
    *node = v.clone();
    true
}

fn patch<T: serde::Serialize + DeserializeOwned>(
    target: &mut T,
    key: &str,
    path: &[&str],
    v: &Value,
) -> Result<bool> {
    let mut tree = serde_json::to_value(&*target).expect("config serializes");
    if !set_leaf(&mut tree, path, v) {
        return Ok(false);
    }
    *target = typed(key, &tree)?;
    Ok(true)
}

impl RunConfig {
    /// The raw key map of a config file.
    pub fn read_map(path: &Path) -> Result<Map<String, Value>> {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        match value {
            Value::Object(map) => Ok(map),
            _ => Err(CliError::Usage(format!(
                "{}: expected a JSON object",
                path.display()
            ))),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_all(&Self::read_map(path)?)?;
        Ok(cfg)
    }

    pub fn apply_all(&mut self, map: &Map<String, Value>) -> Result<()> {
        for (k, v) in map {
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, v: &Value) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        let known = match parts.as_slice() {
            ["model" | "loss", _] => patch(&mut self.train, key, &parts, v)?,
            ["train", field] => {
                *field != "model"
                    && *field != "loss"
                    && patch(&mut self.train, key, &parts[1..], v)?
            }
            ["gradcheck", rest @ ..] if !rest.is_empty() => {
                patch(&mut self.gradcheck, key, rest, v)?
            }
            ["grid", field] => {
                let g = &mut self.grid;
                match *field {
                    "lat_min" => g.lat_min = Some(typed(key, v)?),
                    "lat_max" => g.lat_max = Some(typed(key, v)?),
                    "lon_min" => g.lon_min = Some(typed(key, v)?),
                    "lon_max" => g.lon_max = Some(typed(key, v)?),
                    "rows" => g.rows = Some(typed(key, v)?),
                    "cols" => g.cols = Some(typed(key, v)?),
                    "cell_km" => g.cell_km = Some(typed(key, v)?),
                    _ => return Err(unknown(key)),
                }
                true
            }
            ["data", "categories"] => {
                self.categories = Some(typed(key, v)?);
                true
            }
            ["data", "start"] => {
                self.start = Some(typed(key, v)?);
                true
            }
            ["data", "days"] => {
                self.days = Some(typed(key, v)?);
                true
            }
            ["paths", field] => {
                let p = Some(typed::<PathBuf>(key, v)?);
                match *field {
                    "input" => self.paths.input = p,
                    "data" => self.paths.data = p,
                    "checkpoint" => self.paths.checkpoint = p,
                    "out" => self.paths.out = p,
                    _ => return Err(unknown(key)),
                }
                true
            }
            ["eval", "clip_nonneg"] => {
                self.clip_nonneg = typed(key, v)?;
                true
            }
            _ => false,
        };
        if known {
            Ok(())
        } else {
            Err(unknown(key))
        }
    }

    /// Training keys as a flat object, reusable as a config file.
    pub fn train_entries(&self) -> Map<String, Value> {
        let mut out = Map::new();
        let Value::Object(top) = serde_json::to_value(&self.train).expect("config serializes")
        else {
            unreachable!("struct serializes to an object")
        };
        for (k, v) in top {
            match v {
                Value::Object(inner) => {
                    for (k2, v2) in inner {
                        out.insert(format!("{k}.{k2}"), v2);
                    }
                }
                v => {
                    out.insert(format!("train.{k}"), v);
                }
            }
        }
        out
    }
}

fn unknown(key: &str) -> CliError {
    CliError::Usage(format!("unknown config key '{key}'"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use sthsl_core::Ablation;

    #[test]
    fn dotted_keys_reach_their_fields() {
        let mut c = RunConfig::default();
        let map = json!({
            "model.hidden_dim": 4,
            "model.ablation": "w/o-hyper",
            "loss.lambda2": 0.25,
            "train.epochs": 7,
            "gradcheck.loss.lambda1": 0.0,
            "gradcheck.rows": 3,
            "grid.rows": 5,
            "data.categories": ["a", "b"],
            "paths.out": "o",
            "eval.clip_nonneg": true
        });
        c.apply_all(map.as_object().unwrap()).unwrap();
        assert_eq!(c.train.model.hidden_dim, 4);
        assert_eq!(c.train.model.ablation, Ablation::NoHyper);
        assert_eq!(c.train.loss.lambda2, 0.25);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.gradcheck.loss.lambda1, 0.0);
        assert_eq!(c.gradcheck.rows, 3);
        assert_eq!(c.grid.rows, Some(5));
        assert_eq!(c.categories, Some(vec!["a".into(), "b".into()]));
        assert_eq!(c.paths.out, Some(PathBuf::from("o")));
        assert!(c.clip_nonneg);
    }

    #[test]
    fn unknown_and_ill_typed_keys_fail() {
        let mut c = RunConfig::default();
        for key in [
            "model.depth",
            "train.model",
            "model",
            "loss",
            "grid.zoom",
            "gradcheck",
            "paths.log",
            "epochs",
        ] {
            let err = c.apply(key, &json!(1)).unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
            assert_eq!(err.exit_code(), 1);
        }
        assert!(c.apply("train.epochs", &json!("many")).is_err());
        assert!(c.apply("model.ablation", &json!("w/o-everything")).is_err());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn train_entries_round_trip() {
        let mut c = RunConfig::default();
        c.apply("model.tau", &json!(0.3)).unwrap();
        c.apply("train.seed", &json!(99)).unwrap();
        let mut d = RunConfig::default();
        d.apply_all(&c.train_entries()).unwrap();
        assert_eq!(d.train, c.train);
    }
}
