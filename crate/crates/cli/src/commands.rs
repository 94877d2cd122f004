//! Command bodies. Each reads a resolved [`RunConfig`] and writes only under
//! its output path.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sthsl_core::data::{synth, IngestReport, SynthConfig};
use sthsl_core::eval::{evaluate, export_case_study, MetricsReport};
use sthsl_core::gradcheck::{check_model, GradcheckReport};
use sthsl_core::params::ModelShape;
use sthsl_core::tape::Fault;
use sthsl_core::trainer::{train, Checkpoint, EpochRecord};
use sthsl_core::{GridSpec, SplitPlan};

use crate::archive::{date_of, epoch_day, read_archive, write_archive};
use crate::blob::write_json;
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::events::EventTable;
use crate::report;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const HISTORY_CSV: &str = "history.csv";
pub const CONFIG_JSON: &str = "config.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

pub fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{what} is required (flag or config key)")))
}

pub fn existing<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let path = required(p, what)?;
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub struct IngestSummary {
    pub report: IngestReport,
    pub day0: NaiveDate,
    pub days: usize,
    pub categories: Vec<String>,
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let input = existing(&cfg.paths.input, "--input")?;
    let out = required(&cfg.paths.out, "--out")?;
    let g = &cfg.grid;
    let missing = |what: &str| CliError::Usage(format!("grid {what} is required for ingestion"));
    let grid = GridSpec {
        lat_min: g.lat_min.ok_or_else(|| missing("lat_min"))?,
        lat_max: g.lat_max.ok_or_else(|| missing("lat_max"))?,
        lon_min: g.lon_min.ok_or_else(|| missing("lon_min"))?,
        lon_max: g.lon_max.ok_or_else(|| missing("lon_max"))?,
        rows: g.rows.ok_or_else(|| missing("rows"))?,
        cols: g.cols.ok_or_else(|| missing("cols"))?,
        cell_km: g.cell_km.unwrap_or(3.0),
    };
    grid.validate()?;
    let start = cfg
        .start
        .as_deref()
        .map(|s| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| CliError::Usage(format!("start date '{s}': {e}")))
        })
        .transpose()?;
    if cfg.days == Some(0) {
        return Err(CliError::Usage("days must be at least 1".into()));
    }

    let table = EventTable::read(input)?;
    let categories = cfg.categories.clone().unwrap_or_else(|| table.categories());
    let span = table.day_span();
    let day0 = match (start, span) {
        (Some(d), _) => epoch_day(d),
        (None, Some((lo, _))) => lo,
        (None, None) => return Err(CliError::format(input, "no parseable rows")),
    };
    let days = match (cfg.days, span) {
        (Some(n), _) => n,
        (None, Some((_, hi))) if hi >= day0 => (hi - day0 + 1) as usize,
        _ => {
            return Err(CliError::Usage(
                "cannot infer day count; pass --days".into(),
            ))
        }
    };
    let (tensor, report) = table.into_tensor(grid, categories.clone(), day0, days)?;
    write_archive(out, &tensor, None)?;
    Ok(IngestSummary {
        report,
        day0: date_of(day0),
        days,
        categories,
    })
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
    pub days: usize,
    pub skew: f64,
    pub patterns: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn synthesize(args: &SynthArgs) -> Result<()> {
    if args.days == 0 {
        return Err(CliError::Usage("--days must be at least 1".into()));
    }
    let cfg = SynthConfig::new(
        GridSpec::unit(args.rows, args.cols),
        args.categories,
        args.days,
        args.skew,
        args.patterns,
        args.seed,
    );
    let out = synth(&cfg)?;
    write_archive(&args.out, &out.tensor, Some(&out.patterns))
}

pub struct TrainSummary {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

pub fn train_run(cfg: &RunConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainSummary> {
    let data_dir = existing(&cfg.paths.data, "--data")?;
    let out = required(&cfg.paths.out, "--out")?;
    cfg.train.validate()?;
    let data = read_archive(data_dir)?;
    let plan = SplitPlan::standard(data.days(), cfg.train.window, cfg.train.valid_days)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_JSON), &cfg.train_entries())?;
    let outcome = train(&data, &plan, &cfg.train, on_epoch)?;
    checkpoint::save(&out.join(CHECKPOINT_DIR), &outcome.best)?;
    report::write_history(&out.join(HISTORY_CSV), &outcome.history)?;
    Ok(TrainSummary {
        best: outcome.best,
        history: outcome.history,
        warnings: cfg.train.search_range_violations(),
    })
}

pub fn evaluate_run(cfg: &RunConfig) -> Result<MetricsReport> {
    let data_dir = existing(&cfg.paths.data, "--data")?;
    let ckpt_dir = existing(&cfg.paths.checkpoint, "--checkpoint")?;
    let out = required(&cfg.paths.out, "--out")?;
    let data = read_archive(data_dir)?;
    let ckpt = checkpoint::load(ckpt_dir)?;
    let report = evaluate(&ckpt, &data, &ckpt.plan, cfg.clip_nonneg)?;
    create_dir(out)?;
    report::write_metrics_json(&out.join(METRICS_JSON), &report)?;
    report::write_metrics_csv(&out.join(METRICS_CSV), &report)?;
    Ok(report)
}

pub fn gradcheck_run(cfg: &RunConfig, fault: Option<Fault>) -> Result<GradcheckReport> {
    let report = check_model(&cfg.gradcheck, fault)?;
    if let Some(out) = &cfg.paths.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_json(out, &report)?;
    }
    Ok(report)
}

pub fn inspect_hyperedges(ckpt_dir: &Path, t: usize, top_k: usize, out: &Path) -> Result<usize> {
    if top_k == 0 {
        return Err(CliError::Usage("--topk must be at least 1".into()));
    }
    let ckpt = checkpoint::load(ckpt_dir)?;
    let shape: ModelShape = ckpt.model.shape;
    if t >= shape.window {
        return Err(CliError::Usage(format!(
            "--t {t} outside the window of {} slots",
            shape.window
        )));
    }
    let rows = export_case_study(&ckpt.params, shape, &ckpt.categories, t, top_k)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    report::write_case_study(out, &rows)?;
    Ok(rows.len())
}
