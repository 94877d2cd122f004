use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sthsl::commands::{self, SynthArgs};
use sthsl::{CliError, Result, RunConfig};
use sthsl_core::eval::MetricsReport;
use sthsl_core::tape::Fault;
use sthsl_core::Ablation;

const SEED_ENV: &str = "STHSL_SEED";

/// Spatial-temporal hypergraph self-supervised forecasting of sparse,
/// grid-based event counts.
#[derive(Parser)]
#[command(name = "sthsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin a CSV of events (category,timestamp,latitude,longitude) into a tensor archive.
    Ingest(IngestCmd),
    /// Generate a skewed synthetic tensor archive with planted patterns.
    Synth(SynthCmd),
    /// Train a model and write the best checkpoint and the epoch history.
    Train(TrainCmd),
    /// Score a checkpoint on the test days, overall and per density bucket.
    Evaluate(EvaluateCmd),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckCmd),
    /// Export the top regions of every hyperedge at one window slot.
    InspectHyperedges(InspectCmd),
}

#[derive(Args)]
struct IngestCmd {
    /// Event CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON run configuration with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid size as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Bounding box as LAT_MIN,LAT_MAX,LON_MIN,LON_MAX.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: Option<[f64; 4]>,
    /// Cell edge length in km, recorded for reference.
    #[arg(long)]
    cell_km: Option<f64>,
    /// Comma-separated category names; defaults to every category in the file.
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// First day (YYYY-MM-DD); defaults to the first event's day.
    #[arg(long)]
    start: Option<String>,
    /// Number of days; defaults to the span through the last event.
    #[arg(long)]
    days: Option<usize>,
    /// Output archive directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    /// Grid size as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid, default_value = "4x4")]
    grid: (usize, usize),
    /// Number of event categories.
    #[arg(long, default_value_t = 2)]
    categories: usize,
    /// Number of days.
    #[arg(long)]
    days: usize,
    /// Power-law exponent of region base rates.
    #[arg(long, default_value_t = 2.0)]
    skew: f64,
    /// Number of planted latent patterns.
    #[arg(long, default_value_t = 3)]
    patterns: usize,
    /// Seed; falls back to STHSL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output archive directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    /// Tensor archive.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON run configuration with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the checkpoint, history and resolved config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Architectural variant.
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
    /// Seed; falls back to the config file, then STHSL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Embedding width d.
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Number of hyperedges H.
    #[arg(long)]
    hyperedges: Option<usize>,
    /// Input window length in days.
    #[arg(long)]
    window: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Suppress per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateCmd {
    /// Tensor archive.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for metrics.json and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run configuration with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Clip negative predictions to zero before scoring.
    #[arg(long)]
    clip_nonneg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    MatmulGradScale,
}

#[derive(Args)]
struct GradcheckCmd {
    /// JSON run configuration; only `gradcheck.*` keys apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the check instance; falls back to the config file, then STHSL_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args)]
struct InspectCmd {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Window slot whose incidence matrix is inspected.
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Regions listed per hyperedge.
    #[arg(long, default_value_t = 3)]
    topk: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got '{s}'"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    let (r, c) = (num(r)?, num(c)?);
    if r == 0 || c == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((r, c))
}

fn parse_bbox(s: &str) -> std::result::Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected LAT_MIN,LAT_MAX,LON_MIN,LON_MAX".to_string())
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: sthsl_core::Error| e.to_string())
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

/// Default, then `STHSL_SEED` under `seed_key` unless the file sets it,
/// then the file, then `flags`.
fn resolve(
    file: Option<&PathBuf>,
    seed_key: Option<&str>,
    flags: Vec<(&str, Option<Value>)>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let map = file
        .map(|p| RunConfig::read_map(p))
        .transpose()?
        .unwrap_or_default();
    if let Some(key) = seed_key.filter(|k| !map.contains_key(*k)) {
        if let Some(seed) = env_seed()? {
            cfg.apply(key, &json!(seed))?;
        }
    }
    cfg.apply_all(&map)?;
    for (key, v) in flags {
        if let Some(v) = v {
            cfg.apply(key, &v)?;
        }
    }
    Ok(cfg)
}

fn path(p: &Option<PathBuf>) -> Option<Value> {
    p.as_ref().map(|p| json!(p))
}

fn opt<T: serde::Serialize>(v: Option<T>) -> Option<Value> {
    v.map(|v| json!(v))
}

fn print_metrics(report: &MetricsReport) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!("{:<24} {:>8} {:>8}", "category", "MAE", "MAPE");
    for c in &report.categories {
        println!(
            "{:<24} {:>8} {:>8}",
            c.category,
            fmt(c.overall.mae),
            fmt(c.overall.mape)
        );
        for g in c.buckets.iter().chain(std::iter::once(&c.zero_density)) {
            if g.entries > 0 {
                println!("  {:<22} {:>8} {:>8}", g.label, fmt(g.mae), fmt(g.mape));
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let bbox = a.bbox.map(|b| b.to_vec());
            let cfg = resolve(
                a.config.as_ref(),
                None,
                vec![
                    ("paths.input", path(&a.input)),
                    ("paths.out", path(&a.out)),
                    ("grid.rows", opt(a.grid.map(|g| g.0))),
                    ("grid.cols", opt(a.grid.map(|g| g.1))),
                    ("grid.lat_min", opt(bbox.as_ref().map(|b| b[0]))),
                    ("grid.lat_max", opt(bbox.as_ref().map(|b| b[1]))),
                    ("grid.lon_min", opt(bbox.as_ref().map(|b| b[2]))),
                    ("grid.lon_max", opt(bbox.as_ref().map(|b| b[3]))),
                    ("grid.cell_km", opt(a.cell_km)),
                    ("data.categories", opt(a.categories)),
                    ("data.start", opt(a.start)),
                    ("data.days", opt(a.days)),
                ],
            )?;
            let s = commands::ingest(&cfg)?;
            let r = &s.report;
            println!(
                "kept {} of {} rows; discarded {} ({} outside the date range, {} unknown category, {} malformed)",
                r.kept,
                r.total(),
                r.discarded(),
                r.out_of_range,
                r.unknown_category,
                r.malformed
            );
            println!(
                "{} days from {}, categories: {}",
                s.days,
                s.day0,
                s.categories.join(", ")
            );
        }
        Command::Synth(a) => {
            let seed = match a.seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            commands::synthesize(&SynthArgs {
                rows: a.grid.0,
                cols: a.grid.1,
                categories: a.categories,
                days: a.days,
                skew: a.skew,
                patterns: a.patterns,
                seed,
                out: a.out.clone(),
            })?;
            println!("wrote {}", a.out.display());
        }
        Command::Train(a) => {
            let cfg = resolve(
                a.config.as_ref(),
                Some("train.seed"),
                vec![
                    ("paths.data", path(&a.data)),
                    ("paths.out", path(&a.out)),
                    ("model.ablation", opt(a.ablation.map(|x| x.name()))),
                    ("train.seed", opt(a.seed)),
                    ("train.epochs", opt(a.epochs)),
                    ("train.learning_rate", opt(a.lr)),
                    ("train.batch_size", opt(a.batch_size)),
                    ("model.hidden_dim", opt(a.hidden_dim)),
                    ("model.hyperedges", opt(a.hyperedges)),
                    ("train.window", opt(a.window)),
                    ("train.patience", opt(a.patience)),
                ],
            )?;
            for w in cfg.train.search_range_violations() {
                eprintln!("warning: {w}");
            }
            let quiet = a.quiet;
            let s = commands::train_run(&cfg, |r| {
                if !quiet {
                    eprintln!(
                        "epoch {:>3}  loss {:.4}  sup {:.4}  infomax {:.4}  contrastive {:.4}  valid MAE {:.4}",
                        r.epoch, r.train.total, r.train.supervised, r.train.infomax, r.train.contrastive, r.valid_mae
                    );
                }
            })?;
            println!(
                "best epoch {} of {}, validation MAE {:.4}",
                s.best.epoch,
                s.history.len(),
                s.best.valid_mae
            );
        }
        Command::Evaluate(a) => {
            let cfg = resolve(
                a.config.as_ref(),
                None,
                vec![
                    ("paths.data", path(&a.data)),
                    ("paths.checkpoint", path(&a.checkpoint)),
                    ("paths.out", path(&a.out)),
                    ("eval.clip_nonneg", a.clip_nonneg.then_some(json!(true))),
                ],
            )?;
            let report = commands::evaluate_run(&cfg)?;
            print_metrics(&report);
        }
        Command::Gradcheck(a) => {
            let cfg = resolve(
                a.config.as_ref(),
                Some("gradcheck.seed"),
                vec![("gradcheck.seed", opt(a.seed)), ("paths.out", path(&a.out))],
            )?;
            let fault = a.inject_fault.map(|f| match f {
                FaultArg::MatmulGradScale => Fault::MatmulGradScale,
            });
            let report = commands::gradcheck_run(&cfg, fault)?;
            for p in &report.params {
                println!("{:<32} {:.3e}", p.name, p.max_rel_error);
            }
            println!("{}", report.summary());
            if !report.passed {
                return Err(CliError::Core(sthsl_core::Error::Numeric {
                    op: "gradcheck",
                    detail: format!(
                        "max relative error {:.3e} exceeds {:.0e}",
                        report.max_rel_error, report.tolerance
                    ),
                }));
            }
        }
        Command::InspectHyperedges(a) => {
            let n = commands::inspect_hyperedges(&a.checkpoint, a.t, a.topk, &a.out)?;
            println!("wrote {n} rows to {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
