//! Metrics, training history and case-study files.

use std::fs;
use std::path::Path;

use sthsl_core::eval::{CaseStudyRow, MetricsReport};
use sthsl_core::trainer::EpochRecord;

use crate::blob::write_json;
use crate::error::{CliError, Result};

pub const HISTORY_HEADER: &str =
    "epoch,train_loss,sup_loss,infomax_loss,contrastive_loss,valid_mae,valid_mape";
pub const METRICS_HEADER: &str =
    "category,group,regions,entries,mae,mape,mape_included,mape_excluded";
pub const CASE_STUDY_HEADER: &str = "t,hyperedge,rank,region,category,score";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(CliError::io(path))
}

/// Loss columns are the unweighted term values; `train_loss` is the
/// weighted total.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_lines(
        path,
        HISTORY_HEADER,
        history.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.train.total,
                r.train.supervised,
                r.train.infomax,
                r.train.contrastive,
                r.valid_mae,
                opt(r.valid_mape)
            )
        }),
    )
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> Result<()> {
    write_json(path, report)
}

/// One row per category and group: `overall`, the four density buckets,
/// then `zero`.
pub fn write_metrics_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    w.write_record(METRICS_HEADER.split(','))
        .map_err(|e| CliError::format(path, e))?;
    for c in &report.categories {
        let groups = std::iter::once(("overall", &c.overall))
            .chain(c.buckets.iter().map(|g| (g.label.as_str(), g)))
            .chain(std::iter::once(("zero", &c.zero_density)));
        for (group, g) in groups {
            w.write_record([
                c.category.clone(),
                group.to_string(),
                g.regions.to_string(),
                g.entries.to_string(),
                opt(g.mae),
                opt(g.mape),
                g.mape_included.to_string(),
                g.mape_excluded.to_string(),
            ])
            .map_err(|e| CliError::format(path, e))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_case_study(path: &Path, rows: &[CaseStudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    w.write_record(CASE_STUDY_HEADER.split(','))
        .map_err(|e| CliError::format(path, e))?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.hyperedge.to_string(),
            r.rank.to_string(),
            r.region.to_string(),
            r.category.clone(),
            r.score.to_string(),
        ])
        .map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_case_study(path: &Path) -> Result<Vec<CaseStudyRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CASE_STUDY_HEADER {
        return Err(CliError::format(
            path,
            format!("unexpected header {}", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let num =
            |i: usize| -> Result<usize> { rec[i].parse().map_err(|e| CliError::format(path, e)) };
        rows.push(CaseStudyRow {
            t: num(0)?,
            hyperedge: num(1)?,
            rank: num(2)?,
            region: num(3)?,
            category: rec[4].to_string(),
            score: rec[5].parse().map_err(|e| CliError::format(path, e))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sthsl_core::eval::export_case_study;
    use sthsl_core::params::ModelShape;
    use sthsl_core::{ModelConfig, ModelParams};

    #[test]
    fn case_study_csv_round_trip() {
        let cfg = ModelConfig {
            hidden_dim: 4,
            hyperedges: 5,
            ..ModelConfig::default()
        };
        let shape = ModelShape {
            rows: 2,
            cols: 3,
            categories: 2,
            window: 4,
        };
        let params = ModelParams::init(&cfg, shape, 8);
        let cats = vec!["assault, aggravated".to_string(), "theft".to_string()];
        let rows = export_case_study(&params, shape, &cats, 1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cs.csv");
        write_case_study(&path, &rows).unwrap();
        assert_eq!(read_case_study(&path).unwrap(), rows);
    }

    #[test]
    fn metrics_csv_quotes_bucket_labels() {
        use sthsl_core::data::{synth, SynthConfig};
        use sthsl_core::eval::{evaluate_predictions, historical_mean_baseline};
        use sthsl_core::{GridSpec, SplitPlan};

        let mut data = synth(&SynthConfig::new(GridSpec::unit(2, 2), 2, 60, 2.0, 1, 3))
            .unwrap()
            .tensor;
        data.categories = vec!["assault, aggravated".into(), "theft".into()];
        let plan = SplitPlan::standard(60, 7, 7).unwrap();
        let preds = historical_mean_baseline(&data, &plan).unwrap();
        let report = evaluate_predictions(&data, &plan, &preds, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&path, &report).unwrap();

        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>().join(","),
            METRICS_HEADER
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|x| x.len() == 8));
        let groups: Vec<&str> = rows[..6].iter().map(|x| &x[1]).collect();
        assert_eq!(
            groups,
            [
                "overall",
                "(0,0.25]",
                "(0.25,0.5]",
                "(0.5,0.75]",
                "(0.75,1]",
                "zero"
            ]
        );
        assert_eq!(&rows[0][0], "assault, aggravated");
        assert_eq!(
            rows[0][3].parse::<usize>().unwrap(),
            report.categories[0].overall.entries
        );
    }
}
