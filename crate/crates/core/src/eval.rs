//! Forecast metrics, density-bucketed breakdowns, the historical-mean
//! reference predictor and hyperedge case-study exports.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::data::{
    density_degree, windows, CrimeTensor, DayRange, DensityBucket, Phase, SplitPlan,
};
use crate::error::{Error, Result};
use crate::head::Model;
use crate::hypergraph::hyperedge_relevance;
use crate::params::{self, ModelParams, ModelShape};
use crate::trainer::Checkpoint;

fn same_len(op: &'static str, pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(op, &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Data(format!("{op} of an empty set")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len("mae", pred, truth)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| libm::fabs(p - t)).sum();
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub value: f64,
    /// Entries with positive truth.
    pub included: usize,
    /// Zero-truth entries left out of the mean.
    pub excluded: usize,
}

/// Mean absolute percentage error over the entries whose truth is positive.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<Mape> {
    same_len("mape", pred, truth)?;
    let mut total = 0.0;
    let mut included = 0;
    for (p, t) in pred.iter().zip(truth) {
        if *t > 0.0 {
            total += libm::fabs(p - t) / t;
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::Data(
            "MAPE is undefined when every true value is zero; use MAE".into(),
        ));
    }
    Ok(Mape {
        value: total / included as f64,
        included,
        excluded: pred.len() - included,
    })
}

/// Metrics of one group of `(region, day)` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub label: String,
    pub regions: usize,
    pub entries: usize,
    pub mae: Option<f64>,
    pub mape: Option<f64>,
    pub mape_included: usize,
    pub mape_excluded: usize,
}

impl GroupMetrics {
    fn of(label: &str, regions: usize, pred: &[f64], truth: &[f64]) -> Self {
        let m = mape(pred, truth).ok();
        let positive = truth.iter().filter(|&&t| t > 0.0).count();
        Self {
            label: label.to_string(),
            regions,
            entries: pred.len(),
            mae: mae(pred, truth).ok(),
            mape: m.map(|m| m.value),
            mape_included: positive,
            mape_excluded: truth.len() - positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub overall: GroupMetrics,
    /// One entry per density bucket, lowest first.
    pub buckets: Vec<GroupMetrics>,
    /// Regions whose series has no event at all.
    pub zero_density: GroupMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub test_days: usize,
    pub regions: usize,
    pub clipped: bool,
    pub categories: Vec<CategoryMetrics>,
}

/// Scores `predictions` (one `[R × C]` array per test day, in order).
pub fn evaluate_predictions(
    data: &CrimeTensor,
    plan: &SplitPlan,
    predictions: &[DenseArray],
    clip_nonneg: bool,
) -> Result<MetricsReport> {
    plan.validate(data.days())?;
    let (r_n, c_n) = (data.regions(), data.num_categories());
    if predictions.len() != plan.test.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} test days",
            predictions.len(),
            plan.test.len()
        )));
    }
    for p in predictions {
        if p.shape() != [r_n, c_n] {
            let dim = if p.shape().first() != Some(&r_n) {
                "regions"
            } else {
                "categories"
            };
            return Err(Error::Data(format!(
                "prediction {:?} vs data [{r_n}, {c_n}]: {dim} differ",
                p.shape()
            )));
        }
    }
    let full = DayRange::new(0, data.days());
    let mut categories = Vec::with_capacity(c_n);
    for c in 0..c_n {
        let mut pred_all = Vec::new();
        let mut truth_all = Vec::new();
        let mut groups: Vec<(Vec<f64>, Vec<f64>, usize)> =
            (0..5).map(|_| (Vec::new(), Vec::new(), 0)).collect();
        for r in 0..r_n {
            let g = match DensityBucket::of(density_degree(data, r, c, full)) {
                Some(b) => b as usize,
                None => 4,
            };
            groups[g].2 += 1;
            for (k, t) in plan.test.days().enumerate() {
                let raw = predictions[k].get(&[r, c]);
                let p = if clip_nonneg { raw.max(0.0) } else { raw };
                let truth = data.count(r, t, c);
                pred_all.push(p);
                truth_all.push(truth);
                groups[g].0.push(p);
                groups[g].1.push(truth);
            }
        }
        let buckets = DensityBucket::ALL
            .iter()
            .map(|b| {
                let (p, t, n) = &groups[*b as usize];
                GroupMetrics::of(b.label(), *n, p, t)
            })
            .collect();
        let (p, t, n) = &groups[4];
        categories.push(CategoryMetrics {
            category: data.categories[c].clone(),
            overall: GroupMetrics::of("all", r_n, &pred_all, &truth_all),
            buckets,
            zero_density: GroupMetrics::of("0", *n, p, t),
        });
    }
    Ok(MetricsReport {
        test_days: plan.test.len(),
        regions: r_n,
        clipped: clip_nonneg,
        categories,
    })
}

/// Predictions for every day of `phase`, dropout off.
pub fn phase_predictions(
    model: &Model,
    params: &ModelParams,
    data: &CrimeTensor,
    plan: &SplitPlan,
    phase: Phase,
) -> Result<Vec<DenseArray>> {
    windows(data, plan, phase)?
        .iter()
        .map(|s| model.predict_window(params, &s.input))
        .collect()
}

fn check_compatible(ckpt: &Checkpoint, data: &CrimeTensor, plan: &SplitPlan) -> Result<()> {
    let shape = ckpt.model.shape;
    for (name, want, got) in [
        ("grid rows", shape.rows, data.grid.rows),
        ("grid cols", shape.cols, data.grid.cols),
        ("regions", shape.regions(), data.regions()),
        ("categories", shape.categories, data.num_categories()),
        ("window", shape.window, plan.window),
    ] {
        if want != got {
            return Err(Error::Data(format!(
                "checkpoint {name} is {want} but the data has {got}"
            )));
        }
    }
    Ok(())
}

/// Test-period metrics of a trained checkpoint.
pub fn evaluate(
    ckpt: &Checkpoint,
    data: &CrimeTensor,
    plan: &SplitPlan,
    clip_nonneg: bool,
) -> Result<MetricsReport> {
    check_compatible(ckpt, data, plan)?;
    let preds = phase_predictions(&ckpt.model, &ckpt.params, data, plan, Phase::Test)?;
    evaluate_predictions(data, plan, &preds, clip_nonneg)
}

/// Per `(r, c)` mean daily count over the training range, repeated for
/// every test day.
pub fn historical_mean_baseline(data: &CrimeTensor, plan: &SplitPlan) -> Result<Vec<DenseArray>> {
    if plan.train.is_empty() || plan.train.end > data.days() {
        return Err(Error::Data(format!(
            "training range {:?} unusable",
            plan.train
        )));
    }
    let (r_n, c_n) = (data.regions(), data.num_categories());
    let mut mean = DenseArray::zeros(&[r_n, c_n]);
    for r in 0..r_n {
        for c in 0..c_n {
            let s: f64 = plan.train.days().map(|t| data.count(r, t, c)).sum();
            mean.set(&[r, c], s / plan.train.len() as f64);
        }
    }
    Ok(alloc::vec![mean; plan.test.len()])
}

/// One row of the hyperedge case-study export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub t: usize,
    pub hyperedge: usize,
    /// 1-based.
    pub rank: usize,
    pub region: usize,
    pub category: String,
    pub score: f64,
}

/// Top-`top_k` region-category units of every hyperedge at window slot `t`.
pub fn export_case_study(
    params: &ModelParams,
    shape: ModelShape,
    categories: &[String],
    t: usize,
    top_k: usize,
) -> Result<Vec<CaseStudyRow>> {
    if categories.len() != shape.categories {
        return Err(Error::shape(
            "export_case_study",
            &[categories.len()],
            &[shape.categories],
        ));
    }
    let incidence = params.get(params::INCIDENCE)?;
    let hyperedges = incidence.shape().get(1).copied().unwrap_or(0);
    let mut rows = Vec::with_capacity(hyperedges * top_k);
    for e in 0..hyperedges {
        let ranked = hyperedge_relevance(incidence, shape, t, e)?;
        for (k, rel) in ranked.into_iter().take(top_k).enumerate() {
            rows.push(CaseStudyRow {
                t,
                hyperedge: e,
                rank: k + 1,
                region: rel.region,
                category: categories[rel.category].clone(),
                score: rel.score,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GridSpec;
    use alloc::vec;

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 1.0);
        assert_eq!(mae(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 0.0);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mape_excludes_zero_truth() {
        assert_eq!(mape(&[3.0], &[2.0]).unwrap().value, 0.5);
        let m = mape(&[5.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.value, m.included, m.excluded), (0.0, 1, 1));
        let err = mape(&[1.0, 1.0], &[0.0, 0.0]).unwrap_err();
        assert!(format!("{err}").contains("MAE"));
    }

    fn constant_data(value: f64) -> (CrimeTensor, SplitPlan) {
        let counts = DenseArray::full(&[4, 40, 1], value);
        let x = CrimeTensor::new(counts, GridSpec::unit(2, 2), 0, vec!["a".into()]).unwrap();
        let plan = SplitPlan::standard(40, 3, 5).unwrap();
        (x, plan)
    }

    #[test]
    fn baseline_on_constant_data() {
        let (x, plan) = constant_data(3.0);
        let b = historical_mean_baseline(&x, &plan).unwrap();
        assert_eq!(b.len(), plan.test.len());
        assert!(b.iter().all(|d| d.data().iter().all(|&v| v == 3.0)));
        let r = evaluate_predictions(&x, &plan, &b, false).unwrap();
        assert_eq!(r.categories[0].overall.mae, Some(0.0));
        assert_eq!(r.categories[0].buckets[3].regions, 4);
    }

    #[test]
    fn zero_predictor_scores_mean_count() {
        let (x, plan) = constant_data(2.0);
        let zeros = vec![DenseArray::zeros(&[4, 1]); plan.test.len()];
        let r = evaluate_predictions(&x, &plan, &zeros, false).unwrap();
        assert_eq!(r.categories[0].overall.mae, Some(2.0));
        assert_eq!(r.categories[0].overall.mape, Some(1.0));
    }

    #[test]
    fn clipping_only_touches_negatives() {
        let (x, plan) = constant_data(1.0);
        let neg = vec![DenseArray::full(&[4, 1], -1.0); plan.test.len()];
        let raw = evaluate_predictions(&x, &plan, &neg, false).unwrap();
        let clipped = evaluate_predictions(&x, &plan, &neg, true).unwrap();
        assert_eq!(raw.categories[0].overall.mae, Some(2.0));
        assert_eq!(clipped.categories[0].overall.mae, Some(1.0));
    }

    #[test]
    fn wrong_prediction_shape_is_named() {
        let (x, plan) = constant_data(1.0);
        let bad = vec![DenseArray::zeros(&[4, 2]); plan.test.len()];
        let err = evaluate_predictions(&x, &plan, &bad, false).unwrap_err();
        assert!(format!("{err}").contains("categories"));
    }
}
