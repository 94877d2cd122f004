use sthsl_core::data::{
    density_degree, synth, windows, DayRange, DensityBucket, GridSpec, SynthConfig,
};
use sthsl_core::eval::{
    evaluate_predictions, export_case_study, historical_mean_baseline, mae, mape,
};
use sthsl_core::params::{ModelShape, INCIDENCE};
use sthsl_core::{CrimeTensor, DenseArray, ModelConfig, ModelParams, Phase, Rng, SplitPlan};

fn dataset(seed: u64) -> CrimeTensor {
    synth(&SynthConfig::new(
        GridSpec::unit(4, 4),
        2,
        240,
        2.0,
        3,
        seed,
    ))
    .unwrap()
    .tensor
}

#[test]
fn split_is_seven_to_one_with_thirty_day_validation() {
    let plan = SplitPlan::standard(240, 30, 30).unwrap();
    assert_eq!((plan.train.start, plan.train.end), (0, 210));
    assert_eq!((plan.valid.start, plan.valid.end), (180, 210));
    assert_eq!((plan.test.start, plan.test.end), (210, 240));
    assert_eq!(plan.train.len(), 7 * plan.test.len());
    for n in [80usize, 120, 365, 731] {
        let p = SplitPlan::standard(n, 7, 14).unwrap();
        let ratio = p.train.len() as f64 / p.test.len() as f64;
        assert!((ratio - 7.0).abs() < 0.5, "{n}: {ratio}");
        assert_eq!(p.test.end, n);
    }
}

#[test]
fn phase_windows_cover_their_days() {
    let data = dataset(1);
    let plan = SplitPlan::standard(240, 30, 30).unwrap();
    let test = windows(&data, &plan, Phase::Test).unwrap();
    assert_eq!(
        test.iter().map(|s| s.target_day).collect::<Vec<_>>(),
        (210..240).collect::<Vec<_>>()
    );
    for s in &test {
        for r in 0..16 {
            for c in 0..2 {
                assert_eq!(s.target.get(&[r, c]), data.count(r, s.target_day, c));
                assert_eq!(s.input.get(&[r, 29, c]), data.count(r, s.target_day - 1, c));
            }
        }
    }
    let valid = windows(&data, &plan, Phase::Valid).unwrap();
    assert_eq!(valid.len(), 30);
    assert_eq!(valid[0].target_day, 180);
}

#[test]
fn metrics_match_filtering_oracle() {
    let data = dataset(7);
    let plan = SplitPlan::standard(240, 30, 30).unwrap();
    let mut rng = Rng::new(4);
    let preds: Vec<DenseArray> = (0..30)
        .map(|_| {
            let mut a = DenseArray::zeros(&[16, 2]);
            a.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-0.5, 3.0));
            a
        })
        .collect();
    let report = evaluate_predictions(&data, &plan, &preds, false).unwrap();
    assert_eq!(report.test_days, 30);

    for c in 0..2 {
        let cat = &report.categories[c];
        // independent filter: all (region, day) pairs, then per-bucket subsets
        let mut all = (Vec::new(), Vec::new());
        let mut per_bucket: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 5];
        for r in 0..16 {
            let nonzero = (0..240).filter(|&t| data.count(r, t, c) > 0.0).count();
            let degree = nonzero as f64 / 240.0;
            assert_eq!(degree, density_degree(&data, r, c, DayRange::new(0, 240)));
            let slot = if degree == 0.0 {
                4
            } else if degree <= 0.25 {
                0
            } else if degree <= 0.5 {
                1
            } else if degree <= 0.75 {
                2
            } else {
                3
            };
            for (k, t) in (210..240).enumerate() {
                let p = preds[k].get(&[r, c]);
                let y = data.count(r, t, c);
                all.0.push(p);
                all.1.push(y);
                per_bucket[slot].0.push(p);
                per_bucket[slot].1.push(y);
            }
        }
        let overall = cat.overall.mae.unwrap();
        assert!((overall - mae(&all.0, &all.1).unwrap()).abs() < 1e-12);
        let m = mape(&all.0, &all.1).unwrap();
        assert!((cat.overall.mape.unwrap() - m.value).abs() < 1e-12);
        assert_eq!(m.included + m.excluded, 16 * 30);
        assert_eq!(
            cat.overall.mape_included + cat.overall.mape_excluded,
            16 * 30
        );

        let mut weighted = 0.0;
        for (b, bucket) in DensityBucket::ALL.iter().enumerate() {
            let g = &cat.buckets[b];
            assert_eq!(g.label, bucket.label());
            assert_eq!(g.entries, per_bucket[b].0.len());
            match g.mae {
                Some(v) => {
                    assert!((v - mae(&per_bucket[b].0, &per_bucket[b].1).unwrap()).abs() < 1e-12);
                    weighted += v * g.entries as f64;
                }
                None => assert_eq!(g.entries, 0),
            }
        }
        if let Some(z) = cat.zero_density.mae {
            weighted += z * cat.zero_density.entries as f64;
        }
        assert!((weighted / (16.0 * 30.0) - overall).abs() < 1e-10);
        let regions: usize =
            cat.buckets.iter().map(|g| g.regions).sum::<usize>() + cat.zero_density.regions;
        assert_eq!(regions, 16);
    }
}

#[test]
fn zero_predictor_and_oracle_predictor() {
    let data = dataset(3);
    let plan = SplitPlan::standard(240, 30, 30).unwrap();
    let zeros = vec![DenseArray::zeros(&[16, 2]); 30];
    let report = evaluate_predictions(&data, &plan, &zeros, false).unwrap();
    for c in 0..2 {
        let mean: f64 = (0..16)
            .flat_map(|r| (210..240).map(move |t| (r, t)))
            .map(|(r, t)| data.count(r, t, c))
            .sum::<f64>()
            / 480.0;
        assert!((report.categories[c].overall.mae.unwrap() - mean).abs() < 1e-12);
    }
    let perfect: Vec<DenseArray> = windows(&data, &plan, Phase::Test)
        .unwrap()
        .into_iter()
        .map(|s| s.target)
        .collect();
    let report = evaluate_predictions(&data, &plan, &perfect, false).unwrap();
    for c in &report.categories {
        assert_eq!(c.overall.mae, Some(0.0));
        assert_eq!(c.overall.mape, Some(0.0));
    }
}

#[test]
fn baseline_matches_loop_means() {
    let data = dataset(2);
    let plan = SplitPlan::standard(240, 30, 30).unwrap();
    let base = historical_mean_baseline(&data, &plan).unwrap();
    assert_eq!(base.len(), 30);
    for r in 0..16 {
        for c in 0..2 {
            let want = (0..210).map(|t| data.count(r, t, c)).sum::<f64>() / 210.0;
            for day in &base {
                assert!((day.get(&[r, c]) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn case_study_rows_are_ranked() {
    let cfg = ModelConfig {
        hidden_dim: 4,
        hyperedges: 6,
        ..ModelConfig::default()
    };
    let shape = ModelShape {
        rows: 2,
        cols: 2,
        categories: 2,
        window: 3,
    };
    let params = ModelParams::init(&cfg, shape, 1);
    let cats = vec!["a".to_string(), "b".to_string()];
    let top1 = export_case_study(&params, shape, &cats, 0, 1).unwrap();
    assert_eq!(top1.len(), 6);
    let rows = export_case_study(&params, shape, &cats, 2, 3).unwrap();
    assert_eq!(rows.len(), 18);
    let inc = params.get(INCIDENCE).unwrap();
    for group in rows.chunks(3) {
        assert!(group.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(
            group.iter().map(|r| r.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let e = group[0].hyperedge;
        let max = (0..8)
            .map(|i| inc.get(&[2, e, i]).abs())
            .fold(0.0, f64::max);
        assert_eq!(group[0].score, max);
    }
    assert!(export_case_study(&params, shape, &cats, 3, 1).is_err());
}
