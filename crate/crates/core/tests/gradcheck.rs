use sthsl_core::config::Ablation;
use sthsl_core::gradcheck::{check_model, GradcheckConfig};
use sthsl_core::tape::Fault;

#[test]
fn full_model_matches_finite_differences() {
    let report = check_model(&GradcheckConfig::default(), None).unwrap();
    println!("{}", report.summary());
    for p in &report.params {
        println!("  {:40} {:.3e}", p.name, p.max_rel_error);
    }
    assert!(report.passed, "{}", report.summary());
}

#[test]
fn every_ablation_matches_finite_differences() {
    for ablation in Ablation::ALL {
        let cfg = GradcheckConfig {
            ablation,
            ..GradcheckConfig::default()
        };
        let report = check_model(&cfg, None).unwrap();
        assert!(report.passed, "{ablation}: {}", report.summary());
    }
}

#[test]
fn corrupted_backward_rule_is_caught() {
    let report = check_model(&GradcheckConfig::default(), Some(Fault::MatmulGradScale)).unwrap();
    assert!(!report.passed, "{}", report.summary());
}
