use ctfa_core::oracle::{run_check, run_checks, Budget, CHECK_NAMES};

fn assert_all_pass(name: &str) {
    let reports = run_check(name, &Budget::default()).unwrap();
    assert!(!reports.is_empty());
    for r in &reports {
        assert!(
            r.pass,
            "{} {}: theoretical {} empirical {} se {} {:?}",
            r.check, r.case, r.theoretical, r.empirical, r.standard_error, r.detail
        );
    }
}

#[test]
fn noise_variance() {
    assert_all_pass("noise_variance");
}

#[test]
fn variance_doubles_with_inputs() {
    assert_all_pass("variance_scaling");
}

#[test]
fn decomposition_closes() {
    assert_all_pass("decomposition_closure");
}

#[test]
fn delta_mse_matches_closed_forms() {
    assert_all_pass("delta_mse");
}

#[test]
fn feature_aggregation_bias() {
    assert_all_pass("feature_merge_bias");
}

#[test]
fn single_task_bias() {
    assert_all_pass("single_task_bias");
}

#[test]
fn multi_task_bias() {
    assert_all_pass("multi_task_bias");
}

#[test]
fn coefficient_covariance() {
    assert_all_pass("coefficient_covariance");
}

#[test]
fn quick_budget_runs_every_check() {
    let reports = run_checks(&CHECK_NAMES, &Budget::quick()).unwrap();
    let names: std::collections::BTreeSet<&str> = reports.iter().map(|r| r.check.as_str()).collect();
    assert_eq!(names.len(), CHECK_NAMES.len());
    for r in &reports {
        assert!(r.standard_error >= 0.0 && r.replicates > 0);
    }
}

#[test]
fn reports_serialize_with_contract_fields() {
    let reports = run_check("noise_variance", &Budget::quick()).unwrap();
    let json = serde_json::to_value(&reports[0]).unwrap();
    for key in ["check", "theoretical", "empirical", "standard_error", "pass", "replicates"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}
