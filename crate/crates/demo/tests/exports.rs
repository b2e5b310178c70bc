use ctfa_demo::{run_json, sweep_json, variance_json};
use serde_json::Value;

#[test]
fn run_reports_clusters_and_groups() {
    let v: Value = serde_json::from_str(&run_json(6, 10, 60, 2.0, 0.0, 1e-4, 1).unwrap()).unwrap();
    let clusters = v["task_clusters"].as_array().unwrap();
    let covered: usize = clusters.iter().map(|c| c.as_array().unwrap().len()).sum();
    assert_eq!(covered, 6);
    assert_eq!(v["true_groups"].as_array().unwrap().len(), 6);
    assert_eq!(v["reduced_features"].as_array().unwrap().len(), clusters.len());
}

#[test]
fn sweep_spans_singletons_to_one_cluster() {
    let v: Value = serde_json::from_str(&sweep_json("epsilon1", &[-1e6, 1e6], 4, 6, 40, 2.0, 2, 0).unwrap()).unwrap();
    let pts = v.as_array().unwrap();
    assert_eq!(pts[0]["clusters"], 4.0);
    assert_eq!(pts[1]["clusters"], 1.0);
}

#[test]
fn variance_curve_tracks_formula() {
    let v: Value = serde_json::from_str(&variance_json(1.0, 2, 0.0, 3, &[100.0, 400.0], 200, 5).unwrap()).unwrap();
    for p in v.as_array().unwrap() {
        let (t, e) = (p["theory"].as_f64().unwrap(), p["empirical"].as_f64().unwrap());
        assert!((e - t).abs() / t < 0.3, "{p}");
    }
}

#[test]
fn bad_inputs_are_errors() {
    assert!(run_json(0, 10, 60, 1.0, 0.0, 0.0, 1).is_err());
    assert!(run_json(100, 100, 1000, 1.0, 0.0, 0.0, 1).is_err());
    assert!(sweep_json("nope", &[1.0], 3, 3, 20, 1.0, 1, 0).is_err());
    assert!(variance_json(1.0, 0, 0.0, 3, &[100.0], 100, 0).is_err());
}
