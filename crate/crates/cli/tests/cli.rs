use std::path::Path;
use std::process::{Command, Output};

fn ctfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctfa")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, extra: &[&str]) {
    let out_dir = dir.to_str().unwrap();
    let mut args = vec!["--quiet", "synth", "--tasks", "4", "--features", "6", "--samples", "80", "--out", out_dir];
    args.extend_from_slice(extra);
    let out = ctfa(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn aggregate(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "aggregate",
        "--input",
        input.to_str().unwrap(),
        "--targets",
        "y0,y1,y2,y3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ctfa(&args)
}

#[test]
fn aggregate_writes_result_files() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("data"), &["--sigma", "1"]);
    let out = tmp.path().join("agg");
    let run = aggregate(&tmp.path().join("data/train.csv"), &out, &[]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("R2 single"));
    for f in ["result.json", "summary.json", "summary.txt", "cluster_0.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    let clusters = result["task_clusters"].as_array().unwrap().len();
    for c in 0..clusters {
        assert!(out.join(format!("cluster_{c}.csv")).exists());
    }
}

#[test]
fn huge_epsilon1_gives_one_cluster() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("data"), &[]);
    let out = tmp.path().join("agg");
    let run = aggregate(&tmp.path().join("data/train.csv"), &out, &["--epsilon1", "1e6", "--quiet"]);
    assert_eq!(code(&run), 0);
    assert!(run.stdout.is_empty());
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["task_clusters"].as_array().unwrap().len(), 1);
}

#[test]
fn same_seed_gives_identical_json() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("data"), &[]);
    let input = tmp.path().join("data/train.csv");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&aggregate(&input, &a, &["--seed", "9", "--quiet"])), 0);
    assert_eq!(code(&aggregate(&input, &b, &["--seed", "9", "--quiet"])), 0);
    for f in ["result.json", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_is_reproducible_and_noiseless_fits_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), &["--sigma", "0", "--seed", "3"]);
    synth(&tmp.path().join("b"), &["--sigma", "0", "--seed", "3"]);
    let train = std::fs::read(tmp.path().join("a/train.csv")).unwrap();
    assert_eq!(train, std::fs::read(tmp.path().join("b/train.csv")).unwrap());
    let out = tmp.path().join("agg");
    let run = aggregate(&tmp.path().join("a/train.csv"), &out, &["--epsilon1", "-1e6", "--epsilon2", "-1", "--quiet"]);
    assert_eq!(code(&run), 0);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for t in summary["tasks"].as_array().unwrap() {
        assert!((t["r2_single"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn sweep_over_samples_lowers_single_task_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("sweep.csv");
    let out = ctfa(&[
        "--quiet", "--jobs", "2", "sweep", "--axis", "n_train", "--values", "50,100,250,1000", "--tasks", "3", "--features",
        "10", "--repeats", "3", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut single: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("single_mse"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    single.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    assert_eq!(single.len(), 4);
    assert!(single.windows(2).all(|w| w[1].1 < w[0].1), "{single:?}");
}

#[test]
fn verify_passes_and_reports_json() {
    let out = ctfa(&["--quiet", "verify", "--checks", "noise_variance,coefficient_covariance"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(reports.as_array().unwrap().iter().all(|r| r["pass"] == true));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = aggregate(&tmp.path().join("nope.csv"), &tmp.path().join("x"), &[]);
    assert_eq!(code(&missing), 4);

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "x0,y0,y1,y2,y3\n1,2,3,4,oops\n2,3,4,5,6\n").unwrap();
    assert_eq!(code(&aggregate(&bad, &tmp.path().join("x"), &[])), 1);

    assert_eq!(code(&ctfa(&["sweep", "--axis", "bogus", "--values", "1"])), 1);
    assert_eq!(code(&ctfa(&["verify", "--checks", "nope"])), 1);
    assert_eq!(code(&ctfa(&["frobnicate"])), 1);
    assert_eq!(code(&ctfa(&["--help"])), 0);

}

#[test]
fn homogeneous_variant_reads_per_task_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("h.csv");
    let mut text = String::from("a@y0,b@y0,a@y1,b@y1,y0,y1\n");
    for i in 0..30 {
        let (a0, b0) = ((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
        let (a1, b1) = (a0 + 0.01 * (i as f64).sin(), b0 - 0.01 * (i as f64).cos());
        let noise = 0.05 * (i as f64 * 2.1).sin();
        text.push_str(&format!("{a0},{b0},{a1},{b1},{},{}\n", a0 + 2.0 * b0 + noise, a1 + 2.0 * b1 - noise));
    }
    std::fs::write(&input, text).unwrap();
    let out = tmp.path().join("agg");
    let run = ctfa(&[
        "--quiet", "aggregate", "--input", input.to_str().unwrap(), "--targets", "y0,y1", "--variant", "homogeneous", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["variant"], "homogeneous");
    let header = std::fs::read_to_string(out.join("cluster_0.csv")).unwrap();
    assert!(header.starts_with("a,b,"), "{header}");
}
