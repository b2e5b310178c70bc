use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use ctfa_core::aggregation::{nonlin_ctfa, nonlin_ctfa_homogeneous};
use ctfa_core::data::{
    apply_partition, center, cluster_feature_matrix, load_dataset, save_dataset, AggregationResult, ColumnRole, Dataset,
    Schema,
};
use ctfa_core::linstats::{ols_fit, r2_score};
use ctfa_core::oracle::{run_checks, Budget, CHECK_NAMES};
use ctfa_core::synth::{generate, sweep as run_sweep, Axis};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::args::{AggregateArgs, SweepArgs, SynthArgs, VariantArg, VerifyArgs};
use crate::exit::{io, Validation, VerificationFailed};

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).map_err(|e| io(path, e))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).map_err(|e| io(path, e))
}

fn schema_for(a: &AggregateArgs) -> anyhow::Result<Schema> {
    let mut schema = match &a.schema {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Validation(format!("{}: {e}", path.display())))?
        }
        None => {
            if a.targets.is_empty() {
                return Err(Validation("give the target columns with --targets or a --schema file".into()).into());
            }
            let mut s = Schema::new().with_default(ColumnRole::Feature).targets(a.targets.iter().cloned());
            for c in &a.ignore {
                s = s.with_role(c.clone(), ColumnRole::Ignore);
            }
            s
        }
    };
    if a.variant == VariantArg::Homogeneous {
        schema = schema.per_task();
    }
    Ok(schema)
}

#[derive(Debug, Serialize)]
struct ClusterSummary {
    tasks: Vec<String>,
    features: usize,
    feature_groups: Vec<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct TaskSummary {
    task: String,
    cluster: usize,
    r2_single: Option<f64>,
    r2_aggregated: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    seed: u64,
    epsilon1: f64,
    epsilon2: f64,
    original_tasks: usize,
    original_features: usize,
    constant_columns: usize,
    clusters: Vec<ClusterSummary>,
    tasks: Vec<TaskSummary>,
}

/// In-sample `R²` of `predictions` against a centered target; `None` when
/// the target is constant.
fn score(target: &[f64], predictions: &[f64]) -> Option<f64> {
    let sst: f64 = target.iter().map(|v| v * v).sum();
    let sse: f64 = target.iter().zip(predictions).map(|(a, b)| (a - b).powi(2)).sum();
    (sst > 0.0).then(|| 1.0 - sse / sst)
}

fn group_name(names: &[String], members: &[usize]) -> String {
    match members {
        [one] => names[*one].clone(),
        _ => format!("mean({})", members.iter().map(|&m| names[m].as_str()).collect::<Vec<_>>().join(";")),
    }
}

fn summarize(data: &Dataset, result: &AggregationResult, constant_columns: usize) -> anyhow::Result<Summary> {
    let reduced = apply_partition(data, result)?;
    let feature_names = data.feature_names();
    let target_names = data.target_names();
    let mut tasks = Vec::with_capacity(data.n_tasks());
    let mut clusters = Vec::with_capacity(reduced.len());
    for (c, (r, fp)) in reduced.iter().zip(&result.feature_partitions).enumerate() {
        let fit = ols_fit(&r.features, &r.target)?;
        let predictions = fit.predict(&r.features);
        for &t in &r.members {
            let own = cluster_feature_matrix(data, result.variant, &[t])?;
            let y = data.target(t);
            tasks.push(TaskSummary {
                task: target_names[t].clone(),
                cluster: c,
                r2_single: r2_score(&own, &y).ok(),
                r2_aggregated: score(&y, &predictions),
            });
        }
        clusters.push(ClusterSummary {
            tasks: r.members.iter().map(|&t| target_names[t].clone()).collect(),
            features: fp.len(),
            feature_groups: fp
                .clusters()
                .iter()
                .map(|g| g.iter().map(|&f| feature_names[f].clone()).collect())
                .collect(),
        });
    }
    tasks.sort_by(|a, b| a.task.cmp(&b.task));
    Ok(Summary {
        seed: result.seed,
        epsilon1: result.epsilon1,
        epsilon2: result.epsilon2,
        original_tasks: data.n_tasks(),
        original_features: data.n_features(),
        constant_columns,
        clusters,
        tasks,
    })
}

fn fmt_r2(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"))
}

fn render(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} tasks -> {} clusters (seed {}, epsilon1 {}, epsilon2 {})",
        summary.original_tasks,
        summary.clusters.len(),
        summary.seed,
        summary.epsilon1,
        summary.epsilon2
    );
    for (c, cl) in summary.clusters.iter().enumerate() {
        let _ = writeln!(
            s,
            "  cluster {c}: {} task(s) [{}], {} -> {} features",
            cl.tasks.len(),
            cl.tasks.join(", "),
            summary.original_features,
            cl.features
        );
    }
    let _ = writeln!(s, "  task                 cluster  R2 single  R2 aggregated");
    for t in &summary.tasks {
        let _ = writeln!(
            s,
            "  {:<20} {:>7}  {:>9}  {:>13}",
            t.task,
            t.cluster,
            fmt_r2(t.r2_single),
            fmt_r2(t.r2_aggregated)
        );
    }
    if summary.constant_columns > 0 {
        let _ = writeln!(s, "  note: {} constant column(s) in the input", summary.constant_columns);
    }
    s
}

pub fn aggregate(a: &AggregateArgs, quiet: bool) -> anyhow::Result<()> {
    let schema = schema_for(a)?;
    let raw = load_dataset(&a.input, &schema)?;
    let centered = center(&raw);
    let data = &centered.dataset;
    let result = match a.variant {
        VariantArg::Shared => nonlin_ctfa(data, a.epsilon1, a.epsilon2, a.seed)?,
        VariantArg::Homogeneous => nonlin_ctfa_homogeneous(data, a.epsilon1, a.seed)?,
    };

    create_dir(&a.out)?;
    write_file(&a.out.join("result.json"), &result.to_json())?;
    let feature_names = raw.feature_names();
    let target_names = raw.target_names();
    for (c, (r, fp)) in apply_partition(&raw, &result)?
        .into_iter()
        .zip(&result.feature_partitions)
        .enumerate()
    {
        let names = fp.clusters().iter().map(|g| group_name(feature_names, g)).collect();
        let target = group_name(target_names, &r.members);
        let n = r.target.len();
        let reduced = Dataset::new(r.features, DMatrix::from_vec(n, 1, r.target), names, vec![target])?;
        save_dataset(a.out.join(format!("cluster_{c}.csv")), &reduced)?;
    }
    let summary = summarize(data, &result, centered.constant_columns.len())?;
    let json = serde_json::to_string_pretty(&summary).context("summary serializes")?;
    write_file(&a.out.join("summary.json"), &json)?;
    let text = render(&summary);
    write_file(&a.out.join("summary.txt"), &text)?;
    if !quiet {
        print!("{text}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Truth {
    seed: u64,
    groups: Vec<usize>,
    /// One row of `D` coefficients per task.
    coefficients: Vec<Vec<f64>>,
}

pub fn synth(a: &SynthArgs, quiet: bool) -> anyhow::Result<()> {
    let config = a.generator.resolve()?;
    let s = generate(&config, a.seed)?;
    create_dir(&a.out)?;
    save_dataset(a.out.join("train.csv"), &s.train)?;
    save_dataset(a.out.join("test.csv"), &s.test)?;
    let truth = Truth {
        seed: a.seed,
        groups: s.truth.groups.clone(),
        coefficients: s.truth.coefficients.column_iter().map(|c| c.iter().copied().collect()).collect(),
    };
    write_file(&a.out.join("truth.json"), &serde_json::to_string_pretty(&truth)?)?;
    write_file(&a.out.join("config.json"), &serde_json::to_string_pretty(&config)?)?;
    if !quiet {
        println!(
            "wrote {} train and {} test rows, {} tasks x {} features, to {}",
            config.n_train,
            config.n_test(),
            config.tasks,
            config.features,
            a.out.display()
        );
    }
    Ok(())
}

pub fn sweep(a: &SweepArgs, quiet: bool) -> anyhow::Result<()> {
    let base = a.generator.resolve()?;
    let axis: Axis = a.axis.parse()?;
    let table = run_sweep(&base, axis, &a.values, a.seed)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).context("sweep table serializes")?;
    match &a.out {
        Some(path) => {
            fs::write(path, &buf).map_err(|e| io(path, e))?;
            if !quiet {
                println!("{} rows for axis {} written to {}", table.rows.len(), axis.name(), path.display());
            }
        }
        None => std::io::stdout().write_all(&buf).context("writing to stdout")?,
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs, quiet: bool) -> anyhow::Result<()> {
    let names: Vec<&str> = if a.checks.is_empty() {
        CHECK_NAMES.to_vec()
    } else {
        a.checks.iter().map(String::as_str).collect()
    };
    let mut budget = if a.quick { Budget::quick() } else { Budget::default() };
    budget.seed = a.seed;
    if let Some(r) = a.replicates {
        budget.replicates = r;
    }
    if let Some(d) = a.draws {
        budget.draws = d;
    }
    let reports = run_checks(&names, &budget)?;
    let json = serde_json::to_string_pretty(&reports)?;
    match &a.out {
        Some(path) => write_file(path, &json)?,
        None => println!("{json}"),
    }
    if !quiet {
        for r in &reports {
            eprintln!(
                "{} {} [{}]: theoretical {:.6} empirical {:.6} se {:.6}",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.case,
                r.theoretical,
                r.empirical,
                r.standard_error
            );
        }
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(VerificationFailed(failed).into());
    }
    Ok(())
}
