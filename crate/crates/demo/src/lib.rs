//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string; the `*_json` functions hold the logic so they run natively too.

use ctfa_core::oracle::{
    aggregated_noise_variance, monte_carlo_bias_variance, theoretical_variance, LinearGenerator, McConfig, NoiseModel, Pipeline,
};
use ctfa_core::synth::{evaluate, generate, sweep, Axis, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_CELLS: usize = 400_000;

fn config(tasks: usize, features: usize, samples: usize, sigma: f64) -> Result<SynthConfig, String> {
    if tasks * features * samples > MAX_CELLS {
        return Err(format!("tasks x features x samples is capped at {MAX_CELLS} in the browser"));
    }
    let c = SynthConfig {
        tasks,
        features,
        n_train: samples,
        sigma,
        ..SynthConfig::default()
    };
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

#[derive(Serialize)]
struct RunOutput {
    single_r2: f64,
    phase1_r2: f64,
    phase12_r2: f64,
    phase1_change: f64,
    phase12_change: f64,
    /// Task clusters found, as task indices.
    task_clusters: Vec<Vec<usize>>,
    /// Coefficient group each task was generated from.
    true_groups: Vec<usize>,
    /// Feature count of each cluster's reduced model.
    reduced_features: Vec<usize>,
}

/// Generates one synthetic problem and aggregates it.
#[allow(clippy::too_many_arguments)]
pub fn run_json(
    tasks: usize,
    features: usize,
    samples: usize,
    sigma: f64,
    epsilon1: f64,
    epsilon2: f64,
    seed: u64,
) -> Result<String, String> {
    let c = config(tasks, features, samples, sigma)?;
    let s = generate(&c, seed).map_err(|e| e.to_string())?;
    let (eval, result) = evaluate(&s.train, &s.test, epsilon1, epsilon2, seed).map_err(|e| e.to_string())?;
    let out = RunOutput {
        single_r2: eval.single_r2,
        phase1_r2: eval.phase1_r2,
        phase12_r2: eval.phase12_r2,
        phase1_change: eval.phase1_change,
        phase12_change: eval.phase12_change,
        task_clusters: result.task_partition.clusters().to_vec(),
        true_groups: s.truth.groups.clone(),
        reduced_features: result.reduced_feature_counts(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    single_mse: f64,
    phase1_mse: f64,
    phase12_mse: f64,
    clusters: f64,
    reduced_features: f64,
}

/// Mean metrics over `repeats` seeds at each value of `axis`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_json(
    axis: &str,
    values: &[f64],
    tasks: usize,
    features: usize,
    samples: usize,
    sigma: f64,
    repeats: usize,
    seed: u64,
) -> Result<String, String> {
    let mut base = config(tasks, features, samples, sigma)?;
    if repeats == 0 || repeats * values.len() > 200 {
        return Err("repeats x values must be between 1 and 200".into());
    }
    base.n_repeats = repeats;
    let axis: Axis = axis.parse().map_err(|e: ctfa_core::ConfigError| e.to_string())?;
    let table = sweep(&base, axis, values, seed).map_err(|e| e.to_string())?;
    let metric = |v: f64, m: &str| table.get(v, m).map_or(f64::NAN, |r| r.mean);
    let points: Vec<SweepPoint> = values
        .iter()
        .map(|&v| SweepPoint {
            value: v,
            single_mse: metric(v, "single_mse"),
            phase1_mse: metric(v, "phase1_mse"),
            phase12_mse: metric(v, "phase12_mse"),
            clusters: metric(v, "clusters"),
            reduced_features: metric(v, "reduced_features"),
        })
        .collect();
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct VariancePoint {
    n: usize,
    theory: f64,
    empirical: f64,
    standard_error: f64,
}

/// Prediction variance of a model trained on the mean of `k` targets with
/// equicorrelated noise, by formula and by simulation, at each `n`.
pub fn variance_json(sigma: f64, k: usize, rho: f64, d: usize, ns: &[f64], replicates: usize, seed: u64) -> Result<String, String> {
    if k == 0 || d == 0 || d > 50 || ns.len() > 12 {
        return Err("need 1 <= k, 1 <= d <= 50 and at most 12 sample sizes".into());
    }
    let noise = NoiseModel::equicorrelated(k, sigma, rho).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients = nalgebra::DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
    let cluster: Vec<usize> = (0..k).collect();
    let sigma_bar = aggregated_noise_variance(&noise, &cluster).map_err(|e| e.to_string())?;
    let gen = LinearGenerator::new(coefficients, noise).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::cluster(cluster, d);
    ns.iter()
        .map(|&n| {
            let n = n as usize;
            let theory = theoretical_variance(sigma_bar, n, d).map_err(|e| e.to_string())?;
            let cfg = McConfig {
                n_train: n,
                replicates,
                n_eval: 10_000,
                seed,
            };
            let est = monte_carlo_bias_variance(&gen, &pipeline, 0, &cfg).map_err(|e| e.to_string())?;
            Ok(VariancePoint {
                n,
                theory,
                empirical: est.variance_term,
                standard_error: est.variance_se,
            })
        })
        .collect::<Result<Vec<_>, String>>()
        .and_then(|points| serde_json::to_string(&points).map_err(|e| e.to_string()))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn run(
    tasks: usize,
    features: usize,
    samples: usize,
    sigma: f64,
    epsilon1: f64,
    epsilon2: f64,
    seed: u32,
) -> Result<String, JsError> {
    js(run_json(tasks, features, samples, sigma, epsilon1, epsilon2, seed.into()))
}

#[wasm_bindgen(js_name = sweep)]
#[allow(clippy::too_many_arguments)]
pub fn sweep_js(
    axis: &str,
    values: Vec<f64>,
    tasks: usize,
    features: usize,
    samples: usize,
    sigma: f64,
    repeats: usize,
    seed: u32,
) -> Result<String, JsError> {
    js(sweep_json(axis, &values, tasks, features, samples, sigma, repeats, seed.into()))
}

#[wasm_bindgen(js_name = varianceCurve)]
pub fn variance_curve(sigma: f64, k: usize, rho: f64, d: usize, ns: Vec<f64>, replicates: usize, seed: u32) -> Result<String, JsError> {
    js(variance_json(sigma, k, rho, d, &ns, replicates, seed.into()))
}
