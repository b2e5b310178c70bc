//! Named verification checks comparing closed forms with Monte-Carlo
//! estimates. Each check returns one report per case.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::montecarlo::{
    coefficient_covariance_check, delta_mse_check, expected_mse_difference, fixed_design,
    monte_carlo_bias_variance, McConfig,
};
use super::{
    aggregated_noise_variance, population_bias_decomposition, theoretical_bias_single,
    theoretical_variance, LinearGenerator, NoiseModel, Pipeline,
};
use crate::aggregation::{aggregation_loop, compute_threshold_features, compute_threshold_targets, LoopInput};
use crate::error::{ConfigError, Error};
use crate::linstats::variance;

/// Outcome of one case of a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub case: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub pass: bool,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckReport {
    fn new(check: &str, case: &str, theoretical: f64, empirical: f64, standard_error: f64, pass: bool, replicates: usize) -> Self {
        Self {
            check: check.to_string(),
            case: case.to_string(),
            theoretical,
            empirical,
            standard_error,
            pass: pass && theoretical.is_finite() && empirical.is_finite(),
            replicates,
            detail: None,
        }
    }

    /// Passes when `|empirical − theoretical| ≤ 3 standard_error`.
    pub fn within_se(check: &str, case: &str, theoretical: f64, empirical: f64, se: f64, replicates: usize) -> Self {
        let pass = (empirical - theoretical).abs() <= 3.0 * se;
        Self::new(check, case, theoretical, empirical, se, pass, replicates)
    }

    /// Passes when the relative deviation is at most `tolerance`.
    pub fn relative(check: &str, case: &str, theoretical: f64, empirical: f64, se: f64, tolerance: f64, replicates: usize) -> Self {
        let pass = (empirical - theoretical).abs() <= tolerance * theoretical.abs();
        Self::new(check, case, theoretical, empirical, se, pass, replicates)
            .with_detail(format!("relative tolerance {tolerance}"))
    }

    /// Passes when `empirical ≥ threshold`.
    pub fn at_least(check: &str, case: &str, threshold: f64, empirical: f64, replicates: usize) -> Self {
        Self::new(check, case, threshold, empirical, 0.0, empirical >= threshold, replicates)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn fail_unless(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }
}

/// Replicate and sample budgets; the defaults are the full verification budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Training sets per bias/variance estimate.
    pub replicates: usize,
    /// Training sets for the fixed-design coefficient check.
    pub covariance_replicates: usize,
    pub n_eval: usize,
    /// Fresh samples for population quantities.
    pub n_pop: usize,
    /// Generator draws for the aggregation guarantee checks.
    pub draws: usize,
    /// Training sets per expected-MSE comparison inside a draw.
    pub guarantee_replicates: usize,
    pub seed: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            replicates: 500,
            covariance_replicates: 2000,
            n_eval: 10_000,
            n_pop: 100_000,
            draws: 50,
            guarantee_replicates: 200,
            seed: 20_240_601,
        }
    }
}

impl Budget {
    /// Small budget for smoke runs; statistical tolerances may not hold.
    pub fn quick() -> Self {
        Self {
            replicates: 100,
            covariance_replicates: 400,
            n_eval: 2_000,
            n_pop: 20_000,
            draws: 8,
            guarantee_replicates: 40,
            ..Self::default()
        }
    }

    fn mc(&self, n_train: usize, seed: u64) -> McConfig {
        McConfig {
            n_train,
            replicates: self.replicates,
            n_eval: self.n_eval,
            seed,
        }
    }
}

pub const CHECK_NAMES: [&str; 11] = [
    "noise_variance",
    "variance_formula",
    "variance_scaling",
    "single_task_bias",
    "multi_task_bias",
    "decomposition_closure",
    "coefficient_covariance",
    "delta_mse",
    "feature_merge_bias",
    "task_merge_guarantee",
    "feature_merge_guarantee",
];

/// Runs one named check.
pub fn run_check(name: &str, budget: &Budget) -> Result<Vec<CheckReport>, Error> {
    match name {
        "noise_variance" => noise_variance(budget),
        "variance_formula" => variance_formula(budget),
        "variance_scaling" => variance_scaling(budget),
        "single_task_bias" => single_task_bias(budget),
        "multi_task_bias" => multi_task_bias(budget),
        "decomposition_closure" => decomposition_closure(budget),
        "coefficient_covariance" => coefficient_covariance(budget),
        "delta_mse" => delta_mse(budget),
        "feature_merge_bias" => feature_merge_bias(budget),
        "task_merge_guarantee" => task_merge_guarantee(budget),
        "feature_merge_guarantee" => feature_merge_guarantee(budget),
        other => Err(ConfigError::UnknownCheck(other.to_string()).into()),
    }
}

/// Runs several checks in order; unknown names fail before anything runs.
pub fn run_checks(names: &[&str], budget: &Budget) -> Result<Vec<CheckReport>, Error> {
    if let Some(bad) = names.iter().find(|n| !CHECK_NAMES.contains(n)) {
        return Err(ConfigError::UnknownCheck(bad.to_string()).into());
    }
    let mut out = Vec::new();
    for name in names {
        out.extend(run_check(name, budget)?);
    }
    Ok(out)
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| lo + (hi - lo) * rng.random::<f64>())
}

/// Random partition of `0..d` into `groups` nonempty groups, sorted by first member.
fn random_partition(rng: &mut ChaCha8Rng, d: usize, groups: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(rng);
    let mut out: Vec<Vec<usize>> = idx[..groups].iter().map(|&i| vec![i]).collect();
    for &i in &idx[groups..] {
        let g = rng.random_range(0..groups);
        out[g].push(i);
    }
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

fn noise_variance(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let mut out = Vec::new();
    for (i, (k, rho)) in [(2, 0.0), (2, 1.0), (2, -1.0), (5, 0.5), (3, 0.0)].into_iter().enumerate() {
        let model = NoiseModel::equicorrelated(k, 1.5, rho)?;
        let cluster: Vec<usize> = (0..k).collect();
        let th = aggregated_noise_variance(&model, &cluster)?;
        let e = model.sample(&mut rng_for(b.seed, 10 + i as u64), b.n_pop);
        let means: Vec<f64> = e.row_iter().map(|r| r.mean()).collect();
        let emp = variance(&means);
        let se = th * (2.0 / (b.n_pop as f64 - 1.0)).sqrt() + 1e-12;
        out.push(CheckReport::within_se("noise_variance", &format!("K={k} rho={rho}"), th, emp, se, b.n_pop));
    }
    Ok(out)
}

fn variance_formula(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let mut out = Vec::new();
    let mut case_index = 0u64;
    for (n, tol) in [(200usize, 0.15), (2000, 0.05)] {
        for d in [1usize, 5, 20] {
            for k in [1usize, 2, 5] {
                for rho in [0.0, 0.5, 1.0] {
                    case_index += 1;
                    let seed = b.seed.wrapping_add(1000 + case_index);
                    let w = uniform(&mut rng_for(seed, 1), d, k, -1.0, 1.0);
                    let noise = NoiseModel::equicorrelated(k, 1.0, rho)?;
                    let cluster: Vec<usize> = (0..k).collect();
                    let sigma_bar = aggregated_noise_variance(&noise, &cluster)?;
                    let gen = LinearGenerator::new(w, noise)?;
                    let est = monte_carlo_bias_variance(&gen, &Pipeline::cluster(cluster, d), 0, &b.mc(n, seed))?;
                    let th = theoretical_variance(sigma_bar, n, d)?;
                    out.push(CheckReport::relative(
                        "variance_formula",
                        &format!("n={n} d={d} K={k} rho={rho}"),
                        th,
                        est.variance_term,
                        est.variance_se,
                        tol,
                        est.replicates,
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn variance_scaling(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let n = 500;
    let mut terms = Vec::new();
    for d in [5usize, 10] {
        let seed = b.seed.wrapping_add(2000 + d as u64);
        let w = uniform(&mut rng_for(seed, 1), d, 1, -1.0, 1.0);
        let gen = LinearGenerator::new(w, NoiseModel::independent(vec![1.0])?)?;
        terms.push(monte_carlo_bias_variance(&gen, &Pipeline::single(0, d), 0, &b.mc(n, seed))?);
    }
    let ratio = terms[1].variance_term / terms[0].variance_term;
    let se = ratio
        * ((terms[0].variance_se / terms[0].variance_term).powi(2) + (terms[1].variance_se / terms[1].variance_term).powi(2)).sqrt();
    Ok(vec![CheckReport::relative("variance_scaling", "d=5 -> d=10, n=500", 2.0, ratio, se, 0.15, b.replicates)])
}

fn single_task_bias(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let d = 10;
    let seed = b.seed.wrapping_add(3000);
    let mut rng = rng_for(seed, 1);
    let w = uniform(&mut rng, d, 1, -1.0, 1.0);
    let gen = LinearGenerator::new(w, NoiseModel::independent(vec![1.0])?)?.with_feature_correlation(0.3)?;
    let mut out = Vec::new();
    for p in 0..5u64 {
        let groups = rng.random_range(2..=6);
        let partition = random_partition(&mut rng, d, groups);
        let pipeline = Pipeline::new(vec![0], partition.clone());
        let pop = population_bias_decomposition(&gen, &pipeline, 0, b.n_pop, seed + 100 + p)?;
        let th = theoretical_bias_single(pop.var_f_i, pop.r2_d_iota);
        let est = monte_carlo_bias_variance(&gen, &pipeline, 0, &b.mc(200, seed + p))?;
        let se = est.bias_se.hypot(pop.standard_error);
        out.push(
            CheckReport::within_se("single_task_bias", &format!("partition {partition:?}"), th, est.bias_term, se, est.replicates)
                .with_detail(format!("R2_pop = {:.4}", pop.r2_d_iota)),
        );
    }
    Ok(out)
}

fn multi_task_bias(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let d = 10;
    let mut out = Vec::new();
    for g in 0..10u64 {
        let seed = b.seed.wrapping_add(4000 + g);
        let mut rng = rng_for(seed, 1);
        let w0 = uniform(&mut rng, d, 1, -1.0, 1.0);
        let alpha = rng.random_range(-1.0..1.0);
        let w1 = &w0 * alpha + uniform(&mut rng, d, 1, -0.5, 0.5);
        let w = DMatrix::from_columns(&[w0.column(0).into_owned(), w1.column(0).into_owned()]);
        let gen = LinearGenerator::new(w, NoiseModel::independent(vec![1.0, 1.0])?)?.with_feature_correlation(0.2)?;
        let groups = rng.random_range(2..=6);
        let partition = random_partition(&mut rng, d, groups);
        let task = (g % 2) as usize;
        let pipeline = Pipeline::new(vec![0, 1], partition);
        let pop = population_bias_decomposition(&gen, &pipeline, task, b.n_pop, seed + 100)?;
        let est = monte_carlo_bias_variance(&gen, &pipeline, task, &b.mc(200, seed))?;
        let se = est.bias_se.hypot(pop.standard_error);
        out.push(
            CheckReport::within_se("multi_task_bias", &format!("generator {g}, task {task}"), pop.bias_value, est.bias_term, se, est.replicates)
                .with_detail(format!(
                    "partial_cov = {:.4}, plain_cov = {:.4}, R2 = {:.4}",
                    pop.partial_cov, pop.plain_cov, pop.r2_d_iota
                )),
        );
    }
    Ok(out)
}

fn decomposition_closure(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let d = 6;
    let seed = b.seed.wrapping_add(5000);
    let w = uniform(&mut rng_for(seed, 1), d, 3, -1.0, 1.0);
    let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 1.0]);
    let gen = LinearGenerator::new(w, NoiseModel::new(vec![1.0, 2.0, 0.5], c)?)?;
    let cases = [
        ("single task, all features", Pipeline::single(0, d), 0),
        ("single task, merged features", Pipeline::new(vec![1], vec![vec![0, 1], vec![2, 3, 4], vec![5]]), 1),
        ("two-task cluster", Pipeline::cluster(vec![0, 1], d), 0),
        ("three-task cluster, merged features", Pipeline::new(vec![0, 1, 2], vec![vec![0, 5], vec![1, 2], vec![3], vec![4]]), 2),
    ];
    let mut out = Vec::new();
    for (i, (name, p, task)) in cases.into_iter().enumerate() {
        let est = monte_carlo_bias_variance(&gen, &p, task, &b.mc(150, seed + i as u64))?;
        out.push(CheckReport::within_se(
            "decomposition_closure",
            name,
            est.total_mse,
            est.variance_term + est.bias_term + est.noise_term,
            est.closure_se(),
            est.replicates,
        ));
    }
    Ok(out)
}

fn coefficient_covariance(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let n = 200;
    let mut out = Vec::new();
    for (i, (d, rho, ortho)) in [(2usize, 0.0, true), (5, 0.0, true), (2, 0.5, false), (5, 0.5, false)]
        .into_iter()
        .enumerate()
    {
        let seed = b.seed.wrapping_add(6000 + i as u64);
        let x = fixed_design(n, d, rho, ortho, seed)?;
        let w: Vec<f64> = (0..d).map(|k| 1.0 - 0.3 * k as f64).collect();
        let rep = coefficient_covariance_check(&x, &w, 1.0, b.covariance_replicates, seed + 1)?;
        let design = if ortho { "orthonormal" } else { "correlated rho=0.5" };
        let mut report = CheckReport::new(
            "coefficient_covariance",
            &format!("{design}, D={d}"),
            0.10,
            rep.max_relative_deviation,
            (2.0 / rep.replicates as f64).sqrt(),
            rep.max_relative_deviation <= 0.10,
            rep.replicates,
        )
        .with_detail("max relative deviation; theoretical column holds the tolerance");
        if !ortho {
            // a positive correlation between inputs makes their coefficients anti-correlated
            let signs_ok = rep.theoretical[(0, 1)] < 0.0 && rep.empirical[(0, 1)] < 0.0;
            report = report.fail_unless(signs_ok);
        }
        out.push(report);
    }
    Ok(out)
}

fn delta_mse(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let d = 5;
    let n = 200;
    let seed = b.seed.wrapping_add(7000);
    let mut rng = rng_for(seed, 1);
    let w0 = uniform(&mut rng, d, 1, -1.0, 1.0);
    let w1 = &w0 + uniform(&mut rng, d, 1, -0.3, 0.3);
    let pair = DMatrix::from_columns(&[w0.column(0).into_owned(), w1.column(0).into_owned()]);
    let same = DMatrix::from_columns(&[w0.column(0).into_owned(), w0.column(0).into_owned()]);
    let cases = [
        ("independent noise", LinearGenerator::new(pair.clone(), NoiseModel::equicorrelated(2, 1.0, 0.0)?)?),
        ("identical noise", LinearGenerator::new(pair, NoiseModel::equicorrelated(2, 1.0, 1.0)?)?),
        ("identical tasks", LinearGenerator::new(same, NoiseModel::equicorrelated(2, 1.0, 0.0)?)?),
    ];
    let mut out = Vec::new();
    for (i, (name, gen)) in cases.into_iter().enumerate() {
        let rep = delta_mse_check(&gen, &[0, 1], 0, &b.mc(n, seed + i as u64), b.n_pop)?;
        for mut r in [rep.delta_variance, rep.delta_bias] {
            r.case = format!("{name}: {}", r.check);
            r.check = "delta_mse".into();
            out.push(r);
        }
    }
    Ok(out)
}

fn feature_merge_bias(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let d = 8;
    let n = 200;
    let sigma = 1.0;
    let seed = b.seed.wrapping_add(8000);
    let mut rng = rng_for(seed, 1);
    let pairs = [0.9, -0.6, 0.4, 0.7];
    let w = DMatrix::from_fn(d, 1, |k, _| pairs[k / 2] + 0.02 * rng.sample::<f64, _>(StandardNormal));
    let gen = LinearGenerator::new(w, NoiseModel::independent(vec![sigma])?)?;
    let full = Pipeline::single(0, d);
    let full_pop = population_bias_decomposition(&gen, &full, 0, b.n_pop, seed + 2)?;

    let mut candidates = vec![
        vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]],
        vec![vec![0, 1], vec![2], vec![3], vec![4], vec![5], vec![6], vec![7]],
        vec![vec![0, 1, 2, 3], vec![4, 5], vec![6, 7]],
    ];
    for _ in 0..4 {
        let groups = rng.random_range(4..=7);
        candidates.push(random_partition(&mut rng, d, groups));
    }
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, partition) in candidates.into_iter().enumerate() {
        let agg = Pipeline::new(vec![0], partition.clone());
        let pop = population_bias_decomposition(&gen, &agg, 0, b.n_pop, seed + 2)?;
        let variance_gain = sigma * sigma / (n as f64 - 1.0) * (d - partition.len()) as f64;
        let bias_loss = full_pop.var_f_i * (full_pop.r2_d_iota - pop.r2_d_iota);
        if variance_gain < bias_loss {
            skipped += 1;
            continue;
        }
        let cfg = McConfig {
            n_train: n,
            replicates: b.guarantee_replicates,
            n_eval: b.n_eval,
            seed: seed + 10 + i as u64,
        };
        let diff = expected_mse_difference(&gen, &agg, &full, 0, &cfg, b.n_pop)?;
        let pass = diff.difference <= 3.0 * diff.standard_error;
        out.push(
            CheckReport::new("feature_merge_bias", &format!("partition {partition:?}"), 0.0, diff.difference, diff.standard_error, pass, diff.replicates)
                .with_detail(format!(
                    "MSE(aggregated) - MSE(full); population gain {variance_gain:.5} >= loss {bias_loss:.5}"
                )),
        );
    }
    if out.is_empty() {
        out.push(CheckReport::new("feature_merge_bias", "no partition satisfies the condition", 0.0, f64::NAN, 0.0, false, 0));
    } else if skipped > 0 {
        let last = out.len() - 1;
        out[last].detail = Some(format!("{}; {skipped} candidate(s) without the condition skipped", out[last].detail.clone().unwrap_or_default()));
    }
    Ok(out)
}

fn centered_sample(gen: &LinearGenerator, rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (mut x, _, mut y) = gen.sample(rng, n);
    for m in [&mut x, &mut y] {
        for mut c in m.column_iter_mut() {
            let mu = c.mean();
            c.add_scalar_mut(-mu);
        }
    }
    (x, y)
}

fn col(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Does aggregated pipeline `agg` avoid worsening the expected MSE of
/// `task` compared with `base`, within 3 standard errors?
fn no_worse(gen: &LinearGenerator, agg: &Pipeline, base: &Pipeline, task: usize, cfg: &McConfig, n_pop: usize) -> Result<bool, Error> {
    let diff = expected_mse_difference(gen, agg, base, task, cfg, n_pop)?;
    // roundoff allowance for models with identical column spaces
    Ok(diff.difference <= 3.0 * diff.standard_error + 1e-10 * diff.mse_b)
}

fn task_merge_guarantee(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let (d, n) = (10, 200);
    let mut accepted = 0;
    let mut good = 0;
    let mut orthogonal_rejected = 0;
    for s in 0..b.draws as u64 {
        let seed = b.seed.wrapping_add(9000 + s);
        let mut rng = rng_for(seed, 1);

        // related tasks: the second is a perturbation of the first
        let w0 = uniform(&mut rng, d, 1, -1.0, 1.0);
        let tau = 0.2 * rng.random::<f64>();
        let w1 = DMatrix::from_fn(d, 1, |k, _| w0[k] + tau * rng.sample::<f64, _>(StandardNormal));
        let w = DMatrix::from_columns(&[w0.column(0).into_owned(), w1.column(0).into_owned()]);
        let gen = LinearGenerator::new(w, NoiseModel::independent(vec![1.0, 1.0])?)?;
        let (x, y) = centered_sample(&gen, &mut rng, n);
        let test = compute_threshold_targets(&x, &col(&y, 0), &col(&y, 1), 0.0)?;
        if test.accepted {
            accepted += 1;
            let cfg = McConfig {
                n_train: n,
                replicates: b.guarantee_replicates,
                n_eval: b.n_eval,
                seed: seed + 1,
            };
            let agg = Pipeline::cluster(vec![0, 1], d);
            let ok = no_worse(&gen, &agg, &Pipeline::single(0, d), 0, &cfg, b.n_pop)?
                && no_worse(&gen, &agg, &Pipeline::single(1, d), 1, &cfg, b.n_pop)?;
            good += usize::from(ok);
        }

        // orthogonal signals on disjoint feature supports
        let w = DMatrix::from_fn(d, 2, |k, t| {
            let on = (k < d / 2) == (t == 0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            if on {
                sign * (0.5 + 0.5 * rng.random::<f64>())
            } else {
                0.0
            }
        });
        let gen = LinearGenerator::new(w, NoiseModel::independent(vec![0.5, 0.5])?)?;
        let (x, y) = centered_sample(&gen, &mut rng, n);
        let test = compute_threshold_targets(&x, &col(&y, 0), &col(&y, 1), 0.0)?;
        orthogonal_rejected += usize::from(!test.accepted);
    }
    let frac_good = if accepted > 0 { good as f64 / accepted as f64 } else { f64::NAN };
    Ok(vec![
        CheckReport::at_least("task_merge_guarantee", "accepted merges do not worsen member MSE", 0.9, frac_good, b.draws)
            .with_detail(format!("{good} of {accepted} accepted draws no worse (of {} draws)", b.draws)),
        CheckReport::at_least(
            "task_merge_guarantee",
            "orthogonal-signal merges rejected",
            0.9,
            orthogonal_rejected as f64 / b.draws as f64,
            b.draws,
        )
        .with_detail(format!("{orthogonal_rejected} of {} draws rejected", b.draws)),
    ])
}

fn feature_merge_guarantee(b: &Budget) -> Result<Vec<CheckReport>, Error> {
    let (d, n) = (8, 200);
    let mut with_merges = 0;
    let mut good = 0;
    let mut antisymmetric_rejected = 0;
    for s in 0..b.draws as u64 {
        let seed = b.seed.wrapping_add(10_000 + s);
        let mut rng = rng_for(seed, 1);

        // one to three features are exact copies of others
        let mut factor = DMatrix::<f64>::identity(d, d);
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let copies = rng.random_range(1..=3);
        for c in 0..copies {
            let (src, dst) = (order[2 * c], order[2 * c + 1]);
            let row = factor.row(src).into_owned();
            factor.set_row(dst, &row);
        }
        let w = uniform(&mut rng, d, 1, -1.0, 1.0);
        let gen = LinearGenerator::with_feature_factor(w, NoiseModel::independent(vec![1.0])?, factor)?;
        let (x, y) = centered_sample(&gen, &mut rng, n);
        let order: Vec<usize> = (0..d).collect();
        let target = col(&y, 0);
        let out = aggregation_loop(&order, LoopInput::Features { features: &x, target: &target }, 0.0)?;
        if out.clusters.len() < d {
            with_merges += 1;
            let cfg = McConfig {
                n_train: n,
                replicates: b.guarantee_replicates,
                n_eval: b.n_eval,
                seed: seed + 1,
            };
            let agg = Pipeline::new(vec![0], out.clusters);
            good += usize::from(no_worse(&gen, &agg, &Pipeline::single(0, d), 0, &cfg, b.n_pop)?);
        }

        // y = x_0 − x_1: averaging the pair cancels the signal
        let w = DMatrix::from_fn(d, 1, |k, _| match k {
            0 => 1.0,
            1 => -1.0,
            _ => 0.0,
        });
        let gen = LinearGenerator::new(w, NoiseModel::independent(vec![0.1])?)?;
        let (x, y) = centered_sample(&gen, &mut rng, n);
        let test = compute_threshold_features(&x, &col(&y, 0), 0, 1, 0.0)?;
        antisymmetric_rejected += usize::from(!test.accepted);
    }
    let frac_good = if with_merges > 0 { good as f64 / with_merges as f64 } else { f64::NAN };
    Ok(vec![
        CheckReport::at_least("feature_merge_guarantee", "accepted feature merges do not worsen MSE", 0.9, frac_good, b.draws)
            .with_detail(format!("{good} of {with_merges} draws with merges no worse (of {} draws)", b.draws)),
        CheckReport::at_least(
            "feature_merge_guarantee",
            "antisymmetric merge rejected",
            1.0,
            antisymmetric_rejected as f64 / b.draws as f64,
            b.draws,
        )
        .with_detail(format!("{antisymmetric_rejected} of {} draws rejected", b.draws)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_check_is_an_error() {
        assert!(matches!(
            run_check("nope", &Budget::quick()),
            Err(Error::Config(ConfigError::UnknownCheck(_)))
        ));
        assert!(run_checks(&["noise_variance", "nope"], &Budget::quick()).is_err());
    }

    #[test]
    fn partitions_cover_features() {
        let mut rng = rng_for(1, 2);
        for groups in 1..=6 {
            let p = random_partition(&mut rng, 6, groups);
            assert_eq!(p.len(), groups);
            crate::data::validate_cover(&p, 6).unwrap();
        }
    }

    #[test]
    fn noise_variance_check_passes() {
        let reports = run_check("noise_variance", &Budget::default()).unwrap();
        assert!(reports.iter().all(|r| r.pass), "{reports:#?}");
    }

    #[test]
    fn report_serializes_contract_fields() {
        let r = CheckReport::within_se("x", "case", 1.0, 1.1, 0.05, 10);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["check", "theoretical", "empirical", "standard_error", "pass", "replicates"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(r.pass);
        assert!(!CheckReport::within_se("x", "c", 1.0, f64::NAN, 1.0, 1).pass);
    }
}
