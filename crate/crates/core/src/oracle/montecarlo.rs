//! Brute-force estimators: train a pipeline on many independent training
//! sets and measure variance, bias, and MSE on fresh evaluation points.
//!
//! Models are fitted on raw (uncentered) generator samples without an
//! intercept; generators are zero mean, so this is the model the
//! asymptotic formulas describe.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{aggregated_noise_variance, population_bias_decomposition, stream_rng, standard_normal, theoretical_variance};
use super::{LinearGenerator, Pipeline};
use crate::error::{Error, StatsError};
use crate::linstats::{mean, ols_fit, variance, Design};
use crate::oracle::CheckReport;

/// Budget of one Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_train: usize,
    pub replicates: usize,
    pub n_eval: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            replicates: 500,
            n_eval: 10_000,
            seed: 0,
        }
    }
}

/// Monte-Carlo split of the expected test MSE of one task.
///
/// `bias_term` is debiased for the finite number of replicates and can be
/// slightly negative when the true bias is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVarianceEstimate {
    pub variance_term: f64,
    pub bias_term: f64,
    /// Known noise variance of the evaluated task.
    pub noise_term: f64,
    pub total_mse: f64,
    pub variance_se: f64,
    pub bias_se: f64,
    /// Sampling error of the noise actually drawn at the evaluation points.
    pub noise_se: f64,
    pub total_se: f64,
    pub replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl BiasVarianceEstimate {
    /// `total − (variance + bias + noise)`.
    pub fn closure_gap(&self) -> f64 {
        self.total_mse - (self.variance_term + self.bias_term + self.noise_term)
    }

    pub fn closure_se(&self) -> f64 {
        (self.variance_se.powi(2) + self.bias_se.powi(2) + self.noise_se.powi(2) + self.total_se.powi(2)).sqrt()
    }
}

fn map_replicates<T: Send>(count: usize, f: impl Fn(usize) -> Result<T, Error> + Sync + Send) -> Result<Vec<T>, Error> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// `d x R` coefficients of `pipeline` trained on `replicates` fresh training sets.
fn train_replicates(gen: &LinearGenerator, pipeline: &Pipeline, cfg: &McConfig) -> Result<DMatrix<f64>, Error> {
    let betas = map_replicates(cfg.replicates, |r| {
        let mut rng = stream_rng(cfg.seed, r as u64 + 1);
        let (x, _, y) = gen.sample(&mut rng, cfg.n_train);
        Ok(ols_fit(&pipeline.phi(&x), &pipeline.psi(&y))?.coefficients)
    })?;
    let cols: Vec<DVector<f64>> = betas.into_iter().map(DVector::from_vec).collect();
    Ok(DMatrix::from_columns(&cols))
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        0.0
    } else {
        variance(values).sqrt()
    }
}

/// Sum and sum of squares, for means and standard errors over eval points.
#[derive(Default)]
struct Moment {
    sum: f64,
    sum_sq: f64,
}

impl Moment {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self, n: f64) -> f64 {
        self.sum / n
    }

    /// Standard error of the mean.
    fn se(&self, n: f64) -> f64 {
        let m = self.sum / n;
        ((self.sum_sq / n - m * m).max(0.0) * n / (n - 1.0)).sqrt() / n.sqrt()
    }
}

/// Trains `pipeline` on `cfg.replicates` independent training sets and
/// splits the expected squared error on `task` into variance, squared bias
/// of the average model, and noise.
pub fn monte_carlo_bias_variance(
    gen: &LinearGenerator,
    pipeline: &Pipeline,
    task: usize,
    cfg: &McConfig,
) -> Result<BiasVarianceEstimate, Error> {
    pipeline.validate(gen, task)?;
    if cfg.replicates < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: cfg.replicates }.into());
    }
    if cfg.n_train < 2 || cfg.n_eval < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: cfg.n_train.min(cfg.n_eval) }.into());
    }
    let warning = (cfg.replicates < 100 || cfg.n_eval < 10_000).then(|| {
        format!(
            "budget below 100 replicates / 10000 eval points ({} / {}); standard errors are rough",
            cfg.replicates, cfg.n_eval
        )
    });
    let betas = train_replicates(gen, pipeline, cfg)?;
    let r_count = cfg.replicates;
    let rf = r_count as f64;

    let sigma = gen.noise.sigmas()[task];
    let mut rng = stream_rng(cfg.seed, 0);
    let x_eval = gen.sample_features(&mut rng, cfg.n_eval);
    let f_eval: Vec<f64> = (&x_eval * gen.coefficients.column(task)).iter().copied().collect();
    let y_eval: Vec<f64> = f_eval
        .iter()
        .map(|f| f + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let phi_eval = pipeline.phi(&x_eval);

    let mut spread = Moment::default(); // prediction variance over replicates at x
    let mut sq_bias = Moment::default(); // (M̄(x) − f(x))²
    let mut loss = Moment::default(); // mean over replicates of (pred − y)²
    let mut noise = Moment::default(); // (y − f)²
    let mut t = vec![0.0; r_count]; // Σ_x (pred_r − M̄)²
    let mut ab = vec![0.0; r_count]; // Σ_x (M̄ − f)(pred_r − M̄)
    let mut e = vec![0.0; r_count]; // Σ_x (pred_r − y)²

    const CHUNK: usize = 512;
    let mut start = 0;
    while start < cfg.n_eval {
        let rows = CHUNK.min(cfg.n_eval - start);
        let preds = phi_eval.rows(start, rows) * &betas;
        for i in 0..rows {
            let (f, y) = (f_eval[start + i], y_eval[start + i]);
            let p = preds.row(i);
            let m = p.mean();
            let a = m - f;
            let mut ss = 0.0;
            let mut lx = 0.0;
            for r in 0..r_count {
                let b = p[r] - m;
                ss += b * b;
                t[r] += b * b;
                ab[r] += a * b;
                let err = p[r] - y;
                e[r] += err * err;
                lx += err * err;
            }
            spread.push(ss / (rf - 1.0));
            sq_bias.push(a * a);
            loss.push(lx / rf);
            noise.push((y - f) * (y - f));
        }
        start += rows;
    }

    let ne = cfg.n_eval as f64;
    t.iter_mut().for_each(|v| *v /= ne);
    ab.iter_mut().for_each(|v| *v /= ne);
    e.iter_mut().for_each(|v| *v /= ne);

    let variance_term = spread.mean(ne);
    let variance_se = (rf / (rf - 1.0) * sd(&t) / rf.sqrt()).hypot(spread.se(ne));

    // M̄ carries variance/R of replicate noise; remove it, and jackknife the result
    let raw_bias = sq_bias.mean(ne);
    let bias_term = raw_bias - variance_term / rf;
    let s_total: f64 = t.iter().sum();
    let loo: Vec<f64> = (0..r_count)
        .map(|r| {
            let var_loo = (s_total - rf / (rf - 1.0) * t[r]) / (rf - 2.0);
            let raw_loo = raw_bias - 2.0 * ab[r] / (rf - 1.0) + t[r] / ((rf - 1.0) * (rf - 1.0));
            raw_loo - var_loo / (rf - 1.0)
        })
        .collect();
    let loo_mean = mean(&loo);
    let jack = ((rf - 1.0) / rf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    let bias_se = jack.hypot(sq_bias.se(ne));

    let total_mse = loss.mean(ne);
    let total_se = (sd(&e) / rf.sqrt()).hypot(loss.se(ne));

    Ok(BiasVarianceEstimate {
        variance_term,
        bias_term,
        noise_term: sigma * sigma,
        total_mse,
        variance_se,
        bias_se,
        noise_se: noise.se(ne),
        total_se,
        replicates: r_count,
        warning,
    })
}

/// Equicorrelated Gaussian design with centered columns; with `orthonormal`
/// the columns are orthogonalized and scaled to unit sample variance.
pub fn fixed_design(n: usize, d: usize, rho: f64, orthonormal: bool, seed: u64) -> Result<DMatrix<f64>, Error> {
    let c = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
    let factor = crate::synth::correlation_factor(&c)?;
    let mut rng = stream_rng(seed, 0);
    let mut x = standard_normal(&mut rng, n, d) * factor.transpose();
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    if orthonormal {
        if n <= d {
            return Err(StatsError::TooFewSamples { needed: d + 1, got: n }.into());
        }
        x = x.qr().q() * ((n as f64) - 1.0).sqrt();
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientCovarianceReport {
    /// Largest `|Ĉ_ij − C_ij| / sqrt(C_ii C_jj)` over entries with
    /// `|C_ij| > 1e-6 · max_k C_kk`.
    pub max_relative_deviation: f64,
    #[serde(skip)]
    pub empirical: DMatrix<f64>,
    #[serde(skip)]
    pub theoretical: DMatrix<f64>,
    pub replicates: usize,
}

/// Refits OLS on a fixed design with redrawn noise and compares the
/// coefficients' covariance with `σ²/(n−1)` times the precision matrix of
/// the design. Second moments are taken about zero, i.e. the design is
/// expected to be centered.
pub fn coefficient_covariance_check(
    x: &DMatrix<f64>,
    coefficients: &[f64],
    sigma: f64,
    replicates: usize,
    seed: u64,
) -> Result<CoefficientCovarianceReport, Error> {
    let (n, d) = x.shape();
    if coefficients.len() != d {
        return Err(StatsError::Shape(format!("{} coefficients for {d} columns", coefficients.len())).into());
    }
    if replicates < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: replicates }.into());
    }
    let nm1 = n as f64 - 1.0;
    let cov_x = x.transpose() * x / nm1;
    let chol = cov_x
        .cholesky()
        .filter(|c| {
            let diag = c.l_dirty().diagonal();
            diag.min() > 1e-7 * diag.max()
        })
        .ok_or(StatsError::Singular("design second-moment matrix"))?;
    let precision = chol.inverse();
    let theoretical = precision * (sigma * sigma / nm1);

    let design = Design::new(x)?;
    let signal = x * DVector::from_column_slice(coefficients);
    let betas = map_replicates(replicates, |r| {
        let mut rng = stream_rng(seed, r as u64 + 1);
        let y: Vec<f64> = signal
            .iter()
            .map(|s| s + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(design.fit(&y)?.coefficients)
    })?;
    // shift by the first replicate so identical fits give exactly zero
    let base = betas[0].clone();
    let dev: Vec<Vec<f64>> = betas
        .iter()
        .map(|b| b.iter().zip(&base).map(|(v, o)| v - o).collect())
        .collect();
    let means: Vec<f64> = (0..d).map(|k| dev.iter().map(|v| v[k]).sum::<f64>() / replicates as f64).collect();
    let empirical = DMatrix::from_fn(d, d, |i, j| {
        dev.iter()
            .map(|v| (v[i] - means[i]) * (v[j] - means[j]))
            .sum::<f64>()
            / (replicates as f64 - 1.0)
    });

    let max_diag = theoretical.diagonal().max();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = theoretical[(i, j)];
            if c.abs() > 1e-6 * max_diag {
                let scale = (theoretical[(i, i)] * theoretical[(j, j)]).sqrt();
                worst = worst.max((empirical[(i, j)] - c).abs() / scale);
            }
        }
    }
    Ok(CoefficientCovarianceReport {
        max_relative_deviation: worst,
        empirical,
        theoretical,
        replicates,
    })
}

/// Paired comparison of the expected population MSE of two pipelines on
/// one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseDifference {
    pub mse_a: f64,
    pub mse_b: f64,
    /// Mean over training sets of `MSE_a − MSE_b`.
    pub difference: f64,
    pub standard_error: f64,
    pub replicates: usize,
}

struct PopulationQuadratic {
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    offset: f64,
}

impl PopulationQuadratic {
    fn new(pipeline: &Pipeline, x: &DMatrix<f64>, f: &DVector<f64>, noise_var: f64) -> Self {
        let n = x.nrows() as f64;
        let phi = pipeline.phi(x);
        Self {
            gram: phi.transpose() * &phi / n,
            cross: phi.transpose() * f / n,
            offset: f.norm_squared() / n + noise_var,
        }
    }

    fn mse(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        b.dot(&(&self.gram * &b)) - 2.0 * b.dot(&self.cross) + self.offset
    }
}

/// Trains pipelines `a` and `b` on the same `replicates` training sets and
/// scores each fit's population MSE on `task` against `n_pop` fresh samples.
pub fn expected_mse_difference(
    gen: &LinearGenerator,
    a: &Pipeline,
    b: &Pipeline,
    task: usize,
    cfg: &McConfig,
    n_pop: usize,
) -> Result<MseDifference, Error> {
    a.validate(gen, task)?;
    b.validate(gen, task)?;
    if cfg.replicates < 2 || n_pop < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: cfg.replicates.min(n_pop) }.into());
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let x_pop = gen.sample_features(&mut rng, n_pop);
    let f = &x_pop * gen.coefficients.column(task);
    let sigma = gen.noise.sigmas()[task];
    let qa = PopulationQuadratic::new(a, &x_pop, &f, sigma * sigma);
    let qb = PopulationQuadratic::new(b, &x_pop, &f, sigma * sigma);
    let pairs = map_replicates(cfg.replicates, |r| {
        let mut rng = stream_rng(cfg.seed, r as u64 + 1);
        let (x, _, y) = gen.sample(&mut rng, cfg.n_train);
        let ba = ols_fit(&a.phi(&x), &a.psi(&y))?.coefficients;
        let bb = ols_fit(&b.phi(&x), &b.psi(&y))?.coefficients;
        Ok((qa.mse(&ba), qb.mse(&bb)))
    })?;
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    let rf = cfg.replicates as f64;
    Ok(MseDifference {
        mse_a: pairs.iter().map(|p| p.0).sum::<f64>() / rf,
        mse_b: pairs.iter().map(|p| p.1).sum::<f64>() / rf,
        difference: mean(&diffs),
        standard_error: sd(&diffs) / rf.sqrt(),
        replicates: cfg.replicates,
    })
}

/// Variance decrease and bias increase of a task-cluster model over the
/// single-task model, measured and predicted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub delta_variance: CheckReport,
    pub delta_bias: CheckReport,
}

/// Compares the measured variance decrease and bias increase from
/// aggregating `cluster` (all original features) against the closed forms
/// `(σ_i² − σ̄²) D/(n−1)` and `bias_multi − bias_single`.
pub fn delta_mse_check(
    gen: &LinearGenerator,
    cluster: &[usize],
    task: usize,
    cfg: &McConfig,
    n_pop: usize,
) -> Result<DeltaReport, Error> {
    let d = gen.features();
    let single = Pipeline::single(task, d);
    let agg = Pipeline::cluster(cluster.to_vec(), d);
    let mc_single = monte_carlo_bias_variance(gen, &single, task, cfg)?;
    let mc_agg = monte_carlo_bias_variance(gen, &agg, task, cfg)?;

    let sigma_i = gen.noise.sigmas()[task];
    let sigma_bar = aggregated_noise_variance(&gen.noise, cluster)?;
    let dvar_theory = theoretical_variance(sigma_i * sigma_i, cfg.n_train, d)? - theoretical_variance(sigma_bar, cfg.n_train, d)?;
    let dvar_emp = mc_single.variance_term - mc_agg.variance_term;
    let dvar_se = mc_single.variance_se.hypot(mc_agg.variance_se);

    let pop_seed = cfg.seed ^ 0x5e_ed0f_b1a5;
    let th_single = population_bias_decomposition(gen, &single, task, n_pop, pop_seed)?;
    let th_agg = population_bias_decomposition(gen, &agg, task, n_pop, pop_seed)?;
    let dbias_theory = th_agg.bias_value - th_single.bias_value;
    let dbias_emp = mc_agg.bias_term - mc_single.bias_term;
    let dbias_se = mc_single
        .bias_se
        .hypot(mc_agg.bias_se)
        .hypot(th_single.standard_error)
        .hypot(th_agg.standard_error);

    let case = format!("cluster {cluster:?}, task {task}");
    Ok(DeltaReport {
        delta_variance: CheckReport::within_se("delta_variance", &case, dvar_theory, dvar_emp, dvar_se, cfg.replicates),
        delta_bias: CheckReport::within_se("delta_bias", &case, dbias_theory, dbias_emp, dbias_se, cfg.replicates),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::NoiseModel;

    fn gen(d: usize, sigma: f64) -> LinearGenerator {
        let w = DMatrix::from_fn(d, 2, |i, j| 0.5 + 0.1 * i as f64 - 0.3 * j as f64);
        LinearGenerator::new(w, NoiseModel::independent(vec![sigma, sigma]).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_full_model_has_no_error() {
        let g = gen(4, 0.0);
        let cfg = McConfig {
            replicates: 50,
            n_eval: 2_000,
            ..McConfig::default()
        };
        let est = monte_carlo_bias_variance(&g, &Pipeline::single(0, 4), 0, &cfg).unwrap();
        assert_eq!(est.noise_term, 0.0);
        assert!(est.variance_term < 1e-20 && est.bias_term.abs() < 1e-20, "{est:?}");
        assert!(est.warning.is_some());
    }

    #[test]
    fn single_task_variance_matches_closed_form_roughly() {
        let g = gen(5, 1.0);
        let cfg = McConfig {
            n_train: 400,
            replicates: 300,
            n_eval: 10_000,
            seed: 1,
        };
        let est = monte_carlo_bias_variance(&g, &Pipeline::single(0, 5), 0, &cfg).unwrap();
        let th = theoretical_variance(1.0, 400, 5).unwrap();
        assert!((est.variance_term / th - 1.0).abs() < 0.15, "{} vs {th}", est.variance_term);
        assert!(est.closure_gap().abs() <= 3.0 * est.closure_se(), "{est:?}");
    }

    #[test]
    fn coefficient_covariance_sigma_zero_is_exactly_zero() {
        let x = fixed_design(50, 3, 0.2, false, 2).unwrap();
        let rep = coefficient_covariance_check(&x, &[1.0, -1.0, 0.5], 0.0, 20, 3).unwrap();
        assert_eq!(rep.empirical.amax(), 0.0);
        assert_eq!(rep.max_relative_deviation, 0.0);
    }

    #[test]
    fn coefficient_covariance_correlated_pair_has_negative_off_diagonal() {
        let x = fixed_design(200, 2, 0.5, false, 4).unwrap();
        let rep = coefficient_covariance_check(&x, &[1.0, 1.0], 1.0, 2000, 5).unwrap();
        assert!(rep.theoretical[(0, 1)] < 0.0);
        assert!(rep.empirical[(0, 1)] < 0.0);
        assert!(rep.max_relative_deviation < 0.1, "{}", rep.max_relative_deviation);
    }

    #[test]
    fn orthonormal_design_is_white() {
        let x = fixed_design(100, 4, 0.3, true, 6).unwrap();
        let g = x.transpose() * &x / 99.0;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!(x.column_iter().all(|c| c.sum().abs() < 1e-10));
    }

    #[test]
    fn singular_design_is_an_error() {
        let mut x = fixed_design(30, 3, 0.0, false, 7).unwrap();
        let c = x.column(0).into_owned();
        x.set_column(2, &c);
        assert!(coefficient_covariance_check(&x, &[1.0; 3], 1.0, 10, 0).is_err());
    }

    #[test]
    fn identical_pipelines_have_zero_difference() {
        let g = gen(3, 1.0);
        let p = Pipeline::single(0, 3);
        let cfg = McConfig {
            replicates: 20,
            ..McConfig::default()
        };
        let diff = expected_mse_difference(&g, &p, &p, 0, &cfg, 5_000).unwrap();
        assert_eq!(diff.difference, 0.0);
        assert!(diff.mse_a > 1.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let g = gen(3, 1.0);
        let cfg = McConfig {
            replicates: 40,
            n_eval: 1_000,
            ..McConfig::default()
        };
        let p = Pipeline::new(vec![0, 1], vec![vec![0, 2], vec![1]]);
        let a = monte_carlo_bias_variance(&g, &p, 1, &cfg).unwrap();
        let b = monte_carlo_bias_variance(&g, &p, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
