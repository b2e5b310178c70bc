//! Closed-form asymptotic bias and variance of (aggregated) OLS models and
//! the generators and population estimates the Monte-Carlo checks compare
//! them against.

mod checks;
mod montecarlo;

pub use checks::{
    run_check, run_checks, Budget, CheckReport, CHECK_NAMES,
};
pub use montecarlo::{
    coefficient_covariance_check, delta_mse_check, expected_mse_difference, fixed_design,
    monte_carlo_bias_variance, BiasVarianceEstimate, CoefficientCovarianceReport, DeltaReport,
    McConfig, MseDifference,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{ConfigError, DataError, Error, StatsError};
use crate::linstats::{covariance, mean, variance};
use crate::synth::correlation_factor;

/// Per-task noise scales and their correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigmas: Vec<f64>,
    correlation: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(sigmas: Vec<f64>, correlation: DMatrix<f64>) -> Result<Self, ConfigError> {
        let k = sigmas.len();
        if k == 0 || correlation.shape() != (k, k) {
            return Err(ConfigError::Invalid(format!("noise model needs {k} sigmas and a {k} x {k} correlation")));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ConfigError::Invalid("noise sigmas must be finite and nonnegative".into()));
        }
        for i in 0..k {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(ConfigError::Invalid("noise correlation needs a unit diagonal".into()));
            }
            for j in 0..i {
                if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                    return Err(ConfigError::Invalid("noise correlation must be symmetric".into()));
                }
            }
        }
        let factor = correlation_factor(&correlation)?;
        Ok(Self {
            sigmas,
            correlation,
            factor,
        })
    }

    /// `k` tasks with common `sigma` and pairwise correlation `rho`.
    pub fn equicorrelated(k: usize, sigma: f64, rho: f64) -> Result<Self, ConfigError> {
        let c = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho });
        Self::new(vec![sigma; k], c)
    }

    pub fn independent(sigmas: Vec<f64>) -> Result<Self, ConfigError> {
        let k = sigmas.len();
        Self::new(sigmas, DMatrix::identity(k, k))
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    pub fn tasks(&self) -> usize {
        self.sigmas.len()
    }

    /// `rows x K` correlated noise draws.
    pub fn sample(&self, rng: &mut ChaCha8Rng, rows: usize) -> DMatrix<f64> {
        let k = self.tasks();
        let z = standard_normal(rng, rows, k);
        let mut e = z * self.factor.transpose();
        for (mut col, s) in e.column_iter_mut().zip(&self.sigmas) {
            col *= *s;
        }
        e
    }
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &v)
}

fn check_cluster(cluster: &[usize], k: usize, what: &'static str) -> Result<(), DataError> {
    if cluster.is_empty() {
        return Err(DataError::InvalidPartition(format!("empty {what} cluster")));
    }
    if let Some(&i) = cluster.iter().find(|&&i| i >= k) {
        return Err(DataError::IndexOutOfBounds { what, index: i, len: k });
    }
    Ok(())
}

/// Variance of the mean of the cluster's noises,
/// `(1/K²) Σ_h Σ_k σ_h σ_k ρ_hk`.
pub fn aggregated_noise_variance(model: &NoiseModel, cluster: &[usize]) -> Result<f64, DataError> {
    check_cluster(cluster, model.tasks(), "tasks")?;
    let k = cluster.len() as f64;
    let mut s = 0.0;
    for &h in cluster {
        for &j in cluster {
            s += model.sigmas[h] * model.sigmas[j] * model.correlation[(h, j)];
        }
    }
    Ok((s / (k * k)).max(0.0))
}

/// Asymptotic variance of a `d`-input OLS model trained on `n` samples
/// whose target noise has variance `sigma_bar_sq`.
pub fn theoretical_variance(sigma_bar_sq: f64, n: usize, d: usize) -> Result<f64, StatsError> {
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    Ok(sigma_bar_sq * d as f64 / (n as f64 - 1.0))
}

/// Asymptotic bias of a single-task model: the part of `var_f` its inputs
/// cannot explain.
pub fn theoretical_bias_single(var_f: f64, r2: f64) -> f64 {
    var_f * (1.0 - r2)
}

/// Population scalars of the multi-task bias formula for one member task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasDecomposition {
    pub var_f_i: f64,
    pub var_psi: f64,
    pub r2_d_iota: f64,
    /// `cov(ψ, f_i − ψ | Φ)`.
    pub partial_cov: f64,
    /// `cov(ψ, f_i − ψ)`.
    pub plain_cov: f64,
    pub bias_value: f64,
    /// Sampling error of `bias_value` from the finite population sample.
    pub standard_error: f64,
    /// Set when the feature covariance was singular and a pseudo-inverse used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Asymptotic bias of the aggregated model on one member task.
pub fn theoretical_bias_multi(d: &BiasDecomposition) -> f64 {
    d.var_f_i - d.var_psi * d.r2_d_iota + 2.0 * (d.partial_cov - d.plain_cov)
}

/// Linear tasks `f = X W` over Gaussian features `x = A z`, with additive
/// noise from a [`NoiseModel`]. Everything is zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGenerator {
    /// `D x L`, one column per task.
    pub coefficients: DMatrix<f64>,
    pub noise: NoiseModel,
    /// `D x D`; feature rows are `A z` with `z` standard normal.
    feature_factor: DMatrix<f64>,
}

impl LinearGenerator {
    /// Standard-normal independent features.
    pub fn new(coefficients: DMatrix<f64>, noise: NoiseModel) -> Result<Self, ConfigError> {
        let d = coefficients.nrows();
        Self::with_feature_factor(coefficients, noise, DMatrix::identity(d, d))
    }

    /// Features `x = A z`; `A` may be singular (e.g. duplicated rows give
    /// duplicated features).
    pub fn with_feature_factor(
        coefficients: DMatrix<f64>,
        noise: NoiseModel,
        factor: DMatrix<f64>,
    ) -> Result<Self, ConfigError> {
        let (d, l) = coefficients.shape();
        if d == 0 || l == 0 {
            return Err(ConfigError::Invalid("generator needs at least one feature and task".into()));
        }
        if noise.tasks() != l {
            return Err(ConfigError::Invalid(format!("{} noise scales for {l} tasks", noise.tasks())));
        }
        if factor.nrows() != d || factor.ncols() == 0 {
            return Err(ConfigError::Invalid("feature factor must have one row per feature".into()));
        }
        Ok(Self {
            coefficients,
            noise,
            feature_factor: factor,
        })
    }

    /// Equicorrelated Gaussian features with correlation `rho`.
    pub fn with_feature_correlation(self, rho: f64) -> Result<Self, ConfigError> {
        let d = self.features();
        let c = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        let factor = correlation_factor(&c)?;
        Self::with_feature_factor(self.coefficients, self.noise, factor)
    }

    pub fn features(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn tasks(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn sample_features(&self, rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        standard_normal(rng, n, self.feature_factor.ncols()) * self.feature_factor.transpose()
    }

    /// Features, noiseless signals `X W`, and noisy targets.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let x = self.sample_features(rng, n);
        let f = &x * &self.coefficients;
        let y = &f + self.noise.sample(rng, n);
        (x, f, y)
    }
}

/// An aggregated linear model: a task cluster (target = mean of members)
/// and a feature partition (inputs = means of feature groups).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pipeline {
    pub cluster: Vec<usize>,
    pub feature_groups: Vec<Vec<usize>>,
}

impl Pipeline {
    pub fn new(cluster: Vec<usize>, feature_groups: Vec<Vec<usize>>) -> Self {
        Self {
            cluster,
            feature_groups,
        }
    }

    /// Single-task model on all `d` original features.
    pub fn single(task: usize, d: usize) -> Self {
        Self::new(vec![task], (0..d).map(|k| vec![k]).collect())
    }

    /// Cluster model on all `d` original features.
    pub fn cluster(cluster: Vec<usize>, d: usize) -> Self {
        Self::new(cluster, (0..d).map(|k| vec![k]).collect())
    }

    pub fn inputs(&self) -> usize {
        self.feature_groups.len()
    }

    pub fn validate(&self, gen: &LinearGenerator, task: usize) -> Result<(), DataError> {
        check_cluster(&self.cluster, gen.tasks(), "tasks")?;
        if !self.cluster.contains(&task) {
            return Err(DataError::InvalidPartition(format!("task {task} is not in the cluster")));
        }
        crate::data::validate_cover(&self.feature_groups, gen.features())
    }

    /// Aggregated inputs `Φ` of feature rows `x`.
    pub fn phi(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .feature_groups
            .iter()
            .map(|g| DVector::from_vec(crate::data::mean_of_columns(x, g)))
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// Cluster mean of the columns of `y` (targets or signals).
    pub fn psi(&self, y: &DMatrix<f64>) -> Vec<f64> {
        crate::data::mean_of_columns(y, &self.cluster)
    }
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    v.iter().map(|x| x - m).collect()
}

/// Solves `S b = c` for the sample covariance `S` of the columns of `phi`,
/// falling back to a pseudo-inverse when `S` is singular.
fn covariance_solve(phi: &DMatrix<f64>, c: &DVector<f64>) -> (DVector<f64>, Option<String>) {
    let n = phi.nrows() as f64;
    let cols: Vec<Vec<f64>> = phi.column_iter().map(|c| centered(c.as_slice())).collect();
    let d = cols.len();
    let s = DMatrix::from_fn(d, d, |i, j| {
        cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / (n - 1.0)
    });
    if let Some(ch) = s.clone().cholesky() {
        // reject numerically singular factorizations
        let diag = ch.l_dirty().diagonal();
        let ratio = diag.min() / diag.max();
        if ratio > 1e-7 {
            return (ch.solve(c), None);
        }
    }
    let svd = s.svd(true, true);
    let tol = svd.singular_values.max() * 1e-10 * d as f64;
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    let b = svd
        .solve(c, tol)
        .expect("svd computed with both factors");
    (b, Some(format!("singular feature covariance (rank {rank} of {d}); pseudo-inverse used")))
}

fn cov_with_columns(phi: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(phi.ncols(), phi.column_iter().map(|c| covariance(c.as_slice(), v)))
}

/// Estimates the scalars of the multi-task bias formula for `task` under
/// `pipeline` on `n_pop` fresh noiseless samples.
pub fn population_bias_decomposition(
    gen: &LinearGenerator,
    pipeline: &Pipeline,
    task: usize,
    n_pop: usize,
    seed: u64,
) -> Result<BiasDecomposition, Error> {
    pipeline.validate(gen, task)?;
    if n_pop < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n_pop }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen.sample_features(&mut rng, n_pop);
    let f_all = &x * &gen.coefficients;
    let f: Vec<f64> = f_all.column(task).iter().copied().collect();
    let psi = pipeline.psi(&f_all);
    let phi = pipeline.phi(&x);

    let var_f_i = variance(&f);
    let var_psi = variance(&psi);
    let gap: Vec<f64> = f.iter().zip(&psi).map(|(a, b)| a - b).collect();

    let c_psi = cov_with_columns(&phi, &psi);
    let c_gap = cov_with_columns(&phi, &gap);
    let (beta, diag1) = covariance_solve(&phi, &c_psi);
    let explained = c_psi.dot(&beta);
    let r2_d_iota = if var_psi > 0.0 { explained / var_psi } else { 0.0 };
    let plain_cov = covariance(&psi, &gap);
    let partial_cov = plain_cov - beta.dot(&c_gap);
    let decomposition = BiasDecomposition {
        var_f_i,
        var_psi,
        r2_d_iota,
        partial_cov,
        plain_cov,
        bias_value: 0.0,
        standard_error: 0.0,
        diagnostic: diag1,
    };
    let bias_value = theoretical_bias_multi(&decomposition);

    // sampling error: the bias is the variance of Φβ − f
    let phi_c = DMatrix::from_columns(
        &phi.column_iter()
            .map(|c| DVector::from_vec(centered(c.as_slice())))
            .collect::<Vec<_>>(),
    );
    let fit = &phi_c * &beta;
    let fc = centered(&f);
    let sq: Vec<f64> = fit.iter().zip(&fc).map(|(p, t)| (p - t) * (p - t)).collect();
    let standard_error = variance(&sq).sqrt() / (n_pop as f64).sqrt();
    Ok(BiasDecomposition {
        bias_value,
        standard_error,
        ..decomposition
    })
}

/// Seed of replicate stream `stream` derived from a base seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn aggregated_noise_variance_cases() {
        let ind = NoiseModel::equicorrelated(2, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(aggregated_noise_variance(&ind, &[0, 1]).unwrap(), 0.5, epsilon = 1e-15);
        let full = NoiseModel::equicorrelated(2, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(aggregated_noise_variance(&full, &[0, 1]).unwrap(), 1.0, epsilon = 1e-15);
        let anti = NoiseModel::equicorrelated(2, 1.0, -1.0).unwrap();
        assert_abs_diff_eq!(aggregated_noise_variance(&anti, &[0, 1]).unwrap(), 0.0, epsilon = 1e-15);
        // Remark-style closed form σ²/K (1 + (K−1) ρ̄)
        let m = NoiseModel::equicorrelated(5, 2.0, 0.3).unwrap();
        let expected = 4.0 / 5.0 * (1.0 + 4.0 * 0.3);
        assert_abs_diff_eq!(aggregated_noise_variance(&m, &[0, 1, 2, 3, 4]).unwrap(), expected, epsilon = 1e-12);
        assert!(aggregated_noise_variance(&m, &[7]).is_err());
        assert!(aggregated_noise_variance(&m, &[]).is_err());
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::equicorrelated(3, 1.0, -0.9).is_err());
        assert!(NoiseModel::independent(vec![1.0, -1.0]).is_err());
        let bad_diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(NoiseModel::new(vec![1.0, 1.0], bad_diag).is_err());
    }

    #[test]
    fn empirical_noise_covariance_matches_model() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, -0.2, 0.6, 1.0, 0.1, -0.2, 0.1, 1.0]);
        let m = NoiseModel::new(vec![1.0, 2.0, 0.5], c.clone()).unwrap();
        let e = m.sample(&mut ChaCha8Rng::seed_from_u64(11), 100_000);
        for i in 0..3 {
            for j in 0..3 {
                let emp = covariance(e.column(i).as_slice(), e.column(j).as_slice());
                let th = m.sigmas()[i] * m.sigmas()[j] * c[(i, j)];
                assert!((emp - th).abs() <= 0.05 * th.abs().max(0.2), "({i},{j}) {emp} vs {th}");
            }
        }
    }

    #[test]
    fn theoretical_variance_values() {
        assert_abs_diff_eq!(theoretical_variance(1.0, 101, 1).unwrap(), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(theoretical_variance(4.0, 2001, 10).unwrap(), 0.02, epsilon = 1e-15);
        let one = theoretical_variance(1.5, 50, 3).unwrap();
        assert_abs_diff_eq!(theoretical_variance(1.5, 50, 6).unwrap(), 2.0 * one, epsilon = 1e-15);
        assert!(theoretical_variance(1.0, 1, 1).is_err());
    }

    #[test]
    fn single_task_bias_values() {
        assert_eq!(theoretical_bias_single(3.0, 1.0), 0.0);
        assert_eq!(theoretical_bias_single(3.0, 0.0), 3.0);
        assert_abs_diff_eq!(theoretical_bias_single(2.0, 0.75), 0.5, epsilon = 1e-15);
    }

    fn two_task_generator() -> LinearGenerator {
        let w = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.5, 1.0, 0.8, 0.2, 0.0, -0.7]);
        LinearGenerator::new(w, NoiseModel::independent(vec![1.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn singleton_decomposition_collapses_to_single_task_bias() {
        let gen = two_task_generator();
        let p = Pipeline::new(vec![0], vec![vec![0, 1], vec![2, 3]]);
        let d = population_bias_decomposition(&gen, &p, 0, 100_000, 3).unwrap();
        assert_eq!(d.partial_cov, 0.0);
        assert_eq!(d.plain_cov, 0.0);
        let single = theoretical_bias_single(d.var_f_i, d.r2_d_iota);
        assert_abs_diff_eq!(d.bias_value, single, epsilon = 1e-12);
        // exact population value for independent standard features:
        // groups (1,-0.5) and (0.8,0): var_f = 1.89, explained = 0.25/2 + 0.64/2
        let exact = 1.89 - (0.125 + 0.32);
        assert!((d.bias_value - exact).abs() < 4.0 * d.standard_error + 0.01, "{d:?}");
    }

    #[test]
    fn decomposition_identity_is_definitional() {
        let gen = two_task_generator();
        let p = Pipeline::new(vec![0, 1], vec![vec![0, 3], vec![1], vec![2]]);
        let d = population_bias_decomposition(&gen, &p, 1, 20_000, 4).unwrap();
        assert_eq!(
            d.bias_value,
            d.var_f_i - d.var_psi * d.r2_d_iota + 2.0 * (d.partial_cov - d.plain_cov)
        );
        assert!(d.diagnostic.is_none());
    }

    #[test]
    fn singular_feature_covariance_uses_pseudo_inverse() {
        let mut a = DMatrix::<f64>::identity(3, 3);
        a.set_row(2, &a.row(0).into_owned());
        let w = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let gen = LinearGenerator::with_feature_factor(w, NoiseModel::independent(vec![1.0]).unwrap(), a).unwrap();
        let d = population_bias_decomposition(&gen, &Pipeline::single(0, 3), 0, 20_000, 5).unwrap();
        assert!(d.diagnostic.as_deref().unwrap().contains("pseudo-inverse"));
        assert!(d.bias_value.abs() < 1e-8, "{d:?}");
    }

    #[test]
    fn pipeline_validation() {
        let gen = two_task_generator();
        assert!(Pipeline::new(vec![0], vec![vec![0, 1], vec![2]]).validate(&gen, 0).is_err());
        assert!(Pipeline::new(vec![1], vec![vec![0, 1, 2, 3]]).validate(&gen, 0).is_err());
        assert!(Pipeline::single(0, 4).validate(&gen, 0).is_ok());
    }
}
