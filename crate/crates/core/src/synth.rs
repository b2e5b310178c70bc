//! Seeded linear multi-task generators, the single / Phase I / Phase I+II
//! evaluation pipeline, and one-axis parameter sweeps.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::nonlin_ctfa;
use crate::data::{apply_partition, center, center_with, AggregationResult, Dataset};
use crate::error::{ConfigError, Error};
use crate::linstats::{mean, ols_fit, predict};

/// Generator and experiment settings. Missing JSON fields take the
/// defaults of the ten-task benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub tasks: usize,
    pub features: usize,
    pub n_train: usize,
    /// Test rows; `None` means as many as `n_train`.
    pub n_test: Option<usize>,
    pub sigma: f64,
    /// Standard deviation of the i.i.d. Gaussian features.
    pub feature_std: f64,
    /// `L x L` noise correlation; `None` is the identity.
    pub noise_correlation: Option<Vec<Vec<f64>>>,
    /// Coefficient interval of each group.
    pub coefficient_intervals: Vec<(f64, f64)>,
    /// Group of each task; `None` splits tasks evenly, extra task to group 0.
    pub groups: Option<Vec<usize>>,
    pub n_repeats: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tasks: 10,
            features: 100,
            n_train: 250,
            n_test: None,
            sigma: 10.0,
            feature_std: 2.0,
            noise_correlation: None,
            coefficient_intervals: vec![(0.5, 1.0), (-1.0, -0.5)],
            groups: None,
            n_repeats: 10,
            epsilon1: 0.0,
            epsilon2: 1e-4,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl SynthConfig {
    pub fn n_test(&self) -> usize {
        self.n_test.unwrap_or(self.n_train)
    }

    /// Group index of every task.
    pub fn task_groups(&self) -> Vec<usize> {
        match &self.groups {
            Some(g) => g.clone(),
            None => {
                let first = self.tasks.div_ceil(2);
                (0..self.tasks).map(|t| usize::from(t >= first)).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tasks == 0 || self.features == 0 {
            return Err(invalid("tasks and features must be at least 1"));
        }
        if self.n_train < 2 || self.n_test() < 2 {
            return Err(invalid("train and test splits need at least 2 samples"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be finite and nonnegative"));
        }
        if !(self.feature_std > 0.0 && self.feature_std.is_finite()) {
            return Err(invalid("feature_std must be finite and positive"));
        }
        if self.n_repeats == 0 {
            return Err(invalid("n_repeats must be at least 1"));
        }
        if !self.epsilon1.is_finite() || !self.epsilon2.is_finite() {
            return Err(invalid("epsilons must be finite"));
        }
        for &(lo, hi) in &self.coefficient_intervals {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("bad coefficient interval ({lo}, {hi})")));
            }
        }
        let groups = self.task_groups();
        if groups.len() != self.tasks {
            return Err(invalid(format!("{} group labels for {} tasks", groups.len(), self.tasks)));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= self.coefficient_intervals.len()) {
            return Err(invalid(format!("group {g} has no coefficient interval")));
        }
        if let Some(c) = &self.noise_correlation {
            check_correlation(c, self.tasks)?;
        }
        Ok(())
    }

    /// Square-root factor `A` of the noise correlation (`A A' = C`).
    fn noise_factor(&self) -> Result<Option<DMatrix<f64>>, ConfigError> {
        match &self.noise_correlation {
            None => Ok(None),
            Some(c) => correlation_factor(&rows_to_matrix(c)).map(Some),
        }
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let k = rows.len();
    DMatrix::from_fn(k, k, |r, c| rows[r][c])
}

pub(crate) fn check_correlation(rows: &[Vec<f64>], k: usize) -> Result<(), ConfigError> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(invalid(format!("noise correlation must be {k} x {k}")));
    }
    let m = rows_to_matrix(rows);
    for i in 0..k {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(invalid("noise correlation needs a unit diagonal"));
        }
        for j in 0..i {
            if !m[(i, j)].is_finite() || (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return Err(invalid("noise correlation must be symmetric"));
            }
        }
    }
    correlation_factor(&m).map(|_| ())
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues from
/// roundoff are clamped to zero.
pub(crate) fn correlation_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>, ConfigError> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(ConfigError::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Ground truth behind a generated pair of splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    /// `D x L`; column `i` holds the coefficients of task `i`.
    pub coefficients: DMatrix<f64>,
    pub groups: Vec<usize>,
    /// `n_train x L` noise added to the training targets.
    pub noise_train: DMatrix<f64>,
    pub noise_test: DMatrix<f64>,
}

impl SyntheticTask {
    /// Noiseless targets `X W` for arbitrary feature rows.
    pub fn signal(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.coefficients
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: SyntheticTask,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

fn correlated_noise(rng: &mut ChaCha8Rng, rows: usize, sigma: f64, factor: Option<&DMatrix<f64>>, k: usize) -> DMatrix<f64> {
    let z = gaussian_matrix(rng, rows, k, sigma);
    match factor {
        Some(a) => z * a.transpose(),
        None => z,
    }
}

fn names(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

/// Draws coefficients, train and test splits. Fully determined by
/// `(config, seed)`; the splits are returned uncentered.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<Synthetic, Error> {
    config.validate()?;
    let factor = config.noise_factor()?;
    let (l, d) = (config.tasks, config.features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let groups = config.task_groups();
    let mut coefficients = DMatrix::zeros(d, l);
    for (task, &g) in groups.iter().enumerate() {
        let (lo, hi) = config.coefficient_intervals[g];
        for k in 0..d {
            coefficients[(k, task)] = lo + (hi - lo) * rng.random::<f64>();
        }
    }

    let mut split = |n: usize| {
        let x = gaussian_matrix(&mut rng, n, d, config.feature_std);
        let noise = correlated_noise(&mut rng, n, config.sigma, factor.as_ref(), l);
        (x, noise)
    };
    let (x_train, noise_train) = split(config.n_train);
    let (x_test, noise_test) = split(config.n_test());

    let truth = SyntheticTask {
        coefficients,
        groups,
        noise_train,
        noise_test,
    };
    let y_train = truth.signal(&x_train) + &truth.noise_train;
    let y_test = truth.signal(&x_test) + &truth.noise_test;
    let train = Dataset::new(x_train, y_train, names("x", d), names("y", l))?;
    let test = Dataset::new(x_test, y_test, names("x", d), names("y", l))?;
    Ok(Synthetic { train, test, truth })
}

/// Test-split scores of the three pipelines for one seed, averaged over the
/// original tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub single_mse: f64,
    pub phase1_mse: f64,
    pub phase12_mse: f64,
    pub single_r2: f64,
    pub phase1_r2: f64,
    pub phase12_r2: f64,
    /// Percentage change of the mean MSE against single-task models.
    pub phase1_change: f64,
    pub phase12_change: f64,
    pub clusters: usize,
    /// Mean reduced feature count over task clusters.
    pub reduced_features: f64,
}

#[derive(Default)]
struct Scores {
    mse: f64,
    r2: f64,
}

fn score(pred: &[f64], actual: &[f64]) -> (f64, f64) {
    let mu = mean(actual);
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    let sst: f64 = actual.iter().map(|a| (a - mu) * (a - mu)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };
    (sse / actual.len() as f64, r2)
}

/// Members, train X, test X, train y.
type Model = (Vec<usize>, DMatrix<f64>, DMatrix<f64>, Vec<f64>);

/// Per-task mean of (mse, r2) over the given models.
fn score_models(
    train_test: Vec<Model>,
    test: &Dataset,
) -> Result<Scores, Error> {
    let mut s = Scores::default();
    let l = test.n_tasks() as f64;
    for (members, x_train, x_test, y) in train_test {
        let fit = ols_fit(&x_train, &y)?;
        let pred = predict(&x_test, &fit.coefficients);
        for &m in &members {
            let (mse, r2) = score(&pred, &test.target(m));
            s.mse += mse / l;
            s.r2 += r2 / l;
        }
    }
    Ok(s)
}

fn percent_change(new: f64, base: f64, floor: f64) -> f64 {
    if base <= floor {
        0.0
    } else {
        100.0 * (new - base) / base
    }
}

/// Centers both splits with train means, runs the aggregation on train and
/// scores single-task, task-aggregated, and fully aggregated OLS models on
/// every original task of the test split.
pub fn evaluate(train: &Dataset, test: &Dataset, epsilon1: f64, epsilon2: f64, seed: u64) -> Result<(Evaluation, AggregationResult), Error> {
    let centered = center(train);
    let train = centered.dataset;
    let test = center_with(test, &centered.means)?;
    let result = nonlin_ctfa(&train, epsilon1, epsilon2, seed)?;

    let single = score_models(
        (0..train.n_tasks())
            .map(|t| (vec![t], train.features().clone(), test.features().clone(), train.target(t)))
            .collect(),
        &test,
    )?;
    let phase1 = score_models(
        result
            .task_partition
            .clusters()
            .iter()
            .zip(result.task_partition.aggregated())
            .map(|(m, y)| (m.clone(), train.features().clone(), test.features().clone(), y.clone()))
            .collect(),
        &test,
    )?;
    let reduced_train = apply_partition(&train, &result)?;
    let reduced_test = apply_partition(&test, &result)?;
    let phase12 = score_models(
        reduced_train
            .into_iter()
            .zip(reduced_test)
            .map(|(tr, te)| (tr.members, tr.features, te.features, tr.target))
            .collect(),
        &test,
    )?;

    // below this the MSEs are roundoff and a percentage is meaningless
    let target_scale: f64 = (0..test.n_tasks())
        .map(|t| crate::linstats::variance(&test.target(t)))
        .sum::<f64>()
        / test.n_tasks() as f64;
    let floor = 1e-12 * target_scale.max(f64::MIN_POSITIVE);
    let counts = result.reduced_feature_counts();
    let eval = Evaluation {
        single_mse: single.mse,
        phase1_mse: phase1.mse,
        phase12_mse: phase12.mse,
        single_r2: single.r2,
        phase1_r2: phase1.r2,
        phase12_r2: phase12.r2,
        phase1_change: percent_change(phase1.mse, single.mse, floor),
        phase12_change: percent_change(phase12.mse, single.mse, floor),
        clusters: result.task_partition.len(),
        reduced_features: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
    };
    Ok((eval, result))
}

/// Generates and evaluates `config.n_repeats` seeds starting at `seed`.
pub fn run_repeats(config: &SynthConfig, seed: u64) -> Result<Vec<Evaluation>, Error> {
    config.validate()?;
    let one = |r: usize| -> Result<Evaluation, Error> {
        let s = seed.wrapping_add(r as u64);
        let data = generate(config, s)?;
        Ok(evaluate(&data.train, &data.test, config.epsilon1, config.epsilon2, s)?.0)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..config.n_repeats).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..config.n_repeats).map(one).collect()
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    (m, crate::linstats::variance(values).sqrt())
}

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NTrain,
    Features,
    Tasks,
    Sigma,
    Epsilon1,
    Epsilon2,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::NTrain,
        Axis::Features,
        Axis::Tasks,
        Axis::Sigma,
        Axis::Epsilon1,
        Axis::Epsilon2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::NTrain => "n_train",
            Axis::Features => "D",
            Axis::Tasks => "L",
            Axis::Sigma => "sigma",
            Axis::Epsilon1 => "epsilon1",
            Axis::Epsilon2 => "epsilon2",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &SynthConfig, value: f64) -> Result<SynthConfig, ConfigError> {
        let count = || -> Result<usize, ConfigError> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(invalid(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        let mut c = base.clone();
        match self {
            Axis::NTrain => {
                c.n_train = count()?;
                c.n_test = None;
            }
            Axis::Features => c.features = count()?,
            Axis::Tasks => {
                c.tasks = count()?;
                c.groups = None;
            }
            Axis::Sigma => c.sigma = value,
            Axis::Epsilon1 => c.epsilon1 = value,
            Axis::Epsilon2 => c.epsilon2 = value,
        }
        Ok(c)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "n_train" | "n" | "samples" => Axis::NTrain,
            "D" | "features" => Axis::Features,
            "L" | "tasks" => Axis::Tasks,
            "sigma" => Axis::Sigma,
            "epsilon1" => Axis::Epsilon1,
            "epsilon2" => Axis::Epsilon2,
            other => return Err(ConfigError::UnknownAxis(other.to_string())),
        })
    }
}

/// One `(axis value, metric)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, value: f64, metric: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.metric == metric)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Metric names in table order.
pub const METRICS: [&str; 10] = [
    "single_mse",
    "phase1_mse",
    "phase12_mse",
    "phase1_change",
    "phase12_change",
    "single_r2",
    "phase1_r2",
    "phase12_r2",
    "clusters",
    "reduced_features",
];

fn metric_values(evals: &[Evaluation], metric: &str) -> Vec<f64> {
    evals
        .iter()
        .map(|e| match metric {
            "single_mse" => e.single_mse,
            "phase1_mse" => e.phase1_mse,
            "phase12_mse" => e.phase12_mse,
            "phase1_change" => e.phase1_change,
            "phase12_change" => e.phase12_change,
            "single_r2" => e.single_r2,
            "phase1_r2" => e.phase1_r2,
            "phase12_r2" => e.phase12_r2,
            "clusters" => e.clusters as f64,
            "reduced_features" => e.reduced_features,
            _ => unreachable!("metric list is fixed"),
        })
        .collect()
}

/// Summary rows (mean, std over seeds) of a set of evaluations.
pub fn summarize(axis: &str, value: f64, evals: &[Evaluation]) -> Vec<SweepRow> {
    METRICS
        .iter()
        .map(|&metric| {
            let (mean, std) = mean_std(&metric_values(evals, metric));
            SweepRow {
                axis: axis.to_string(),
                value,
                metric: metric.to_string(),
                mean,
                std,
            }
        })
        .collect()
}

/// Varies one parameter of `base` over `values`, repeating each setting
/// over `base.n_repeats` seeds starting at `seed`.
pub fn sweep(base: &SynthConfig, axis: Axis, values: &[f64], seed: u64) -> Result<SweepTable, Error> {
    let mut rows = Vec::with_capacity(values.len() * METRICS.len());
    for &value in values {
        let config = axis.apply(base, value)?;
        let evals = run_repeats(&config, seed)?;
        rows.extend(summarize(axis.name(), value, &evals));
    }
    Ok(SweepTable { rows })
}
