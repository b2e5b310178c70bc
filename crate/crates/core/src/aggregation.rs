//! Threshold tests, the iterative aggregation loop, and the two-phase
//! target/feature aggregation driver with its per-task-feature variant.
//!
//! The loop opens a cluster at the first unvisited item and tests every
//! later unvisited item against it. The candidate aggregate used inside a
//! test is the pairwise mean `(z_P + z_j) / 2` of the cluster's current flat
//! mean and the candidate; the columns a finished run outputs are flat means
//! over cluster members. For clusters of three or more these differ, and
//! the trace records the members at test time so both can be rebuilt.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    mean_of_columns, mean_of_slabs, AggregationResult, Dataset, Partition, Variant,
};
use crate::error::{DataError, Error, StatsError};
use crate::linstats::{Design, OlsFit};

/// `R²` gaps smaller than this are roundoff between two fits of the same
/// column space and are snapped to zero.
pub const R2_ROUNDOFF: f64 = 1e-12;

/// Every scalar of the two-task test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTerms {
    #[serde(rename = "r_P")]
    pub r_p: f64,
    pub r_j: f64,
    pub r_ag: f64,
    #[serde(rename = "var_P")]
    pub var_p: f64,
    pub var_j: f64,
    pub var_ag: f64,
    #[serde(rename = "varf_P")]
    pub varf_p: f64,
    pub varf_j: f64,
    pub varf_ag: f64,
    pub threshold1: f64,
    pub threshold2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTerms {
    pub r_sep: f64,
    pub r_aggr: f64,
    /// `r_sep - r_aggr`, snapped to zero within [`R2_ROUNDOFF`].
    pub r_gap: f64,
}

/// Outcome of one threshold test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTest {
    pub epsilon: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetTerms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureTerms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ThresholdTest {
    fn rejected(epsilon: f64, diagnostic: String) -> Self {
        Self {
            epsilon,
            accepted: false,
            targets: None,
            features: None,
            diagnostic: Some(diagnostic),
        }
    }
}

/// One comparison made by the aggregation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// 1 for targets (including the per-task-feature variant), 2 for features.
    pub phase: u8,
    /// Task cluster whose features are being aggregated (phase 2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_cluster: Option<usize>,
    /// (cluster id in creation order, candidate item index).
    pub candidate_pair: (usize, usize),
    /// Cluster members at test time, in insertion order.
    pub members: Vec<usize>,
    #[serde(flatten)]
    pub test: ThresholdTest,
}

impl ThresholdReport {
    pub fn accepted(&self) -> bool {
        self.test.accepted
    }
}

fn target_terms(fit_p: &OlsFit, fit_j: &OlsFit, fit_ag: &OlsFit, d: usize) -> Result<TargetTerms, String> {
    let r = |f: &OlsFit, name: &str| {
        f.r2.ok_or_else(|| format!("zero-variance {name}: R² undefined"))
    };
    let (r_p, r_j, r_ag) = (r(fit_p, "y_P")?, r(fit_j, "y_j")?, r(fit_ag, "y_ag")?);
    let scale = d as f64 / (fit_p.n as f64 - 1.0);
    let (varf_p, varf_j, varf_ag) = (
        fit_p.explained_variance(),
        fit_j.explained_variance(),
        fit_ag.explained_variance(),
    );
    let separate = 0.5 * (r_p * varf_p + r_j * varf_j);
    let joint = r_ag * varf_ag;
    Ok(TargetTerms {
        r_p,
        r_j,
        r_ag,
        var_p: fit_p.residual_variance,
        var_j: fit_j.residual_variance,
        var_ag: fit_ag.residual_variance,
        varf_p,
        varf_j,
        varf_ag,
        threshold1: scale * (fit_ag.residual_variance - fit_p.residual_variance) + separate - joint,
        threshold2: scale * (fit_ag.residual_variance - fit_j.residual_variance) + separate - joint,
    })
}

fn pairwise_mean(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect()
}

fn decide_targets(fits: [OlsFit; 3], d: usize, epsilon: f64) -> ThresholdTest {
    let [p, j, ag] = fits;
    match target_terms(&p, &j, &ag, d) {
        Ok(terms) => ThresholdTest {
            epsilon,
            accepted: terms.threshold1 <= epsilon && terms.threshold2 <= epsilon,
            targets: Some(terms),
            features: None,
            diagnostic: None,
        },
        Err(msg) => ThresholdTest::rejected(epsilon, msg),
    }
}

/// Two-task test on shared features: would one model trained on the mean
/// of `y_p` and `y_j` do at least as well as the two separate models?
///
/// `D` in the variance terms is the column count of `x`.
pub fn compute_threshold_targets(
    x: &DMatrix<f64>,
    y_p: &[f64],
    y_j: &[f64],
    epsilon: f64,
) -> Result<ThresholdTest, StatsError> {
    let design = Design::new(x)?;
    let y_ag = pairwise_mean(y_p, y_j);
    let fits = [design.fit(y_p)?, design.fit(y_j)?, design.fit(&y_ag)?];
    Ok(decide_targets(fits, x.ncols(), epsilon))
}

/// Two-task test where each model has its own feature matrix: the cluster
/// model uses `x_p`, the candidate `x_j`, the merged model `(x_p + x_j) / 2`.
pub fn compute_threshold_targets_slabs(
    x_p: &DMatrix<f64>,
    x_j: &DMatrix<f64>,
    y_p: &[f64],
    y_j: &[f64],
    epsilon: f64,
) -> Result<ThresholdTest, StatsError> {
    if x_p.shape() != x_j.shape() {
        return Err(StatsError::Shape("feature slabs differ in shape".into()));
    }
    let x_ag = (x_p + x_j) / 2.0;
    let y_ag = pairwise_mean(y_p, y_j);
    let fits = [
        Design::new(x_p)?.fit(y_p)?,
        Design::new(x_j)?.fit(y_j)?,
        Design::new(&x_ag)?.fit(&y_ag)?,
    ];
    Ok(decide_targets(fits, x_p.ncols(), epsilon))
}

/// `x_curr` with columns `p` and `j` replaced by their elementwise mean
/// (placed at `p`'s position).
pub fn merge_columns(x: &DMatrix<f64>, p: usize, j: usize) -> DMatrix<f64> {
    let mean = pairwise_mean(x.column(p).as_slice(), x.column(j).as_slice());
    let cols: Vec<_> = (0..x.ncols())
        .filter(|&c| c != j)
        .map(|c| {
            if c == p {
                nalgebra::DVector::from_column_slice(&mean)
            } else {
                x.column(c).into_owned()
            }
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn snap(gap: f64) -> f64 {
    if gap.abs() < R2_ROUNDOFF {
        0.0
    } else {
        gap
    }
}

fn feature_test_with(
    r_sep: Result<f64, StatsError>,
    x_curr: &DMatrix<f64>,
    y: &[f64],
    p: usize,
    j: usize,
    epsilon: f64,
) -> Result<ThresholdTest, StatsError> {
    let r_sep = match r_sep {
        Ok(r) => r,
        Err(StatsError::ZeroVariance(what)) => {
            return Ok(ThresholdTest::rejected(epsilon, format!("zero-variance target: {what} undefined")))
        }
        Err(e) => return Err(e),
    };
    let merged = merge_columns(x_curr, p, j);
    let r_aggr = Design::new(&merged)?.r2_score(y)?;
    let r_gap = snap(r_sep - r_aggr);
    Ok(ThresholdTest {
        epsilon,
        accepted: r_gap <= epsilon,
        targets: None,
        features: Some(FeatureTerms { r_sep, r_aggr, r_gap }),
        diagnostic: None,
    })
}

/// Feature test: does averaging columns `p` and `j` of `x_curr` cost at most
/// `epsilon` of in-sample `R²` on target `y`?
pub fn compute_threshold_features(
    x_curr: &DMatrix<f64>,
    y: &[f64],
    p: usize,
    j: usize,
    epsilon: f64,
) -> Result<ThresholdTest, StatsError> {
    let d = x_curr.ncols();
    if p >= d || j >= d || p == j {
        return Err(StatsError::Shape(format!("columns {p} and {j} of a {d}-column matrix")));
    }
    let r_sep = Design::new(x_curr)?.r2_score(y);
    feature_test_with(r_sep, x_curr, y, p, j, epsilon)
}

/// What the loop aggregates and the data its tests need.
#[derive(Debug, Clone, Copy)]
pub enum LoopInput<'a> {
    /// Phase 1: targets (columns of `targets`) against shared features.
    Targets {
        features: &'a DMatrix<f64>,
        targets: &'a DMatrix<f64>,
    },
    /// Phase 2: features (columns of `features`) for one aggregated target.
    Features {
        features: &'a DMatrix<f64>,
        target: &'a [f64],
    },
    /// Per-task-feature variant: targets, each with its own feature slab.
    TaskSlabs {
        slabs: &'a [DMatrix<f64>],
        targets: &'a DMatrix<f64>,
    },
}

impl LoopInput<'_> {
    fn item_count(&self) -> usize {
        match self {
            LoopInput::Targets { targets, .. } | LoopInput::TaskSlabs { targets, .. } => targets.ncols(),
            LoopInput::Features { features, .. } => features.ncols(),
        }
    }

    fn phase(&self) -> u8 {
        match self {
            LoopInput::Features { .. } => 2,
            _ => 1,
        }
    }
}

/// Clusters (members sorted, creation order) and every comparison made.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutput {
    pub clusters: Vec<Vec<usize>>,
    pub trace: Vec<ThresholdReport>,
}

/// Working feature matrix for a phase-2 test: unvisited original columns in
/// index order, then the means of completed clusters, then the current
/// cluster's mean. Returns the matrix, the current cluster's column and the
/// column of each unvisited item.
pub fn working_matrix(
    features: &DMatrix<f64>,
    completed: &[Vec<usize>],
    current: &[usize],
) -> (DMatrix<f64>, usize, Vec<Option<usize>>) {
    let d = features.ncols();
    let mut visited = vec![false; d];
    for &i in completed.iter().flatten().chain(current) {
        visited[i] = true;
    }
    let mut position = vec![None; d];
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(d);
    for i in (0..d).filter(|&i| !visited[i]) {
        position[i] = Some(cols.len());
        cols.push(features.column(i).into_owned());
    }
    for c in completed {
        cols.push(nalgebra::DVector::from_vec(mean_of_columns(features, c)));
    }
    let p = cols.len();
    cols.push(nalgebra::DVector::from_vec(mean_of_columns(features, current)));
    (DMatrix::from_columns(&cols), p, position)
}

fn validate_order(order: &[usize], count: usize) -> Result<(), DataError> {
    let mut seen = vec![false; count];
    for &i in order {
        if i >= count {
            return Err(DataError::IndexOutOfBounds {
                what: "loop items",
                index: i,
                len: count,
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(DataError::InvalidPartition(format!("item {i} listed twice")));
        }
    }
    Ok(())
}

/// The iterative aggregation loop over `order`.
///
/// The outer pass opens a cluster at each unvisited item; the inner pass
/// tests every later unvisited item against the cluster and merges it when
/// the phase's threshold test accepts.
pub fn aggregation_loop(order: &[usize], input: LoopInput<'_>, epsilon: f64) -> Result<LoopOutput, Error> {
    validate_order(order, input.item_count())?;
    let phase = input.phase();
    let mut visited = vec![false; input.item_count()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut trace = Vec::new();

    for (a, &i) in order.iter().enumerate() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let cluster_id = clusters.len();
        let mut members = vec![i];
        // phase 2: R² of the working matrix, valid until the next merge
        let mut cached_sep: Option<Result<f64, StatsError>> = None;

        for &j in &order[a + 1..] {
            if visited[j] {
                continue;
            }
            let test = match input {
                LoopInput::Targets { features, targets } => {
                    let y_p = mean_of_columns(targets, &members);
                    let y_j: Vec<f64> = targets.column(j).iter().copied().collect();
                    compute_threshold_targets(features, &y_p, &y_j, epsilon)?
                }
                LoopInput::TaskSlabs { slabs, targets } => {
                    let y_p = mean_of_columns(targets, &members);
                    let y_j: Vec<f64> = targets.column(j).iter().copied().collect();
                    let x_p = mean_of_slabs(slabs, &members);
                    compute_threshold_targets_slabs(&x_p, &slabs[j], &y_p, &y_j, epsilon)?
                }
                LoopInput::Features { features, target } => {
                    let (x_curr, p, position) = working_matrix(features, &clusters, &members);
                    let col_j = position[j].expect("unvisited feature has a working column");
                    let r_sep = cached_sep
                        .get_or_insert_with(|| Design::new(&x_curr).and_then(|d| d.r2_score(target)))
                        .clone();
                    feature_test_with(r_sep, &x_curr, target, p, col_j, epsilon)?
                }
            };
            let accepted = test.accepted;
            trace.push(ThresholdReport {
                phase,
                task_cluster: None,
                candidate_pair: (cluster_id, j),
                members: members.clone(),
                test,
            });
            if accepted {
                members.push(j);
                visited[j] = true;
                cached_sep = None;
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    Ok(LoopOutput { clusters, trace })
}

/// Seeded shuffle of `0..count`.
pub fn shuffled_order(count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

fn phase_two(
    features: &DMatrix<f64>,
    task_partition: &Partition,
    epsilon2: f64,
) -> Result<Vec<(Partition, Vec<ThresholdReport>)>, Error> {
    let order: Vec<usize> = (0..features.ncols()).collect();
    let run = |(c, target): (usize, &Vec<f64>)| -> Result<(Partition, Vec<ThresholdReport>), Error> {
        let out = aggregation_loop(&order, LoopInput::Features { features, target }, epsilon2)?;
        let trace = out
            .trace
            .into_iter()
            .map(|mut r| {
                r.task_cluster = Some(c);
                r
            })
            .collect();
        Ok((Partition::from_columns(out.clusters, features)?, trace))
    };
    let jobs: Vec<(usize, &Vec<f64>)> = task_partition.aggregated().iter().enumerate().collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(run).collect()
    }
}

/// Two-phase aggregation on shared features.
///
/// Phase I clusters the targets (visited in a seed-shuffled order) and
/// replaces each cluster by its mean. Phase II then aggregates features,
/// in dataset order, separately for every aggregated target. The dataset
/// is expected to be centered.
pub fn nonlin_ctfa(dataset: &Dataset, epsilon1: f64, epsilon2: f64, seed: u64) -> Result<AggregationResult, Error> {
    let order = shuffled_order(dataset.n_tasks(), seed);
    let phase1 = aggregation_loop(
        &order,
        LoopInput::Targets {
            features: dataset.features(),
            targets: dataset.targets(),
        },
        epsilon1,
    )?;
    let task_partition = Partition::from_columns(phase1.clusters, dataset.targets())?;

    let mut trace = phase1.trace;
    let mut feature_partitions = Vec::with_capacity(task_partition.len());
    for (partition, records) in phase_two(dataset.features(), &task_partition, epsilon2)? {
        feature_partitions.push(partition);
        trace.extend(records);
    }
    Ok(AggregationResult {
        variant: Variant::Shared,
        task_partition,
        feature_partitions,
        trace,
        seed,
        epsilon1,
        epsilon2,
    })
}

/// Single-phase variant for tasks that each carry their own measurements
/// of the same `D` features: merging two tasks averages both their targets
/// and their feature slabs. Features are not aggregated further, so every
/// feature partition is the identity; `epsilon2` is reported as 0.
pub fn nonlin_ctfa_homogeneous(dataset: &Dataset, epsilon: f64, seed: u64) -> Result<AggregationResult, Error> {
    let slabs = dataset
        .per_task_features()
        .ok_or_else(|| DataError::Shape("homogeneous variant needs per-task features".into()))?;
    let order = shuffled_order(dataset.n_tasks(), seed);
    let out = aggregation_loop(
        &order,
        LoopInput::TaskSlabs {
            slabs,
            targets: dataset.targets(),
        },
        epsilon,
    )?;
    let task_partition = Partition::from_columns(out.clusters, dataset.targets())?;
    let feature_partitions = task_partition
        .clusters()
        .iter()
        .map(|m| Partition::singletons(&mean_of_slabs(slabs, m)))
        .collect();
    Ok(AggregationResult {
        variant: Variant::Homogeneous,
        task_partition,
        feature_partitions,
        trace: out.trace,
        seed,
        epsilon1: epsilon,
        epsilon2: 0.0,
    })
}

/// A trace record whose re-evaluation disagrees with what was recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub index: usize,
    pub recorded: ThresholdTest,
    pub replayed: ThresholdTest,
}

/// Re-evaluates every recorded comparison of `result` on `dataset` (the same
/// centered data the run used) and returns the records that disagree.
pub fn replay_trace(dataset: &Dataset, result: &AggregationResult) -> Result<Vec<ReplayMismatch>, Error> {
    let mut mismatches = Vec::new();
    for (index, record) in result.trace.iter().enumerate() {
        let (_, j) = record.candidate_pair;
        let eps = record.test.epsilon;
        let targets = dataset.targets();
        let bounds = |i: usize, len: usize, what| {
            (i < len)
                .then_some(())
                .ok_or(DataError::IndexOutOfBounds { what, index: i, len })
        };
        let replayed = match (record.phase, result.variant) {
            (1, variant) => {
                bounds(j, targets.ncols(), "tasks")?;
                for &m in &record.members {
                    bounds(m, targets.ncols(), "tasks")?;
                }
                let y_p = mean_of_columns(targets, &record.members);
                let y_j: Vec<f64> = targets.column(j).iter().copied().collect();
                match variant {
                    Variant::Shared => compute_threshold_targets(dataset.features(), &y_p, &y_j, eps)?,
                    Variant::Homogeneous => {
                        let slabs = dataset
                            .per_task_features()
                            .ok_or_else(|| DataError::Shape("no per-task features".into()))?;
                        let x_p = mean_of_slabs(slabs, &record.members);
                        compute_threshold_targets_slabs(&x_p, &slabs[j], &y_p, &y_j, eps)?
                    }
                }
            }
            (2, _) => {
                let c = record
                    .task_cluster
                    .ok_or_else(|| DataError::Shape("phase-2 record without task cluster".into()))?;
                bounds(c, result.feature_partitions.len(), "task clusters")?;
                let partition = &result.feature_partitions[c];
                let (cluster_id, _) = record.candidate_pair;
                bounds(cluster_id, partition.len() + 1, "feature clusters")?;
                let features = dataset.features();
                bounds(j, features.ncols(), "features")?;
                let completed = &partition.clusters()[..cluster_id];
                let (x_curr, p, position) = working_matrix(features, completed, &record.members);
                let col_j = position[j]
                    .ok_or_else(|| DataError::InvalidPartition(format!("feature {j} already visited")))?;
                let target = &result.task_partition.aggregated()[c];
                compute_threshold_features(&x_curr, target, p, col_j, eps)?
            }
            (phase, _) => return Err(DataError::Shape(format!("unknown phase {phase}")).into()),
        };
        if replayed != record.test {
            mismatches.push(ReplayMismatch {
                index,
                recorded: record.test.clone(),
                replayed,
            });
        }
    }
    Ok(mismatches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::center;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn centered_cols(mut m: DMatrix<f64>) -> DMatrix<f64> {
        for mut c in m.column_iter_mut() {
            let mu = c.mean();
            c.add_scalar_mut(-mu);
        }
        m
    }

    #[test]
    fn identical_targets_collapse_to_zero_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = centered_cols(normal_matrix(&mut rng, 50, 4));
        let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let t = compute_threshold_targets(&x, &y, &y, 0.0).unwrap();
        let terms = t.targets.unwrap();
        assert_eq!(terms.threshold1, 0.0);
        assert_eq!(terms.threshold2, 0.0);
        assert!(t.accepted);
    }

    #[test]
    fn opposite_targets_are_rejected_with_diagnostic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal_matrix(&mut rng, 30, 2);
        let y: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let t = compute_threshold_targets(&x, &y, &neg, 1e6).unwrap();
        assert!(!t.accepted);
        assert!(t.diagnostic.unwrap().contains("y_ag"));
    }

    #[test]
    fn duplicate_feature_merge_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = normal_matrix(&mut rng, 80, 5);
        let dup = x.column(1).into_owned();
        x.set_column(3, &dup);
        let y: Vec<f64> = (0..80).map(|r| x[(r, 0)] + x[(r, 1)] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let t = compute_threshold_features(&x, &y, 1, 3, 0.0).unwrap();
        let terms = t.features.unwrap();
        assert_eq!(terms.r_gap, 0.0);
        assert!(t.accepted);
    }

    #[test]
    fn antisymmetric_signal_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = centered_cols(normal_matrix(&mut rng, 200, 4));
        let y: Vec<f64> = (0..200)
            .map(|r| x[(r, 0)] - x[(r, 2)] + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = compute_threshold_features(&x, &y, 0, 2, 1e-4).unwrap();
        let terms = t.features.unwrap();
        assert!(terms.r_aggr < 0.6 && terms.r_sep > 0.99, "{terms:?}");
        assert!(!t.accepted);
        // the symmetric signal survives the merge
        let y: Vec<f64> = (0..200)
            .map(|r| x[(r, 0)] + x[(r, 2)] + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(compute_threshold_features(&x, &y, 0, 2, 1e-4).unwrap().accepted);
    }

    #[test]
    fn single_item_loop() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let out = aggregation_loop(&[0], LoopInput::Targets { features: &x, targets: &y }, 0.0).unwrap();
        assert_eq!(out.clusters, vec![vec![0]]);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn three_identical_targets_form_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = centered_cols(normal_matrix(&mut rng, 40, 3));
        let col: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let y = DMatrix::from_fn(40, 3, |r, _| col[r]);
        let out = aggregation_loop(&[2, 0, 1], LoopInput::Targets { features: &x, targets: &y }, 0.0).unwrap();
        assert_eq!(out.clusters, vec![vec![0, 1, 2]]);
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.trace[1].members, vec![2, 0]);
    }

    #[test]
    fn no_accepts_means_quadratic_comparisons() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = normal_matrix(&mut rng, 30, 3);
        let y = normal_matrix(&mut rng, 30, 6);
        let order: Vec<usize> = (0..6).collect();
        let out = aggregation_loop(&order, LoopInput::Targets { features: &x, targets: &y }, -1e6).unwrap();
        assert_eq!(out.clusters.len(), 6);
        assert_eq!(out.trace.len(), 6 * 5 / 2);
    }

    #[test]
    fn loop_rejects_bad_orders() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.0]);
        let y = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, -1.0, 2.0, 1.0, 0.0]);
        let input = LoopInput::Targets { features: &x, targets: &y };
        assert!(aggregation_loop(&[0, 0], input, 0.0).is_err());
        assert!(aggregation_loop(&[0, 5], input, 0.0).is_err());
    }

    #[test]
    fn extreme_epsilons_span_singletons_to_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = normal_matrix(&mut rng, 60, 4);
        let y = normal_matrix(&mut rng, 60, 5);
        let ds = center(&Dataset::new(
            x,
            y,
            (0..4).map(|i| format!("x{i}")).collect(),
            (0..5).map(|i| format!("y{i}")).collect(),
        )
        .unwrap())
        .dataset;
        let low = nonlin_ctfa(&ds, -1e6, -1e6, 9).unwrap();
        assert_eq!(low.task_partition.len(), 5);
        assert!(low.reduced_feature_counts().iter().all(|&d| d == 4));
        let high = nonlin_ctfa(&ds, 1e6, 1e6, 9).unwrap();
        assert_eq!(high.task_partition.len(), 1);
        assert_eq!(high.reduced_feature_counts(), vec![1]);
        assert!(replay_trace(&ds, &low).unwrap().is_empty());
        assert!(replay_trace(&ds, &high).unwrap().is_empty());
    }

    #[test]
    fn homogeneous_all_accepts_average_every_slab() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let slabs: Vec<DMatrix<f64>> = (0..4).map(|_| normal_matrix(&mut rng, 25, 3)).collect();
        let y = normal_matrix(&mut rng, 25, 4);
        let ds = Dataset::with_task_features(
            slabs.clone(),
            y,
            (0..3).map(|i| format!("f{i}")).collect(),
            (0..4).map(|i| format!("t{i}")).collect(),
        )
        .unwrap();
        let res = nonlin_ctfa_homogeneous(&ds, 1e6, 1).unwrap();
        assert_eq!(res.task_partition.len(), 1);
        let reduced = crate::data::apply_partition(&ds, &res).unwrap();
        let expected = slabs.iter().fold(DMatrix::zeros(25, 3), |acc, s| acc + s) / 4.0;
        assert!((&reduced[0].features - expected).amax() < 1e-10);
        assert!(replay_trace(&ds, &res).unwrap().is_empty());
    }

    #[test]
    fn homogeneous_identical_tasks_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let slab = centered_cols(normal_matrix(&mut rng, 40, 3));
        let col: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let y = DMatrix::from_fn(40, 2, |r, _| col[r]);
        let t = compute_threshold_targets_slabs(&slab, &slab, &col, &col, 0.0).unwrap();
        assert!(t.accepted);
        let ds = Dataset::with_task_features(
            vec![slab.clone(), slab],
            y,
            (0..3).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(nonlin_ctfa_homogeneous(&ds, 0.0, 4).unwrap().task_partition.len(), 1);
    }

    #[test]
    fn homogeneous_requires_slabs() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let ds = Dataset::new(x, y, vec!["x".into()], vec!["y".into()]).unwrap();
        assert!(nonlin_ctfa_homogeneous(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn working_matrix_layout() {
        let x = DMatrix::from_fn(2, 5, |r, c| (10 * c + r) as f64);
        let (w, p, pos) = working_matrix(&x, &[vec![0, 2]], &[3]);
        // unvisited 1 and 4, then mean(0,2), then current {3}
        assert_eq!(w.ncols(), 4);
        assert_eq!(p, 3);
        assert_eq!(pos, vec![None, Some(0), None, None, Some(1)]);
        assert_eq!(w[(0, 2)], 10.0);
        assert_eq!(w[(1, 3)], 31.0);
    }

    #[test]
    fn trace_serializes_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = normal_matrix(&mut rng, 40, 3);
        let y = normal_matrix(&mut rng, 40, 3);
        let ds = center(&Dataset::new(
            x,
            y,
            (0..3).map(|i| format!("x{i}")).collect(),
            (0..3).map(|i| format!("y{i}")).collect(),
        )
        .unwrap())
        .dataset;
        let res = nonlin_ctfa(&ds, 0.0, 1e-4, 3).unwrap();
        let json = res.to_json();
        let doc = crate::data::ResultDocument::from_json(&json).unwrap();
        assert_eq!(doc.to_json(), json);
        let rebound = doc.bind(&ds).unwrap();
        assert_eq!(rebound, res);
        assert!(json.contains("\"threshold1\""));
        assert!(json.contains("\"r_P\""));
    }
}
