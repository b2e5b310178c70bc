//! Datasets, partitions and aggregation results, plus CSV ingestion and
//! the JSON result document.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aggregation::ThresholdReport;
use crate::error::DataError;

/// Separator between feature and target name in per-task feature columns.
pub const TASK_FEATURE_SEP: char = '@';

/// Shared features, targets and (for the homogeneous variant) per-task
/// feature slabs. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: DMatrix<f64>,
    per_task_features: Option<Vec<DMatrix<f64>>>,
    feature_names: Vec<String>,
    target_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        targets: DMatrix<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let ds = Self {
            features,
            targets,
            per_task_features: None,
            feature_names,
            target_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a homogeneous-variant dataset: one `n x D` slab per task.
    /// The shared feature matrix is the columnwise mean of all slabs.
    pub fn with_task_features(
        slabs: Vec<DMatrix<f64>>,
        targets: DMatrix<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if slabs.len() != targets.ncols() {
            return Err(DataError::Shape(format!(
                "{} feature slabs for {} targets",
                slabs.len(),
                targets.ncols()
            )));
        }
        let first = slabs.first().ok_or(DataError::NoTargets)?;
        let shape = first.shape();
        if let Some(bad) = slabs.iter().position(|s| s.shape() != shape) {
            return Err(DataError::Shape(format!(
                "slab {bad} is {:?}, expected {shape:?}",
                slabs[bad].shape()
            )));
        }
        let members: Vec<usize> = (0..slabs.len()).collect();
        let features = mean_of_slabs(&slabs, &members);
        let ds = Self {
            features,
            targets,
            per_task_features: Some(slabs),
            feature_names,
            target_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), DataError> {
        let n = self.features.nrows();
        if self.features.ncols() == 0 {
            return Err(DataError::NoFeatures);
        }
        if self.targets.ncols() == 0 {
            return Err(DataError::NoTargets);
        }
        if n < 2 {
            return Err(DataError::TooFewSamples(n));
        }
        if self.targets.nrows() != n {
            return Err(DataError::Shape(format!(
                "features have {n} rows, targets have {}",
                self.targets.nrows()
            )));
        }
        if self.feature_names.len() != self.features.ncols() {
            return Err(DataError::Shape("feature name count".into()));
        }
        if self.target_names.len() != self.targets.ncols() {
            return Err(DataError::Shape("target name count".into()));
        }
        let check = |m: &DMatrix<f64>, names: &[String]| -> Result<(), DataError> {
            for (c, col) in m.column_iter().enumerate() {
                if let Some((r, v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(DataError::NonFinite {
                        row: r + 1,
                        column: names[c].clone(),
                        value: *v,
                    });
                }
            }
            Ok(())
        };
        check(&self.features, &self.feature_names)?;
        check(&self.targets, &self.target_names)?;
        if let Some(slabs) = &self.per_task_features {
            for (t, s) in slabs.iter().enumerate() {
                if s.shape() != self.features.shape() {
                    return Err(DataError::Shape(format!("slab {t} shape")));
                }
                let names: Vec<String> = self
                    .feature_names
                    .iter()
                    .map(|f| format!("{f}{TASK_FEATURE_SEP}{}", self.target_names[t]))
                    .collect();
                check(s, &names)?;
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_tasks(&self) -> usize {
        self.targets.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn target(&self, task: usize) -> Vec<f64> {
        self.targets.column(task).iter().copied().collect()
    }

    pub fn per_task_features(&self) -> Option<&[DMatrix<f64>]> {
        self.per_task_features.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }
}

/// Flat (unweighted) mean of the selected columns of `m`.
pub fn mean_of_columns(m: &DMatrix<f64>, members: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for &c in members {
        for (o, v) in out.iter_mut().zip(m.column(c).iter()) {
            *o += v;
        }
    }
    let k = members.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

/// Elementwise flat mean of the selected slabs.
pub fn mean_of_slabs(slabs: &[DMatrix<f64>], members: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(slabs[members[0]].nrows(), slabs[members[0]].ncols());
    for &m in members {
        out += &slabs[m];
    }
    out / members.len() as f64
}

/// Role a CSV column plays when loading a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Target,
    Ignore,
}

/// Column-role mapping for [`load_dataset`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnRole>,
    /// Role for columns the mapping does not name; `None` makes them an error.
    #[serde(default)]
    pub default_role: Option<ColumnRole>,
    /// Feature columns are named `<feature>@<target>` (homogeneous variant).
    #[serde(default)]
    pub per_task_features: bool,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, role: ColumnRole) -> Self {
        self.default_role = Some(role);
        self
    }

    pub fn with_role(mut self, column: impl Into<String>, role: ColumnRole) -> Self {
        self.columns.insert(column.into(), role);
        self
    }

    pub fn targets<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for n in names {
            self.columns.insert(n.into(), ColumnRole::Target);
        }
        self
    }

    pub fn per_task(mut self) -> Self {
        self.per_task_features = true;
        self
    }

    fn role_of(&self, column: &str) -> Result<ColumnRole, DataError> {
        self.columns
            .get(column)
            .copied()
            .or(self.default_role)
            .ok_or_else(|| DataError::UnmappedColumn(column.to_string()))
    }
}

/// Reads a headed, comma-separated file into a validated [`Dataset`].
/// Column order within each role follows the file.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

pub fn read_dataset(reader: impl std::io::Read, schema: &Schema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    for name in schema.columns.keys() {
        if !header.contains(name) {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }
    let roles: Vec<ColumnRole> = header
        .iter()
        .map(|h| schema.role_of(h))
        .collect::<Result<_, _>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Csv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if roles[c] == ColumnRole::Ignore {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: header[c].clone(),
                    value,
                });
            }
            columns[c].push(value);
        }
    }
    let n = columns
        .iter()
        .zip(&roles)
        .find(|(_, r)| **r != ColumnRole::Ignore)
        .map(|(c, _)| c.len())
        .unwrap_or(0);

    let pick = |role: ColumnRole| -> Vec<usize> {
        (0..header.len()).filter(|&c| roles[c] == role).collect()
    };
    let feature_cols = pick(ColumnRole::Feature);
    let target_cols = pick(ColumnRole::Target);
    if feature_cols.is_empty() {
        return Err(DataError::NoFeatures);
    }
    if target_cols.is_empty() {
        return Err(DataError::NoTargets);
    }
    let build = |cols: &[usize]| DMatrix::from_fn(n, cols.len(), |r, c| columns[cols[c]][r]);
    let target_names: Vec<String> = target_cols.iter().map(|&c| header[c].clone()).collect();
    let targets = build(&target_cols);

    if !schema.per_task_features {
        let feature_names = feature_cols.iter().map(|&c| header[c].clone()).collect();
        return Dataset::new(build(&feature_cols), targets, feature_names, target_names);
    }

    // <feature>@<target> columns grouped into one slab per target
    let mut feature_names: Vec<String> = Vec::new();
    let mut cell: BTreeMap<(String, String), usize> = BTreeMap::new();
    for &c in &feature_cols {
        let (f, t) = header[c]
            .rsplit_once(TASK_FEATURE_SEP)
            .filter(|(f, t)| !f.is_empty() && target_names.iter().any(|n| n == t))
            .ok_or_else(|| DataError::BadTaskFeature {
                column: header[c].clone(),
            })?;
        if !feature_names.iter().any(|n| n == f) {
            feature_names.push(f.to_string());
        }
        cell.insert((f.to_string(), t.to_string()), c);
    }
    let mut slabs = Vec::with_capacity(target_names.len());
    for t in &target_names {
        let cols: Vec<usize> = feature_names
            .iter()
            .map(|f| {
                cell.get(&(f.clone(), t.clone())).copied().ok_or_else(|| {
                    DataError::Shape(format!("missing column {f}{TASK_FEATURE_SEP}{t}"))
                })
            })
            .collect::<Result<_, _>>()?;
        slabs.push(build(&cols));
    }
    Dataset::with_task_features(slabs, targets, feature_names, target_names)
}

/// Writes a dataset as CSV: feature columns (or `<feature>@<target>` slabs)
/// followed by target columns. Values use the shortest round-trip format.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_dataset(BufWriter::new(file), dataset).map_err(io_err)
}

pub fn write_dataset(writer: impl Write, dataset: &Dataset) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    let mut sources: Vec<&DMatrix<f64>> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    match dataset.per_task_features() {
        None => {
            for (c, name) in dataset.feature_names().iter().enumerate() {
                header.push(name.clone());
                sources.push(dataset.features());
                cols.push(c);
            }
        }
        Some(slabs) => {
            for (t, slab) in slabs.iter().enumerate() {
                for (c, name) in dataset.feature_names().iter().enumerate() {
                    header.push(format!("{name}{TASK_FEATURE_SEP}{}", dataset.target_names()[t]));
                    sources.push(slab);
                    cols.push(c);
                }
            }
        }
    }
    for (c, name) in dataset.target_names().iter().enumerate() {
        header.push(name.clone());
        sources.push(dataset.targets());
        cols.push(c);
    }
    w.write_record(&header)?;
    for r in 0..dataset.n_samples() {
        let row: Vec<String> = sources
            .iter()
            .zip(&cols)
            .map(|(m, &c)| m[(r, c)].to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()
}

/// Which columns a centering step found to be constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ConstantColumn {
    Feature(usize),
    Target(usize),
    TaskFeature { task: usize, feature: usize },
}

/// Column means used to center a dataset; reusable on held-out rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeans {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub per_task: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Centered {
    pub dataset: Dataset,
    pub means: ColumnMeans,
    pub constant_columns: Vec<ConstantColumn>,
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.mean()).collect()
}

fn subtract_means(m: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, mu) in out.column_iter_mut().zip(means) {
        col.add_scalar_mut(-mu);
    }
    out
}

fn constant_cols(m: &DMatrix<f64>) -> impl Iterator<Item = usize> + '_ {
    m.column_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|v| *v == c[0]))
        .map(|(i, _)| i)
}

/// Subtracts each column's sample mean. Constant columns become all zero
/// and are reported rather than dropped.
pub fn center(dataset: &Dataset) -> Centered {
    let means = ColumnMeans {
        features: column_means(dataset.features()),
        targets: column_means(dataset.targets()),
        per_task: dataset
            .per_task_features()
            .map(|slabs| slabs.iter().map(column_means).collect()),
    };
    let mut constant_columns: Vec<ConstantColumn> = Vec::new();
    constant_columns.extend(constant_cols(dataset.features()).map(ConstantColumn::Feature));
    constant_columns.extend(constant_cols(dataset.targets()).map(ConstantColumn::Target));
    if let Some(slabs) = dataset.per_task_features() {
        for (task, s) in slabs.iter().enumerate() {
            constant_columns
                .extend(constant_cols(s).map(|feature| ConstantColumn::TaskFeature { task, feature }));
        }
    }
    let dataset = center_with(dataset, &means).expect("means computed from the same dataset");
    Centered {
        dataset,
        means,
        constant_columns,
    }
}

/// Centers `dataset` with externally supplied means (e.g. train means on test rows).
pub fn center_with(dataset: &Dataset, means: &ColumnMeans) -> Result<Dataset, DataError> {
    if means.features.len() != dataset.n_features() || means.targets.len() != dataset.n_tasks() {
        return Err(DataError::Shape("mean vector length".into()));
    }
    let mut out = dataset.clone();
    out.features = subtract_means(&dataset.features, &means.features);
    out.targets = subtract_means(&dataset.targets, &means.targets);
    match (&dataset.per_task_features, &means.per_task) {
        (Some(slabs), Some(pm)) if pm.len() == slabs.len() => {
            out.per_task_features = Some(
                slabs
                    .iter()
                    .zip(pm)
                    .map(|(s, mu)| subtract_means(s, mu))
                    .collect(),
            );
        }
        (None, _) => {}
        _ => return Err(DataError::Shape("per-task mean vectors".into())),
    }
    Ok(out)
}

/// Disjoint index clusters with their mean-aggregated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    aggregated: Vec<Vec<f64>>,
}

/// Partition over target indices.
pub type TaskPartition = Partition;
/// Partition over feature indices.
pub type FeaturePartition = Partition;

/// Checks that `clusters` are nonempty, pairwise disjoint and cover `0..size`.
pub fn validate_cover(clusters: &[Vec<usize>], size: usize) -> Result<(), DataError> {
    let mut seen = vec![false; size];
    for cluster in clusters {
        if cluster.is_empty() {
            return Err(DataError::InvalidPartition("empty cluster".into()));
        }
        for &i in cluster {
            if i >= size {
                return Err(DataError::IndexOutOfBounds {
                    what: "partition",
                    index: i,
                    len: size,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DataError::InvalidPartition(format!("index {i} repeated")));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(DataError::InvalidPartition(format!("index {missing} not covered")));
    }
    Ok(())
}

impl Partition {
    /// Builds the partition over the columns of `source`, sorting each
    /// cluster's members ascending while keeping cluster order.
    pub fn from_columns(mut clusters: Vec<Vec<usize>>, source: &DMatrix<f64>) -> Result<Self, DataError> {
        validate_cover(&clusters, source.ncols())?;
        clusters.iter_mut().for_each(|c| c.sort_unstable());
        let aggregated = clusters.iter().map(|c| mean_of_columns(source, c)).collect();
        Ok(Self {
            clusters,
            aggregated,
        })
    }

    pub fn singletons(source: &DMatrix<f64>) -> Self {
        Self::from_columns((0..source.ncols()).map(|i| vec![i]).collect(), source)
            .expect("singletons always cover")
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn aggregated(&self) -> &[Vec<f64>] {
        &self.aggregated
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Aggregated columns as an `n x k` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.aggregated.first().map_or(0, Vec::len);
        DMatrix::from_fn(n, self.aggregated.len(), |r, c| self.aggregated[c][r])
    }
}

/// Shared-feature algorithm or the per-task-feature (homogeneous) variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Shared,
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub variant: Variant,
    pub task_partition: TaskPartition,
    /// One partition per task cluster, over that cluster's feature matrix.
    pub feature_partitions: Vec<FeaturePartition>,
    pub trace: Vec<ThresholdReport>,
    pub seed: u64,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

/// Serialized form of an [`AggregationResult`]: indices and trace only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub seed: u64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    #[serde(default)]
    pub variant: Variant,
    pub task_clusters: Vec<Vec<usize>>,
    pub feature_clusters: Vec<Vec<Vec<usize>>>,
    pub trace: Vec<ThresholdReport>,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Recomputes the aggregated columns against `dataset`.
    pub fn bind(&self, dataset: &Dataset) -> Result<AggregationResult, DataError> {
        let task_partition = Partition::from_columns(self.task_clusters.clone(), dataset.targets())?;
        if self.feature_clusters.len() != task_partition.len() {
            return Err(DataError::Shape(format!(
                "{} feature partitions for {} task clusters",
                self.feature_clusters.len(),
                task_partition.len()
            )));
        }
        let feature_partitions = task_partition
            .clusters()
            .iter()
            .zip(&self.feature_clusters)
            .map(|(members, fc)| {
                let base = cluster_feature_matrix(dataset, self.variant, members)?;
                Partition::from_columns(fc.clone(), &base)
            })
            .collect::<Result<_, _>>()?;
        Ok(AggregationResult {
            variant: self.variant,
            task_partition,
            feature_partitions,
            trace: self.trace.clone(),
            seed: self.seed,
            epsilon1: self.epsilon1,
            epsilon2: self.epsilon2,
        })
    }
}

impl AggregationResult {
    pub fn document(&self) -> ResultDocument {
        ResultDocument {
            seed: self.seed,
            epsilon1: self.epsilon1,
            epsilon2: self.epsilon2,
            variant: self.variant,
            task_clusters: self.task_partition.clusters().to_vec(),
            feature_clusters: self
                .feature_partitions
                .iter()
                .map(|p| p.clusters().to_vec())
                .collect(),
            trace: self.trace.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        self.document().to_json()
    }

    pub fn reduced_feature_counts(&self) -> Vec<usize> {
        self.feature_partitions.iter().map(Partition::len).collect()
    }
}

/// The feature matrix a task cluster's model is trained on before any
/// feature aggregation: the shared features, or the flat mean of the
/// members' slabs in the homogeneous variant.
pub fn cluster_feature_matrix(
    dataset: &Dataset,
    variant: Variant,
    members: &[usize],
) -> Result<DMatrix<f64>, DataError> {
    for &m in members {
        if m >= dataset.n_tasks() {
            return Err(DataError::IndexOutOfBounds {
                what: "tasks",
                index: m,
                len: dataset.n_tasks(),
            });
        }
    }
    match variant {
        Variant::Shared => Ok(dataset.features().clone()),
        Variant::Homogeneous => {
            let slabs = dataset
                .per_task_features()
                .ok_or_else(|| DataError::Shape("dataset has no per-task features".into()))?;
            Ok(mean_of_slabs(slabs, members))
        }
    }
}

/// One reduced task: the cluster's mean target and its aggregated features.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTask {
    pub members: Vec<usize>,
    pub target: Vec<f64>,
    pub features: DMatrix<f64>,
}

/// Applies a result's partitions to `dataset` (which may be a held-out
/// split with the same columns).
pub fn apply_partition(dataset: &Dataset, result: &AggregationResult) -> Result<Vec<ReducedTask>, DataError> {
    let clusters = result.task_partition.clusters();
    if result.feature_partitions.len() != clusters.len() {
        return Err(DataError::Shape(format!(
            "{} feature partitions for {} task clusters",
            result.feature_partitions.len(),
            clusters.len()
        )));
    }
    validate_cover(clusters, dataset.n_tasks())?;
    clusters
        .iter()
        .zip(&result.feature_partitions)
        .map(|(members, fp)| {
            let base = cluster_feature_matrix(dataset, result.variant, members)?;
            validate_cover(fp.clusters(), base.ncols())?;
            let cols: Vec<Vec<f64>> = fp.clusters().iter().map(|c| mean_of_columns(&base, c)).collect();
            let features = DMatrix::from_fn(base.nrows(), cols.len(), |r, c| cols[c][r]);
            Ok(ReducedTask {
                members: members.clone(),
                target: mean_of_columns(dataset.targets(), members),
                features,
            })
        })
        .collect()
}

/// Sorted union of all cluster members, for cover checks in tests and replay.
pub fn covered(clusters: &[Vec<usize>]) -> BTreeSet<usize> {
    clusters.iter().flatten().copied().collect()
}
