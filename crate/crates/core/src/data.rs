//! Local datasets, the shared unlabeled test set, and their file formats.
//!
//! Dataset CSV: header `node_id,x_1,..,x_d,y`, one sample per row.
//! Test-set CSV: header `x_1,..,x_d`, one feature vector per row.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{ClusterAssignment, EmpiricalGraph};

/// Labeled samples held by one node. Rows of `features` are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl LocalDataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    /// Builds a dataset from per-sample feature rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let features = rows_to_matrix(rows)?;
        Self::new(features, DVector::from_column_slice(labels))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Unlabeled feature vectors shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub features: DMatrix<f64>,
}

impl TestSet {
    pub fn new(features: DMatrix<f64>) -> Self {
        Self { features }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(rows_to_matrix(rows)?))
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkedData {
    pub graph: EmpiricalGraph,
    pub datasets: Vec<LocalDataset>,
    pub test_set: TestSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub node: Option<usize>,
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.node, self.row) {
            (Some(n), Some(r)) => write!(f, "node {n}, row {r}: {}", self.message),
            (Some(n), None) => write!(f, "node {n}: {}", self.message),
            (None, Some(r)) => write!(f, "test set row {r}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

/// Every invariant violation found by [`NetworkedData::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn push(&mut self, node: Option<usize>, row: Option<usize>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            node,
            row,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mentions_node(&self, node: usize) -> bool {
        self.issues.iter().any(|i| i.node == Some(node))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

impl NetworkedData {
    /// Assembles an instance without checking it; see [`NetworkedData::validated`].
    pub fn new(graph: EmpiricalGraph, datasets: Vec<LocalDataset>, test_set: TestSet) -> Self {
        Self {
            graph,
            datasets,
            test_set,
        }
    }

    pub fn validated(
        graph: EmpiricalGraph,
        datasets: Vec<LocalDataset>,
        test_set: TestSet,
    ) -> Result<Self> {
        let nd = Self::new(graph, datasets, test_set);
        nd.validate().map_err(Error::Validation)?;
        Ok(nd)
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Feature dimension, taken from the test set.
    pub fn dim(&self) -> usize {
        self.test_set.dim()
    }

    pub fn validate(&self) -> std::result::Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        let n = self.graph.node_count();
        let d = self.test_set.dim();

        if self.datasets.len() != n {
            report.push(
                None,
                None,
                format!("{} datasets for a graph with {n} nodes", self.datasets.len()),
            );
        }
        if self.test_set.is_empty() {
            report.push(None, None, "test set must contain at least one feature vector");
        }
        if d == 0 {
            report.push(None, None, "feature dimension must be at least 1");
        }
        for r in 0..self.test_set.len() {
            if self.test_set.features.row(r).iter().any(|v| !v.is_finite()) {
                report.push(None, Some(r), "non-finite test feature");
            }
        }

        for (node, ds) in self.datasets.iter().enumerate() {
            if ds.is_empty() {
                report.push(Some(node), None, "dataset must contain at least one sample");
            }
            if ds.features.nrows() != ds.labels.len() {
                report.push(
                    Some(node),
                    None,
                    format!(
                        "{} feature rows but {} labels",
                        ds.features.nrows(),
                        ds.labels.len()
                    ),
                );
            }
            if ds.dim() != d {
                report.push(
                    Some(node),
                    None,
                    format!("dimension mismatch: dataset has d = {}, test set has d = {d}", ds.dim()),
                );
            }
            for r in 0..ds.features.nrows() {
                if ds.features.row(r).iter().any(|v| !v.is_finite()) {
                    report.push(Some(node), Some(r), "non-finite feature");
                }
            }
            for (r, y) in ds.labels.iter().enumerate() {
                if !y.is_finite() {
                    report.push(Some(node), Some(r), format!("non-finite label {y}"));
                }
            }
        }

        if report.is_empty() {
            Ok(())
        } else {
            Err(report)
        }
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let graph = self.graph.permuted(perm)?;
        let mut datasets = vec![None; self.datasets.len()];
        for (old, ds) in self.datasets.iter().enumerate() {
            datasets[perm[old]] = Some(ds.clone());
        }
        Ok(Self::new(
            graph,
            datasets.into_iter().map(Option::unwrap).collect(),
            self.test_set.clone(),
        ))
    }

    pub fn save(&self, graph_path: &Path, data_path: &Path, test_path: &Path) -> Result<()> {
        self.graph.save(graph_path)?;
        write_datasets(&self.datasets, self.dim(), data_path)?;
        write_test_set(&self.test_set, test_path)
    }
}

/// How the shared test set is produced by [`synth_networked_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestSetSource {
    /// Fresh draws from the feature law.
    #[default]
    Fresh,
    /// Rows subsampled without replacement from the pooled training features.
    PooledTraining,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub m_per_node: usize,
    pub m_test: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub test_source: TestSetSource,
}

/// Draws local datasets from per-cluster linear laws `y = w_c^T x + noise`
/// with standard normal features.
///
/// Draw order: node by node, each sample draws its `d` features and then one
/// noise variate; the test set is drawn last.
pub fn synth_networked_data(
    graph: &EmpiricalGraph,
    clusters: &ClusterAssignment,
    cluster_weights: &[Vec<f64>],
    opts: &SynthOptions,
) -> Result<NetworkedData> {
    let n = graph.node_count();
    if clusters.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: clusters.len(),
        });
    }
    if clusters.cluster_count() > cluster_weights.len() {
        return Err(Error::Parameter(format!(
            "cluster {} has no weight vector ({} given)",
            cluster_weights.len(),
            cluster_weights.len()
        )));
    }
    let d = cluster_weights.first().map_or(0, Vec::len);
    if d == 0 || cluster_weights.iter().any(|w| w.len() != d) {
        return Err(Error::Parameter(
            "cluster weight vectors must share a positive dimension".into(),
        ));
    }
    if opts.m_per_node == 0 || opts.m_test == 0 {
        return Err(Error::Parameter("m_per_node and m_test must be at least 1".into()));
    }
    if !(opts.noise_std.is_finite() && opts.noise_std >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise_std must be non-negative, got {}",
            opts.noise_std
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let m = opts.m_per_node;
    let mut datasets = Vec::with_capacity(n);
    for node in 0..n {
        let w = &cluster_weights[clusters.cluster_of(node)];
        let mut features = DMatrix::zeros(m, d);
        let mut labels = DVector::zeros(m);
        for r in 0..m {
            for c in 0..d {
                features[(r, c)] = normal(&mut rng);
            }
            let clean: f64 = (0..d).map(|c| w[c] * features[(r, c)]).sum();
            labels[r] = clean + opts.noise_std * normal(&mut rng);
        }
        datasets.push(LocalDataset { features, labels });
    }

    let test_features = match opts.test_source {
        TestSetSource::Fresh => DMatrix::from_fn(opts.m_test, d, |_, _| normal(&mut rng)),
        TestSetSource::PooledTraining => {
            let pool = n * m;
            if opts.m_test > pool {
                return Err(Error::Parameter(format!(
                    "cannot subsample {} test rows from {pool} pooled training rows",
                    opts.m_test
                )));
            }
            let picks = index::sample(&mut rng, pool, opts.m_test).into_vec();
            DMatrix::from_fn(opts.m_test, d, |r, c| {
                let k = picks[r];
                datasets[k / m].features[(k % m, c)]
            })
        }
    };

    NetworkedData::validated(graph.clone(), datasets, TestSet::new(test_features))
}

fn parse_finite(field: &str, path: &Path, line: u64, column: usize) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| {
        Error::parse(path, line, format!("column {}: not a number: {field:?}", column + 1))
    })?;
    if !value.is_finite() {
        return Err(Error::parse(
            path,
            line,
            format!("column {}: non-finite value {field:?}", column + 1),
        ));
    }
    Ok(value)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_feature_header(names: &[&str], path: &Path) -> Result<()> {
    for (k, name) in names.iter().enumerate() {
        let expected = format!("x_{}", k + 1);
        if *name != expected {
            return Err(Error::parse(
                path,
                1,
                format!("header column {:?} should be {expected:?}", name),
            ));
        }
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

/// Reads the per-node dataset file. Rows of one node keep their file order.
pub fn read_datasets(path: &Path, node_count: usize) -> Result<Vec<LocalDataset>> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[0] != "node_id" || names[names.len() - 1] != "y" {
        return Err(Error::parse(
            path,
            1,
            "header must be node_id,x_1,..,x_d,y",
        ));
    }
    check_feature_header(&names[1..names.len() - 1], path)?;
    let d = names.len() - 2;

    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); node_count];
    let mut labels: Vec<Vec<f64>> = vec![Vec::new(); node_count];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} columns, found {}", d + 2, record.len()),
            ));
        }
        let node: usize = record[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid node id {:?}", &record[0])))?;
        if node >= node_count {
            return Err(Error::parse(
                path,
                line,
                format!("node id {node} out of range for {node_count} nodes"),
            ));
        }
        let x = (0..d)
            .map(|c| parse_finite(&record[c + 1], path, line, c + 1))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_finite(&record[d + 1], path, line, d + 1)?;
        rows[node].push(x);
        labels[node].push(y);
    }

    Ok(rows
        .into_iter()
        .zip(labels)
        .map(|(r, y)| LocalDataset {
            features: DMatrix::from_fn(r.len(), d, |a, b| r[a][b]),
            labels: DVector::from_vec(y),
        })
        .collect())
}

pub fn read_test_set(path: &Path) -> Result<TestSet> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.is_empty() || names == [""] {
        return Err(Error::parse(path, 1, "header must be x_1,..,x_d"));
    }
    check_feature_header(&names, path)?;
    let d = names.len();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d {
            return Err(Error::parse(
                path,
                line,
                format!("expected {d} columns, found {}", record.len()),
            ));
        }
        rows.push(
            (0..d)
                .map(|c| parse_finite(&record[c], path, line, c))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(TestSet::new(DMatrix::from_fn(rows.len(), d, |a, b| rows[a][b])))
}

fn feature_header(d: usize) -> String {
    (1..=d).map(|k| format!("x_{k}")).collect::<Vec<_>>().join(",")
}

// `{}` on f64 prints the shortest string that parses back to the same bits.
fn write_datasets(datasets: &[LocalDataset], d: usize, path: &Path) -> Result<()> {
    let mut out = format!("node_id,{},y\n", feature_header(d));
    for (node, ds) in datasets.iter().enumerate() {
        for r in 0..ds.len() {
            out.push_str(&node.to_string());
            for v in ds.features.row(r).iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", ds.labels[r]));
        }
    }
    write_file(path, &out)
}

fn write_test_set(test: &TestSet, path: &Path) -> Result<()> {
    let mut out = feature_header(test.dim());
    out.push('\n');
    for r in 0..test.len() {
        let row: Vec<String> = test.features.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads graph, datasets and test set, then validates the assembled instance.
pub fn load_networked_data(
    graph_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<NetworkedData> {
    let graph = EmpiricalGraph::load(graph_path)?;
    let datasets = read_datasets(data_path.as_ref(), graph.node_count())?;
    let test_set = read_test_set(test_path.as_ref())?;
    NetworkedData::validated(graph, datasets, test_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;

    fn opts(m_per_node: usize, noise_std: f64, seed: u64) -> SynthOptions {
        SynthOptions {
            m_per_node,
            m_test: 5,
            noise_std,
            seed,
            test_source: TestSetSource::Fresh,
        }
    }

    fn two_node() -> NetworkedData {
        let g = EmpiricalGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let d0 = LocalDataset::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap();
        let d1 = LocalDataset::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]], &[2.0, 3.0]).unwrap();
        let t = TestSet::from_rows(&[vec![1.0, 1.0]]).unwrap();
        NetworkedData::new(g, vec![d0, d1], t)
    }

    #[test]
    fn validate_consistent_instance() {
        assert!(two_node().validate().is_ok());
    }

    #[test]
    fn validate_reports_dimension_mismatch() {
        let mut nd = two_node();
        nd.datasets[1] =
            LocalDataset::from_rows(&[vec![0.0, 1.0, 2.0]], &[1.0]).unwrap();
        let report = nd.validate().unwrap_err();
        assert!(report.mentions_node(1));
        assert!(!report.mentions_node(0));
        assert!(report.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn validate_reports_non_finite_label() {
        let mut nd = two_node();
        nd.datasets[1].labels[1] = f64::NAN;
        let report = nd.validate().unwrap_err();
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].node, Some(1));
        assert_eq!(report.issues[0].row, Some(1));
    }

    #[test]
    fn validate_reports_every_violation() {
        let mut nd = two_node();
        nd.datasets[0].labels[0] = f64::INFINITY;
        nd.datasets.push(nd.datasets[0].clone());
        nd.test_set = TestSet::new(DMatrix::zeros(0, 2));
        let report = nd.validate().unwrap_err();
        assert!(report.issues.len() >= 3, "{report}");
    }

    #[test]
    fn synth_noiseless_linear_law() {
        let g = EmpiricalGraph::edgeless(3).unwrap();
        let c = ClusterAssignment::contiguous(3, 1).unwrap();
        let nd = synth_networked_data(&g, &c, &[vec![2.0]], &opts(1, 0.0, 11)).unwrap();
        for ds in &nd.datasets {
            assert_eq!(ds.labels[0], 2.0 * ds.features[(0, 0)]);
        }
    }

    #[test]
    fn synth_is_reproducible() {
        let (g, c) = generate_sbm(6, 2, 0.9, 0.1, 1.0, 3).unwrap();
        let w = [vec![1.0, -1.0], vec![0.5, 2.0]];
        let a = synth_networked_data(&g, &c, &w, &opts(4, 0.3, 5)).unwrap();
        let b = synth_networked_data(&g, &c, &w, &opts(4, 0.3, 5)).unwrap();
        assert_eq!(a, b);
        let other = synth_networked_data(&g, &c, &w, &opts(4, 0.3, 6)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synth_local_least_squares_recovers_cluster_weights() {
        let (g, c) = generate_sbm(4, 2, 1.0, 0.0, 1.0, 0).unwrap();
        let nd = synth_networked_data(&g, &c, &[vec![1.0], vec![-1.0]], &opts(3, 0.0, 1)).unwrap();
        for (node, ds) in nd.datasets.iter().enumerate() {
            // closed-form 1-d OLS: sum(xy) / sum(x^2)
            let sxy: f64 = ds.features.column(0).dot(&ds.labels);
            let sxx: f64 = ds.features.column(0).norm_squared();
            let expected = if c.cluster_of(node) == 0 { 1.0 } else { -1.0 };
            assert!((sxy / sxx - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn synth_missing_cluster_weight() {
        let (g, c) = generate_sbm(4, 2, 1.0, 0.0, 1.0, 0).unwrap();
        assert!(matches!(
            synth_networked_data(&g, &c, &[vec![1.0]], &opts(1, 0.0, 0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn synth_pooled_test_set_uses_training_rows() {
        let (g, c) = generate_sbm(3, 1, 1.0, 0.0, 1.0, 0).unwrap();
        let mut o = opts(2, 0.1, 4);
        o.test_source = TestSetSource::PooledTraining;
        let nd = synth_networked_data(&g, &c, &[vec![1.0, 2.0]], &o).unwrap();
        for r in 0..nd.test_set.len() {
            let row = nd.test_set.features.row(r).into_owned();
            assert!(nd
                .datasets
                .iter()
                .any(|ds| (0..ds.len()).any(|k| ds.features.row(k) == row)));
        }
        o.m_test = 7;
        assert!(synth_networked_data(&g, &c, &[vec![1.0, 2.0]], &o).is_err());
    }

    #[test]
    fn files_round_trip_bit_exact() {
        let (g, c) = generate_sbm(5, 2, 0.7, 0.2, 0.3, 8).unwrap();
        let nd = synth_networked_data(&g, &c, &[vec![1.0, 0.1], vec![-3.0, 0.7]], &opts(3, 0.4, 2))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (gp, dp, tp) = (
            dir.path().join("graph.json"),
            dir.path().join("data.csv"),
            dir.path().join("test.csv"),
        );
        nd.save(&gp, &dp, &tp).unwrap();
        let back = load_networked_data(&gp, &dp, &tp).unwrap();
        assert_eq!(back, nd);
    }

    #[test]
    fn load_reports_wrong_column_count_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let gp = dir.path().join("g.json");
        let dp = dir.path().join("d.csv");
        let tp = dir.path().join("t.csv");
        std::fs::write(&gp, "{\"n\": 2, \"edges\": [[0, 1, 1.0]]}").unwrap();
        std::fs::write(&dp, "node_id,x_1,y\n0,1.0,2.0\n1,1.0\n").unwrap();
        std::fs::write(&tp, "x_1\n0.5\n").unwrap();
        match load_networked_data(&gp, &dp, &tp) {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, dp);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_empty_test_set_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let gp = dir.path().join("g.json");
        let dp = dir.path().join("d.csv");
        let tp = dir.path().join("t.csv");
        std::fs::write(&gp, "{\"n\": 1, \"edges\": []}").unwrap();
        std::fs::write(&dp, "node_id,x_1,y\n0,1.0,2.0\n").unwrap();
        std::fs::write(&tp, "x_1\n").unwrap();
        assert!(matches!(load_networked_data(&gp, &dp, &tp), Err(Error::Validation(_))));

        std::fs::write(&tp, "x_1\nNaN\n").unwrap();
        assert!(matches!(
            load_networked_data(&gp, &dp, &tp),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn load_missing_file_names_path() {
        let err = load_networked_data("/nonexistent/g.json", "d.csv", "t.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/g.json"));
    }
}
