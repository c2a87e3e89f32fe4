//! Python bindings for `fedrelax`.
//!
//! Matrices cross the boundary as lists of rows. Errors from the core crate
//! raise `FedRelaxError`, except I/O failures which raise `OSError`.

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fedrelax::data::{
    load_networked_data, synth_networked_data, LocalDataset, NetworkedData, SynthOptions,
    TestSet, TestSetSource,
};
use fedrelax::engine::{
    oracle_gtvmin_linear, run_fedrelax_with_exchange, EngineConfig, RoundLog, Schedule,
    StoppingCriterion, UpdateCoupling,
};
use fedrelax::graph::{generate_sbm, ClusterAssignment, EmpiricalGraph};
use fedrelax::models::{LocalHypothesis, ModelSpec};
use fedrelax::objective::{objective_parts, LossKind, NetworkedHypothesis};
use fedrelax::simnet::{Network, NetworkModel, SimExchange};
use fedrelax::Error;

create_exception!(pyfedrelax, FedRelaxError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => FedRelaxError::new_err(e.to_string()),
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!(
            "row {bad} has {} entries, expected {d}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Undirected weighted graph on nodes `0..n`.
#[pyclass(name = "Graph", module = "pyfedrelax", frozen)]
pub struct PyGraph {
    inner: EmpiricalGraph,
}

#[pymethods]
impl PyGraph {
    /// `edges` is a list of `(i, j, weight)` with positive weights.
    #[new]
    #[pyo3(signature = (node_count, edges = Vec::new()))]
    fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let inner = EmpiricalGraph::new(node_count, edges).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Stochastic block model with contiguous clusters. Returns the graph and
    /// the cluster index of every node.
    #[staticmethod]
    #[pyo3(signature = (n, k, p_in, p_out, weight = 1.0, seed = 0))]
    fn sbm(n: usize, k: usize, p_in: f64, p_out: f64, weight: f64, seed: u64) -> PyResult<(Self, Vec<usize>)> {
        let (inner, clusters) = generate_sbm(n, k, p_in, p_out, weight, seed).map_err(py_err)?;
        Ok((Self { inner }, clusters.into()))
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: EmpiricalGraph::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EmpiricalGraph::from_json(text, "<string>".as_ref()).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.i, e.j, e.weight)).collect()
    }

    fn neighbours(&self, i: usize) -> PyResult<Vec<(usize, f64)>> {
        Ok(self.inner.neighbours(i).map_err(py_err)?.to_vec())
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.laplacian())
    }

    /// Component index of every node.
    fn connected_components(&self) -> Vec<usize> {
        self.inner.connected_components().into()
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.inner.node_count(), self.inner.edge_count())
    }
}

/// A graph, one local dataset per node and the shared unlabeled test set.
#[pyclass(name = "NetworkedData", module = "pyfedrelax", frozen)]
pub struct PyNetworkedData {
    inner: NetworkedData,
}

#[pymethods]
impl PyNetworkedData {
    /// `datasets[i]` is `(feature_rows, labels)` for node `i`. The instance
    /// is validated on construction.
    #[new]
    fn new(graph: &PyGraph, datasets: Vec<(Vec<Vec<f64>>, Vec<f64>)>, test_rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let datasets = datasets
            .iter()
            .map(|(rows, labels)| LocalDataset::from_rows(rows, labels))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        let test = TestSet::from_rows(&test_rows).map_err(py_err)?;
        let inner = NetworkedData::validated(graph.inner.clone(), datasets, test).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Per-cluster linear data `y = w_c^T x + noise` on `graph`.
    /// `test_source` is `"fresh"` or `"pooled_training"`.
    #[staticmethod]
    #[pyo3(signature = (graph, clusters, cluster_weights, m_per_node, m_test, noise_std, seed = 0, test_source = "fresh"))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        graph: &PyGraph,
        clusters: Vec<usize>,
        cluster_weights: Vec<Vec<f64>>,
        m_per_node: usize,
        m_test: usize,
        noise_std: f64,
        seed: u64,
        test_source: &str,
    ) -> PyResult<Self> {
        let test_source = match test_source {
            "fresh" => TestSetSource::Fresh,
            "pooled_training" => TestSetSource::PooledTraining,
            other => return Err(PyValueError::new_err(format!("unknown test_source {other:?}"))),
        };
        let clusters = ClusterAssignment::new(clusters).map_err(py_err)?;
        let opts = SynthOptions {
            m_per_node,
            m_test,
            noise_std,
            seed,
            test_source,
        };
        let inner = synth_networked_data(&graph.inner, &clusters, &cluster_weights, &opts).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(graph_path: std::path::PathBuf, data_path: std::path::PathBuf, test_path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_networked_data(graph_path, data_path, test_path).map_err(py_err)?,
        })
    }

    fn save(&self, graph_path: std::path::PathBuf, data_path: std::path::PathBuf, test_path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&graph_path, &data_path, &test_path).map_err(py_err)
    }

    #[getter]
    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.inner.graph.clone(),
        }
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `(feature_rows, labels)` of node `i`.
    fn local_data(&self, i: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let ds = self
            .inner
            .datasets
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no node {i}")))?;
        Ok((matrix_to_rows(&ds.features), ds.labels.iter().copied().collect()))
    }

    fn test_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.test_set.features)
    }

    fn __repr__(&self) -> String {
        format!(
            "NetworkedData(nodes={}, dim={}, m_test={})",
            self.inner.node_count(),
            self.inner.dim(),
            self.inner.test_set.len()
        )
    }
}

/// Model family used by a node.
#[pyclass(name = "ModelSpec", module = "pyfedrelax", frozen)]
pub struct PyModelSpec {
    inner: ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[staticmethod]
    fn constant() -> Self {
        Self {
            inner: ModelSpec::Constant,
        }
    }

    #[staticmethod]
    fn linear(dim: usize) -> Self {
        Self {
            inner: ModelSpec::Linear { dim },
        }
    }

    #[staticmethod]
    #[pyo3(signature = (max_depth, min_leaf = 1))]
    fn regression_tree(max_depth: usize, min_leaf: usize) -> PyResult<Self> {
        let inner = ModelSpec::RegressionTree { max_depth, min_leaf };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({:?})", self.inner)
    }
}

/// One trained model per node.
#[pyclass(name = "Hypotheses", module = "pyfedrelax", frozen)]
pub struct PyHypotheses {
    inner: NetworkedHypothesis,
}

impl PyHypotheses {
    fn node(&self, i: usize) -> PyResult<&LocalHypothesis> {
        self.inner
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no node {i}")))
    }
}

#[pymethods]
impl PyHypotheses {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkedHypothesis::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Prediction of node `i`'s model for every feature row.
    fn predict(&self, i: usize, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_matrix(&rows)?;
        self.node(i)?.predict(&x).map_err(py_err)
    }

    /// Test-set predictions, one list per node.
    fn test_predictions(&self, data: &PyNetworkedData) -> PyResult<Vec<Vec<f64>>> {
        self.inner.predictions(&data.inner.test_set).map_err(py_err)
    }

    /// Weight vector of every node; requires linear models of one dimension.
    fn parameters(&self) -> PyResult<Vec<Vec<f64>>> {
        let w = self.inner.parameters().map_err(py_err)?;
        Ok(w.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Hypotheses(nodes={})", self.inner.len())
    }
}

fn collect_specs(model: Option<&Bound<'_, PyAny>>, n: usize, dim: usize) -> PyResult<Vec<ModelSpec>> {
    let Some(model) = model else {
        return Ok(vec![ModelSpec::Linear { dim }; n]);
    };
    if let Ok(spec) = model.extract::<PyRef<'_, PyModelSpec>>() {
        return Ok(vec![spec.inner; n]);
    }
    let list: Vec<PyRef<'_, PyModelSpec>> = model
        .extract()
        .map_err(|_| PyValueError::new_err("model must be a ModelSpec or a list of them"))?;
    Ok(list.iter().map(|s| s.inner).collect())
}

fn log_dict<'py>(py: Python<'py>, l: &RoundLog) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("round", l.round)?;
    d.set_item("objective", l.objective)?;
    d.set_item("total_local_loss", l.total_local_loss)?;
    d.set_item("gtv", l.gtv)?;
    d.set_item("max_prediction_delta", l.max_prediction_delta)?;
    Ok(d)
}

/// Runs FedRelax from all-zero models. Returns the final models and one log
/// dict per round, round 0 being the zero start.
///
/// `model` is a ModelSpec for every node or a list with one per node;
/// linear models of the data dimension by default. A positive `drop_prob`
/// loses each message independently, seeded by `network_seed`.
#[pyfunction]
#[pyo3(signature = (
    data, model = None, lam = 1.0, schedule = "parallel", max_rounds = 100,
    rel_objective_tol = 1e-8, coupling = "block_minimizer", drop_prob = 0.0, network_seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    data: &PyNetworkedData,
    model: Option<&Bound<'py, PyAny>>,
    lam: f64,
    schedule: &str,
    max_rounds: usize,
    rel_objective_tol: f64,
    coupling: &str,
    drop_prob: f64,
    network_seed: u64,
) -> PyResult<(PyHypotheses, Vec<Bound<'py, PyDict>>)> {
    let nd = &data.inner;
    let specs = collect_specs(model, nd.node_count(), nd.dim())?;
    let schedule = match schedule {
        "parallel" => Schedule::Parallel,
        "sequential" => Schedule::Sequential,
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    };
    let coupling = match coupling {
        "block_minimizer" => UpdateCoupling::BlockMinimizer,
        "half_weight" => UpdateCoupling::HalfWeight,
        other => return Err(PyValueError::new_err(format!("unknown coupling {other:?}"))),
    };
    let config = EngineConfig {
        lambda: lam,
        schedule,
        stopping: StoppingCriterion {
            max_rounds,
            rel_objective_tol,
        },
        loss: LossKind::SquaredError,
        coupling,
    };
    let model = if drop_prob > 0.0 {
        NetworkModel::LossyIid {
            drop_prob,
            seed: network_seed,
        }
    } else {
        NetworkModel::Reliable
    };
    let out = py
        .detach(|| {
            let network = Network::new(model)?;
            let mut exchange = SimExchange::new(&nd.graph, nd.test_set.len(), network);
            run_fedrelax_with_exchange(nd, &specs, &config, &mut exchange)
        })
        .map_err(py_err)?;
    let logs = out.logs.iter().map(|l| log_dict(py, l)).collect::<PyResult<_>>()?;
    Ok((PyHypotheses { inner: out.hypotheses }, logs))
}

/// Exact minimizer for linear models under squared loss, one weight vector
/// per node. Limited to small instances.
#[pyfunction]
#[pyo3(signature = (data, lam))]
fn oracle(py: Python<'_>, data: &PyNetworkedData, lam: f64) -> PyResult<PyHypotheses> {
    let w = py.detach(|| oracle_gtvmin_linear(&data.inner, lam)).map_err(py_err)?;
    Ok(PyHypotheses {
        inner: NetworkedHypothesis::from_parameters(&w),
    })
}

/// Returns `{"objective", "total_local_loss", "gtv"}` for `h` on `data`.
#[pyfunction]
#[pyo3(signature = (h, data, lam))]
fn objective<'py>(py: Python<'py>, h: &PyHypotheses, data: &PyNetworkedData, lam: f64) -> PyResult<Bound<'py, PyDict>> {
    let parts = objective_parts(&h.inner, &data.inner, lam, LossKind::SquaredError).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("objective", parts.objective)?;
    d.set_item("total_local_loss", parts.total_local_loss)?;
    d.set_item("gtv", parts.gtv)?;
    Ok(d)
}

#[pymodule]
fn pyfedrelax(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FedRelaxError", m.py().get_type::<FedRelaxError>())?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyNetworkedData>()?;
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyHypotheses>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    Ok(())
}
