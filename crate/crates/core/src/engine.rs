//! The FedRelax iteration and an exact solver for the linear case.
//!
//! Every round, each node refits its local model on its own samples plus
//! pseudo-labeled copies of the shared test set, one copy per neighbour,
//! labeled with that neighbour's current predictions. Only test-set
//! predictions cross edges.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LocalDataset, NetworkedData, TestSet};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg::solve_psd;
use crate::models::{local_samples, weighted_erm_fit, LocalHypothesis, ModelSpec, WeightedSample};
use crate::objective::{
    check_lambda, gtv_from_predictions, local_loss, node_partial_objective, LossKind,
    NetworkedHypothesis,
};
use crate::simnet::{Network, PredictionExchange, SimExchange};

/// Largest `n * d` the exact linear solver accepts.
pub const ORACLE_SIZE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// All nodes update from the same snapshot of the previous round.
    #[default]
    Parallel,
    /// Nodes update in ascending id order, each seeing the updates already
    /// made earlier in the same round.
    Sequential,
}

/// Weight given to the neighbour term when a node refits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCoupling {
    /// Minimize the full objective over `h_i` with all other nodes fixed:
    /// `L_i + lambda * sum_j A_ij d(h_i, h_j)`. Every edge term touching `i`
    /// changes with `h_i`, hence the full `lambda`.
    #[default]
    BlockMinimizer,
    /// Minimize `L_i + (lambda / 2) * sum_j A_ij d(h_i, h_j)`, i.e. node `i`'s
    /// share of the objective.
    HalfWeight,
}

impl UpdateCoupling {
    /// The `lambda` handed to [`build_augmented_samples`], whose weights
    /// carry a factor 1/2.
    pub fn sample_lambda(self, lambda: f64) -> f64 {
        match self {
            UpdateCoupling::BlockMinimizer => 2.0 * lambda,
            UpdateCoupling::HalfWeight => lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingCriterion {
    pub max_rounds: usize,
    /// Stop once `|f_k - f_{k-1}| / |f_{k-1}|` drops below this. Zero
    /// disables the test.
    pub rel_objective_tol: f64,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            rel_objective_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub lambda: f64,
    pub schedule: Schedule,
    pub stopping: StoppingCriterion,
    pub loss: LossKind,
    pub coupling: UpdateCoupling,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            schedule: Schedule::default(),
            stopping: StoppingCriterion::default(),
            loss: LossKind::default(),
            coupling: UpdateCoupling::default(),
        }
    }
}

impl EngineConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        let tol = self.stopping.rel_objective_tol;
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::Parameter(format!(
                "rel_objective_tol must be finite and >= 0, got {tol}"
            )));
        }
        Ok(())
    }
}

/// Objective bookkeeping for one round. Round 0 is the all-zero start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub objective: f64,
    pub total_local_loss: f64,
    pub gtv: f64,
    /// Largest change of any node's test-set prediction during the round.
    pub max_prediction_delta: f64,
}

const ROUND_LOG_HEADER: &str = "round,objective,total_local_loss,gtv,max_prediction_delta";

pub fn write_round_log_csv(logs: &[RoundLog], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{ROUND_LOG_HEADER}")?;
    for l in logs {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            l.round, l.objective, l.total_local_loss, l.gtv, l.max_prediction_delta
        )?;
    }
    Ok(())
}

pub fn save_round_log(logs: &[RoundLog], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_round_log_csv(logs, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_round_log_csv(input: impl Read, path: &Path) -> Result<Vec<RoundLog>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == ROUND_LOG_HEADER => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => return Err(Error::parse(path, 1, format!("expected header `{ROUND_LOG_HEADER}`"))),
    }
    let mut logs = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k as u64 + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let round = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad round `{}`", fields[0])))?;
        let mut vals = [0.0; 4];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad number `{f}`")))?;
        }
        logs.push(RoundLog {
            round,
            objective: vals[0],
            total_local_loss: vals[1],
            gtv: vals[2],
            max_prediction_delta: vals[3],
        });
    }
    Ok(logs)
}

pub fn load_round_log(path: &Path) -> Result<Vec<RoundLog>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_round_log_csv(file, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedRelaxOutput {
    pub hypotheses: NetworkedHypothesis,
    pub logs: Vec<RoundLog>,
}

/// Training set for node `i`'s refit: its own samples at weight `1 / m_i`,
/// then for every neighbour `j` (ascending) the test features labeled with
/// `j`'s predictions at weight `lambda * A_ij / (2 m')`.
///
/// With `lambda == 0` or no neighbours only the local samples are returned.
pub fn build_augmented_samples(
    i: NodeId,
    local: &LocalDataset,
    neighbour_predictions: &BTreeMap<NodeId, Vec<f64>>,
    test: &TestSet,
    weights: &[(NodeId, f64)],
    lambda: f64,
) -> Result<Vec<WeightedSample>> {
    check_lambda(lambda)?;
    let mut samples = local_samples(local);
    if lambda == 0.0 || weights.is_empty() {
        return Ok(samples);
    }
    let m_test = test.len();
    if m_test == 0 {
        return Err(Error::Empty("test set"));
    }
    if test.dim() != local.dim() {
        return Err(Error::DimensionMismatch {
            expected: local.dim(),
            got: test.dim(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..m_test)
        .map(|r| test.features.row(r).iter().copied().collect())
        .collect();
    samples.reserve(weights.len() * m_test);
    for &(j, a) in weights {
        let preds = neighbour_predictions
            .get(&j)
            .ok_or(Error::MissingNeighbour { node: i, neighbour: j })?;
        if preds.len() != m_test {
            return Err(Error::DimensionMismatch {
                expected: m_test,
                got: preds.len(),
            });
        }
        let w = lambda * a / (2.0 * m_test as f64);
        samples.extend(
            rows.iter()
                .zip(preds)
                .map(|(x, &p)| WeightedSample::new(x.clone(), p, w)),
        );
    }
    Ok(samples)
}

/// One refit of node `i` given its neighbours' predictions.
pub fn node_update(
    i: NodeId,
    neighbour_predictions: &BTreeMap<NodeId, Vec<f64>>,
    nd: &NetworkedData,
    spec: &ModelSpec,
    config: &EngineConfig,
    previous: &LocalHypothesis,
) -> Result<LocalHypothesis> {
    let ds = nd.datasets.get(i).ok_or(Error::InvalidNode {
        node: i,
        node_count: nd.datasets.len(),
    })?;
    let weights = nd.graph.neighbours(i)?;
    let lambda = config.coupling.sample_lambda(config.lambda);
    let samples =
        build_augmented_samples(i, ds, neighbour_predictions, &nd.test_set, weights, lambda)?;
    let updated = weighted_erm_fit(spec, &samples)?;
    if spec.is_exact() {
        // the refit minimizes exactly this quantity, so it may not increase
        let before = node_partial_objective(i, previous, neighbour_predictions, nd, lambda, config.loss)?;
        let after = node_partial_objective(i, &updated, neighbour_predictions, nd, lambda, config.loss)?;
        if after > before + 1e-9 * before.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "refit of node {i} increased its objective from {before} to {after}"
            )));
        }
    }
    Ok(updated)
}

fn check_specs(nd: &NetworkedData, specs: &[ModelSpec]) -> Result<()> {
    if specs.len() != nd.node_count() {
        return Err(Error::DimensionMismatch {
            expected: nd.node_count(),
            got: specs.len(),
        });
    }
    for spec in specs {
        spec.validate()?;
        if let ModelSpec::Linear { dim } = *spec {
            if dim != nd.dim() {
                return Err(Error::DimensionMismatch {
                    expected: nd.dim(),
                    got: dim,
                });
            }
        }
    }
    Ok(())
}

/// Common feature dimension of an all-linear spec list.
pub fn require_linear(specs: &[ModelSpec]) -> Result<usize> {
    let mut dim = None;
    for spec in specs {
        match (*spec, dim) {
            (ModelSpec::Linear { dim: d }, None) => dim = Some(d),
            (ModelSpec::Linear { dim: d }, Some(prev)) if d == prev => {}
            (ModelSpec::Linear { dim: d }, Some(prev)) => {
                return Err(Error::DimensionMismatch { expected: prev, got: d })
            }
            (other, _) => {
                return Err(Error::UnsupportedSpec(format!(
                    "exact solver needs linear models, got {other:?}"
                )))
            }
        }
    }
    dim.ok_or(Error::Empty("model spec list"))
}

fn numeric_at(round: usize, node: NodeId) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numerical(_) => Error::NonFinite {
            round,
            node: Some(node),
        },
        other => other,
    }
}

struct Tracker<'a> {
    nd: &'a NetworkedData,
    lambda: f64,
    loss: LossKind,
    local_losses: Vec<f64>,
}

impl Tracker<'_> {
    fn set_local(&mut self, i: NodeId, h: &LocalHypothesis, round: usize) -> Result<()> {
        let l = local_loss(h, &self.nd.datasets[i], self.loss)?;
        if !l.is_finite() {
            return Err(Error::NonFinite { round, node: Some(i) });
        }
        self.local_losses[i] = l;
        Ok(())
    }

    fn log(&self, round: usize, predictions: &[Vec<f64>], delta: f64) -> Result<RoundLog> {
        let total_local_loss: f64 = self.local_losses.iter().sum();
        let gtv = gtv_from_predictions(predictions, &self.nd.graph, &self.nd.test_set, self.loss)?;
        let objective = total_local_loss + self.lambda * gtv;
        if !objective.is_finite() {
            return Err(Error::NonFinite { round, node: None });
        }
        Ok(RoundLog {
            round,
            objective,
            total_local_loss,
            gtv,
            max_prediction_delta: delta,
        })
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn predictions_of(h: &LocalHypothesis, test: &TestSet, round: usize, node: NodeId) -> Result<Vec<f64>> {
    let p = h.predict(&test.features)?;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { round, node: Some(node) });
    }
    Ok(p)
}

/// FedRelax with messages passed over a reliable simulated network.
pub fn run_fedrelax(
    nd: &NetworkedData,
    specs: &[ModelSpec],
    config: &EngineConfig,
) -> Result<FedRelaxOutput> {
    let mut exchange = SimExchange::new(&nd.graph, nd.test_set.len(), Network::reliable());
    run_fedrelax_with_exchange(nd, specs, config, &mut exchange)
}

/// FedRelax over a caller-supplied exchange. Starts from all-zero models,
/// whose predictions are published as round 0.
pub fn run_fedrelax_with_exchange<E: PredictionExchange + ?Sized>(
    nd: &NetworkedData,
    specs: &[ModelSpec],
    config: &EngineConfig,
    exchange: &mut E,
) -> Result<FedRelaxOutput> {
    config.validate()?;
    nd.validate().map_err(Error::Validation)?;
    check_specs(nd, specs)?;
    let n = nd.node_count();
    let test = &nd.test_set;

    let mut h = NetworkedHypothesis::zeros(specs);
    let mut preds = h.predictions(test)?;
    let mut tracker = Tracker {
        nd,
        lambda: config.lambda,
        loss: config.loss,
        local_losses: vec![0.0; n],
    };
    for i in 0..n {
        tracker.set_local(i, &h.nodes[i], 0)?;
        exchange.publish(i, 0, &preds[i])?;
    }
    exchange.end_round(0)?;
    let mut logs = vec![tracker.log(0, &preds, 0.0)?];

    for round in 1..=config.stopping.max_rounds {
        let mut delta = 0.0_f64;
        match config.schedule {
            Schedule::Parallel => {
                let snapshots = (0..n)
                    .map(|i| exchange.snapshot_for(i))
                    .collect::<Result<Vec<_>>>()?;
                let updated = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let hi = node_update(i, &snapshots[i], nd, &specs[i], config, &h.nodes[i])
                            .map_err(numeric_at(round, i))?;
                        let p = predictions_of(&hi, test, round, i)?;
                        Ok((hi, p))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (i, (hi, p)) in updated.into_iter().enumerate() {
                    delta = delta.max(sup_distance(&p, &preds[i]));
                    tracker.set_local(i, &hi, round)?;
                    exchange.publish(i, round, &p)?;
                    h.nodes[i] = hi;
                    preds[i] = p;
                }
            }
            Schedule::Sequential => {
                for i in 0..n {
                    let snapshot = exchange.snapshot_for(i)?;
                    let hi = node_update(i, &snapshot, nd, &specs[i], config, &h.nodes[i])
                        .map_err(numeric_at(round, i))?;
                    let p = predictions_of(&hi, test, round, i)?;
                    delta = delta.max(sup_distance(&p, &preds[i]));
                    tracker.set_local(i, &hi, round)?;
                    exchange.publish(i, round, &p)?;
                    h.nodes[i] = hi;
                    preds[i] = p;
                }
            }
        }
        exchange.end_round(round)?;
        let log = tracker.log(round, &preds, delta)?;
        let prev = logs.last().expect("round 0 is logged").objective;
        logs.push(log);
        let change = (prev - log.objective).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if change < config.stopping.rel_objective_tol {
            break;
        }
    }
    Ok(FedRelaxOutput { hypotheses: h, logs })
}

/// FedRelax with squared-error loss regardless of `config.loss`.
pub fn run_fedrelax_least_squares(
    nd: &NetworkedData,
    specs: &[ModelSpec],
    config: &EngineConfig,
) -> Result<FedRelaxOutput> {
    let config = EngineConfig {
        loss: LossKind::SquaredError,
        ..*config
    };
    run_fedrelax(nd, specs, &config)
}

/// FedRelax with linear models of dimension `dim` at every node; returns the
/// weights as the columns of a `dim x n` matrix.
pub fn run_fedrelax_parametric(
    nd: &NetworkedData,
    dim: usize,
    config: &EngineConfig,
) -> Result<(DMatrix<f64>, Vec<RoundLog>)> {
    if dim != nd.dim() {
        return Err(Error::DimensionMismatch {
            expected: nd.dim(),
            got: dim,
        });
    }
    let specs = vec![ModelSpec::Linear { dim }; nd.node_count()];
    let out = run_fedrelax_least_squares(nd, &specs, config)?;
    Ok((out.hypotheses.parameters()?, out.logs))
}

/// Exact minimizer of the objective for linear models and squared loss.
///
/// Solves the stationarity system
/// `(blockdiag(X_i^T X_i / m_i) + lambda * (L kron X'^T X' / m')) vec(W) = [X_i^T y_i / m_i]`
/// with a dense Cholesky factorization; `W` is `d x n`.
pub fn oracle_gtvmin_linear(nd: &NetworkedData, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    nd.validate().map_err(Error::Validation)?;
    let n = nd.node_count();
    let d = nd.dim();
    let size = n * d;
    if size > ORACLE_SIZE_CAP {
        return Err(Error::SizeCap {
            size,
            cap: ORACLE_SIZE_CAP,
        });
    }
    let test = &nd.test_set;
    let gram = test.features.tr_mul(&test.features) / test.len() as f64;
    let mut system = nd.graph.laplacian().kronecker(&gram) * lambda;
    let mut rhs = DVector::zeros(size);
    for (i, ds) in nd.datasets.iter().enumerate() {
        let m = ds.len() as f64;
        let local = ds.features.tr_mul(&ds.features) / m;
        let mut block = system.view_mut((i * d, i * d), (d, d));
        block += local;
        rhs.rows_mut(i * d, d)
            .copy_from(&(ds.features.tr_mul(&ds.labels) / m));
    }
    let solution = solve_psd(system, &rhs)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("exact solver produced non-finite weights".into()));
    }
    Ok(DMatrix::from_column_slice(d, n, solution.as_slice()))
}
