//! Scalar quantities of the GTV minimization problem: local losses,
//! prediction discrepancies on the shared test set, generalized total
//! variation, and the full objective with its per-node decomposition.
//!
//! The discrepancy is normalized by `1 / m'` everywhere. The parametric and
//! Laplacian forms below use the same normalization so that every route
//! evaluates the same number.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, MatrixView, U1};
use serde::{Deserialize, Serialize};

use crate::data::{LocalDataset, NetworkedData, TestSet};
use crate::error::{Error, Result};
use crate::graph::{EmpiricalGraph, NodeId};
use crate::models::{zero_hypothesis, LocalHypothesis, ModelSpec};

/// Loss used both for training error and for the prediction discrepancy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SquaredError,
}

impl LossKind {
    pub fn loss(&self, label: f64, prediction: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let r = label - prediction;
                r * r
            }
        }
    }

    /// Discrepancy between two predictions at test feature `x`.
    pub fn discrepancy(&self, _x: MatrixView<'_, f64, U1, Dyn, U1, Dyn>, a: f64, b: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let r = a - b;
                r * r
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            LossKind::SquaredError => true,
        }
    }
}

/// One local hypothesis per graph node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkedHypothesis {
    pub nodes: Vec<LocalHypothesis>,
}

impl NetworkedHypothesis {
    pub fn new(nodes: Vec<LocalHypothesis>) -> Self {
        Self { nodes }
    }

    pub fn zeros(specs: &[ModelSpec]) -> Self {
        Self::new(specs.iter().map(zero_hypothesis).collect())
    }

    /// Linear hypotheses whose weights are the columns of `params` (d x n).
    pub fn from_parameters(params: &DMatrix<f64>) -> Self {
        Self::new(
            params
                .column_iter()
                .map(|c| LocalHypothesis::linear(c.iter().copied().collect::<Vec<_>>()))
                .collect(),
        )
    }

    /// Stacks linear weights into a d x n matrix.
    pub fn parameters(&self) -> Result<DMatrix<f64>> {
        let columns = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, h)| {
                h.weights().ok_or_else(|| {
                    Error::UnsupportedSpec(format!("node {i} is not a linear model: {:?}", h.spec()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = columns.first().map_or(0, |c| c.len());
        if let Some(bad) = columns.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(DMatrix::from_fn(d, columns.len(), |r, c| columns[c][r]))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, i: NodeId) -> Option<&LocalHypothesis> {
        self.nodes.get(i)
    }

    /// Test-set predictions of every node.
    pub fn predictions(&self, test: &TestSet) -> Result<Vec<Vec<f64>>> {
        self.nodes.iter().map(|h| h.predict(&test.features)).collect()
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::graph::check_permutation(perm, self.nodes.len())?;
        let mut out = vec![None; self.nodes.len()];
        for (old, h) in self.nodes.iter().enumerate() {
            out[perm[old]] = Some(h.clone());
        }
        Ok(Self::new(out.into_iter().map(Option::unwrap).collect()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hypotheses serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
    }
}

/// Average loss of `h` over the samples of `ds`.
pub fn local_loss(h: &LocalHypothesis, ds: &LocalDataset, loss: LossKind) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("local dataset"));
    }
    let predictions = h.predict(&ds.features)?;
    let total: f64 = predictions
        .iter()
        .zip(ds.labels.iter())
        .map(|(&p, &y)| loss.loss(y, p))
        .sum();
    Ok(total / ds.len() as f64)
}

/// Discrepancy between two prediction vectors over the test set.
pub fn prediction_discrepancy(
    a: &[f64],
    b: &[f64],
    test: &TestSet,
    loss: LossKind,
) -> Result<f64> {
    let m = test.len();
    if m == 0 {
        return Err(Error::Empty("test set"));
    }
    for v in [a, b] {
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: v.len(),
            });
        }
    }
    let total: f64 = (0..m)
        .map(|r| loss.discrepancy(test.features.row(r), a[r], b[r]))
        .sum();
    Ok(total / m as f64)
}

pub fn discrepancy(
    hi: &LocalHypothesis,
    hj: &LocalHypothesis,
    test: &TestSet,
    loss: LossKind,
) -> Result<f64> {
    let a = hi.predict(&test.features)?;
    let b = hj.predict(&test.features)?;
    prediction_discrepancy(&a, &b, test, loss)
}

fn check_cover(h: &NetworkedHypothesis, graph: &EmpiricalGraph) -> Result<()> {
    if h.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: h.len(),
        });
    }
    Ok(())
}

/// GTV from precomputed per-node test-set predictions.
pub fn gtv_from_predictions(
    predictions: &[Vec<f64>],
    graph: &EmpiricalGraph,
    test: &TestSet,
    loss: LossKind,
) -> Result<f64> {
    if predictions.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: predictions.len(),
        });
    }
    graph.edges().iter().try_fold(0.0, |acc, e| {
        Ok(acc + e.weight * prediction_discrepancy(&predictions[e.i], &predictions[e.j], test, loss)?)
    })
}

/// Weighted sum of discrepancies over all edges, each edge counted once.
pub fn gtv(
    h: &NetworkedHypothesis,
    graph: &EmpiricalGraph,
    test: &TestSet,
    loss: LossKind,
) -> Result<f64> {
    check_cover(h, graph)?;
    gtv_from_predictions(&h.predictions(test)?, graph, test, loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub total_local_loss: f64,
    pub gtv: f64,
    pub objective: f64,
}

impl ObjectiveParts {
    fn new(total_local_loss: f64, gtv: f64, lambda: f64) -> Self {
        Self {
            total_local_loss,
            gtv,
            objective: total_local_loss + lambda * gtv,
        }
    }
}

/// Local losses, GTV and the objective `sum_i L_i + lambda * GTV`.
pub fn objective_parts(
    h: &NetworkedHypothesis,
    nd: &NetworkedData,
    lambda: f64,
    loss: LossKind,
) -> Result<ObjectiveParts> {
    check_lambda(lambda)?;
    check_cover(h, &nd.graph)?;
    let total_local_loss = h
        .nodes
        .iter()
        .zip(&nd.datasets)
        .try_fold(0.0, |acc, (hi, ds)| Ok::<_, Error>(acc + local_loss(hi, ds, loss)?))?;
    let gtv = gtv(h, &nd.graph, &nd.test_set, loss)?;
    Ok(ObjectiveParts::new(total_local_loss, gtv, lambda))
}

pub fn gtvmin_objective(
    h: &NetworkedHypothesis,
    nd: &NetworkedData,
    lambda: f64,
    loss: LossKind,
) -> Result<f64> {
    Ok(objective_parts(h, nd, lambda, loss)?.objective)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Node `i`'s share of the objective,
/// `L_i(h_i) + (lambda / 2) * sum_{j in N(i)} A_ij * d(h_i, h_j)`,
/// where neighbours enter only through their test-set predictions. For a
/// symmetric discrepancy the shares sum to the full objective.
pub fn node_partial_objective(
    i: NodeId,
    h_i: &LocalHypothesis,
    neighbour_predictions: &BTreeMap<NodeId, Vec<f64>>,
    nd: &NetworkedData,
    lambda: f64,
    loss: LossKind,
) -> Result<f64> {
    check_lambda(lambda)?;
    let ds = nd.datasets.get(i).ok_or(Error::InvalidNode {
        node: i,
        node_count: nd.datasets.len(),
    })?;
    let local = local_loss(h_i, ds, loss)?;
    let neighbours = nd.graph.neighbours(i)?;
    if neighbours.is_empty() {
        return Ok(local);
    }
    let own = h_i.predict(&nd.test_set.features)?;
    let mut coupling = 0.0;
    for &(j, weight) in neighbours {
        let theirs = neighbour_predictions
            .get(&j)
            .ok_or(Error::MissingNeighbour { node: i, neighbour: j })?;
        coupling += weight * prediction_discrepancy(&own, theirs, &nd.test_set, loss)?;
    }
    Ok(local + 0.5 * lambda * coupling)
}

fn test_gram(test: &TestSet) -> Result<DMatrix<f64>> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    Ok(test.features.tr_mul(&test.features) / test.len() as f64)
}

/// Squared-error discrepancy between linear models `w_i`, `w_j` written as the
/// quadratic form `(1/m') (w_i - w_j)^T X'^T X' (w_i - w_j)`.
pub fn parametric_variation(w_i: &[f64], w_j: &[f64], test: &TestSet) -> Result<f64> {
    let d = test.dim();
    for w in [w_i, w_j] {
        if w.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w.len(),
            });
        }
    }
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let diff = DVector::from_iterator(d, w_i.iter().zip(w_j).map(|(a, b)| a - b));
    // ||X' diff||^2 avoids the cancellation of forming X'^T X' first
    Ok((&test.features * diff).norm_squared() / test.len() as f64)
}

fn check_params(params: &DMatrix<f64>, graph: &EmpiricalGraph, test: &TestSet) -> Result<()> {
    if params.ncols() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: params.ncols(),
        });
    }
    if params.nrows() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: test.dim(),
            got: params.nrows(),
        });
    }
    Ok(())
}

/// GTV of the linear models in the columns of `params` (d x n), summed edge by edge.
pub fn laplacian_gtv_quadratic(
    params: &DMatrix<f64>,
    graph: &EmpiricalGraph,
    test: &TestSet,
) -> Result<f64> {
    check_params(params, graph, test)?;
    let column = |k: usize| params.column(k).iter().copied().collect::<Vec<_>>();
    graph.edges().iter().try_fold(0.0, |acc, e| {
        Ok(acc + e.weight * parametric_variation(&column(e.i), &column(e.j), test)?)
    })
}

/// The same quantity as [`laplacian_gtv_quadratic`], evaluated as
/// `vec(W)^T (L kron X'^T X' / m') vec(W)` with columns of `W` stacked.
pub fn laplacian_gtv_quadratic_stacked(
    params: &DMatrix<f64>,
    graph: &EmpiricalGraph,
    test: &TestSet,
) -> Result<f64> {
    check_params(params, graph, test)?;
    let coupling = graph.laplacian().kronecker(&test_gram(test)?);
    let stacked = DVector::from_column_slice(params.as_slice());
    Ok(stacked.dot(&(coupling * &stacked)))
}

/// `sum_i L_i(w_i) + lambda * sum_edges A_ij * variation(w_i, w_j)` for linear
/// models with squared loss.
pub fn parametric_objective(params: &DMatrix<f64>, nd: &NetworkedData, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let h = NetworkedHypothesis::from_parameters(params);
    let total_local_loss = h
        .nodes
        .iter()
        .zip(&nd.datasets)
        .try_fold(0.0, |acc, (hi, ds)| {
            Ok::<_, Error>(acc + local_loss(hi, ds, LossKind::SquaredError)?)
        })?;
    Ok(total_local_loss + lambda * laplacian_gtv_quadratic(params, &nd.graph, &nd.test_set)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_set(rows: &[&[f64]]) -> TestSet {
        TestSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn local_loss_examples() {
        let ds = LocalDataset::from_rows(&[vec![1.0], vec![1.0]], &[1.0, 3.0]).unwrap();
        let zero = LocalHypothesis::linear([0.0]);
        assert_eq!(local_loss(&zero, &ds, LossKind::SquaredError).unwrap(), 5.0);

        let exact = LocalDataset::from_rows(&[vec![1.0], vec![2.0]], &[2.0, 4.0]).unwrap();
        let h = LocalHypothesis::linear([2.0]);
        assert_eq!(local_loss(&h, &exact, LossKind::SquaredError).unwrap(), 0.0);

        let zeros = LocalDataset::from_rows(&[vec![3.0]], &[0.0]).unwrap();
        assert_eq!(local_loss(&zero, &zeros, LossKind::SquaredError).unwrap(), 0.0);

        let empty = LocalDataset::new(DMatrix::zeros(0, 1), DVector::zeros(0)).unwrap();
        assert!(matches!(local_loss(&zero, &empty, LossKind::SquaredError), Err(Error::Empty(_))));
    }

    #[test]
    fn discrepancy_examples() {
        let t = test_set(&[&[1.0], &[2.0]]);
        let h = LocalHypothesis::linear([1.5]);
        assert_eq!(discrepancy(&h, &h, &t, LossKind::SquaredError).unwrap(), 0.0);

        let shifted = LocalHypothesis::Constant { value: 3.0 };
        let base = LocalHypothesis::Constant { value: 0.5 };
        assert_eq!(discrepancy(&shifted, &base, &t, LossKind::SquaredError).unwrap(), 6.25);

        // predictions (1, 2) vs (0, 4)
        let a = LocalHypothesis::linear([1.0]);
        let b = LocalHypothesis::RegressionTree {
            max_depth: 1,
            min_leaf: 1,
            root: crate::models::TreeNode::Split {
                feature: 0,
                threshold: 1.5,
                left: Box::new(crate::models::TreeNode::Leaf { value: 0.0 }),
                right: Box::new(crate::models::TreeNode::Leaf { value: 4.0 }),
            },
        };
        assert_eq!(discrepancy(&a, &b, &t, LossKind::SquaredError).unwrap(), 2.5);
        assert_eq!(discrepancy(&b, &a, &t, LossKind::SquaredError).unwrap(), 2.5);
    }

    #[test]
    fn gtv_examples() {
        let t = test_set(&[&[1.0], &[2.0]]);
        let g = EmpiricalGraph::new(2, [(0, 1, 3.0)]).unwrap();
        let shared = NetworkedHypothesis::new(vec![LocalHypothesis::linear([0.7]); 2]);
        assert_eq!(gtv(&shared, &g, &t, LossKind::SquaredError).unwrap(), 0.0);

        let preds = vec![vec![1.0, 2.0], vec![0.0, 4.0]];
        assert_eq!(gtv_from_predictions(&preds, &g, &t, LossKind::SquaredError).unwrap(), 7.5);

        let edgeless = EmpiricalGraph::edgeless(2).unwrap();
        let mixed = NetworkedHypothesis::new(vec![
            LocalHypothesis::linear([5.0]),
            LocalHypothesis::Constant { value: -1.0 },
        ]);
        assert_eq!(gtv(&mixed, &edgeless, &t, LossKind::SquaredError).unwrap(), 0.0);

        let short = NetworkedHypothesis::new(vec![LocalHypothesis::linear([0.0])]);
        assert!(gtv(&short, &g, &t, LossKind::SquaredError).is_err());
    }

    /// Two nodes joined by an edge of weight 3. Node 0 predicts 0 on
    /// {(1, 1), (1, 3)} (loss 5); node 1 interpolates (0, 0). On the test set
    /// {2, 4} the predictions are (0, 0) and (1, 2), so the discrepancy is 2.5
    /// and the GTV is 7.5.
    fn two_node_instance() -> (NetworkedData, NetworkedHypothesis) {
        let g = EmpiricalGraph::new(2, [(0, 1, 3.0)]).unwrap();
        let d0 = LocalDataset::from_rows(&[vec![1.0], vec![1.0]], &[1.0, 3.0]).unwrap();
        let d1 = LocalDataset::from_rows(&[vec![0.0]], &[0.0]).unwrap();
        let t = test_set(&[&[2.0], &[4.0]]);
        (
            NetworkedData::validated(g, vec![d0, d1], t).unwrap(),
            NetworkedHypothesis::new(vec![
                LocalHypothesis::Constant { value: 0.0 },
                LocalHypothesis::linear([0.5]),
            ]),
        )
    }

    #[test]
    fn objective_examples() {
        let (nd, h) = two_node_instance();
        let loss = LossKind::SquaredError;
        let parts = objective_parts(&h, &nd, 2.0, loss).unwrap();
        assert_eq!(parts.total_local_loss, 5.0);
        assert_eq!(parts.gtv, 7.5);
        assert_eq!(parts.objective, 20.0);
        assert_eq!(gtvmin_objective(&h, &nd, 0.0, loss).unwrap(), 5.0);
        assert!(gtvmin_objective(&h, &nd, -1.0, loss).is_err());

        let interpolating = NetworkedData::validated(
            EmpiricalGraph::new(2, [(0, 1, 1.0)]).unwrap(),
            vec![LocalDataset::from_rows(&[vec![1.0]], &[2.0]).unwrap(); 2],
            test_set(&[&[0.3]]),
        )
        .unwrap();
        let same = NetworkedHypothesis::new(vec![LocalHypothesis::linear([2.0]); 2]);
        assert_eq!(gtvmin_objective(&same, &interpolating, 4.0, loss).unwrap(), 0.0);
    }

    #[test]
    fn node_partial_examples() {
        let (nd, h) = two_node_instance();
        let loss = LossKind::SquaredError;
        let preds: BTreeMap<_, _> = [(1, vec![1.0, 2.0])].into();
        assert_eq!(node_partial_objective(0, &h.nodes[0], &preds, &nd, 0.0, loss).unwrap(), 5.0);

        // A = 1, lambda = 2: 5 + (2 / 2) * 1 * 2.5
        let unit = NetworkedData::new(
            EmpiricalGraph::new(2, [(0, 1, 1.0)]).unwrap(),
            nd.datasets.clone(),
            nd.test_set.clone(),
        );
        assert_eq!(node_partial_objective(0, &h.nodes[0], &preds, &unit, 2.0, loss).unwrap(), 7.5);

        assert!(matches!(
            node_partial_objective(0, &h.nodes[0], &BTreeMap::new(), &unit, 2.0, loss),
            Err(Error::MissingNeighbour { node: 0, neighbour: 1 })
        ));

        let isolated = NetworkedData::new(
            EmpiricalGraph::edgeless(2).unwrap(),
            nd.datasets.clone(),
            nd.test_set.clone(),
        );
        assert_eq!(
            node_partial_objective(0, &h.nodes[0], &BTreeMap::new(), &isolated, 100.0, loss).unwrap(),
            5.0
        );

        // shares sum to the objective
        let p0: BTreeMap<_, _> = [(1, vec![1.0, 2.0])].into();
        let p1: BTreeMap<_, _> = [(0, vec![0.0, 0.0])].into();
        let sum = node_partial_objective(0, &h.nodes[0], &p0, &nd, 2.0, loss).unwrap()
            + node_partial_objective(1, &h.nodes[1], &p1, &nd, 2.0, loss).unwrap();
        assert_eq!(sum, 20.0);
    }

    #[test]
    fn parametric_examples() {
        let t = test_set(&[&[2.0]]);
        assert_eq!(parametric_variation(&[1.0], &[1.0], &t).unwrap(), 0.0);
        assert_eq!(parametric_variation(&[1.0], &[0.0], &t).unwrap(), 4.0);
        assert!(parametric_variation(&[1.0, 2.0], &[0.0], &t).is_err());

        let g = EmpiricalGraph::new(2, [(0, 1, 3.0)]).unwrap();
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(laplacian_gtv_quadratic(&w, &g, &t).unwrap(), 12.0);
        assert_eq!(laplacian_gtv_quadratic_stacked(&w, &g, &t).unwrap(), 12.0);
        assert_eq!(laplacian_gtv_quadratic(&DMatrix::zeros(1, 2), &g, &t).unwrap(), 0.0);
        let consensus = DMatrix::from_row_slice(1, 2, &[0.4, 0.4]);
        assert_eq!(laplacian_gtv_quadratic(&consensus, &g, &t).unwrap(), 0.0);
    }

    #[test]
    fn parameters_round_trip() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let h = NetworkedHypothesis::from_parameters(&w);
        assert_eq!(h.nodes[1], LocalHypothesis::linear([2.0, 5.0]));
        assert_eq!(h.parameters().unwrap(), w);

        let mixed = NetworkedHypothesis::new(vec![
            LocalHypothesis::linear([1.0]),
            LocalHypothesis::Constant { value: 0.0 },
        ]);
        assert!(matches!(mixed.parameters(), Err(Error::UnsupportedSpec(_))));
    }
}
