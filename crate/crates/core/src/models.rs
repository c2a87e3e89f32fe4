//! Local model classes. Every class is trained through one primitive,
//! weighted empirical risk minimization under squared loss.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LocalDataset;
use crate::error::{Error, Result};
use crate::linalg::solve_psd;

pub const MAX_TREE_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelSpec {
    /// A single constant prediction.
    Constant,
    /// `h(x) = w^T x`, no intercept.
    Linear { dim: usize },
    /// Greedy weighted CART regression tree.
    RegressionTree { max_depth: usize, min_leaf: usize },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Constant => Ok(()),
            ModelSpec::Linear { dim } if dim >= 1 => Ok(()),
            ModelSpec::Linear { .. } => Err(Error::Parameter("linear dimension must be >= 1".into())),
            ModelSpec::RegressionTree { max_depth, min_leaf } => {
                if !(1..=MAX_TREE_DEPTH).contains(&max_depth) {
                    return Err(Error::Parameter(format!(
                        "tree max_depth must lie in [1, {MAX_TREE_DEPTH}], got {max_depth}"
                    )));
                }
                if min_leaf == 0 {
                    return Err(Error::Parameter("tree min_leaf must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Whether [`weighted_erm_fit`] returns an exact minimizer for this class.
    pub fn is_exact(&self) -> bool {
        !matches!(self, ModelSpec::RegressionTree { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] < threshold` descend left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn eval(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x(*feature) < *threshold { left } else { right },
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// `(feature, threshold)` of every split in pre-order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                out.push((*feature, *threshold));
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

/// A trained local predictor. Serializes as a JSON object tagged by `variant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LocalHypothesis {
    Constant {
        value: f64,
    },
    Linear {
        weights: Vec<f64>,
    },
    RegressionTree {
        max_depth: usize,
        min_leaf: usize,
        root: TreeNode,
    },
}

impl LocalHypothesis {
    pub fn spec(&self) -> ModelSpec {
        match self {
            LocalHypothesis::Constant { .. } => ModelSpec::Constant,
            LocalHypothesis::Linear { weights } => ModelSpec::Linear { dim: weights.len() },
            LocalHypothesis::RegressionTree {
                max_depth,
                min_leaf,
                ..
            } => ModelSpec::RegressionTree {
                max_depth: *max_depth,
                min_leaf: *min_leaf,
            },
        }
    }

    pub fn linear(weights: impl Into<Vec<f64>>) -> Self {
        LocalHypothesis::Linear {
            weights: weights.into(),
        }
    }

    /// Predictions for every row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_input_dim(x.ncols())?;
        Ok((0..x.nrows())
            .map(|r| self.eval(|c| x[(r, c)]))
            .collect())
    }

    /// Prediction for one feature vector.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.check_input_dim(x.len())?;
        Ok(self.eval(|c| x[c]))
    }

    fn check_input_dim(&self, cols: usize) -> Result<()> {
        match self {
            LocalHypothesis::Constant { .. } => Ok(()),
            LocalHypothesis::Linear { weights } if weights.len() == cols => Ok(()),
            LocalHypothesis::Linear { weights } => Err(Error::DimensionMismatch {
                expected: weights.len(),
                got: cols,
            }),
            LocalHypothesis::RegressionTree { root, .. } => match root.max_feature() {
                Some(f) if f >= cols => Err(Error::DimensionMismatch {
                    expected: f + 1,
                    got: cols,
                }),
                _ => Ok(()),
            },
        }
    }

    fn eval(&self, x: impl Fn(usize) -> f64) -> f64 {
        match self {
            LocalHypothesis::Constant { value } => *value,
            LocalHypothesis::Linear { weights } => {
                weights.iter().enumerate().map(|(c, w)| w * x(c)).sum()
            }
            LocalHypothesis::RegressionTree { root, .. } => root.eval(x),
        }
    }

    /// Parameter vector of a linear hypothesis.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            LocalHypothesis::Linear { weights } => Some(weights),
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        fn tree_finite(node: &TreeNode) -> bool {
            match node {
                TreeNode::Leaf { value } => value.is_finite(),
                TreeNode::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => threshold.is_finite() && tree_finite(left) && tree_finite(right),
            }
        }
        match self {
            LocalHypothesis::Constant { value } => value.is_finite(),
            LocalHypothesis::Linear { weights } => weights.iter().all(|w| w.is_finite()),
            LocalHypothesis::RegressionTree { root, .. } => tree_finite(root),
        }
    }
}

/// The hypothesis that predicts 0 everywhere.
pub fn zero_hypothesis(spec: &ModelSpec) -> LocalHypothesis {
    match *spec {
        ModelSpec::Constant => LocalHypothesis::Constant { value: 0.0 },
        ModelSpec::Linear { dim } => LocalHypothesis::Linear {
            weights: vec![0.0; dim],
        },
        ModelSpec::RegressionTree {
            max_depth,
            min_leaf,
        } => LocalHypothesis::RegressionTree {
            max_depth,
            min_leaf,
            root: TreeNode::Leaf { value: 0.0 },
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub feature: Vec<f64>,
    pub label: f64,
    pub weight: f64,
}

impl WeightedSample {
    pub fn new(feature: impl Into<Vec<f64>>, label: f64, weight: f64) -> Self {
        Self {
            feature: feature.into(),
            label,
            weight,
        }
    }
}

/// The samples of `ds`, each weighted `1 / m`, so that the weighted squared
/// loss equals the average training loss.
pub fn local_samples(ds: &LocalDataset) -> Vec<WeightedSample> {
    let weight = 1.0 / ds.len() as f64;
    (0..ds.len())
        .map(|r| WeightedSample {
            feature: ds.features.row(r).iter().copied().collect(),
            label: ds.labels[r],
            weight,
        })
        .collect()
}

/// `sum_r weight_r * (label_r - h(x_r))^2`.
pub fn weighted_squared_loss(h: &LocalHypothesis, samples: &[WeightedSample]) -> Result<f64> {
    samples.iter().try_fold(0.0, |acc, s| {
        let residual = s.label - h.predict_one(&s.feature)?;
        Ok(acc + s.weight * residual * residual)
    })
}

/// Minimizes the weighted squared loss over the model class `spec`.
///
/// Linear and constant fits are exact. Trees are grown greedily: each node
/// takes the split with the lowest weighted squared error, candidate
/// thresholds are midpoints of consecutive distinct feature values, and ties
/// go to the lowest feature index and then the lowest threshold.
pub fn weighted_erm_fit(spec: &ModelSpec, samples: &[WeightedSample]) -> Result<LocalHypothesis> {
    spec.validate()?;
    let dim = match *spec {
        ModelSpec::Linear { dim } => dim,
        _ => samples.first().map_or(0, |s| s.feature.len()),
    };
    let mut total_weight = 0.0;
    for s in samples {
        if s.feature.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.feature.len(),
            });
        }
        if !(s.weight.is_finite() && s.weight >= 0.0) {
            return Err(Error::Parameter(format!(
                "sample weight must be finite and non-negative, got {}",
                s.weight
            )));
        }
        total_weight += s.weight;
    }
    if !(total_weight > 0.0) {
        return Err(Error::DegenerateFit);
    }

    let fitted = match *spec {
        ModelSpec::Constant => {
            let weighted: f64 = samples.iter().map(|s| s.weight * s.label).sum();
            LocalHypothesis::Constant {
                value: weighted / total_weight,
            }
        }
        ModelSpec::Linear { dim } => fit_linear(dim, samples)?,
        ModelSpec::RegressionTree {
            max_depth,
            min_leaf,
        } => {
            let active: Vec<&WeightedSample> = samples.iter().filter(|s| s.weight > 0.0).collect();
            let builder = TreeBuilder {
                samples: &active,
                dim,
                max_depth,
                min_leaf,
            };
            LocalHypothesis::RegressionTree {
                max_depth,
                min_leaf,
                root: builder.grow((0..active.len()).collect(), 0),
            }
        }
    };
    if !fitted.is_finite() {
        return Err(Error::Numerical("fit produced non-finite parameters".into()));
    }
    Ok(fitted)
}

fn fit_linear(dim: usize, samples: &[WeightedSample]) -> Result<LocalHypothesis> {
    let mut gram = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for s in samples {
        for a in 0..dim {
            let wx = s.weight * s.feature[a];
            rhs[a] += wx * s.label;
            for b in 0..dim {
                gram[(a, b)] += wx * s.feature[b];
            }
        }
    }
    let w = solve_psd(gram, &rhs)?;
    Ok(LocalHypothesis::Linear {
        weights: w.iter().copied().collect(),
    })
}

struct TreeBuilder<'a> {
    samples: &'a [&'a WeightedSample],
    dim: usize,
    max_depth: usize,
    min_leaf: usize,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    w: f64,
    wy: f64,
    wyy: f64,
}

impl Moments {
    fn add(&mut self, s: &WeightedSample) {
        self.w += s.weight;
        self.wy += s.weight * s.label;
        self.wyy += s.weight * s.label * s.label;
    }

    fn sub(self, other: Moments) -> Moments {
        Moments {
            w: self.w - other.w,
            wy: self.wy - other.wy,
            wyy: self.wyy - other.wyy,
        }
    }

    fn sse(&self) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        (self.wyy - self.wy * self.wy / self.w).max(0.0)
    }
}

impl TreeBuilder<'_> {
    fn moments(&self, idx: &[usize]) -> Moments {
        let mut m = Moments::default();
        for &k in idx {
            m.add(self.samples[k]);
        }
        m
    }

    fn grow(&self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let total = self.moments(&idx);
        let leaf = TreeNode::Leaf {
            value: total.wy / total.w,
        };
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return leaf;
        }
        // ties and improvements are judged relative to the node's label scale
        let tol = 1e-12 * total.wyy;
        let Some((feature, threshold, sse)) = self.best_split(&idx, total, tol) else {
            return leaf;
        };
        if sse >= total.sse() - tol {
            return leaf;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&k| self.samples[k].feature[feature] < threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }

    fn best_split(&self, idx: &[usize], total: Moments, tol: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for feature in 0..self.dim {
            let x = |k: usize| self.samples[k].feature[feature];
            order.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
            let mut left = Moments::default();
            for split in 1..order.len() {
                left.add(self.samples[order[split - 1]]);
                let (lo, hi) = (x(order[split - 1]), x(order[split]));
                if lo >= hi || split < self.min_leaf || order.len() - split < self.min_leaf {
                    continue;
                }
                let sse = left.sse() + total.sub(left).sse();
                if best.is_none_or(|(_, _, b)| sse < b - tol) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some((feature, threshold, sse));
                }
            }
        }
        best
    }
}
