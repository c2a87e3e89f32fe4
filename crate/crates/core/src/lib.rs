//! Federated learning over an empirical graph by minimizing generalized total
//! variation (GTV), using the FedRelax message-passing scheme.
//!
//! Nodes hold small local datasets and arbitrary local models (constant,
//! linear, regression tree). Neighbours couple only through their predictions
//! on a shared, unlabeled test set, so no model parameters are ever exchanged.

pub mod data;
pub mod engine;
pub mod error;
pub mod graph;
mod linalg;
pub mod models;
pub mod objective;
pub mod simnet;

pub use data::{LocalDataset, NetworkedData, SynthOptions, TestSet, TestSetSource};
pub use engine::{
    oracle_gtvmin_linear, run_fedrelax, run_fedrelax_parametric, EngineConfig, FedRelaxOutput,
    RoundLog, Schedule, StoppingCriterion, UpdateCoupling,
};
pub use error::{Error, Result};
pub use graph::{generate_sbm, ClusterAssignment, EmpiricalGraph, NodeId};
pub use models::{weighted_erm_fit, LocalHypothesis, ModelSpec, WeightedSample};
pub use objective::{gtvmin_objective, LossKind, NetworkedHypothesis};
