use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use fedrelax::data::{load_networked_data, synth_networked_data, NetworkedData};
use fedrelax::engine::{
    load_round_log, oracle_gtvmin_linear, require_linear, run_fedrelax_with_exchange,
    save_round_log, RoundLog,
};
use fedrelax::graph::{generate_sbm, ClusterAssignment};
use fedrelax::models::LocalHypothesis;
use fedrelax::objective::{local_loss, parametric_objective, LossKind, NetworkedHypothesis};
use fedrelax::simnet::{Network, SimExchange, TraceSink};
use fedrelax::Error;

use crate::config::{DataPlan, Experiment, Overrides, SynthSection};
use crate::CliError;

pub const GRAPH_FILE: &str = "graph.json";
pub const DATA_FILE: &str = "data.csv";
pub const TEST_FILE: &str = "test.csv";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const MODELS_FILE: &str = "models.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const DELIVERIES_FILE: &str = "deliveries.csv";

fn synthesize(s: &SynthSection) -> Result<(NetworkedData, ClusterAssignment), CliError> {
    let (graph, clusters) = generate_sbm(s.nodes, s.clusters, s.p_in, s.p_out, s.edge_weight, s.seed)?;
    let nd = synth_networked_data(&graph, &clusters, &s.cluster_weights, &s.options())?;
    Ok((nd, clusters))
}

fn load_instance(exp: &Experiment) -> Result<NetworkedData, CliError> {
    match &exp.data {
        DataPlan::Synth(s) => Ok(synthesize(s)?.0),
        DataPlan::Files(f) => Ok(load_networked_data(&f.graph, &f.data, &f.test)?),
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn save_instance(nd: &NetworkedData, dir: &Path) -> Result<(), CliError> {
    nd.save(&dir.join(GRAPH_FILE), &dir.join(DATA_FILE), &dir.join(TEST_FILE))?;
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

pub fn synth(config: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = Experiment::load(config, ov)?;
    let DataPlan::Synth(s) = &exp.data else {
        return Err(CliError::Config("synth needs a [data.synth] section".into()));
    };
    let (nd, clusters) = synthesize(s)?;
    prepare_out(&exp.out)?;
    save_instance(&nd, &exp.out)?;
    println!(
        "n={} edges={} m_test={} clusters={} -> {}",
        nd.node_count(),
        nd.graph.edge_count(),
        nd.test_set.len(),
        clusters.cluster_count(),
        exp.out.display()
    );
    Ok(())
}

pub fn run(config: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = Experiment::load(config, ov)?;
    let nd = load_instance(&exp)?;
    let specs = exp.specs(nd.node_count(), nd.dim())?;
    prepare_out(&exp.out)?;
    save_instance(&nd, &exp.out)?;

    let mut network = Network::new(exp.network_model())?;
    if exp.network.trace {
        let path = exp.out.join(TRACE_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        network = network.with_trace(TraceSink::new(Box::new(BufWriter::new(file)), exp.network.trace_payload));
    }
    let mut exchange = SimExchange::new(&nd.graph, nd.test_set.len(), network);
    if let Some(bound) = exp.network.staleness_bound {
        exchange = exchange.with_staleness_bound(bound);
    }
    let out = run_fedrelax_with_exchange(&nd, &specs, &exp.engine, &mut exchange)?;

    save_round_log(&out.logs, &exp.out.join(ROUNDS_FILE))?;
    out.hypotheses.save(exp.out.join(MODELS_FILE))?;
    let path = exp.out.join(DELIVERIES_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    writeln!(w, "round,delivered,dropped").map_err(io_err(&path))?;
    for r in exchange.reports() {
        writeln!(w, "{},{},{}", r.round, r.delivered, r.dropped).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let last = out.logs.last().expect("round 0 is always logged");
    println!("rounds={} final objective={:.16e}", last.round, last.objective);
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    lambda: f64,
    objective: f64,
    /// One weight vector per node.
    parameters: Vec<Vec<f64>>,
}

pub fn oracle(config: &Path, ov: &Overrides) -> Result<(), CliError> {
    let exp = Experiment::load(config, ov)?;
    let nd = load_instance(&exp)?;
    let specs = exp.specs(nd.node_count(), nd.dim())?;
    let dim = require_linear(&specs)?;
    if dim != nd.dim() {
        return Err(Error::DimensionMismatch {
            expected: nd.dim(),
            got: dim,
        }
        .into());
    }
    let lambda = exp.engine.lambda;
    let w = oracle_gtvmin_linear(&nd, lambda)?;
    let objective = parametric_objective(&w, &nd, lambda)?;
    let output = OracleOutput {
        lambda,
        objective,
        parameters: w.column_iter().map(|c| c.iter().copied().collect()).collect(),
    };
    prepare_out(&exp.out)?;
    let path = exp.out.join(ORACLE_FILE);
    let text = serde_json::to_string_pretty(&output).map_err(Error::from)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    println!("objective={objective:.16e} -> {}", path.display());
    Ok(())
}

fn describe(h: &LocalHypothesis) -> String {
    match h {
        LocalHypothesis::Constant { .. } => "constant".into(),
        LocalHypothesis::Linear { weights } => format!("linear(d={})", weights.len()),
        LocalHypothesis::RegressionTree { max_depth, .. } => format!("tree(depth<={max_depth})"),
    }
}

fn trajectory(name: &str, logs: &[RoundLog], value: impl Fn(&RoundLog) -> f64) {
    let first = value(&logs[0]);
    let last = value(logs.last().expect("non-empty"));
    let (min_round, min) = logs
        .iter()
        .map(|l| (l.round, value(l)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    println!("{name:<10} first {first:.16e}  last {last:.16e}  min {min:.16e} (round {min_round})");
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let logs = load_round_log(&file(ROUNDS_FILE))?;
    if logs.is_empty() {
        return Err(Error::Parse {
            path: file(ROUNDS_FILE),
            line: 2,
            message: "no rounds logged".into(),
        }
        .into());
    }
    let h = NetworkedHypothesis::load(file(MODELS_FILE))?;
    let nd = load_networked_data(file(GRAPH_FILE), file(DATA_FILE), file(TEST_FILE))?;
    if h.len() != nd.node_count() {
        return Err(Error::DimensionMismatch {
            expected: nd.node_count(),
            got: h.len(),
        }
        .into());
    }

    println!("run directory {}", dir.display());
    println!(
        "nodes {}  edges {}  test points {}  rounds {}",
        nd.node_count(),
        nd.graph.edge_count(),
        nd.test_set.len(),
        logs.last().map_or(0, |l| l.round)
    );
    trajectory("objective", &logs, |l| l.objective);
    trajectory("gtv", &logs, |l| l.gtv);
    println!("final objective {:.16e}", logs.last().unwrap().objective);
    println!();
    println!("{:>6}  {:<16}  {:>8}  {:>24}", "node", "model", "samples", "local loss");
    for (i, (hi, ds)) in h.nodes.iter().zip(&nd.datasets).enumerate() {
        let loss = local_loss(hi, ds, LossKind::SquaredError)?;
        println!("{i:>6}  {:<16}  {:>8}  {loss:>24.16e}", describe(hi), ds.len());
    }
    Ok(())
}
