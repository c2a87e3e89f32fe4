//! Round-based simulation of the prediction exchange between neighbouring
//! nodes.
//!
//! Each node broadcasts its test-set predictions to its graph neighbours.
//! Delivery is either reliable or drops messages independently; a dropped
//! message leaves the receiver holding the last vector it did get from that
//! sender. Neighbours never heard from read as the zero vector, which matches
//! the zero initialization of every local model.
//!
//! Message loss is a simulation feature layered on top of the lockstep
//! algorithm; the algorithm itself assumes every message arrives.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TestSet;
use crate::error::{Error, Result};
use crate::graph::{EmpiricalGraph, NodeId};
use crate::objective::NetworkedHypothesis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMessage {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub round: usize,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkModel {
    #[default]
    Reliable,
    /// Each message is dropped independently with probability `drop_prob`.
    LossyIid { drop_prob: f64, seed: u64 },
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NetworkModel::Reliable => Ok(()),
            NetworkModel::LossyIid { drop_prob, .. } if (0.0..1.0).contains(&drop_prob) => Ok(()),
            NetworkModel::LossyIid { drop_prob, .. } => Err(Error::Parameter(format!(
                "drop_prob must lie in [0, 1), got {drop_prob}"
            ))),
        }
    }
}

/// Latest `(round, predictions)` received from each sender.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mailbox {
    entries: BTreeMap<NodeId, (usize, Vec<f64>)>,
}

impl Mailbox {
    pub fn latest(&self, sender: NodeId) -> Option<(usize, &[f64])> {
        self.entries.get(&sender).map(|(r, p)| (*r, p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One mailbox per receiving node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mailboxes {
    boxes: Vec<Mailbox>,
}

impl Mailboxes {
    pub fn new(node_count: usize) -> Self {
        Self {
            boxes: vec![Mailbox::default(); node_count],
        }
    }

    pub fn get(&self, receiver: NodeId) -> Option<&Mailbox> {
        self.boxes.get(receiver)
    }

    /// Largest `current_round - stored_round` over every directed edge; a
    /// neighbour never heard from counts as stale since round 0.
    pub fn max_staleness(&self, graph: &EmpiricalGraph, current_round: usize) -> usize {
        let mut worst = 0;
        for (receiver, mailbox) in self.boxes.iter().enumerate() {
            for &(sender, _) in graph.neighbours(receiver).unwrap_or(&[]) {
                let stored = mailbox.entries.get(&sender).map_or(0, |(r, _)| *r);
                worst = worst.max(current_round.saturating_sub(stored));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DeliveryReport {
    pub round: usize,
    pub delivered: usize,
    pub dropped: usize,
}

/// Messages carrying `sender`'s predictions to each of its neighbours.
pub fn broadcast_from(
    sender: NodeId,
    predictions: &[f64],
    graph: &EmpiricalGraph,
    round: usize,
) -> Result<Vec<PredictionMessage>> {
    Ok(graph
        .neighbours(sender)?
        .iter()
        .map(|&(receiver, _)| PredictionMessage {
            sender,
            receiver,
            round,
            predictions: predictions.to_vec(),
        })
        .collect())
}

/// One message per directed edge with the sender's test-set predictions.
pub fn broadcast_round(
    h: &NetworkedHypothesis,
    graph: &EmpiricalGraph,
    test: &TestSet,
    round: usize,
) -> Result<Vec<PredictionMessage>> {
    if h.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: h.len(),
        });
    }
    let mut out = Vec::with_capacity(2 * graph.edge_count());
    for (sender, p) in h.predictions(test)?.iter().enumerate() {
        out.extend(broadcast_from(sender, p, graph, round)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    sender: NodeId,
    receiver: NodeId,
    round: usize,
    dropped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<&'a [f64]>,
}

/// JSON-lines message trace, one record per message.
pub struct TraceSink {
    out: Box<dyn Write + Send>,
    include_payload: bool,
}

impl TraceSink {
    pub fn new(out: Box<dyn Write + Send>, include_payload: bool) -> Self {
        Self {
            out,
            include_payload,
        }
    }

    fn record(&mut self, msg: &PredictionMessage, dropped: bool) -> Result<()> {
        let rec = TraceRecord {
            sender: msg.sender,
            receiver: msg.receiver,
            round: msg.round,
            dropped,
            predictions: self.include_payload.then_some(msg.predictions.as_slice()),
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out
            .write_all(b"\n")
            .map_err(|e| Error::io("<message trace>", e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io("<message trace>", e))
    }
}

/// Delivery channel. Holds the loss model's random stream, so repeated
/// deliveries continue one reproducible sequence of drop decisions.
pub struct Network {
    model: NetworkModel,
    rng: Option<ChaCha8Rng>,
    trace: Option<TraceSink>,
}

impl Network {
    pub fn new(model: NetworkModel) -> Result<Self> {
        model.validate()?;
        let rng = match model {
            NetworkModel::Reliable => None,
            NetworkModel::LossyIid { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Ok(Self {
            model,
            rng,
            trace: None,
        })
    }

    pub fn reliable() -> Self {
        Self::new(NetworkModel::Reliable).expect("reliable model is valid")
    }

    pub fn with_trace(mut self, trace: TraceSink) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn model(&self) -> NetworkModel {
        self.model
    }

    /// Delivers `messages` in `(sender, receiver)` order. Lossy models draw
    /// one Bernoulli variable per message in that order.
    pub fn deliver(
        &mut self,
        mut messages: Vec<PredictionMessage>,
        graph: &EmpiricalGraph,
        mailboxes: &mut Mailboxes,
    ) -> Result<DeliveryReport> {
        messages.sort_by_key(|m| (m.sender, m.receiver));
        let mut report = DeliveryReport {
            round: messages.first().map_or(0, |m| m.round),
            ..DeliveryReport::default()
        };
        for msg in messages {
            let is_edge = graph
                .neighbours(msg.sender)
                .map(|nb| nb.binary_search_by_key(&msg.receiver, |&(j, _)| j).is_ok())
                .unwrap_or(false);
            if !is_edge {
                return Err(Error::Protocol(format!(
                    "message from {} to {} does not follow a graph edge",
                    msg.sender, msg.receiver
                )));
            }
            if msg.predictions.iter().any(|p| !p.is_finite()) {
                return Err(Error::Protocol(format!(
                    "non-finite payload from {} to {} in round {}",
                    msg.sender, msg.receiver, msg.round
                )));
            }
            let dropped = match (&self.model, self.rng.as_mut()) {
                (NetworkModel::LossyIid { drop_prob, .. }, Some(rng)) => rng.random_bool(*drop_prob),
                _ => false,
            };
            if let Some(trace) = self.trace.as_mut() {
                trace.record(&msg, dropped)?;
            }
            if dropped {
                report.dropped += 1;
                continue;
            }
            report.delivered += 1;
            let slot = mailboxes
                .boxes
                .get_mut(msg.receiver)
                .ok_or_else(|| Error::Protocol(format!("no mailbox for node {}", msg.receiver)))?;
            slot.entries.insert(msg.sender, (msg.round, msg.predictions));
        }
        Ok(report)
    }

    pub fn flush_trace(&mut self) -> Result<()> {
        match self.trace.as_mut() {
            Some(t) => t.flush(),
            None => Ok(()),
        }
    }
}

/// Latest known predictions of each neighbour of `i`; unheard neighbours map
/// to zeros of length `m_test`.
pub fn snapshot_for(
    i: NodeId,
    graph: &EmpiricalGraph,
    mailboxes: &Mailboxes,
    m_test: usize,
) -> Result<BTreeMap<NodeId, Vec<f64>>> {
    let mailbox = mailboxes
        .get(i)
        .ok_or(Error::InvalidNode {
            node: i,
            node_count: mailboxes.boxes.len(),
        })?;
    Ok(graph
        .neighbours(i)?
        .iter()
        .map(|&(j, _)| {
            let p = mailbox
                .latest(j)
                .map_or_else(|| vec![0.0; m_test], |(_, p)| p.to_vec());
            (j, p)
        })
        .collect())
}

/// How the engine moves predictions between nodes.
pub trait PredictionExchange {
    /// Sends `sender`'s predictions computed at `round` to its neighbours.
    fn publish(&mut self, sender: NodeId, round: usize, predictions: &[f64]) -> Result<()>;

    /// What node `i` currently knows about its neighbours' predictions.
    fn snapshot_for(&self, i: NodeId) -> Result<BTreeMap<NodeId, Vec<f64>>>;

    /// Called once every node has published for `round`.
    fn end_round(&mut self, _round: usize) -> Result<()> {
        Ok(())
    }
}

/// Shared-memory exchange: every node reads its neighbours' latest
/// predictions directly.
pub struct DirectExchange<'a> {
    graph: &'a EmpiricalGraph,
    latest: Vec<Vec<f64>>,
}

impl<'a> DirectExchange<'a> {
    pub fn new(graph: &'a EmpiricalGraph, m_test: usize) -> Self {
        Self {
            graph,
            latest: vec![vec![0.0; m_test]; graph.node_count()],
        }
    }
}

impl PredictionExchange for DirectExchange<'_> {
    fn publish(&mut self, sender: NodeId, _round: usize, predictions: &[f64]) -> Result<()> {
        let slot = self.latest.get_mut(sender).ok_or(Error::InvalidNode {
            node: sender,
            node_count: self.graph.node_count(),
        })?;
        slot.clear();
        slot.extend_from_slice(predictions);
        Ok(())
    }

    fn snapshot_for(&self, i: NodeId) -> Result<BTreeMap<NodeId, Vec<f64>>> {
        Ok(self
            .graph
            .neighbours(i)?
            .iter()
            .map(|&(j, _)| (j, self.latest[j].clone()))
            .collect())
    }
}

/// Exchange through simulated messages, mailboxes and a [`Network`].
pub struct SimExchange<'a> {
    graph: &'a EmpiricalGraph,
    m_test: usize,
    mailboxes: Mailboxes,
    network: Network,
    reports: Vec<DeliveryReport>,
    staleness_bound: Option<usize>,
    max_staleness_seen: usize,
}

impl<'a> SimExchange<'a> {
    pub fn new(graph: &'a EmpiricalGraph, m_test: usize, network: Network) -> Self {
        Self {
            graph,
            m_test,
            mailboxes: Mailboxes::new(graph.node_count()),
            network,
            reports: Vec::new(),
            staleness_bound: None,
            max_staleness_seen: 0,
        }
    }

    /// Fail a round once any mailbox entry is more than `bound` rounds old.
    pub fn with_staleness_bound(mut self, bound: usize) -> Self {
        self.staleness_bound = Some(bound);
        self
    }

    /// Delivered and dropped counts, one entry per round.
    pub fn reports(&self) -> &[DeliveryReport] {
        &self.reports
    }

    pub fn mailboxes(&self) -> &Mailboxes {
        &self.mailboxes
    }

    pub fn max_staleness_seen(&self) -> usize {
        self.max_staleness_seen
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }
}

impl PredictionExchange for SimExchange<'_> {
    fn publish(&mut self, sender: NodeId, round: usize, predictions: &[f64]) -> Result<()> {
        let messages = broadcast_from(sender, predictions, self.graph, round)?;
        let report = self.network.deliver(messages, self.graph, &mut self.mailboxes)?;
        if self.reports.len() <= round {
            self.reports.resize_with(round + 1, DeliveryReport::default);
        }
        let slot = &mut self.reports[round];
        slot.round = round;
        slot.delivered += report.delivered;
        slot.dropped += report.dropped;
        Ok(())
    }

    fn snapshot_for(&self, i: NodeId) -> Result<BTreeMap<NodeId, Vec<f64>>> {
        snapshot_for(i, self.graph, &self.mailboxes, self.m_test)
    }

    fn end_round(&mut self, round: usize) -> Result<()> {
        let staleness = self.mailboxes.max_staleness(self.graph, round);
        self.max_staleness_seen = self.max_staleness_seen.max(staleness);
        if let Some(bound) = self.staleness_bound {
            if staleness > bound {
                return Err(Error::Protocol(format!(
                    "staleness {staleness} exceeds bound {bound} in round {round}"
                )));
            }
        }
        self.network.flush_trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LocalHypothesis;
    use std::sync::{Arc, Mutex};

    fn test_set() -> TestSet {
        TestSet::from_rows(&[vec![1.0], vec![-2.0]]).unwrap()
    }

    #[test]
    fn broadcast_single_edge() {
        let g = EmpiricalGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let h = NetworkedHypothesis::new(vec![
            LocalHypothesis::linear([1.0]),
            LocalHypothesis::linear([3.0]),
        ]);
        let msgs = broadcast_round(&h, &g, &test_set(), 4).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].sender, 0);
        assert_eq!(msgs[0].receiver, 1);
        assert_eq!(msgs[0].predictions, vec![1.0, -2.0]);
        assert_eq!(msgs[1].predictions, vec![3.0, -6.0]);
        assert!(msgs.iter().all(|m| m.round == 4));
    }

    #[test]
    fn broadcast_edgeless_and_zero() {
        let h = NetworkedHypothesis::new(vec![LocalHypothesis::linear([1.0]); 3]);
        let g = EmpiricalGraph::edgeless(3).unwrap();
        assert!(broadcast_round(&h, &g, &test_set(), 0).unwrap().is_empty());

        let tri = EmpiricalGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let zeros = NetworkedHypothesis::zeros(&[crate::models::ModelSpec::Constant; 3]);
        let msgs = broadcast_round(&zeros, &tri, &test_set(), 0).unwrap();
        assert_eq!(msgs.len(), 6);
        assert!(msgs.iter().all(|m| m.predictions.iter().all(|&p| p == 0.0)));
    }

    #[test]
    fn reliable_delivery() {
        let g = EmpiricalGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let h = NetworkedHypothesis::new(vec![LocalHypothesis::linear([2.0]); 3]);
        let mut boxes = Mailboxes::new(3);
        let mut net = Network::reliable();
        let report = net
            .deliver(broadcast_round(&h, &g, &test_set(), 5).unwrap(), &g, &mut boxes)
            .unwrap();
        assert_eq!(report, DeliveryReport { round: 5, delivered: 4, dropped: 0 });
        assert_eq!(boxes.get(1).unwrap().latest(0).unwrap().0, 5);
        assert_eq!(boxes.get(1).unwrap().latest(2).unwrap().0, 5);
        assert_eq!(boxes.max_staleness(&g, 5), 0);
    }

    #[test]
    fn non_edge_is_a_protocol_error() {
        let g = EmpiricalGraph::new(3, [(0, 1, 1.0)]).unwrap();
        let msg = PredictionMessage {
            sender: 0,
            receiver: 2,
            round: 0,
            predictions: vec![0.0, 0.0],
        };
        let err = Network::reliable().deliver(vec![msg], &g, &mut Mailboxes::new(3));
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    #[test]
    fn lossy_requires_drop_prob_below_one() {
        assert!(Network::new(NetworkModel::LossyIid { drop_prob: 1.0, seed: 0 }).is_err());
        assert!(Network::new(NetworkModel::LossyIid { drop_prob: -0.1, seed: 0 }).is_err());
    }

    fn ten_messages() -> (EmpiricalGraph, Vec<PredictionMessage>) {
        // path 0-1-2-3-4-5: 5 edges, 10 directed messages
        let g = EmpiricalGraph::new(6, (0..5).map(|i| (i, i + 1, 1.0))).unwrap();
        let mut msgs = Vec::new();
        for s in 0..6 {
            msgs.extend(broadcast_from(s, &[s as f64, 1.0], &g, 1).unwrap());
        }
        assert_eq!(msgs.len(), 10);
        (g, msgs)
    }

    #[test]
    fn lossy_delivery_is_reproducible() {
        let (g, msgs) = ten_messages();
        let run = |msgs: Vec<PredictionMessage>| {
            let mut net = Network::new(NetworkModel::LossyIid { drop_prob: 0.5, seed: 3 }).unwrap();
            let mut boxes = Mailboxes::new(6);
            let report = net.deliver(msgs, &g, &mut boxes).unwrap();
            (report, boxes)
        };
        let (ra, ba) = run(msgs.clone());
        let mut reversed = msgs;
        reversed.reverse();
        let (rb, bb) = run(reversed);
        assert_eq!(ra, rb);
        assert_eq!(ba, bb);
        assert_eq!(ra.delivered + ra.dropped, 10);
    }

    #[test]
    fn dropped_message_leaves_stale_entry() {
        let g = EmpiricalGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let mut boxes = Mailboxes::new(2);
        let mut reliable = Network::reliable();
        reliable
            .deliver(broadcast_from(0, &[7.0, 7.0], &g, 2).unwrap(), &g, &mut boxes)
            .unwrap();
        // find a seed whose first draw drops
        let mut lossy = (0..)
            .map(|seed| {
                let mut probe = ChaCha8Rng::seed_from_u64(seed);
                (seed, probe.random_bool(0.9))
            })
            .find(|&(_, drop)| drop)
            .map(|(seed, _)| Network::new(NetworkModel::LossyIid { drop_prob: 0.9, seed }).unwrap())
            .unwrap();
        let report = lossy
            .deliver(broadcast_from(0, &[8.0, 8.0], &g, 3).unwrap(), &g, &mut boxes)
            .unwrap();
        assert_eq!(report.dropped, 1);
        let snap = snapshot_for(1, &g, &boxes, 2).unwrap();
        assert_eq!(snap[&0], vec![7.0, 7.0]);
        assert_eq!(boxes.get(1).unwrap().latest(0).unwrap().0, 2);
        assert_eq!(boxes.max_staleness(&g, 3), 3);
    }

    #[test]
    fn snapshot_defaults_to_zero() {
        let g = EmpiricalGraph::new(3, [(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let boxes = Mailboxes::new(3);
        let snap = snapshot_for(0, &g, &boxes, 4).unwrap();
        assert_eq!(snap.len(), 2);
        assert!(snap.values().all(|p| p == &vec![0.0; 4]));
        assert!(snapshot_for(5, &g, &boxes, 4).is_err());
    }

    #[derive(Clone, Default)]
    struct SharedBuf(Arc<Mutex<Vec<u8>>>);

    impl Write for SharedBuf {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().write(buf)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn trace_records_every_message() {
        let (g, msgs) = ten_messages();
        let buf = SharedBuf::default();
        let mut net = Network::new(NetworkModel::LossyIid { drop_prob: 0.3, seed: 1 })
            .unwrap()
            .with_trace(TraceSink::new(Box::new(buf.clone()), false));
        let report = net.deliver(msgs, &g, &mut Mailboxes::new(6)).unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let lines: Vec<serde_json::Value> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 10);
        let dropped = lines.iter().filter(|v| v["dropped"] == true).count();
        assert_eq!(dropped, report.dropped);
        assert!(lines[0].get("predictions").is_none());
        assert_eq!(lines[0]["sender"], 0);
    }

    #[test]
    fn sim_exchange_aggregates_reports_per_round() {
        let g = EmpiricalGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let mut ex = SimExchange::new(&g, 2, Network::reliable()).with_staleness_bound(0);
        for s in 0..3 {
            ex.publish(s, 0, &[s as f64, 0.0]).unwrap();
        }
        ex.end_round(0).unwrap();
        assert_eq!(ex.reports()[0], DeliveryReport { round: 0, delivered: 4, dropped: 0 });
        assert_eq!(ex.snapshot_for(1).unwrap()[&2], vec![2.0, 0.0]);

        ex.publish(0, 1, &[1.0, 1.0]).unwrap();
        assert!(ex.end_round(1).is_err());
    }
}
