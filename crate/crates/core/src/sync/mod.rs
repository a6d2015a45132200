//! Deterministic synchronous round executor.
//!
//! Round `r` has two phases. First every awake, unhalted node produces its
//! outbox. All round-`r` messages are then delivered, and every awake,
//! unhalted node processes its round-`r` inbox, possibly deciding or halting.
//! A sleeping node that receives a round-`r` message wakes at the end of round
//! `r`: it processes that inbox and first sends in round `r + 1`.

mod single_send;

use std::collections::BTreeSet;

pub use single_send::{SingleSend, SingleSendNode};

use crate::error::{ConfigError, SimError};
use crate::net::{CommGraph, Endpoint, IdAssignment, Identity, Port, Wiring};
use crate::protocols::Decision;
use crate::rng::{node_rng, NodeRng};
use crate::trace::{EventKind, Payload, SyncRecord, TraceEvent};

/// Everything a node may know when it starts: the clean-network model.
#[derive(Debug, Clone)]
pub struct NodeInit {
    pub id: Identity,
    pub n: usize,
    pub rng: NodeRng,
}

/// A message as received: the local port it arrived on, and the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Incoming<M> {
    pub port: Port,
    pub msg: M,
}

/// Messages a node emits in one round.
#[derive(Debug)]
pub struct Outbox<M> {
    degree: usize,
    sends: Vec<(Port, M)>,
    faults: Vec<String>,
}

impl<M: Clone> Outbox<M> {
    pub fn new(n: usize) -> Self {
        Self { degree: n.saturating_sub(1), sends: Vec::new(), faults: Vec::new() }
    }

    pub fn send(&mut self, port: Port, msg: M) {
        self.sends.push((port, msg));
    }

    /// One copy on every port.
    pub fn broadcast(&mut self, msg: M) {
        for port in 1..=self.degree {
            self.sends.push((port, msg.clone()));
        }
    }

    /// Reports misbehaviour; the engine records it in the outcome.
    pub fn fault(&mut self, reason: impl Into<String>) {
        self.faults.push(reason.into());
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.sends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty()
    }

    pub fn into_parts(self) -> (Vec<(Port, M)>, Vec<String>) {
        (self.sends, self.faults)
    }
}

/// Node behaviour under the synchronous engine.
pub trait SyncNode {
    type Msg;

    fn send(&mut self, round: u64, out: &mut Outbox<Self::Msg>);

    /// Inbox of `round`, sorted by arrival port (stable within a port).
    fn receive(&mut self, round: u64, inbox: Vec<Incoming<Self::Msg>>);

    fn decision(&self) -> Decision;

    fn halted(&self) -> bool;
}

/// A node factory.
pub trait SyncProtocol {
    type Msg: Payload;
    type Node: SyncNode<Msg = Self::Msg>;

    fn validate(&self, _ids: &IdAssignment) -> Result<(), ConfigError> {
        Ok(())
    }

    fn spawn(&self, init: NodeInit) -> Self::Node;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WakeMode {
    Simultaneous,
    /// The adversary wakes exactly these nodes in round 1.
    Adversarial(BTreeSet<usize>),
}

#[derive(Debug, Clone)]
pub struct SyncConfig {
    pub ids: IdAssignment,
    pub wake: WakeMode,
    pub seed: u64,
    pub max_rounds: u64,
    pub trace: bool,
}

impl SyncConfig {
    /// Simultaneous wake-up, seed 0, `max_rounds = 4n`, no trace.
    pub fn new(ids: IdAssignment) -> Self {
        let max_rounds = 4 * ids.len().max(1) as u64;
        Self { ids, wake: WakeMode::Simultaneous, seed: 0, max_rounds, trace: false }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_wake(mut self, wake: WakeMode) -> Self {
        self.wake = wake;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n();
        if n == 0 {
            return Err(ConfigError::Empty);
        }
        if self.max_rounds == 0 {
            return Err(ConfigError::ZeroMaxRounds);
        }
        if let WakeMode::Adversarial(set) = &self.wake {
            if set.is_empty() {
                return Err(ConfigError::EmptyWakeSet);
            }
            if let Some(&v) = set.iter().find(|&&v| v >= n) {
                return Err(ConfigError::WakeNodeOutOfRange(v, n));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolFault {
    pub round: u64,
    pub node: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SyncOutcome {
    pub decisions: Vec<Decision>,
    pub rounds_used: u64,
    pub messages_total: u64,
    pub per_round_messages: Vec<u64>,
    pub comm_graph: CommGraph,
    /// Round in which each node woke, `None` if it never did.
    pub wake_rounds: Vec<Option<u64>>,
    pub faults: Vec<ProtocolFault>,
    /// `max_rounds` ran out while some awake node had not halted.
    pub exhausted: bool,
    pub trace: Option<Vec<SyncRecord>>,
}

impl SyncOutcome {
    pub fn leader_count(&self) -> usize {
        leader_count(&self.decisions)
    }

    pub fn decided_all(&self) -> bool {
        decided_all(&self.decisions)
    }

    pub fn leaders(&self) -> Vec<usize> {
        (0..self.decisions.len()).filter(|&v| self.decisions[v] == Decision::Leader).collect()
    }

    /// `max_rounds` ran out with undecided nodes.
    pub fn did_not_finish(&self) -> bool {
        self.exhausted && !self.decided_all()
    }
}

pub fn leader_count(decisions: &[Decision]) -> usize {
    decisions.iter().filter(|d| **d == Decision::Leader).count()
}

pub fn decided_all(decisions: &[Decision]) -> bool {
    decisions.iter().all(|d| *d != Decision::Undecided)
}

/// Runs `protocol` to completion and returns the outcome.
pub fn run_sync<P, W>(protocol: &P, cfg: &SyncConfig, wiring: &mut W) -> Result<SyncOutcome, SimError>
where
    P: SyncProtocol,
    W: Wiring + ?Sized,
{
    execute_sync(protocol, cfg, wiring).map(|(outcome, _)| outcome)
}

/// Like [`run_sync`], also returning the final node states.
pub fn execute_sync<P, W>(
    protocol: &P,
    cfg: &SyncConfig,
    wiring: &mut W,
) -> Result<(SyncOutcome, Vec<P::Node>), SimError>
where
    P: SyncProtocol,
    W: Wiring + ?Sized,
{
    cfg.validate()?;
    let n = cfg.n();
    if wiring.node_count() != n {
        return Err(ConfigError::SizeMismatch { mapping: wiring.node_count(), ids: n }.into());
    }
    protocol.validate(&cfg.ids)?;

    let mut nodes: Vec<P::Node> =
        (0..n).map(|v| protocol.spawn(NodeInit { id: cfg.ids.get(v), n, rng: node_rng(cfg.seed, v) })).collect();
    let mut run = SyncRun::new(n, cfg.trace);
    match &cfg.wake {
        WakeMode::Simultaneous => (0..n).for_each(|v| run.wake(v, 1)),
        WakeMode::Adversarial(set) => set.iter().for_each(|&v| run.wake(v, 1)),
    }

    for round in 1..=cfg.max_rounds {
        run.rounds_used = round;
        let mut senders = Vec::new();
        let mut payloads = Vec::new();
        for (v, node) in nodes.iter_mut().enumerate() {
            if !run.awake(v) || node.halted() {
                continue;
            }
            let mut out = Outbox::new(n);
            node.send(round, &mut out);
            let (sends, faults) = out.into_parts();
            for reason in faults {
                run.fault(round, v, reason);
            }
            for (port, msg) in sends {
                let from = Endpoint::new(v, port);
                if !from.is_valid(n) {
                    run.fault(round, v, format!("send on invalid port {port}"));
                    continue;
                }
                senders.push(from);
                payloads.push(msg);
            }
            run.observe_decision(round, v, node.decision());
        }

        let receivers = wiring.route(round, &senders);
        assert_eq!(receivers.len(), senders.len(), "wiring must route every send");
        let mut inboxes: Vec<Vec<Incoming<P::Msg>>> = (0..n).map(|_| Vec::new()).collect();
        for ((from, to), msg) in senders.iter().zip(&receivers).zip(payloads) {
            let seq = run.messages_total;
            run.messages_total += 1;
            run.comm_graph.record_send(from.node, to.node)?;
            if let Some(trace) = run.trace.as_mut() {
                trace.push(SyncRecord {
                    round,
                    event: TraceEvent::message(EventKind::Send, from.node, from.port, seq, &msg),
                });
                trace.push(SyncRecord {
                    round,
                    event: TraceEvent::message(EventKind::Deliver, to.node, to.port, seq, &msg),
                });
            }
            inboxes[to.node].push(Incoming { port: to.port, msg });
        }
        run.per_round_messages.push(senders.len() as u64);
        wiring.end_round(round, run.messages_total);

        for (v, (node, mut inbox)) in nodes.iter_mut().zip(inboxes).enumerate() {
            if !run.awake(v) {
                if inbox.is_empty() {
                    continue;
                }
                run.wake(v, round);
            }
            if node.halted() {
                continue;
            }
            inbox.sort_by_key(|m| m.port);
            node.receive(round, inbox);
            run.observe_decision(round, v, node.decision());
        }

        let quiescent = (0..n).all(|v| !run.awake(v) || nodes[v].halted());
        if quiescent {
            break;
        }
        if round == cfg.max_rounds {
            run.exhausted = true;
        }
    }

    let outcome = SyncOutcome {
        decisions: run.decisions,
        rounds_used: run.rounds_used,
        messages_total: run.messages_total,
        per_round_messages: run.per_round_messages,
        comm_graph: run.comm_graph,
        wake_rounds: run.wake_rounds,
        faults: run.faults,
        exhausted: run.exhausted,
        trace: run.trace,
    };
    Ok((outcome, nodes))
}

struct SyncRun {
    decisions: Vec<Decision>,
    wake_rounds: Vec<Option<u64>>,
    rounds_used: u64,
    messages_total: u64,
    per_round_messages: Vec<u64>,
    comm_graph: CommGraph,
    faults: Vec<ProtocolFault>,
    exhausted: bool,
    trace: Option<Vec<SyncRecord>>,
}

impl SyncRun {
    fn new(n: usize, trace: bool) -> Self {
        Self {
            decisions: vec![Decision::Undecided; n],
            wake_rounds: vec![None; n],
            rounds_used: 0,
            messages_total: 0,
            per_round_messages: Vec::new(),
            comm_graph: CommGraph::new(n),
            faults: Vec::new(),
            exhausted: false,
            trace: trace.then(Vec::new),
        }
    }

    fn awake(&self, v: usize) -> bool {
        self.wake_rounds[v].is_some()
    }

    fn wake(&mut self, v: usize, round: u64) {
        self.wake_rounds[v] = Some(round);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(SyncRecord { round, event: TraceEvent::wake(v) });
        }
    }

    fn fault(&mut self, round: u64, node: usize, reason: String) {
        self.faults.push(ProtocolFault { round, node, reason });
    }

    fn observe_decision(&mut self, round: u64, v: usize, now: Decision) {
        let before = self.decisions[v];
        if now == before {
            return;
        }
        if before != Decision::Undecided {
            self.fault(round, v, format!("decision revoked: {before:?} -> {now:?}"));
            return;
        }
        self.decisions[v] = now;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(SyncRecord { round, event: TraceEvent::decide(v, now) });
        }
    }
}
