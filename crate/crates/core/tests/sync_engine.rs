use std::collections::{BTreeMap, BTreeSet};

use clique_lab::net::{Endpoint, IdAssignment, Identity, PortMapping};
use clique_lab::protocols::{ImprovedAfekGafni, TwoRoundAdversarial};
use clique_lab::sync::{
    leader_count, run_sync, Incoming, NodeInit, Outbox, SingleSend, SyncConfig, SyncNode, SyncProtocol, WakeMode,
};
use clique_lab::trace::{EventKind, Payload, SyncRecord};
use clique_lab::Decision;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Ping(u64);

impl Payload for Ping {
    fn kind(&self) -> &'static str {
        "ping"
    }
}

/// Fixture protocols, each a few lines of behaviour.
#[derive(Debug, Clone, Copy)]
enum Fixture {
    /// Leader iff id is 1; everyone halts in round 1 without sending.
    IdOne,
    /// Ids 1 and 2 both claim leadership: a deliberately broken protocol.
    TwoLeaders,
    /// Sends three pings on ports 1..=3 in round 1, then halts.
    Burst,
    /// Sends on port `n`, which does not exist.
    BadPort,
    /// Never decides, never halts.
    Stall,
    /// On its first round awake, pings port 1; halts once it has both sent
    /// and heard something.
    Relay,
}

struct FixtureNode {
    fixture: Fixture,
    id: Identity,
    n: usize,
    sent: bool,
    heard: bool,
    decision: Decision,
    halted: bool,
}

impl SyncProtocol for Fixture {
    type Msg = Ping;
    type Node = FixtureNode;

    fn spawn(&self, init: NodeInit) -> FixtureNode {
        FixtureNode {
            fixture: *self,
            id: init.id,
            n: init.n,
            sent: false,
            heard: false,
            decision: Decision::Undecided,
            halted: false,
        }
    }
}

impl SyncNode for FixtureNode {
    type Msg = Ping;

    fn send(&mut self, round: u64, out: &mut Outbox<Ping>) {
        match self.fixture {
            Fixture::Burst if round == 1 => (1..=3).for_each(|p| out.send(p, Ping(p as u64))),
            Fixture::BadPort => out.send(self.n, Ping(0)),
            Fixture::Relay if !self.sent => out.send(1, Ping(self.id.0)),
            _ => {}
        }
        self.sent = true;
    }

    fn receive(&mut self, _round: u64, inbox: Vec<Incoming<Ping>>) {
        let leader = match self.fixture {
            Fixture::Stall => return,
            Fixture::IdOne => self.id.0 == 1,
            Fixture::TwoLeaders => self.id.0 <= 2,
            Fixture::Relay => {
                self.heard |= !inbox.is_empty();
                if !(self.heard && self.sent) {
                    return;
                }
                false
            }
            _ => false,
        };
        self.decision = if leader { Decision::Leader } else { Decision::NonLeader };
        self.halted = true;
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn halted(&self) -> bool {
        self.halted
    }
}

fn run(fixture: Fixture, cfg: &SyncConfig) -> clique_lab::sync::SyncOutcome {
    run_sync(&fixture, cfg, &mut PortMapping::random(cfg.n(), 3)).unwrap()
}

#[test]
fn trivial_protocol_elects_id_one_silently() {
    let out = run(Fixture::IdOne, &SyncConfig::new(IdAssignment::sequential(6)));
    assert_eq!(out.leader_count(), 1);
    assert_eq!(out.leaders(), vec![0]);
    assert_eq!((out.messages_total, out.rounds_used), (0, 1));
    assert!(out.decided_all() && !out.did_not_finish());
}

#[test]
fn leader_counting() {
    let out = run(Fixture::TwoLeaders, &SyncConfig::new(IdAssignment::sequential(5)));
    assert_eq!(out.leader_count(), 2);
    assert_eq!(leader_count(&[Decision::NonLeader; 3]), 0);
}

#[test]
fn invalid_port_is_recorded_not_fatal() {
    let out = run(Fixture::BadPort, &SyncConfig::new(IdAssignment::sequential(3)));
    assert_eq!((out.messages_total, out.rounds_used), (0, 1));
    assert_eq!(out.faults.len(), 3);
    assert!(out.decided_all());
    assert!(out.faults.iter().all(|f| f.reason.contains("invalid port")));
}

#[test]
fn exhausted_rounds_flag_unfinished_runs() {
    let out = run(Fixture::Stall, &SyncConfig::new(IdAssignment::sequential(4)).with_max_rounds(5));
    assert!(out.did_not_finish());
    assert_eq!(out.rounds_used, 5);
    assert_eq!(SyncConfig::new(IdAssignment::sequential(4)).max_rounds, 16);
}

// A node woken by a round-1 message first sends in round 2.
#[test]
fn message_woken_nodes_send_next_round() {
    let cfg = SyncConfig::new(IdAssignment::sequential(2)).with_wake(WakeMode::Adversarial(BTreeSet::from([0])));
    let out = run(Fixture::Relay, &cfg);
    assert_eq!(out.wake_rounds, vec![Some(1), Some(1)]);
    assert_eq!(out.per_round_messages, vec![1, 1]);
    assert!(out.decided_all());
}

#[test]
fn empty_wake_set_is_rejected() {
    let cfg = SyncConfig::new(IdAssignment::sequential(2)).with_wake(WakeMode::Adversarial(BTreeSet::new()));
    assert!(run_sync(&Fixture::IdOne, &cfg, &mut PortMapping::random(2, 0)).is_err());
}

fn send_rounds(trace: &[SyncRecord], node: usize) -> Vec<u64> {
    trace.iter().filter(|r| r.event.kind == EventKind::Send && r.event.node == node).map(|r| r.round).collect()
}

#[test]
fn single_send_spreads_a_burst() {
    let cfg = SyncConfig::new(IdAssignment::sequential(4)).with_trace(true);
    let out = run_sync(&SingleSend::new(Fixture::Burst), &cfg, &mut PortMapping::random(4, 1)).unwrap();
    let trace = out.trace.unwrap();
    for v in 0..4 {
        assert_eq!(send_rounds(&trace, v), vec![1, 2, 3]);
    }
    assert_eq!(out.messages_total, 12);
}

#[test]
fn single_send_preserves_improved_ag() {
    for seed in 0..20 {
        let ids = IdAssignment::random(8, 64, &mut rand_seeded(seed));
        let cfg = SyncConfig::new(ids).with_seed(seed).with_max_rounds(64).with_trace(true);
        let ag = ImprovedAfekGafni::new(3).unwrap();
        let plain = run_sync(&ag, &cfg, &mut PortMapping::random(8, seed)).unwrap();
        let spread = run_sync(&SingleSend::new(ag), &cfg, &mut PortMapping::random(8, seed)).unwrap();
        assert_eq!(plain.decisions, spread.decisions);
        assert_eq!(plain.messages_total, spread.messages_total);
        assert!(spread.rounds_used <= 8 * 3, "rounds {}", spread.rounds_used);
        let trace = spread.trace.unwrap();
        for v in 0..8 {
            let rounds = send_rounds(&trace, v);
            assert_eq!(rounds.iter().collect::<BTreeSet<_>>().len(), rounds.len(), "node {v} sent twice in a round");
        }
    }
}

fn rand_seeded(seed: u64) -> impl rand::Rng {
    clique_lab::rng::stream_rng(seed, clique_lab::rng::Stream::Ids)
}

// Every send lands on the partner endpoint, once, with the same payload,
// in the round it was sent.
#[test]
fn trace_deliveries_follow_the_mapping() {
    let n = 16;
    let mapping = PortMapping::random(n, 9);
    let ids = IdAssignment::random(n, 256, &mut rand_seeded(9));
    let cfg = SyncConfig::new(ids).with_trace(true);
    let out = run_sync(&ImprovedAfekGafni::new(5).unwrap(), &cfg, &mut mapping.clone()).unwrap();
    let trace = out.trace.unwrap();
    let mut sends = BTreeMap::new();
    let mut deliveries = BTreeMap::new();
    for r in &trace {
        let key = r.event.msg;
        let entry = (r.round, Endpoint::new(r.event.node, r.event.port.unwrap_or(0)), r.event.digest.clone());
        match r.event.kind {
            EventKind::Send => assert!(sends.insert(key, entry).is_none()),
            EventKind::Deliver => assert!(deliveries.insert(key, entry).is_none()),
            _ => {}
        }
    }
    assert_eq!(deliveries.len() as u64, out.messages_total);
    assert_eq!(out.per_round_messages.iter().sum::<u64>(), out.messages_total);
    for (msg, (round, from, digest)) in &sends {
        let (d_round, to, d_digest) = &deliveries[msg];
        assert_eq!((round, digest), (d_round, d_digest));
        assert_eq!(mapping.partner(*from), *to);
    }
}

#[test]
fn deterministic_runs_repeat_exactly() {
    let n = 64;
    let ids = IdAssignment::random(n, 4096, &mut rand_seeded(4));
    let cfg = SyncConfig::new(ids).with_seed(4).with_trace(true);
    let ag = ImprovedAfekGafni::new(5).unwrap();
    let a = run_sync(&ag, &cfg, &mut PortMapping::random(n, 4)).unwrap();
    let b = run_sync(&ag, &cfg, &mut PortMapping::random(n, 4)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.decisions, b.decisions);
    // A deterministic protocol ignores the node tapes entirely.
    let c = run_sync(&ag, &cfg.clone().with_seed(5), &mut PortMapping::random(n, 4)).unwrap();
    assert_eq!(a.trace, c.trace);
}

#[test]
fn two_round_single_waker_fans_out_root_n() {
    for n in [10, 16, 50, 400] {
        let cfg = SyncConfig::new(IdAssignment::sequential(n))
            .with_wake(WakeMode::Adversarial(BTreeSet::from([0])))
            .with_trace(true);
        let out = run_sync(&TwoRoundAdversarial::new(0.1).unwrap(), &cfg, &mut PortMapping::random(n, 2)).unwrap();
        let round_one: Vec<_> =
            out.trace.unwrap().into_iter().filter(|r| r.round == 1 && r.event.kind == EventKind::Send).collect();
        let root = (n as f64).sqrt().ceil() as usize;
        assert_eq!(round_one.len(), root, "n={n}");
        assert!(round_one.iter().all(|r| r.event.node == 0));
    }
}
