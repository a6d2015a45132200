use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use super::{probability, sample_ports, Decision, Rank};
use crate::error::ConfigError;
use crate::net::{Identity, Port};
use crate::rng::NodeRng;
use crate::sync::{Incoming, NodeInit, Outbox, SyncNode, SyncProtocol};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LvMsg {
    Compete { rank: Rank },
    Win,
    Announce { id: Identity },
}

impl Payload for LvMsg {
    fn kind(&self) -> &'static str {
        match self {
            LvMsg::Compete { .. } => "compete",
            LvMsg::Win => "win",
            LvMsg::Announce { .. } => "announce",
        }
    }
}

/// Repeated three-round attempts that never end with other than one leader.
///
/// Round 1: candidates, chosen with probability `min(1, a·ln n/n)`, send a
/// random rank to `⌈b·√(n ln n)⌉` random referees. Round 2: each referee
/// answers the unique highest rank it saw, unless it is a candidate with a
/// rank at least as high. Round 3: candidates answered by every referee
/// announce themselves to everyone. Unless exactly one announcement is
/// seen, every node restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LasVegasThreeRound {
    a: f64,
    b: f64,
}

impl Default for LasVegasThreeRound {
    fn default() -> Self {
        Self { a: 4.0, b: 4.0 }
    }
}

impl LasVegasThreeRound {
    pub fn new(a: f64, b: f64) -> Result<Self, ConfigError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(ConfigError::Protocol(format!("a and b must be positive, got a={a} b={b}")));
        }
        Ok(Self { a, b })
    }

    pub fn candidate_probability(&self, n: usize) -> f64 {
        if n <= 1 {
            return 1.0;
        }
        probability(self.a * (n as f64).ln() / n as f64)
    }

    pub fn referee_count(&self, n: usize) -> usize {
        let nf = n as f64;
        ((self.b * (nf * nf.ln()).sqrt()).ceil() as usize).min(n.saturating_sub(1))
    }
}

impl SyncProtocol for LasVegasThreeRound {
    type Msg = LvMsg;
    type Node = LvNode;

    fn spawn(&self, init: NodeInit) -> LvNode {
        LvNode {
            id: init.id,
            n: init.n,
            rng: init.rng,
            p: self.candidate_probability(init.n),
            referee_count: self.referee_count(init.n),
            rank: None,
            referees: Vec::new(),
            reply_to: None,
            provisional: false,
            attempts: 0,
            decision: Decision::Undecided,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LvNode {
    id: Identity,
    n: usize,
    rng: NodeRng,
    p: f64,
    referee_count: usize,
    rank: Option<Rank>,
    referees: Vec<Port>,
    reply_to: Option<Port>,
    provisional: bool,
    attempts: u64,
    decision: Decision,
}

impl LvNode {
    /// Attempts started so far.
    pub fn attempts(&self) -> u64 {
        self.attempts
    }
}

impl SyncNode for LvNode {
    type Msg = LvMsg;

    fn send(&mut self, round: u64, out: &mut Outbox<LvMsg>) {
        match (round - 1) % 3 {
            0 => {
                self.attempts += 1;
                self.provisional = false;
                self.reply_to = None;
                self.referees.clear();
                self.rank = None;
                if self.rng.random_bool(self.p) {
                    let rank = Rank::draw(&mut self.rng, self.n);
                    self.rank = Some(rank);
                    self.referees = sample_ports(&mut self.rng, self.n, self.referee_count);
                    for &p in &self.referees {
                        out.send(p, LvMsg::Compete { rank });
                    }
                }
            }
            1 => {
                if let Some(port) = self.reply_to {
                    out.send(port, LvMsg::Win);
                }
            }
            _ => {
                if self.provisional {
                    out.broadcast(LvMsg::Announce { id: self.id });
                }
            }
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Incoming<LvMsg>>) {
        match (round - 1) % 3 {
            0 => {
                let ranks: Vec<(Rank, Port)> = inbox
                    .iter()
                    .filter_map(|m| match m.msg {
                        LvMsg::Compete { rank } => Some((rank, m.port)),
                        _ => None,
                    })
                    .collect();
                // A candidate referee weighs its own rank too; otherwise two
                // lone candidates at n = 2 would win at each other forever.
                self.reply_to = ranks.iter().max().and_then(|&(top, port)| {
                    let unique = ranks.iter().filter(|(r, _)| *r == top).count() == 1;
                    (unique && self.rank.is_none_or(|own| top > own)).then_some(port)
                });
            }
            1 => {
                if self.rank.is_some() {
                    let winners: BTreeSet<Port> =
                        inbox.iter().filter(|m| m.msg == LvMsg::Win).map(|m| m.port).collect();
                    self.provisional = self.referees.iter().all(|p| winners.contains(p));
                }
            }
            _ => {
                let mut announcers: BTreeSet<Identity> = inbox
                    .iter()
                    .filter_map(|m| match m.msg {
                        LvMsg::Announce { id } => Some(id),
                        _ => None,
                    })
                    .collect();
                if self.provisional {
                    announcers.insert(self.id);
                }
                if announcers.len() == 1 {
                    self.decision = if self.provisional { Decision::Leader } else { Decision::NonLeader };
                }
            }
        }
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn halted(&self) -> bool {
        self.decision != Decision::Undecided
    }
}
