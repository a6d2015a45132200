use serde::Serialize;

use super::{ceil_root_pow, Decision};
use crate::error::ConfigError;
use crate::net::{Identity, Port};
use crate::sync::{Incoming, NodeInit, Outbox, SyncNode, SyncProtocol};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgMsg {
    Compete { id: Identity },
    Win,
    IdBroadcast { id: Identity },
}

impl Payload for AgMsg {
    fn kind(&self) -> &'static str {
        match self {
            AgMsg::Compete { .. } => "compete",
            AgMsg::Win => "win",
            AgMsg::IdBroadcast { .. } => "id-broadcast",
        }
    }
}

/// Deterministic election in exactly `ℓ` rounds, for odd `ℓ ≥ 3`.
///
/// With `k = (ℓ+3)/2`, iterations `i = 1..k−2` take two rounds each. In the
/// first a survivor sends its ID to `f_i = min(⌈n^{i/(k−1)}⌉, n−1)` referees
/// on its lowest unused ports; in the second each referee answers the
/// highest ID it just received. Survivors answered by every referee carry
/// on. In round `ℓ` the survivors broadcast and the largest ID wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImprovedAfekGafni {
    ell: u64,
}

impl ImprovedAfekGafni {
    pub fn new(ell: u64) -> Result<Self, ConfigError> {
        if ell < 3 || ell.is_multiple_of(2) {
            return Err(ConfigError::Protocol(format!("ell must be odd and at least 3, got {ell}")));
        }
        Ok(Self { ell })
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn k(&self) -> u64 {
        (self.ell + 3) / 2
    }

    pub fn iterations(&self) -> u64 {
        self.k() - 2
    }

    /// `f_i`, the number of referees a survivor contacts in iteration `i`.
    pub fn fanout(&self, n: usize, i: u64) -> usize {
        ceil_root_pow(n, i as u32, (self.k() - 1) as u32).min(n.saturating_sub(1))
    }

    /// `⌈n^{1 − i/(k−1)}⌉`, the survivor bound after iteration `i`.
    pub fn survivor_bound(&self, n: usize, i: u64) -> usize {
        let den = self.k() - 1;
        ceil_root_pow(n, (den - i) as u32, den as u32).min(n)
    }

    /// Closed-form message bound: every iteration costs at most
    /// `s_{i−1}·f_i` competes plus one reply per node, and the final
    /// broadcast costs `s_{k−2}·(n−1)`.
    pub fn message_bound(&self, n: usize) -> u64 {
        let mut total = 0u64;
        for i in 1..=self.iterations() {
            let s_prev = if i == 1 { n } else { self.survivor_bound(n, i - 1) };
            total += (s_prev * self.fanout(n, i) + n) as u64;
        }
        let s_last = self.survivor_bound(n, self.iterations());
        total + (s_last * n.saturating_sub(1)) as u64
    }
}

impl SyncProtocol for ImprovedAfekGafni {
    type Msg = AgMsg;
    type Node = AgNode;

    fn spawn(&self, init: NodeInit) -> AgNode {
        let n = init.n;
        AgNode {
            id: init.id,
            ell: self.ell,
            fanouts: (1..=self.iterations()).map(|i| self.fanout(n, i)).collect(),
            used: vec![false; n],
            referees: Vec::new(),
            reply_to: None,
            survivor: true,
            decision: Decision::Undecided,
            halted: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgNode {
    id: Identity,
    ell: u64,
    fanouts: Vec<usize>,
    /// Ports already used for this node's own fanout, indexed by port.
    used: Vec<bool>,
    referees: Vec<Port>,
    /// Sender of the highest ID seen in the current iteration.
    reply_to: Option<(Identity, Port)>,
    survivor: bool,
    decision: Decision,
    halted: bool,
}

impl AgNode {
    pub fn is_survivor(&self) -> bool {
        self.survivor
    }

    /// Lowest unused ports first. If fewer than `count` remain, the lowest
    /// used ones top the set up, so the fanout size never shrinks.
    fn pick_ports(&mut self, count: usize) -> Vec<Port> {
        let degree = self.used.len() - 1;
        let mut ports: Vec<Port> = (1..=degree).filter(|&p| !self.used[p]).take(count).collect();
        if ports.len() < count {
            let fresh = ports.clone();
            ports.extend((1..=degree).filter(|p| !fresh.contains(p)).take(count - fresh.len()));
        }
        for &p in &ports {
            self.used[p] = true;
        }
        ports.sort_unstable();
        ports
    }
}

impl SyncNode for AgNode {
    type Msg = AgMsg;

    fn send(&mut self, round: u64, out: &mut Outbox<AgMsg>) {
        if round == self.ell {
            if self.survivor {
                out.broadcast(AgMsg::IdBroadcast { id: self.id });
            }
        } else if round % 2 == 1 {
            if self.survivor {
                let i = round.div_ceil(2);
                self.referees = self.pick_ports(self.fanouts[(i - 1) as usize]);
                for &p in &self.referees {
                    out.send(p, AgMsg::Compete { id: self.id });
                }
            }
        } else if let Some((_, port)) = self.reply_to.take() {
            out.send(port, AgMsg::Win);
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Incoming<AgMsg>>) {
        if round == self.ell {
            let beaten = inbox.iter().any(|m| matches!(m.msg, AgMsg::IdBroadcast { id } if id > self.id));
            self.decision = if self.survivor && !beaten { Decision::Leader } else { Decision::NonLeader };
            self.halted = true;
        } else if round % 2 == 1 {
            self.reply_to = inbox
                .iter()
                .filter_map(|m| match m.msg {
                    AgMsg::Compete { id } => Some((id, m.port)),
                    _ => None,
                })
                .max();
        } else if self.survivor {
            let answered = |p: &Port| inbox.iter().any(|m| m.port == *p && m.msg == AgMsg::Win);
            self.survivor = self.referees.iter().all(answered);
            if !self.survivor {
                self.decision = Decision::NonLeader;
            }
        }
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn halted(&self) -> bool {
        self.halted
    }
}
