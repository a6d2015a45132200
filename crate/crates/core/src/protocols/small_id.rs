use serde::Serialize;

use super::Decision;
use crate::error::ConfigError;
use crate::net::{IdAssignment, Identity};
use crate::sync::{Incoming, NodeInit, Outbox, SyncNode, SyncProtocol};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmallIdMsg {
    IdBroadcast { id: Identity },
}

impl Payload for SmallIdMsg {
    fn kind(&self) -> &'static str {
        "id-broadcast"
    }
}

/// Deterministic election for IDs drawn from `[1, n·g]`.
///
/// Round `i` belongs to the ID block `[(i−1)·d·g + 1, i·d·g]`: its members
/// broadcast, and every node that hears anything elects the smallest ID it
/// heard and halts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallIdBroadcast {
    d: u64,
    g: u64,
}

impl SmallIdBroadcast {
    pub fn new(d: u64, g: u64) -> Result<Self, ConfigError> {
        if d == 0 || g == 0 {
            return Err(ConfigError::Protocol(format!("d and g must be positive, got d={d} g={g}")));
        }
        Ok(Self { d, g })
    }

    pub fn block_of(&self, id: Identity) -> u64 {
        id.0.div_ceil(self.d * self.g)
    }
}

impl SyncProtocol for SmallIdBroadcast {
    type Msg = SmallIdMsg;
    type Node = SmallIdNode;

    fn validate(&self, ids: &IdAssignment) -> Result<(), ConfigError> {
        let n = ids.len() as u64;
        if self.d > n {
            return Err(ConfigError::Protocol(format!("d={} exceeds n={n}", self.d)));
        }
        let top = n * self.g;
        if let Some(id) = ids.as_slice().iter().find(|id| id.0 == 0 || id.0 > top) {
            return Err(ConfigError::Protocol(format!("ID {} outside [1, {top}]", id.0)));
        }
        Ok(())
    }

    fn spawn(&self, init: NodeInit) -> SmallIdNode {
        SmallIdNode { id: init.id, block: self.block_of(init.id), decision: Decision::Undecided, leader: None }
    }
}

#[derive(Debug, Clone)]
pub struct SmallIdNode {
    id: Identity,
    block: u64,
    decision: Decision,
    leader: Option<Identity>,
}

impl SmallIdNode {
    /// The ID this node elected, once halted.
    pub fn leader(&self) -> Option<Identity> {
        self.leader
    }
}

impl SyncNode for SmallIdNode {
    type Msg = SmallIdMsg;

    fn send(&mut self, round: u64, out: &mut Outbox<SmallIdMsg>) {
        if round == self.block {
            out.broadcast(SmallIdMsg::IdBroadcast { id: self.id });
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Incoming<SmallIdMsg>>) {
        let heard = inbox.iter().map(|m| match m.msg {
            SmallIdMsg::IdBroadcast { id } => id,
        });
        let own = (round == self.block).then_some(self.id);
        if let Some(min) = heard.chain(own).min() {
            self.leader = Some(min);
            self.decision = if min == self.id { Decision::Leader } else { Decision::NonLeader };
        }
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn halted(&self) -> bool {
        self.leader.is_some()
    }
}
