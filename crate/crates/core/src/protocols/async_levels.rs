use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::Decision;
use crate::event::{AsyncNode, AsyncProtocol, Context, NodeInit};
use crate::net::{Identity, Port};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelMsg {
    Request {
        id: Identity,
        level: u32,
    },
    Ack {
        level: u32,
    },
    Lose,
    /// Asks the supported candidate to make way for `challenger`.
    Cancel {
        challenger: Identity,
        level: u32,
    },
    CancelReply {
        challenger: Identity,
        refused: bool,
    },
    Announce,
}

impl Payload for LevelMsg {
    fn kind(&self) -> &'static str {
        match self {
            LevelMsg::Request { .. } => "request",
            LevelMsg::Ack { .. } => "ack",
            LevelMsg::Lose => "lose",
            LevelMsg::Cancel { .. } => "cancel",
            LevelMsg::CancelReply { .. } => "cancel-reply",
            LevelMsg::Announce => "announce",
        }
    }
}

/// Deterministic asynchronous election by levels, `O(log n)` time and
/// `O(n log n)` messages.
///
/// A live candidate at level `i` asks its first `min(2^i, n)` neighbours
/// for support, counting itself as the first; neighbour `j` sits behind
/// port `j − 1`. Support from all of them lifts it to level `i + 1`, and
/// support from all `n` nodes makes it leader.
///
/// A node supports one candidate at a time and only switches once that
/// candidate is dead. A larger challenger asks the incumbent to die, which
/// it refuses when it is already past the challenger's level. A smaller
/// challenger waits: the incumbent answers only when it dies, so a live
/// candidate never loses to a request it has out-levelled while the other
/// side kills it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AsyncLevels;

impl AsyncLevels {
    pub fn new() -> Self {
        Self
    }

    /// `⌈log₂ n⌉`, the level at which a candidate covers every node.
    pub fn top_level(n: usize) -> u32 {
        n.max(1).next_power_of_two().trailing_zeros()
    }
}

impl AsyncProtocol for AsyncLevels {
    type Msg = LevelMsg;
    type Node = LevelNode;

    fn spawn(&self, init: NodeInit) -> LevelNode {
        LevelNode {
            id: init.id,
            n: init.n,
            alive: true,
            level: 0,
            completed: None,
            acks: BTreeSet::new(),
            supported: Support::Itself,
            pending: BTreeMap::new(),
            asked: BTreeMap::new(),
            watchers: Vec::new(),
            decision: Decision::Undecided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Support {
    None,
    Itself,
    Other { id: Identity, port: Port },
}

#[derive(Debug, Clone)]
pub struct LevelNode {
    id: Identity,
    n: usize,
    alive: bool,
    level: u32,
    completed: Option<u32>,
    acks: BTreeSet<Port>,
    supported: Support,
    /// Challengers waiting for support: id to (port, level).
    pending: BTreeMap<Identity, (Port, u32)>,
    /// Challengers with a cancel in flight, and the incumbent it went to.
    asked: BTreeMap<Identity, Identity>,
    /// Referees waiting for this candidate to die: (port, challenger, level).
    watchers: Vec<(Port, Identity, u32)>,
    decision: Decision,
}

impl LevelNode {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Highest level whose requests were all acknowledged.
    pub fn completed_level(&self) -> Option<u32> {
        self.completed
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    fn span(&self, level: u32) -> usize {
        1usize.checked_shl(level).unwrap_or(usize::MAX).min(self.n)
    }

    fn die(&mut self, ctx: &mut Context<'_, LevelMsg>) {
        if self.alive {
            self.alive = false;
            for (port, challenger, level) in std::mem::take(&mut self.watchers) {
                ctx.send(port, LevelMsg::CancelReply { challenger, refused: self.level > level });
            }
        }
        if self.decision == Decision::Undecided {
            self.decision = Decision::NonLeader;
        }
    }

    fn advance(&mut self, ctx: &mut Context<'_, LevelMsg>) {
        while self.alive && self.decision == Decision::Undecided && self.acks.len() + 1 == self.span(self.level) {
            self.completed = Some(self.level);
            if self.span(self.level) == self.n {
                self.decision = Decision::Leader;
                ctx.broadcast(LevelMsg::Announce);
                return;
            }
            self.level += 1;
            self.acks.clear();
            for port in 1..self.span(self.level) {
                ctx.send(port, LevelMsg::Request { id: self.id, level: self.level });
            }
        }
    }

    fn lose(&mut self, challenger: Identity, ctx: &mut Context<'_, LevelMsg>) {
        if let Some((port, _)) = self.pending.remove(&challenger) {
            self.asked.remove(&challenger);
            ctx.send(port, LevelMsg::Lose);
        }
    }

    /// Works through pending challengers until one must wait for a reply.
    fn settle(&mut self, ctx: &mut Context<'_, LevelMsg>) {
        loop {
            let Some((&top, &(port, level))) = self.pending.last_key_value() else { return };
            match self.supported {
                Support::None => {
                    self.pending.remove(&top);
                    self.asked.remove(&top);
                    self.supported = Support::Other { id: top, port };
                    ctx.send(port, LevelMsg::Ack { level });
                }
                Support::Itself if self.decision == Decision::Leader => self.lose(top, ctx),
                Support::Itself if !self.alive => {
                    if self.level > level {
                        self.lose(top, ctx);
                    } else {
                        self.supported = Support::None;
                    }
                }
                Support::Itself if top > self.id => {
                    if self.level > level {
                        self.lose(top, ctx);
                    } else {
                        self.die(ctx);
                    }
                }
                // Smaller challengers wait until this candidate dies.
                Support::Itself => return,
                Support::Other { id: current, port: holder } => {
                    for (&challenger, &(_, level)) in &self.pending {
                        if self.asked.get(&challenger) != Some(&current) {
                            self.asked.insert(challenger, current);
                            ctx.send(holder, LevelMsg::Cancel { challenger, level });
                        }
                    }
                    return;
                }
            }
        }
    }

    fn request(&mut self, id: Identity, port: Port, level: u32, ctx: &mut Context<'_, LevelMsg>) {
        if let Support::Other { id: current, port: holder } = self.supported {
            if id == current {
                // Support for the incumbent carries over to its next level.
                self.supported = Support::Other { id, port: holder };
                ctx.send(port, LevelMsg::Ack { level });
                return;
            }
        }
        self.pending.insert(id, (port, level));
        self.settle(ctx);
    }

    fn cancel(&mut self, challenger: Identity, level: u32, port: Port, ctx: &mut Context<'_, LevelMsg>) {
        // A level past the challenger's wins even after death, so that at
        // most one candidate completes each level with a given supporter.
        let refused = if self.decision == Decision::Leader || self.level > level {
            true
        } else if !self.alive {
            false
        } else if challenger < self.id {
            self.watchers.push((port, challenger, level));
            return;
        } else {
            self.die(ctx);
            self.settle(ctx);
            return ctx.send(port, LevelMsg::CancelReply { challenger, refused: false });
        };
        ctx.send(port, LevelMsg::CancelReply { challenger, refused });
    }

    fn cancel_reply(&mut self, challenger: Identity, refused: bool, from: Port, ctx: &mut Context<'_, LevelMsg>) {
        // Support switches re-ask every pending challenger, so a reply from
        // anyone but the current incumbent is stale.
        let Support::Other { id: current, port: holder } = self.supported else { return };
        if from != holder || self.asked.get(&challenger) != Some(&current) {
            return;
        }
        self.asked.remove(&challenger);
        if refused {
            self.lose(challenger, ctx);
        } else if let Some((port, level)) = self.pending.remove(&challenger) {
            // The answer only covers this challenger's level, so support
            // goes to it even if a larger one is waiting.
            self.supported = Support::Other { id: challenger, port };
            ctx.send(port, LevelMsg::Ack { level });
        }
        self.settle(ctx);
    }
}

impl AsyncNode for LevelNode {
    type Msg = LevelMsg;

    fn on_wake(&mut self, ctx: &mut Context<'_, LevelMsg>) {
        self.advance(ctx);
    }

    fn on_message(&mut self, port: Port, msg: LevelMsg, ctx: &mut Context<'_, LevelMsg>) {
        match msg {
            LevelMsg::Request { id, level } => self.request(id, port, level, ctx),
            LevelMsg::Ack { level } => {
                if self.alive && level == self.level {
                    self.acks.insert(port);
                    self.advance(ctx);
                }
            }
            LevelMsg::Lose | LevelMsg::Announce => {
                self.die(ctx);
                self.settle(ctx);
            }
            LevelMsg::Cancel { challenger, level } => self.cancel(challenger, level, port, ctx),
            LevelMsg::CancelReply { challenger, refused } => self.cancel_reply(challenger, refused, port, ctx),
        }
    }

    fn decision(&self) -> Decision {
        self.decision
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{execute_async, uniform_random_delay, unit_delay, AsyncConfig, Time};
    use crate::net::{IdAssignment, PortMapping};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn larger_of_two_wins() {
        let ids = IdAssignment::new(vec![3, 7], 9).unwrap();
        let cfg = AsyncConfig::simultaneous(ids);
        let (out, nodes) =
            execute_async(&AsyncLevels::new(), &cfg, &PortMapping::random(2, 0), &mut unit_delay()).unwrap();
        assert_eq!(out.decisions, vec![Decision::NonLeader, Decision::Leader]);
        assert!(!nodes[0].is_alive());
        assert_eq!(nodes[1].completed_level(), Some(1));
    }

    #[test]
    fn level_zero_needs_no_acks() {
        let ids = IdAssignment::new(vec![1], 1).unwrap();
        let (out, _) = execute_async(
            &AsyncLevels::new(),
            &AsyncConfig::simultaneous(ids),
            &PortMapping::random(1, 0),
            &mut unit_delay(),
        )
        .unwrap();
        assert_eq!(out.leader_count, 1);
        assert_eq!(out.messages_total, 0);
    }

    // Three nodes where the larger candidate lags a level behind: it must
    // not kill the smaller one while being killed by it.
    #[test]
    fn no_mutual_kill() {
        let n = 3;
        let seed = 1;
        let ids = IdAssignment::random(n, 9, &mut stream_rng(seed, Stream::Ids));
        let mapping = PortMapping::random_with(n, &mut stream_rng(seed, Stream::Mapping));
        let cfg = AsyncConfig::new(ids, vec![(0, Time::ZERO)]).with_seed(seed);
        let (out, _) = execute_async(&AsyncLevels::new(), &cfg, &mapping, &mut uniform_random_delay(seed)).unwrap();
        assert_eq!(out.leader_count, 1);
    }

    // Small odd sizes exercise stale cancel replies and dead incumbents.
    #[test]
    fn unique_leader_for_small_sizes() {
        for n in 2..=9 {
            for seed in 0..200 {
                let ids = IdAssignment::random(n, (n * n) as u64, &mut stream_rng(seed, Stream::Ids));
                let mapping = PortMapping::random_with(n, &mut stream_rng(seed, Stream::Mapping));
                let cfg = AsyncConfig::simultaneous(ids).with_seed(seed);
                let (out, nodes) =
                    execute_async(&AsyncLevels::new(), &cfg, &mapping, &mut uniform_random_delay(seed)).unwrap();
                assert_eq!(out.leader_count, 1, "n={n} seed={seed}");
                assert!(out.decided_all() && out.faults.is_empty());
                assert_eq!(crate::verify::level_bound_violation(&nodes), None, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn top_levels() {
        assert_eq!(AsyncLevels::top_level(1), 0);
        assert_eq!(AsyncLevels::top_level(2), 1);
        assert_eq!(AsyncLevels::top_level(5), 3);
        assert_eq!(AsyncLevels::top_level(64), 6);
    }
}
