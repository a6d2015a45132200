use rand::Rng;
use serde::Serialize;

use super::{ceil_sqrt, probability, sample_ports, Decision, Rank};
use crate::error::ConfigError;
use crate::rng::NodeRng;
use crate::sync::{Incoming, NodeInit, Outbox, SyncNode, SyncProtocol};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TwoRoundMsg {
    Wake,
    Compete { rank: Rank },
}

impl Payload for TwoRoundMsg {
    fn kind(&self) -> &'static str {
        match self {
            TwoRoundMsg::Wake => "wake",
            TwoRoundMsg::Compete { .. } => "compete",
        }
    }
}

/// Two-round election under adversarial wake-up, succeeding with
/// probability at least `1 − ε − 1/n`.
///
/// Every node the adversary wakes sends a wake message to `⌈√n⌉` random
/// ports. Every node that received one becomes a candidate with probability
/// `min(1, ln(1/ε)/⌈√n⌉)` and broadcasts a random rank. A candidate that
/// hears only lower ranks is the leader. Failure shows up as zero leaders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRoundAdversarial {
    epsilon: f64,
}

impl TwoRoundAdversarial {
    pub fn new(epsilon: f64) -> Result<Self, ConfigError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ConfigError::Protocol(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn wake_fanout(&self, n: usize) -> usize {
        ceil_sqrt(n).min(n.saturating_sub(1))
    }

    pub fn candidate_probability(&self, n: usize) -> f64 {
        probability((1.0 / self.epsilon).ln() / ceil_sqrt(n) as f64)
    }
}

impl SyncProtocol for TwoRoundAdversarial {
    type Msg = TwoRoundMsg;
    type Node = TwoRoundNode;

    fn spawn(&self, init: NodeInit) -> TwoRoundNode {
        TwoRoundNode {
            n: init.n,
            rng: init.rng,
            fanout: self.wake_fanout(init.n),
            p: self.candidate_probability(init.n),
            eligible: false,
            rank: None,
            decision: Decision::Undecided,
            halted: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoRoundNode {
    n: usize,
    rng: NodeRng,
    fanout: usize,
    p: f64,
    eligible: bool,
    rank: Option<Rank>,
    decision: Decision,
    halted: bool,
}

impl TwoRoundNode {
    pub fn rank(&self) -> Option<Rank> {
        self.rank
    }
}

impl SyncNode for TwoRoundNode {
    type Msg = TwoRoundMsg;

    fn send(&mut self, round: u64, out: &mut Outbox<TwoRoundMsg>) {
        match round {
            1 => {
                for p in sample_ports(&mut self.rng, self.n, self.fanout) {
                    out.send(p, TwoRoundMsg::Wake);
                }
            }
            2 if self.eligible => {
                if self.rng.random_bool(self.p) {
                    let rank = Rank::draw(&mut self.rng, self.n);
                    self.rank = Some(rank);
                    out.broadcast(TwoRoundMsg::Compete { rank });
                } else {
                    self.decision = Decision::NonLeader;
                }
            }
            _ => {}
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Incoming<TwoRoundMsg>>) {
        if round == 1 {
            self.eligible = !inbox.is_empty();
            if self.eligible {
                return;
            }
        }
        if self.decision == Decision::Undecided {
            let beaten =
                |own: Rank| inbox.iter().any(|m| matches!(m.msg, TwoRoundMsg::Compete { rank } if rank >= own));
            self.decision = match self.rank {
                Some(own) if !beaten(own) => Decision::Leader,
                _ => Decision::NonLeader,
            };
        }
        self.halted = true;
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn halted(&self) -> bool {
        self.halted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters() {
        let tr = TwoRoundAdversarial::new(0.1).unwrap();
        assert_eq!(tr.wake_fanout(400), 20);
        assert_eq!(tr.wake_fanout(2), 1);
        assert!((tr.candidate_probability(400) - 10f64.ln() / 20.0).abs() < 1e-12);
        assert_eq!(tr.candidate_probability(1), 1.0);
        assert!(TwoRoundAdversarial::new(0.0).is_err());
        assert!(TwoRoundAdversarial::new(1.0).is_err());
    }
}
