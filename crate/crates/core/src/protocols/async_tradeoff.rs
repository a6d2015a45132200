use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use super::{ceil_root_pow, probability, sample_ports, Decision, Rank};
use crate::error::ConfigError;
use crate::event::{AsyncNode, AsyncProtocol, Context, NodeInit};
use crate::net::{IdAssignment, Port};
use crate::rng::NodeRng;
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TradeoffMsg {
    Wake,
    Compete { rank: Rank },
    Win,
    Lose,
    Consult,
    ConsultReply { leader: bool },
    Announce,
}

impl Payload for TradeoffMsg {
    fn kind(&self) -> &'static str {
        match self {
            TradeoffMsg::Wake => "wake",
            TradeoffMsg::Compete { .. } => "compete",
            TradeoffMsg::Win => "win",
            TradeoffMsg::Lose => "lose",
            TradeoffMsg::Consult => "consult",
            TradeoffMsg::ConsultReply { .. } => "consult-reply",
            TradeoffMsg::Announce => "announce",
        }
    }
}

/// How referees answer competes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RefereeRule {
    #[default]
    Faithful,
    /// Broken on purpose: every compete wins. Used to check that the
    /// acceptance checks notice an unsafe protocol.
    AlwaysWin,
}

/// Asynchronous election trading time for messages through `k`.
///
/// A woken node wakes `⌈γ·n^{1/k}⌉` random others, then becomes a candidate
/// with probability `min(1, 4 ln n/n)`. A candidate sends a random rank to
/// `⌈4√(n ln n)⌉` random referees. A referee keeps the best rank it has
/// seen; a better one only wins after asking the stored winner whether it
/// is already leader, which demotes it if not. While that question is out,
/// the referee holds only the best challenger and turns the others away, so
/// no compete waits for more than one round trip. A candidate that wins at
/// every referee is the leader and tells everyone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncTradeoff {
    k: u32,
    gamma: f64,
    rule: RefereeRule,
}

impl AsyncTradeoff {
    pub fn new(k: u32, gamma: f64) -> Result<Self, ConfigError> {
        if k < 2 {
            return Err(ConfigError::Protocol(format!("k must be at least 2, got {k}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ConfigError::Protocol(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { k, gamma, rule: RefereeRule::Faithful })
    }

    pub fn with_referee_rule(mut self, rule: RefereeRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Largest admissible `k`: `⌊log₂ n / log₂ log₂ n⌋ + 1`, never below 2.
    pub fn max_k(n: usize) -> u32 {
        let lg = (n as f64).log2();
        let lglg = lg.log2();
        if lglg <= 0.0 {
            return 2;
        }
        ((lg / lglg).floor() as u32 + 1).max(2)
    }

    /// `⌈γ·n^{1/k}⌉`, exact for integer `γ`, capped at `n − 1`.
    pub fn wake_fanout(&self, n: usize) -> usize {
        let scaled = (self.gamma.fract() == 0.0)
            .then(|| (self.gamma as usize).checked_pow(self.k).and_then(|g| g.checked_mul(n)))
            .flatten();
        let fanout = match scaled {
            Some(m) => ceil_root_pow(m, 1, self.k),
            None => (self.gamma * (n as f64).powf(1.0 / self.k as f64)).ceil() as usize,
        };
        fanout.min(n.saturating_sub(1))
    }

    pub fn candidate_probability(n: usize) -> f64 {
        if n <= 1 {
            return 1.0;
        }
        probability(4.0 * (n as f64).ln() / n as f64)
    }

    pub fn referee_count(n: usize) -> usize {
        let nf = n as f64;
        ((4.0 * (nf * nf.ln()).sqrt()).ceil() as usize).min(n.saturating_sub(1))
    }
}

impl AsyncProtocol for AsyncTradeoff {
    type Msg = TradeoffMsg;
    type Node = TradeoffNode;

    fn validate(&self, ids: &IdAssignment) -> Result<(), ConfigError> {
        let max = Self::max_k(ids.len());
        if self.k > max {
            return Err(ConfigError::Protocol(format!("k={} exceeds {max} for n={}", self.k, ids.len())));
        }
        Ok(())
    }

    fn spawn(&self, init: NodeInit) -> TradeoffNode {
        TradeoffNode {
            n: init.n,
            rng: init.rng,
            wake_fanout: self.wake_fanout(init.n),
            rule: self.rule,
            rank: None,
            referees: Vec::new(),
            wins: BTreeSet::new(),
            winner: None,
            consult: None,
            decision: Decision::Undecided,
        }
    }
}

/// Who holds a referee's winning rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Holder {
    Itself,
    Port(Port),
}

#[derive(Debug, Clone)]
pub struct TradeoffNode {
    n: usize,
    rng: NodeRng,
    wake_fanout: usize,
    rule: RefereeRule,
    rank: Option<Rank>,
    referees: Vec<Port>,
    wins: BTreeSet<Port>,
    winner: Option<(Rank, Holder)>,
    /// The best challenger waiting on the outstanding consult.
    consult: Option<(Port, Rank)>,
    decision: Decision,
}

impl TradeoffNode {
    pub fn rank(&self) -> Option<Rank> {
        self.rank
    }

    pub fn is_candidate(&self) -> bool {
        self.rank.is_some()
    }

    fn demote(&mut self) {
        if self.decision == Decision::Undecided {
            self.decision = Decision::NonLeader;
        }
    }

    fn become_leader(&mut self, ctx: &mut Context<'_, TradeoffMsg>) {
        self.decision = Decision::Leader;
        ctx.broadcast(TradeoffMsg::Announce);
    }

    fn referee(&mut self, port: Port, rank: Rank, ctx: &mut Context<'_, TradeoffMsg>) {
        if self.rule == RefereeRule::AlwaysWin {
            ctx.send(port, TradeoffMsg::Win);
            return;
        }
        match self.winner {
            None => {
                self.winner = Some((rank, Holder::Port(port)));
                ctx.send(port, TradeoffMsg::Win);
                self.demote();
            }
            Some((best, _)) if rank <= best => ctx.send(port, TradeoffMsg::Lose),
            Some((_, Holder::Itself)) => {
                if self.decision == Decision::Leader {
                    ctx.send(port, TradeoffMsg::Lose);
                } else {
                    self.demote();
                    self.winner = Some((rank, Holder::Port(port)));
                    ctx.send(port, TradeoffMsg::Win);
                }
            }
            Some((_, Holder::Port(holder))) => {
                self.consult = Some((port, rank));
                ctx.send(holder, TradeoffMsg::Consult);
            }
        }
    }

    /// A compete arriving while a consult is out. Whatever the stored
    /// winner answers, only the best waiting challenger can win, so the
    /// others lose at once and the best inherits the pending answer.
    fn challenge_pending(&mut self, port: Port, rank: Rank, ctx: &mut Context<'_, TradeoffMsg>) {
        let beaten = self.winner.is_some_and(|(best, _)| rank <= best);
        match self.consult {
            Some((_, waiting)) if beaten || rank <= waiting => ctx.send(port, TradeoffMsg::Lose),
            Some((waiting_port, _)) => {
                ctx.send(waiting_port, TradeoffMsg::Lose);
                self.consult = Some((port, rank));
            }
            None => unreachable!("only called with a consult outstanding"),
        }
    }
}

impl AsyncNode for TradeoffNode {
    type Msg = TradeoffMsg;

    fn on_wake(&mut self, ctx: &mut Context<'_, TradeoffMsg>) {
        for p in sample_ports(&mut self.rng, self.n, self.wake_fanout) {
            ctx.send(p, TradeoffMsg::Wake);
        }
        if !self.rng.random_bool(AsyncTradeoff::candidate_probability(self.n)) {
            self.decision = Decision::NonLeader;
            return;
        }
        let rank = Rank::draw(&mut self.rng, self.n);
        self.rank = Some(rank);
        self.winner = Some((rank, Holder::Itself));
        self.referees = sample_ports(&mut self.rng, self.n, AsyncTradeoff::referee_count(self.n));
        if self.referees.is_empty() {
            self.become_leader(ctx);
        }
        for &p in &self.referees {
            ctx.send(p, TradeoffMsg::Compete { rank });
        }
    }

    fn on_message(&mut self, port: Port, msg: TradeoffMsg, ctx: &mut Context<'_, TradeoffMsg>) {
        match msg {
            TradeoffMsg::Wake => {}
            TradeoffMsg::Compete { rank } => {
                if self.rule == RefereeRule::Faithful && self.consult.is_some() {
                    self.challenge_pending(port, rank, ctx);
                } else {
                    self.referee(port, rank, ctx);
                }
            }
            TradeoffMsg::Win => {
                if self.decision == Decision::Undecided && self.rank.is_some() {
                    self.wins.insert(port);
                    if self.wins.len() == self.referees.len() {
                        self.become_leader(ctx);
                    }
                }
            }
            TradeoffMsg::Lose | TradeoffMsg::Announce => self.demote(),
            TradeoffMsg::Consult => {
                ctx.send(port, TradeoffMsg::ConsultReply { leader: self.decision == Decision::Leader });
                self.demote();
            }
            TradeoffMsg::ConsultReply { leader } => {
                let Some((challenger, rank)) = self.consult.take() else { return };
                if leader {
                    ctx.send(challenger, TradeoffMsg::Lose);
                } else {
                    self.winner = Some((rank, Holder::Port(challenger)));
                    ctx.send(challenger, TradeoffMsg::Win);
                }
            }
        }
    }

    fn decision(&self) -> Decision {
        self.decision
    }
}
