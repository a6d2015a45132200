use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Time;
use crate::net::Endpoint;
use crate::protocols::Decision;
use crate::rng::{stream_rng, NodeRng, Stream};

/// A message that has just been sent and needs a delivery time.
#[derive(Debug, Clone)]
pub struct MessageInfo {
    pub id: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: &'static str,
    pub sent_at: Time,
    /// Delivery time of the previous message on the same directed link.
    pub link_last_delivery: Option<Time>,
}

impl MessageInfo {
    /// Smallest delay that keeps this link FIFO.
    pub fn fifo_floor(&self) -> Time {
        self.link_last_delivery.map_or(Time::ZERO, |t| t.saturating_sub(self.sent_at))
    }

    /// Clamps `raw` into `[TICK, UNIT]`, then raises it to the FIFO floor.
    /// The result always satisfies the delivery contract: the previous message
    /// on the link was sent no later, so its delivery is at most
    /// `sent_at + UNIT`.
    pub fn clamp(&self, raw: Time) -> Time {
        raw.clamp(Time::TICK, Time::UNIT).max(self.fifo_floor())
    }
}

/// What an adaptive scheduler may inspect.
///
/// `node_tape` returns a fresh copy of a node's whole random tape, including
/// bits the node has not consumed yet.
pub trait SchedulerView {
    fn n(&self) -> usize;
    fn now(&self) -> Time;
    fn decision(&self, node: usize) -> Decision;
    fn is_awake(&self, node: usize) -> bool;
    fn node_tape(&self, node: usize) -> NodeRng;
}

/// Assigns each sent message a delay in `(0, 1]` time units. Delivery times
/// on each directed link must be nondecreasing in send order; the engine
/// aborts the run otherwise.
pub trait SchedulerPolicy {
    fn name(&self) -> &str;

    fn delay(&mut self, msg: &MessageInfo, view: &dyn SchedulerView) -> Time;
}

impl<S: SchedulerPolicy + ?Sized> SchedulerPolicy for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn delay(&mut self, msg: &MessageInfo, view: &dyn SchedulerView) -> Time {
        (**self).delay(msg, view)
    }
}

/// Every message takes exactly one unit.
#[derive(Debug, Clone, Default)]
pub struct UnitDelay;

impl SchedulerPolicy for UnitDelay {
    fn name(&self) -> &str {
        "unit"
    }

    fn delay(&mut self, _msg: &MessageInfo, _view: &dyn SchedulerView) -> Time {
        Time::UNIT
    }
}

/// Delays drawn uniformly from `(0, 1]`, raised minimally per link to stay
/// FIFO.
#[derive(Debug, Clone)]
pub struct UniformRandomDelay {
    rng: ChaCha8Rng,
}

impl UniformRandomDelay {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, Stream::Scheduler) }
    }
}

impl SchedulerPolicy for UniformRandomDelay {
    fn name(&self) -> &str {
        "random"
    }

    fn delay(&mut self, msg: &MessageInfo, _view: &dyn SchedulerView) -> Time {
        msg.clamp(Time(self.rng.random_range(1..=Time::TICKS_PER_UNIT)))
    }
}

/// Delegates to a user policy and clamps its answer into the contract.
pub struct Adaptive<F> {
    name: String,
    policy: F,
}

impl<F> Adaptive<F>
where
    F: FnMut(&MessageInfo, &dyn SchedulerView) -> Time,
{
    pub fn new(name: impl Into<String>, policy: F) -> Self {
        Self { name: name.into(), policy }
    }
}

impl<F> SchedulerPolicy for Adaptive<F>
where
    F: FnMut(&MessageInfo, &dyn SchedulerView) -> Time,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn delay(&mut self, msg: &MessageInfo, view: &dyn SchedulerView) -> Time {
        let raw = (self.policy)(msg, view);
        msg.clamp(raw)
    }
}

pub fn unit_delay() -> UnitDelay {
    UnitDelay
}

pub fn uniform_random_delay(seed: u64) -> UniformRandomDelay {
    UniformRandomDelay::new(seed)
}

pub fn adaptive<F>(name: impl Into<String>, policy: F) -> Adaptive<F>
where
    F: FnMut(&MessageInfo, &dyn SchedulerView) -> Time,
{
    Adaptive::new(name, policy)
}
