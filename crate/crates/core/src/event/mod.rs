//! Event-driven asynchronous executor.
//!
//! Links are FIFO and every message takes a delay in `(0, 1]` time units,
//! chosen by a [`SchedulerPolicy`]. Handlers run atomically at the timestamp
//! of their event; simultaneous events fire in creation order. A node wakes
//! at its spontaneous wake time or at its first delivery, whichever comes
//! first.

mod scheduler;
mod time;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

pub use scheduler::{
    adaptive, uniform_random_delay, unit_delay, Adaptive, MessageInfo, SchedulerPolicy, SchedulerView,
    UniformRandomDelay, UnitDelay,
};
pub use time::Time;

use crate::error::{ConfigError, SimError};
use crate::net::{Endpoint, IdAssignment, Port, PortMapping};
use crate::protocols::Decision;
use crate::rng::{node_rng, NodeRng};
pub use crate::sync::NodeInit;
use crate::trace::{AsyncRecord, EventKind, Payload, TraceEvent};

/// Handle a node uses to send during a handler.
pub struct Context<'a, M> {
    now: Time,
    n: usize,
    out: &'a mut Vec<(Port, M)>,
}

impl<'a, M: Clone> Context<'a, M> {
    /// A bare context, for driving a node by hand in tests.
    #[cfg(test)]
    pub(crate) fn detached(now: Time, n: usize, out: &'a mut Vec<(Port, M)>) -> Self {
        Self { now, n, out }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn send(&mut self, port: Port, msg: M) {
        self.out.push((port, msg));
    }

    pub fn broadcast(&mut self, msg: M) {
        for port in 1..self.n {
            self.out.push((port, msg.clone()));
        }
    }
}

pub trait AsyncNode {
    type Msg;

    /// Fires once, before any message is handled.
    fn on_wake(&mut self, ctx: &mut Context<'_, Self::Msg>);

    fn on_message(&mut self, port: Port, msg: Self::Msg, ctx: &mut Context<'_, Self::Msg>);

    fn decision(&self) -> Decision;
}

pub trait AsyncProtocol {
    type Msg: Payload;
    type Node: AsyncNode<Msg = Self::Msg>;

    fn validate(&self, _ids: &IdAssignment) -> Result<(), ConfigError> {
        Ok(())
    }

    fn spawn(&self, init: NodeInit) -> Self::Node;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeAccounting {
    /// Elapsed time counts from the first wake-up of any node.
    #[default]
    FromFirstWake,
    /// Elapsed time counts from the last spontaneous (adversarial) wake-up.
    FromLastSpontaneousWake,
}

#[derive(Debug, Clone)]
pub struct AsyncConfig {
    pub ids: IdAssignment,
    /// Spontaneous wake-ups chosen by the adversary.
    pub wake_schedule: Vec<(usize, Time)>,
    pub seed: u64,
    pub accounting: TimeAccounting,
    pub max_events: u64,
    pub trace: bool,
}

impl AsyncConfig {
    /// Seed 0, accounting from first wake, `max_events = 64 n²`, no trace.
    pub fn new(ids: IdAssignment, wake_schedule: Vec<(usize, Time)>) -> Self {
        let n = ids.len().max(1) as u64;
        Self {
            ids,
            wake_schedule,
            seed: 0,
            accounting: TimeAccounting::FromFirstWake,
            max_events: 64 * n * n,
            trace: false,
        }
    }

    /// Every node wakes spontaneously at time 0.
    pub fn simultaneous(ids: IdAssignment) -> Self {
        let schedule = (0..ids.len()).map(|v| (v, Time::ZERO)).collect();
        Self::new(ids, schedule)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_accounting(mut self, accounting: TimeAccounting) -> Self {
        self.accounting = accounting;
        self
    }

    pub fn with_max_events(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncFault {
    pub time: Time,
    pub node: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct AsyncOutcome {
    pub decisions: Vec<Decision>,
    pub elapsed: Time,
    pub elapsed_time: f64,
    pub messages_total: u64,
    pub messages_by_kind: BTreeMap<&'static str, u64>,
    pub leader_count: usize,
    pub wake_times: Vec<Option<Time>>,
    pub decide_times: Vec<Option<Time>>,
    pub last_delivery: Option<Time>,
    pub events_processed: u64,
    /// `max_events` ran out before the queue drained.
    pub exhausted: bool,
    pub faults: Vec<AsyncFault>,
    pub trace: Option<Vec<AsyncRecord>>,
}

impl AsyncOutcome {
    pub fn decided_all(&self) -> bool {
        crate::sync::decided_all(&self.decisions)
    }

    pub fn leaders(&self) -> Vec<usize> {
        (0..self.decisions.len()).filter(|&v| self.decisions[v] == Decision::Leader).collect()
    }

    /// Time at which the last node woke, relative to the first wake-up.
    pub fn all_awake_after(&self) -> Option<Time> {
        let first = self.wake_times.iter().flatten().min()?;
        let mut last = *first;
        for t in &self.wake_times {
            last = last.max((*t)?);
        }
        Some(last - *first)
    }
}

enum Ev<M> {
    Wake(usize),
    Deliver { to: Endpoint, id: u64, msg: M },
}

const SLOT_BITS: u32 = 28;

/// Pending events: a min-heap of integer keys over a slab of payloads, so
/// heap moves never copy messages. A key packs
/// `time << 64 | seq << SLOT_BITS | slot`; `seq` breaks ties in push order.
struct EventQueue<M> {
    heap: BinaryHeap<Reverse<u128>>,
    slots: Vec<Option<Ev<M>>>,
    free: Vec<u32>,
    seq: u64,
}

impl<M> EventQueue<M> {
    fn new() -> Self {
        Self { heap: BinaryHeap::new(), slots: Vec::new(), free: Vec::new(), seq: 0 }
    }

    fn push(&mut self, at: Time, ev: Ev<M>) {
        let slot = match self.free.pop() {
            Some(i) => {
                self.slots[i as usize] = Some(ev);
                i
            }
            None => {
                self.slots.push(Some(ev));
                (self.slots.len() - 1) as u32
            }
        };
        assert!(slot < 1 << SLOT_BITS && self.seq < 1 << (64 - SLOT_BITS), "event queue overflow");
        let low = self.seq << SLOT_BITS | slot as u64;
        self.heap.push(Reverse((at.0 as u128) << 64 | low as u128));
        self.seq += 1;
    }

    /// Earliest event; ties go to the one pushed first.
    fn pop(&mut self) -> Option<(Time, Ev<M>)> {
        let Reverse(key) = self.heap.pop()?;
        let at = Time((key >> 64) as u64);
        let slot = (key as u64 & ((1 << SLOT_BITS) - 1)) as u32;
        self.free.push(slot);
        Some((at, self.slots[slot as usize].take().expect("queued slot is filled")))
    }
}

struct View<'a> {
    n: usize,
    now: Time,
    seed: u64,
    decisions: &'a [Decision],
    wake_times: &'a [Option<Time>],
}

impl SchedulerView for View<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn now(&self) -> Time {
        self.now
    }

    fn decision(&self, node: usize) -> Decision {
        self.decisions[node]
    }

    fn is_awake(&self, node: usize) -> bool {
        self.wake_times[node].is_some()
    }

    fn node_tape(&self, node: usize) -> NodeRng {
        node_rng(self.seed, node)
    }
}

pub fn run_async<P, S>(
    protocol: &P,
    cfg: &AsyncConfig,
    mapping: &PortMapping,
    scheduler: &mut S,
) -> Result<AsyncOutcome, SimError>
where
    P: AsyncProtocol,
    S: SchedulerPolicy + ?Sized,
{
    execute_async(protocol, cfg, mapping, scheduler).map(|(outcome, _)| outcome)
}

/// Like [`run_async`], also returning the final node states.
pub fn execute_async<P, S>(
    protocol: &P,
    cfg: &AsyncConfig,
    mapping: &PortMapping,
    scheduler: &mut S,
) -> Result<(AsyncOutcome, Vec<P::Node>), SimError>
where
    P: AsyncProtocol,
    S: SchedulerPolicy + ?Sized,
{
    let n = cfg.n();
    if n == 0 {
        return Err(ConfigError::Empty.into());
    }
    if mapping.n() != n {
        return Err(ConfigError::SizeMismatch { mapping: mapping.n(), ids: n }.into());
    }
    if cfg.wake_schedule.is_empty() {
        return Err(ConfigError::EmptyWakeSet.into());
    }
    if let Some(&(v, _)) = cfg.wake_schedule.iter().find(|(v, _)| *v >= n) {
        return Err(ConfigError::WakeNodeOutOfRange(v, n).into());
    }
    protocol.validate(&cfg.ids)?;

    let mut nodes: Vec<P::Node> =
        (0..n).map(|v| protocol.spawn(NodeInit { id: cfg.ids.get(v), n, rng: node_rng(cfg.seed, v) })).collect();
    let mut st = AsyncState::<P::Msg>::new(n, cfg);
    let mut schedule = cfg.wake_schedule.clone();
    schedule.sort_by_key(|&(v, t)| (t, v));
    for (v, t) in schedule {
        st.push(t, Ev::Wake(v));
    }

    let mut out: Vec<(Port, P::Msg)> = Vec::new();
    while let Some((at, ev)) = st.queue.pop() {
        if st.events_processed >= cfg.max_events {
            st.exhausted = true;
            break;
        }
        st.events_processed += 1;
        st.now = at;
        match ev {
            Ev::Wake(v) => {
                if st.wake_times[v].is_some() {
                    continue;
                }
                st.wake(v);
                let node = &mut nodes[v];
                node.on_wake(&mut Context { now: at, n, out: &mut out });
                st.observe_decision(v, node.decision());
                st.flush(v, &mut out, mapping, scheduler)?;
            }
            Ev::Deliver { to, id, msg } => {
                let v = to.node;
                st.last_delivery = Some(at);
                if let Some(trace) = st.trace.as_mut() {
                    trace.push(record(at, TraceEvent::message(EventKind::Deliver, v, to.port, id, &msg)));
                }
                if st.wake_times[v].is_none() {
                    st.wake(v);
                    nodes[v].on_wake(&mut Context { now: at, n, out: &mut out });
                    st.observe_decision(v, nodes[v].decision());
                }
                nodes[v].on_message(to.port, msg, &mut Context { now: at, n, out: &mut out });
                st.observe_decision(v, nodes[v].decision());
                st.flush(v, &mut out, mapping, scheduler)?;
            }
        }
    }

    let origin = match cfg.accounting {
        TimeAccounting::FromFirstWake => st.wake_times.iter().flatten().min().copied(),
        TimeAccounting::FromLastSpontaneousWake => cfg.wake_schedule.iter().map(|&(_, t)| t).max(),
    }
    .unwrap_or(Time::ZERO);
    let elapsed = st.last_delivery.map_or(Time::ZERO, |t| t.saturating_sub(origin));
    let leader_count = crate::sync::leader_count(&st.decisions);
    let outcome = AsyncOutcome {
        decisions: st.decisions,
        elapsed,
        elapsed_time: elapsed.as_units(),
        messages_total: st.messages_total,
        messages_by_kind: st.kind_counts.into_iter().fold(BTreeMap::new(), |mut m, (k, c)| {
            *m.entry(k).or_default() += c;
            m
        }),
        leader_count,
        wake_times: st.wake_times,
        decide_times: st.decide_times,
        last_delivery: st.last_delivery,
        events_processed: st.events_processed,
        exhausted: st.exhausted,
        faults: st.faults,
        trace: st.trace,
    };
    Ok((outcome, nodes))
}

fn record(at: Time, event: TraceEvent) -> AsyncRecord {
    AsyncRecord { time: at.as_units(), ticks: at.ticks(), event }
}

struct AsyncState<M> {
    n: usize,
    seed: u64,
    now: Time,
    queue: EventQueue<M>,
    decisions: Vec<Decision>,
    wake_times: Vec<Option<Time>>,
    decide_times: Vec<Option<Time>>,
    // indexed by sending endpoint u * n + port; zero until the first send,
    // which is safe because every delivery happens after time zero
    link_last: Vec<Time>,
    last_delivery: Option<Time>,
    messages_total: u64,
    // few distinct kinds, so a linear scan beats a map
    kind_counts: Vec<(&'static str, u64)>,
    events_processed: u64,
    exhausted: bool,
    faults: Vec<AsyncFault>,
    trace: Option<Vec<AsyncRecord>>,
}

impl<M: Payload> AsyncState<M> {
    fn new(n: usize, cfg: &AsyncConfig) -> Self {
        Self {
            n,
            seed: cfg.seed,
            now: Time::ZERO,
            queue: EventQueue::new(),
            decisions: vec![Decision::Undecided; n],
            wake_times: vec![None; n],
            decide_times: vec![None; n],
            link_last: vec![Time::ZERO; n * n],
            last_delivery: None,
            messages_total: 0,
            kind_counts: Vec::new(),
            events_processed: 0,
            exhausted: false,
            faults: Vec::new(),
            trace: cfg.trace.then(Vec::new),
        }
    }

    fn push(&mut self, at: Time, ev: Ev<M>) {
        self.queue.push(at, ev);
    }

    fn wake(&mut self, v: usize) {
        self.wake_times[v] = Some(self.now);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(record(self.now, TraceEvent::wake(v)));
        }
    }

    fn observe_decision(&mut self, v: usize, now: Decision) {
        let before = self.decisions[v];
        if now == before {
            return;
        }
        if before != Decision::Undecided {
            self.faults.push(AsyncFault {
                time: self.now,
                node: v,
                reason: format!("decision revoked: {before:?} -> {now:?}"),
            });
            return;
        }
        self.decisions[v] = now;
        self.decide_times[v] = Some(self.now);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(record(self.now, TraceEvent::decide(v, now)));
        }
    }

    fn flush<S: SchedulerPolicy + ?Sized>(
        &mut self,
        v: usize,
        out: &mut Vec<(Port, M)>,
        mapping: &PortMapping,
        scheduler: &mut S,
    ) -> Result<(), SimError> {
        for (port, msg) in out.drain(..) {
            let from = Endpoint::new(v, port);
            if !from.is_valid(self.n) {
                self.faults.push(AsyncFault {
                    time: self.now,
                    node: v,
                    reason: format!("send on invalid port {port}"),
                });
                continue;
            }
            let to = mapping.partner(from);
            let id = self.messages_total;
            let link = v * self.n + port;
            let info = MessageInfo {
                id,
                from,
                to,
                kind: msg.kind(),
                sent_at: self.now,
                link_last_delivery: Some(self.link_last[link]).filter(|&t| t > Time::ZERO),
            };
            let view = View {
                n: self.n,
                now: self.now,
                seed: self.seed,
                decisions: &self.decisions,
                wake_times: &self.wake_times,
            };
            let delay = scheduler.delay(&info, &view);
            if delay < Time::TICK || delay > Time::UNIT {
                return Err(SimError::Scheduler(format!(
                    "{} gave message {id} on link {from} delay {} outside (0, 1]",
                    scheduler.name(),
                    delay.as_units()
                )));
            }
            let at = self.now + delay;
            if info.link_last_delivery.is_some_and(|last| at < last) {
                return Err(SimError::Scheduler(format!(
                    "{} reordered link {from}: message {id} would arrive before its predecessor",
                    scheduler.name()
                )));
            }
            self.link_last[link] = at;
            self.messages_total += 1;
            let kind = msg.kind();
            match self.kind_counts.iter_mut().find(|(k, _)| std::ptr::eq(*k, kind) || *k == kind) {
                Some((_, c)) => *c += 1,
                None => self.kind_counts.push((kind, 1)),
            }
            if let Some(trace) = self.trace.as_mut() {
                trace.push(record(self.now, TraceEvent::message(EventKind::Send, v, port, id, &msg)));
            }
            self.push(at, Ev::Deliver { to, id, msg });
        }
        Ok(())
    }
}
