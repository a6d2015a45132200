use std::collections::VecDeque;
use std::mem;

use super::{Incoming, NodeInit, Outbox, SyncNode, SyncProtocol};
use crate::error::ConfigError;
use crate::net::{IdAssignment, Port};
use crate::protocols::Decision;

/// Turns any synchronous protocol into one that sends at most one message per
/// node per round.
///
/// Inner round `r` becomes the block of sub-rounds `(r-1)n+1 ..= rn`. The
/// `i`-th message of the inner outbox goes out in sub-round `(r-1)n+i`, and
/// everything received during the block is handed to the inner node at the
/// end of the block. Message counts and decisions are unchanged; the round
/// count grows by a factor of at most `n`.
#[derive(Debug, Clone)]
pub struct SingleSend<P> {
    inner: P,
}

impl<P> SingleSend<P> {
    pub fn new(inner: P) -> Self {
        Self { inner }
    }
}

impl<P: SyncProtocol> SyncProtocol for SingleSend<P> {
    type Msg = P::Msg;
    type Node = SingleSendNode<P::Node>;

    fn validate(&self, ids: &IdAssignment) -> Result<(), ConfigError> {
        self.inner.validate(ids)
    }

    fn spawn(&self, init: NodeInit) -> Self::Node {
        let n = init.n;
        SingleSendNode { inner: self.inner.spawn(init), n, queue: VecDeque::new(), buffer: Vec::new() }
    }
}

#[derive(Debug)]
pub struct SingleSendNode<N: SyncNode> {
    inner: N,
    n: usize,
    queue: VecDeque<(Port, N::Msg)>,
    buffer: Vec<Incoming<N::Msg>>,
}

impl<N: SyncNode> SingleSendNode<N> {
    pub fn inner(&self) -> &N {
        &self.inner
    }

    fn block_and_offset(&self, round: u64) -> (u64, u64) {
        let n = self.n.max(1) as u64;
        ((round - 1) / n + 1, (round - 1) % n + 1)
    }
}

impl<N> SyncNode for SingleSendNode<N>
where
    N: SyncNode,
    N::Msg: Clone,
{
    type Msg = N::Msg;

    fn send(&mut self, round: u64, out: &mut Outbox<Self::Msg>) {
        let (block, offset) = self.block_and_offset(round);
        if offset == 1 && !self.inner.halted() {
            let mut inner_out = Outbox::new(self.n);
            self.inner.send(block, &mut inner_out);
            let (mut sends, faults) = inner_out.into_parts();
            for reason in faults {
                out.fault(reason);
            }
            let limit = self.n.saturating_sub(1);
            if sends.len() > limit {
                out.fault(format!("inner outbox of {} messages exceeds n - 1 = {limit}", sends.len()));
                sends.truncate(limit);
            }
            self.queue.extend(sends);
        }
        if let Some((port, msg)) = self.queue.pop_front() {
            out.send(port, msg);
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Incoming<Self::Msg>>) {
        self.buffer.extend(inbox);
        let (block, offset) = self.block_and_offset(round);
        if offset == self.n.max(1) as u64 {
            let mut batch = mem::take(&mut self.buffer);
            batch.sort_by_key(|m| m.port);
            self.inner.receive(block, batch);
        }
    }

    fn decision(&self) -> Decision {
        self.inner.decision()
    }

    fn halted(&self) -> bool {
        self.inner.halted() && self.queue.is_empty()
    }
}
