//! Clique network vocabulary: identities, ports, port mappings and
//! communication graphs.
//!
//! Node indices `0..n` are simulator-internal. A protocol only ever sees its own
//! [`Identity`], `n`, and port numbers `1..=n-1`.

mod graph;
mod identity;
mod ports;

pub use graph::{CommGraph, DisjointSets};
pub use identity::{IdAssignment, Identity};
pub use ports::{Endpoint, PartialPortMapping, PortMapping};

/// Port number on a node, in `1..=n-1`.
pub type Port = usize;

/// Resolves where the messages of a round land.
///
/// A fixed [`PortMapping`] just looks endpoints up. Adaptive adversaries see
/// the whole batch of a round's sends before committing to a wiring, which is
/// legitimate in the synchronous model: the outgoing messages of a round are a
/// function of the node states at the start of the round.
pub trait Wiring {
    fn node_count(&self) -> usize;

    /// Returns the receiving endpoint for each sending endpoint, in order.
    fn route(&mut self, round: u64, sends: &[Endpoint]) -> Vec<Endpoint>;

    /// Called once after all deliveries of `round`.
    fn end_round(&mut self, _round: u64, _messages_so_far: u64) {}
}

impl Wiring for PortMapping {
    fn node_count(&self) -> usize {
        self.n()
    }

    fn route(&mut self, _round: u64, sends: &[Endpoint]) -> Vec<Endpoint> {
        sends.iter().map(|&e| self.partner(e)).collect()
    }
}
