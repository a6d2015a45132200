use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// A node identity drawn from an ID universe `[1, universe_size]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identity(pub u64);

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The adversary's choice of identities: `ids[v]` is the identity of node `v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdAssignment {
    ids: Vec<Identity>,
    universe_size: u64,
}

impl IdAssignment {
    pub fn new(ids: Vec<u64>, universe_size: u64) -> Result<Self, NetError> {
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if id == 0 || id > universe_size {
                return Err(NetError::IdOutOfUniverse { id, universe: universe_size });
            }
            if !seen.insert(id) {
                return Err(NetError::DuplicateId(id));
            }
        }
        Ok(Self { ids: ids.into_iter().map(Identity).collect(), universe_size })
    }

    /// Identities `1..=n` in node order.
    pub fn sequential(n: usize) -> Self {
        Self { ids: (1..=n as u64).map(Identity).collect(), universe_size: n as u64 }
    }

    /// `n` distinct identities drawn uniformly from `[1, universe_size]`, in
    /// random node order.
    pub fn random<R: Rng + ?Sized>(n: usize, universe_size: u64, rng: &mut R) -> Self {
        assert!(universe_size >= n as u64, "universe smaller than n");
        let ids = if let Ok(universe) = usize::try_from(universe_size) {
            index::sample(rng, universe, n).into_iter().map(|i| Identity(i as u64 + 1)).collect()
        } else {
            let mut seen = HashSet::with_capacity(n);
            let mut ids = Vec::with_capacity(n);
            while ids.len() < n {
                let id = rng.random_range(1..=universe_size);
                if seen.insert(id) {
                    ids.push(Identity(id));
                }
            }
            ids
        };
        Self { ids, universe_size }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn universe_size(&self) -> u64 {
        self.universe_size
    }

    pub fn get(&self, node: usize) -> Identity {
        self.ids[node]
    }

    pub fn as_slice(&self) -> &[Identity] {
        &self.ids
    }

    /// Node index holding the largest identity.
    pub fn argmax(&self) -> Option<usize> {
        (0..self.ids.len()).max_by_key(|&v| self.ids[v])
    }

    /// Node index holding the smallest identity.
    pub fn argmin(&self) -> Option<usize> {
        (0..self.ids.len()).min_by_key(|&v| self.ids[v])
    }
}
