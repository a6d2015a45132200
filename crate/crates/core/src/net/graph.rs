use std::collections::BTreeSet;
use std::mem;

use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// Union-find over `0..len` with union by size and path halving.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len).collect(), size: vec![1; len] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `x` and `y` were already joined.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let mut a = self.find(x);
        let mut b = self.find(y);
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    /// All sets, each ascending, ordered by smallest member.
    pub fn sets(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            by_root[r].push(x);
        }
        let mut sets: Vec<Vec<usize>> = by_root.into_iter().filter(|s| !s.is_empty()).collect();
        sets.sort_by_key(|s| s[0]);
        sets
    }
}

/// Directed who-sent-to-whom graph over node indices.
///
/// An edge `(u, v)` means a message from `u` was delivered to `v`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommGraph {
    out: Vec<BTreeSet<usize>>,
    inc: Vec<BTreeSet<usize>>,
    edges: usize,
}

impl CommGraph {
    pub fn new(n: usize) -> Self {
        Self { out: vec![BTreeSet::new(); n], inc: vec![BTreeSet::new(); n], edges: 0 }
    }

    pub fn n(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out.get(u).is_some_and(|s| s.contains(&v))
    }

    /// Idempotent.
    pub fn record_send(&mut self, u: usize, v: usize) -> Result<(), NetError> {
        let n = self.n();
        for x in [u, v] {
            if x >= n {
                return Err(NetError::InvalidNode(x, n));
            }
        }
        if u == v {
            return Err(NetError::SelfEdge(u));
        }
        if self.out[u].insert(v) {
            self.inc[v].insert(u);
            self.edges += 1;
        }
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(u, s)| s.iter().map(move |&v| (u, v)))
    }

    /// Nodes that `u` has communicated with in either direction.
    pub fn touched(&self, u: usize) -> BTreeSet<usize> {
        self.out[u].union(&self.inc[u]).copied().collect()
    }

    /// Weakly connected components, each ascending, ordered by smallest member.
    pub fn weak_components(&self) -> Vec<Vec<usize>> {
        let mut sets = DisjointSets::new(self.n());
        for (u, v) in self.edges() {
            sets.union(u, v);
        }
        sets.sets()
    }

    /// Largest `λ` such that every member of `component` has not communicated
    /// with at least `λ` other members.
    pub fn capacity(&self, component: &[usize]) -> Result<usize, NetError> {
        let wanted: BTreeSet<usize> = component.iter().copied().collect();
        let is_component =
            self.weak_components().into_iter().any(|c| c.len() == wanted.len() && c.iter().all(|x| wanted.contains(x)));
        if !is_component {
            return Err(NetError::NotAComponent);
        }
        Ok(wanted.iter().map(|&u| wanted.len() - 1 - self.touched(u).intersection(&wanted).count()).min().unwrap_or(0))
    }

    /// True iff no edge crosses the boundary of `set` in either direction.
    pub fn is_isolated(&self, set: &[usize]) -> bool {
        let inside: BTreeSet<usize> = set.iter().copied().collect();
        self.edges().all(|(u, v)| inside.contains(&u) == inside.contains(&v))
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Serialize for CommGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphRepr { n: self.n(), edges: self.edges().collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CommGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = GraphRepr::deserialize(d)?;
        let mut g = CommGraph::new(repr.n);
        for (u, v) in repr.edges {
            g.record_send(u, v).map_err(serde::de::Error::custom)?;
        }
        Ok(g)
    }
}
