use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Port;
use crate::error::NetError;
use crate::rng::{stream_rng, Stream};

/// A `(node, port)` pair. Serialized as `[node, port]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub node: usize,
    pub port: Port,
}

impl Endpoint {
    pub fn new(node: usize, port: Port) -> Self {
        Self { node, port }
    }

    pub fn is_valid(&self, n: usize) -> bool {
        self.node < n && self.port >= 1 && self.port < n
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.node, self.port)
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.node, self.port).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (node, port) = <(usize, usize)>::deserialize(d)?;
        Ok(Self { node, port })
    }
}

/// A complete clique wiring.
///
/// Invariants: `partner(partner(e)) == e`, `partner(e).node != e.node`, and each
/// unordered node pair is joined by exactly one port pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortMapping {
    n: usize,
    // partner of (u, p) lives at u * (n - 1) + (p - 1)
    table: Vec<(u32, u32)>,
}

impl PortMapping {
    /// Uniformly random wiring. Each node independently gets a uniformly random
    /// bijection from its ports to the other nodes; every valid wiring arises
    /// from exactly one such choice.
    pub fn random(n: usize, seed: u64) -> Self {
        Self::random_with(n, &mut stream_rng(seed, Stream::Mapping))
    }

    pub fn random_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let deg = n.saturating_sub(1);
        // target[u][i] = node reached from u's port i + 1
        let mut target = vec![0u32; n * deg];
        let mut port_to = vec![0u32; n * n];
        for u in 0..n {
            let others = &mut target[u * deg..(u + 1) * deg];
            for (i, v) in others.iter_mut().enumerate() {
                *v = if i < u { i as u32 } else { i as u32 + 1 };
            }
            others.shuffle(rng);
            for (i, &v) in others.iter().enumerate() {
                port_to[u * n + v as usize] = i as u32 + 1;
            }
        }
        let table = target.iter().enumerate().map(|(e, &v)| (v, port_to[v as usize * n + e / deg.max(1)])).collect();
        Self { n, table }
    }

    /// Builds a mapping from a table where `ports[u][p - 1]` is the partner of
    /// `(u, p)`, validating every invariant.
    pub fn from_table(ports: Vec<Vec<Endpoint>>) -> Result<Self, NetError> {
        let n = ports.len();
        let deg = n.saturating_sub(1);
        let mut table = Vec::with_capacity(n * deg);
        for (u, row) in ports.iter().enumerate() {
            if row.len() != deg {
                return Err(NetError::InvalidMapping(format!("node {u} has {} ports, expected {deg}", row.len())));
            }
            for e in row {
                if !e.is_valid(n) {
                    return Err(NetError::InvalidEndpoint(*e, n));
                }
                table.push((e.node as u32, e.port as u32));
            }
        }
        let mapping = Self { n, table };
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let n = self.n;
        let mut seen_pair = vec![false; n * n];
        for e in self.endpoints() {
            let f = self.partner(e);
            if f.node == e.node {
                return Err(NetError::InvalidMapping(format!("{e} is wired to its own node")));
            }
            if self.partner(f) != e {
                return Err(NetError::InvalidMapping(format!("{e} -> {f} is not an involution")));
            }
            let slot = e.node * n + f.node;
            if seen_pair[slot] {
                return Err(NetError::InvalidMapping(format!("nodes {} and {} are joined twice", e.node, f.node)));
            }
            seen_pair[slot] = true;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn endpoints(&self) -> impl Iterator<Item = Endpoint> + '_ {
        (0..self.n).flat_map(move |u| (1..self.n).map(move |p| Endpoint::new(u, p)))
    }

    /// Partner endpoint. Panics on an invalid endpoint; see [`resolve`](Self::resolve).
    #[inline]
    pub fn partner(&self, e: Endpoint) -> Endpoint {
        let (v, q) = self.table[e.node * (self.n - 1) + e.port - 1];
        Endpoint::new(v as usize, q as usize)
    }

    pub fn resolve(&self, e: Endpoint) -> Result<Endpoint, NetError> {
        if !e.is_valid(self.n) {
            return Err(NetError::InvalidEndpoint(e, self.n));
        }
        Ok(self.partner(e))
    }

    /// The port of `u` that leads to `v`.
    pub fn port_towards(&self, u: usize, v: usize) -> Option<Port> {
        (1..self.n).find(|&p| self.partner(Endpoint::new(u, p)).node == v)
    }

    /// Each unordered port pair once, lower endpoint first.
    pub fn pairs(&self) -> Vec<(Endpoint, Endpoint)> {
        self.endpoints()
            .filter_map(|e| {
                let f = self.partner(e);
                (e < f).then_some((e, f))
            })
            .collect()
    }
}

impl Serialize for PortMapping {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PortMapping {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(Endpoint, Endpoint)>::deserialize(d)?;
        // n(n-1)/2 pairs
        let m = pairs.len();
        let n = (1..).find(|&n: &usize| n * (n - 1) / 2 >= m).unwrap_or(1);
        if n * (n - 1) / 2 != m {
            return Err(D::Error::custom(format!("{m} pairs is not the pair count of a clique")));
        }
        let mut partial = PartialPortMapping::new(n);
        for (a, b) in pairs {
            partial.assign(a, b).map_err(D::Error::custom)?;
        }
        partial.into_complete().ok_or_else(|| D::Error::custom("wiring is incomplete"))
    }
}

/// A port mapping defined on a subset of endpoints.
///
/// Defined pairs obey the involution, no-self-loop and one-pair-per-node-pair
/// rules. In a clique those rules alone guarantee extendability: a node with
/// `c` connected neighbours has exactly `n - 1 - c` free ports and the same
/// number of unconnected neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialPortMapping {
    n: usize,
    partner: Vec<Vec<Option<Endpoint>>>,
    neighbors: Vec<BTreeSet<usize>>,
    assigned_pairs: usize,
}

impl PartialPortMapping {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            partner: vec![vec![None; n.saturating_sub(1)]; n],
            neighbors: vec![BTreeSet::new(); n],
            assigned_pairs: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, e: Endpoint) -> Result<(), NetError> {
        if e.is_valid(self.n) {
            Ok(())
        } else {
            Err(NetError::InvalidEndpoint(e, self.n))
        }
    }

    /// `Ok(None)` when `e` is still unassigned.
    pub fn resolve(&self, e: Endpoint) -> Result<Option<Endpoint>, NetError> {
        self.check(e)?;
        Ok(self.partner[e.node][e.port - 1])
    }

    pub fn assign(&mut self, a: Endpoint, b: Endpoint) -> Result<(), NetError> {
        self.check(a)?;
        self.check(b)?;
        if a.node == b.node {
            return Err(NetError::SameNode(a, b));
        }
        for e in [a, b] {
            if self.partner[e.node][e.port - 1].is_some() {
                return Err(NetError::AlreadyAssigned(e));
            }
        }
        if self.neighbors[a.node].contains(&b.node) {
            return Err(NetError::DuplicatePair(a.node, b.node));
        }
        self.partner[a.node][a.port - 1] = Some(b);
        self.partner[b.node][b.port - 1] = Some(a);
        self.neighbors[a.node].insert(b.node);
        self.neighbors[b.node].insert(a.node);
        self.assigned_pairs += 1;
        Ok(())
    }

    pub fn is_connected(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].contains(&v)
    }

    pub fn neighbors(&self, u: usize) -> &BTreeSet<usize> {
        &self.neighbors[u]
    }

    /// Unassigned ports of `u`, ascending.
    pub fn free_ports(&self, u: usize) -> impl Iterator<Item = Port> + '_ {
        self.partner[u].iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i + 1)
    }

    pub fn is_complete(&self) -> bool {
        self.assigned_pairs == self.n * self.n.saturating_sub(1) / 2
    }

    pub fn assigned_pairs(&self) -> usize {
        self.assigned_pairs
    }

    /// True when every defined pair of `self` is also defined, identically, in
    /// `full`.
    pub fn is_compatible_with(&self, full: &PortMapping) -> bool {
        full.n() == self.n
            && self.partner.iter().enumerate().all(|(u, row)| {
                row.iter().enumerate().all(|(i, p)| p.is_none_or(|f| full.partner(Endpoint::new(u, i + 1)) == f))
            })
    }

    /// Extends the mapping to a full [`PortMapping`]: free ports of each node
    /// are shuffled with a seeded stream, then every unconnected node pair, in
    /// lexicographic order, takes the next free port on both sides.
    pub fn complete(&self, seed: u64) -> PortMapping {
        let mut rng = stream_rng(seed, Stream::Completion);
        let mut free: Vec<Vec<Port>> = (0..self.n)
            .map(|u| {
                let mut ports: Vec<Port> = self.free_ports(u).collect();
                ports.shuffle(&mut rng);
                ports.reverse();
                ports
            })
            .collect();
        let mut full = self.clone();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if full.is_connected(u, v) {
                    continue;
                }
                let pu = free[u].pop().expect("free ports match unconnected neighbours");
                let pv = free[v].pop().expect("free ports match unconnected neighbours");
                full.assign(Endpoint::new(u, pu), Endpoint::new(v, pv)).expect("pairing of free ports is always legal");
            }
        }
        full.into_complete().expect("completion covers every pair")
    }

    fn into_complete(self) -> Option<PortMapping> {
        if !self.is_complete() {
            return None;
        }
        let table = self
            .partner
            .into_iter()
            .flatten()
            .map(|p| p.map(|e| (e.node as u32, e.port as u32)))
            .collect::<Option<Vec<_>>>()?;
        Some(PortMapping { n: self.n, table })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(node: usize, port: usize) -> Endpoint {
        Endpoint::new(node, port)
    }

    #[test]
    fn single_node_has_no_ports() {
        let m = PortMapping::random(1, 0);
        assert_eq!(m.endpoints().count(), 0);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn two_nodes_have_the_unique_wiring() {
        for seed in 0..5 {
            let m = PortMapping::random(2, seed);
            assert_eq!(m.partner(e(0, 1)), e(1, 1));
            assert_eq!(m.partner(e(1, 1)), e(0, 1));
        }
    }

    #[test]
    fn five_nodes_seed_seven_exhaustive_scan() {
        let m = PortMapping::random(5, 7);
        let mut covered = BTreeSet::new();
        let mut count = 0;
        for u in 0..5 {
            for p in 1..5 {
                count += 1;
                let f = m.resolve(e(u, p)).unwrap();
                assert_eq!(m.resolve(f).unwrap(), e(u, p));
                assert_ne!(f.node, u);
                covered.insert((u.min(f.node), u.max(f.node)));
            }
        }
        assert_eq!(count, 20);
        assert_eq!(covered.len(), 10);
    }

    #[test]
    fn resolve_rejects_invalid_endpoints() {
        let m = PortMapping::random(4, 1);
        assert!(m.resolve(e(4, 1)).is_err());
        assert!(m.resolve(e(0, 0)).is_err());
        assert!(m.resolve(e(0, 4)).is_err());
    }

    #[test]
    fn partial_mapping_resolution() {
        let mut pm = PartialPortMapping::new(4);
        assert_eq!(pm.resolve(e(2, 3)), Ok(None));
        pm.assign(e(0, 1), e(3, 2)).unwrap();
        assert_eq!(pm.resolve(e(3, 2)), Ok(Some(e(0, 1))));
        assert_eq!(pm.resolve(e(0, 1)), Ok(Some(e(3, 2))));
    }

    #[test]
    fn assignment_errors() {
        let mut pm = PartialPortMapping::new(3);
        pm.assign(e(0, 1), e(1, 1)).unwrap();
        assert_eq!(pm.assign(e(0, 2), e(0, 1)), Err(NetError::SameNode(e(0, 2), e(0, 1))));
        assert_eq!(pm.assign(e(0, 2), e(1, 2)), Err(NetError::DuplicatePair(0, 1)));
        assert_eq!(pm.assign(e(0, 1), e(2, 1)), Err(NetError::AlreadyAssigned(e(0, 1))));
        assert!(pm.assign(e(0, 2), e(2, 1)).is_ok());
    }

    #[test]
    fn completion_extends_partial() {
        let mut pm = PartialPortMapping::new(6);
        pm.assign(e(0, 3), e(4, 1)).unwrap();
        pm.assign(e(1, 1), e(2, 5)).unwrap();
        let full = pm.complete(11);
        assert!(full.validate().is_ok());
        assert!(pm.is_compatible_with(&full));
        assert_eq!(full, pm.complete(11));
    }

    #[test]
    fn json_round_trip() {
        let m = PortMapping::random(6, 3);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("[[[0,"));
        let back: PortMapping = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<PortMapping>("[[[0,1],[0,2]]]").is_err());
    }

    #[test]
    fn from_table_validates() {
        let ok = PortMapping::from_table(vec![vec![e(1, 1), e(2, 2)], vec![e(0, 1), e(2, 1)], vec![e(1, 2), e(0, 2)]]);
        assert!(ok.is_ok());
        let bad = PortMapping::from_table(vec![vec![e(1, 1), e(2, 2)], vec![e(0, 1), e(2, 1)], vec![e(0, 2), e(1, 2)]]);
        assert!(bad.is_err());
    }
}
