//! Independent checks over run artifacts: traces, mappings and graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::event::Time;
use crate::net::{CommGraph, Endpoint, PortMapping};
use crate::protocols::LevelNode;
use crate::trace::{AsyncRecord, EventKind};

/// Checks an asynchronous trace against the delivery contract: every
/// message is delivered exactly once, within `(0, 1]` units of its send,
/// and deliveries on each directed link keep send order.
pub fn audit_async_trace(records: &[AsyncRecord]) -> Result<(), String> {
    let mut sent: HashMap<u64, (Endpoint, u64)> = HashMap::new();
    let mut delivered: HashMap<u64, u64> = HashMap::new();
    for r in records {
        let Some(id) = r.event.msg else { continue };
        match r.event.kind {
            EventKind::Send => {
                let port = r.event.port.ok_or("send without port")?;
                if sent.insert(id, (Endpoint::new(r.event.node, port), r.ticks)).is_some() {
                    return Err(format!("message {id} sent twice"));
                }
            }
            EventKind::Deliver if delivered.insert(id, r.ticks).is_some() => {
                return Err(format!("message {id} delivered twice"));
            }
            _ => {}
        }
    }
    let mut links: BTreeMap<Endpoint, Vec<(u64, u64, u64)>> = BTreeMap::new();
    for (&id, &(from, at)) in &sent {
        let arrival = *delivered.get(&id).ok_or_else(|| format!("message {id} never delivered"))?;
        let delay = arrival.saturating_sub(at);
        if delay == 0 || delay > Time::TICKS_PER_UNIT {
            return Err(format!("message {id} took {} units", delay as f64 / Time::TICKS_PER_UNIT as f64));
        }
        links.entry(from).or_default().push((at, id, arrival));
    }
    if delivered.len() != sent.len() {
        return Err("delivery without a matching send".into());
    }
    for (link, mut msgs) in links {
        // ids grow in send order
        msgs.sort_by_key(|&(at, id, _)| (at, id));
        if msgs.windows(2).any(|w| w[1].2 < w[0].2) {
            return Err(format!("link {link} delivered out of order"));
        }
    }
    Ok(())
}

/// Checks that `m` is a bijective involution without fixed points or self
/// loops, joining every node pair through exactly one port pair.
pub fn audit_mapping(m: &PortMapping) -> Result<(), String> {
    let n = m.n();
    let mut pairs = BTreeSet::new();
    for u in 0..n {
        for port in 1..n {
            let e = Endpoint::new(u, port);
            let f = m.partner(e);
            if !f.is_valid(n) || f.node == u {
                return Err(format!("{e} maps to {f}"));
            }
            if m.partner(f) != e {
                return Err(format!("{e} -> {f} is not an involution"));
            }
            if u < f.node && !pairs.insert((u, f.node)) {
                return Err(format!("pair ({u}, {}) wired twice", f.node));
            }
        }
    }
    if pairs.len() != n * n.saturating_sub(1) / 2 {
        return Err(format!("{} of {} node pairs wired", pairs.len(), n * n.saturating_sub(1) / 2));
    }
    Ok(())
}

/// Weak components by breadth-first search over undirected adjacency,
/// normalized like [`CommGraph::weak_components`].
pub fn bfs_components(g: &CommGraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut adj = vec![Vec::new(); n];
    for (u, v) in g.edges() {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Level bound of the level algorithm: for every `i`, the number of
/// candidates that collected support from all `min(2^i, n)` nodes of level
/// `i` is at most `n / min(2^i, n)`. Returns the first offending level.
pub fn level_bound_violation(nodes: &[LevelNode]) -> Option<u32> {
    let n = nodes.len();
    let top = nodes.iter().filter_map(LevelNode::completed_level).max()?;
    (0..=top).find(|&i| {
        let count = nodes.iter().filter(|v| v.completed_level().is_some_and(|c| c >= i)).count();
        let span = (1u128 << i.min(64)).min(n as u128);
        count as u128 * span > n as u128
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{PartialPortMapping, PortMapping};

    #[test]
    fn random_mappings_pass() {
        for n in 1..20 {
            audit_mapping(&PortMapping::random(n, n as u64)).unwrap();
        }
    }

    #[test]
    fn bfs_on_path() {
        let mut g = CommGraph::new(5);
        g.record_send(0, 1).unwrap();
        g.record_send(3, 1).unwrap();
        assert_eq!(bfs_components(&g), vec![vec![0, 1, 3], vec![2], vec![4]]);
        assert_eq!(bfs_components(&g), g.weak_components());
    }

    #[test]
    fn completed_partial_passes() {
        let mut p = PartialPortMapping::new(4);
        p.assign(Endpoint::new(0, 1), Endpoint::new(3, 2)).unwrap();
        audit_mapping(&p.complete(1)).unwrap();
    }
}
