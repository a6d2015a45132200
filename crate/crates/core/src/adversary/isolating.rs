use std::collections::{BTreeMap, HashSet};
use std::io::{self, Write};

use crate::net::{CommGraph, DisjointSets, Endpoint, PartialPortMapping, Port, PortMapping, Wiring};

/// One line of the component-growth report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthRow {
    pub round: u64,
    pub component_count: usize,
    pub max_component_size: usize,
    pub messages_so_far: u64,
}

/// Outcome of the per-round isolation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IsolationReport {
    pub rounds: u64,
    /// (round, component) pairs that opened `1 ≤ t ≤ λ` ports.
    pub checks: u64,
    /// Messages from a checked component that landed outside it.
    pub violations: u64,
    /// Messages from other components that landed inside a checked one,
    /// caused by merges of exhausted components. Reported, not a violation.
    pub inbound: u64,
    /// Rounds where the component cache disagreed with the communication
    /// graph. Only counted with auditing on.
    pub cache_mismatches: u64,
}

/// Wires ports on first use so that communication components stay apart as
/// long as their capacity allows.
///
/// Components are those of the communication graph at the start of a round.
/// The capacity `λ` of a component `C` is the least number of members of
/// `C` that any member is still unconnected to. If the members of `C` open
/// `t ≤ λ` fresh ports in a round, every one of them is wired inside `C`.
/// Otherwise the component uses up what room it has inside and then merges
/// into the smallest other component, ties going to the smallest member.
///
/// Targets are always the lowest-index eligible node. An opened port is
/// paired with another opened port whenever possible, so each within-budget
/// connection serves two openings at once.
#[derive(Debug, Clone)]
pub struct IsolatingAdversary {
    partial: PartialPortMapping,
    sets: DisjointSets,
    mirror: CommGraph,
    audit: bool,
    report: IsolationReport,
    growth: Vec<GrowthRow>,
}

struct RoundView {
    /// Round-start component root of each node.
    comp: Vec<usize>,
    within_budget: Vec<bool>,
    reserved: HashSet<Endpoint>,
}

impl IsolatingAdversary {
    pub fn new(n: usize) -> Self {
        Self {
            partial: PartialPortMapping::new(n),
            sets: DisjointSets::new(n),
            mirror: CommGraph::new(n),
            audit: false,
            report: IsolationReport::default(),
            growth: Vec::new(),
        }
    }

    /// Recompute components from the communication graph after every round
    /// and compare them with the cache.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    /// The communication graph as seen by the adversary.
    pub fn mirror(&self) -> &CommGraph {
        &self.mirror
    }

    pub fn partial(&self) -> &PartialPortMapping {
        &self.partial
    }

    pub fn report(&self) -> IsolationReport {
        self.report
    }

    pub fn growth(&self) -> &[GrowthRow] {
        &self.growth
    }

    /// Current components, ascending, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        self.sets.sets()
    }

    /// Extends the wiring chosen so far to a full mapping.
    pub fn completed(&self, seed: u64) -> PortMapping {
        self.partial.complete(seed)
    }

    pub fn write_growth_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "round,component_count,max_component_size,messages_so_far")?;
        for r in &self.growth {
            writeln!(w, "{},{},{},{}", r.round, r.component_count, r.max_component_size, r.messages_so_far)?;
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.partial.n()
    }

    /// The port `v` should offer: an opened port still waiting for a
    /// partner if it has one, else its lowest free port.
    fn offer_port(&self, v: usize, view: &RoundView, allow_reserved: bool) -> Option<Port> {
        let mut free = self.partial.free_ports(v);
        if allow_reserved {
            let all: Vec<Port> = free.collect();
            all.iter().copied().find(|&p| view.reserved.contains(&Endpoint::new(v, p))).or_else(|| all.first().copied())
        } else {
            free.find(|&p| !view.reserved.contains(&Endpoint::new(v, p)))
        }
    }

    fn connect(&mut self, a: Endpoint, b: Endpoint) {
        self.partial.assign(a, b).expect("adversary only picks free ports of unconnected nodes");
        self.sets.union(a.node, b.node);
    }

    /// Lowest-index member of `u`'s round-start component not yet connected
    /// to `u`.
    fn wire_inside(&mut self, from: Endpoint, view: &RoundView) -> bool {
        let u = from.node;
        let target =
            (0..self.n()).find(|&v| v != u && view.comp[v] == view.comp[u] && !self.partial.is_connected(u, v));
        let Some(v) = target else { return false };
        let port = self.offer_port(v, view, true).expect("unconnected nodes have a free port");
        self.connect(from, Endpoint::new(v, port));
        true
    }

    /// Merges `u`'s current component into the smallest other one. If
    /// earlier merges of this round already absorbed every node `u` can
    /// still reach, the target comes from `u`'s own grown component.
    fn wire_merge(&mut self, from: Endpoint, view: &RoundView) {
        let n = self.n();
        let u = from.node;
        let own = self.sets.find(u);
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            groups.entry(self.sets.find(v)).or_default().push(v);
        }
        let own_group = groups.remove(&own).unwrap_or_default();
        let mut order: Vec<Vec<usize>> = groups.into_values().collect();
        order.sort_by_key(|g| (g.len(), g[0]));
        order.push(own_group);
        // A protected node's reserved ports are a last resort.
        for strict in [true, false] {
            for v in order.iter().flatten().copied() {
                if v == u || self.partial.is_connected(u, v) {
                    continue;
                }
                let protected = strict && view.within_budget[view.comp[v]];
                if let Some(port) = self.offer_port(v, view, !protected) {
                    self.connect(from, Endpoint::new(v, port));
                    return;
                }
            }
        }
        unreachable!("an unconnected endpoint always has a legal partner");
    }
}

impl Wiring for IsolatingAdversary {
    fn node_count(&self) -> usize {
        self.n()
    }

    fn route(&mut self, _round: u64, sends: &[Endpoint]) -> Vec<Endpoint> {
        let n = self.n();
        let comp: Vec<usize> = (0..n).map(|v| self.sets.find(v)).collect();

        let mut seen = HashSet::new();
        let openings: Vec<Endpoint> =
            sends.iter().copied().filter(|&e| matches!(self.partial.resolve(e), Ok(None)) && seen.insert(e)).collect();

        let mut size = vec![0usize; n];
        let mut degree_max = vec![0usize; n];
        let mut opened = vec![0usize; n];
        for v in 0..n {
            size[comp[v]] += 1;
            degree_max[comp[v]] = degree_max[comp[v]].max(self.partial.neighbors(v).len());
        }
        for e in &openings {
            opened[comp[e.node]] += 1;
        }
        // Every neighbour of a member is inside the component.
        let capacity: Vec<usize> = (0..n).map(|r| if size[r] == 0 { 0 } else { size[r] - 1 - degree_max[r] }).collect();
        let within_budget: Vec<bool> = (0..n).map(|r| size[r] > 0 && opened[r] <= capacity[r]).collect();
        let view = RoundView { comp, within_budget, reserved: openings.iter().copied().collect() };

        let (first, second): (Vec<Endpoint>, Vec<Endpoint>) =
            openings.iter().partition(|e| view.within_budget[view.comp[e.node]]);
        for from in first.into_iter().chain(second) {
            if !matches!(self.partial.resolve(from), Ok(None)) {
                continue;
            }
            if !self.wire_inside(from, &view) {
                self.wire_merge(from, &view);
            }
        }

        let receivers: Vec<Endpoint> =
            sends.iter().map(|&e| self.partial.resolve(e).ok().flatten().expect("every send is wired")).collect();

        for (from, to) in sends.iter().zip(&receivers) {
            self.mirror.record_send(from.node, to.node).expect("wired endpoints are distinct nodes");
        }
        self.report.checks += view.within_budget.iter().zip(&opened).filter(|&(&ok, &t)| ok && t > 0).count() as u64;
        for (from, to) in sends.iter().zip(&receivers) {
            let (cf, ct) = (view.comp[from.node], view.comp[to.node]);
            if cf == ct {
                continue;
            }
            if view.within_budget[cf] && opened[cf] > 0 {
                self.report.violations += 1;
            }
            if view.within_budget[ct] && opened[ct] > 0 {
                self.report.inbound += 1;
            }
        }
        receivers
    }

    fn end_round(&mut self, round: u64, messages_so_far: u64) {
        let sets = self.sets.sets();
        if self.audit && self.mirror.weak_components() != sets {
            self.report.cache_mismatches += 1;
        }
        self.report.rounds = round;
        self.growth.push(GrowthRow {
            round,
            component_count: sets.len(),
            max_component_size: sets.iter().map(Vec::len).max().unwrap_or(0),
            messages_so_far,
        });
    }
}
