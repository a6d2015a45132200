use std::collections::BTreeMap;

use clique_lab::event::Time;
use clique_lab::trace::{AsyncRecord, EventKind};

/// Checks a trace against the link contract: every delay in `(0, 1]` and,
/// per sending endpoint, deliveries in send order.
pub fn audit(trace: &[AsyncRecord]) -> Result<(), String> {
    let mut sent = BTreeMap::new();
    let mut delivered_at = BTreeMap::new();
    let mut per_link: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in trace {
        let e = &r.event;
        match e.kind {
            EventKind::Send => {
                sent.insert(e.msg.unwrap(), r.ticks);
                per_link.entry((e.node, e.port.unwrap())).or_default().push(e.msg.unwrap());
            }
            EventKind::Deliver => {
                let id = e.msg.unwrap();
                delivered_at.insert(id, r.ticks);
                order.push(id);
            }
            _ => {}
        }
    }
    if sent.len() != delivered_at.len() {
        return Err(format!("{} sends but {} deliveries", sent.len(), delivered_at.len()));
    }
    for (id, &s) in &sent {
        let d = delivered_at[id];
        if d <= s || d - s > Time::UNIT.ticks() {
            return Err(format!("message {id} took {} ticks", d as i128 - s as i128));
        }
    }
    let rank: BTreeMap<u64, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for (link, ids) in &per_link {
        if ids.windows(2).any(|w| rank[&w[0]] > rank[&w[1]]) {
            return Err(format!("link {link:?} delivered out of order"));
        }
    }
    Ok(())
}
