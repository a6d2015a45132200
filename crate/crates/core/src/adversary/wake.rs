use std::collections::BTreeSet;

use rand::seq::index;

use crate::error::ConfigError;
use crate::event::Time;
use crate::rng::{stream_rng, Stream};
use crate::sync::WakeMode;

/// The adversary's choice of which nodes start on their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WakeStrategy {
    /// Everyone, in round 1 or at time 0.
    All,
    Single(usize),
    Subset(BTreeSet<usize>),
    /// `⌈n/2⌉` nodes drawn from the run seed.
    RandomHalf,
    /// Explicit asynchronous wake times.
    Schedule(Vec<(usize, Time)>),
}

impl WakeStrategy {
    /// The woken nodes, ascending.
    pub fn nodes(&self, n: usize, seed: u64) -> Result<BTreeSet<usize>, ConfigError> {
        let set: BTreeSet<usize> = match self {
            WakeStrategy::All => (0..n).collect(),
            WakeStrategy::Single(v) => [*v].into(),
            WakeStrategy::Subset(s) => s.clone(),
            WakeStrategy::RandomHalf => {
                let mut rng = stream_rng(seed, Stream::Wake);
                index::sample(&mut rng, n, n.div_ceil(2)).into_iter().collect()
            }
            WakeStrategy::Schedule(s) => s.iter().map(|&(v, _)| v).collect(),
        };
        if set.is_empty() {
            return Err(ConfigError::EmptyWakeSet);
        }
        if let Some(&v) = set.iter().find(|&&v| v >= n) {
            return Err(ConfigError::WakeNodeOutOfRange(v, n));
        }
        Ok(set)
    }

    pub fn sync_mode(&self, n: usize, seed: u64) -> Result<WakeMode, ConfigError> {
        match self {
            WakeStrategy::All => Ok(WakeMode::Simultaneous),
            _ => self.nodes(n, seed).map(WakeMode::Adversarial),
        }
    }

    /// Spontaneous wake times; everything except an explicit schedule wakes
    /// at time 0.
    pub fn async_schedule(&self, n: usize, seed: u64) -> Result<Vec<(usize, Time)>, ConfigError> {
        let nodes = self.nodes(n, seed)?;
        match self {
            WakeStrategy::Schedule(s) => Ok(s.clone()),
            _ => Ok(nodes.into_iter().map(|v| (v, Time::ZERO)).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies() {
        assert_eq!(WakeStrategy::All.sync_mode(3, 0).unwrap(), WakeMode::Simultaneous);
        assert_eq!(WakeStrategy::Single(2).nodes(3, 0).unwrap(), [2].into());
        assert!(WakeStrategy::Single(3).nodes(3, 0).is_err());
        assert_eq!(WakeStrategy::Subset(BTreeSet::new()).nodes(3, 0), Err(ConfigError::EmptyWakeSet));
        let half = WakeStrategy::RandomHalf.nodes(9, 4).unwrap();
        assert_eq!(half.len(), 5);
        assert_eq!(half, WakeStrategy::RandomHalf.nodes(9, 4).unwrap());
        let sched = WakeStrategy::Schedule(vec![(1, Time::UNIT)]).async_schedule(2, 0).unwrap();
        assert_eq!(sched, vec![(1, Time::UNIT)]);
    }
}
