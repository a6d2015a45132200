//! Leader election protocols as engine-driven state machines.
//!
//! Synchronous: [`ImprovedAfekGafni`], [`SmallIdBroadcast`],
//! [`LasVegasThreeRound`], [`TwoRoundAdversarial`]. Asynchronous:
//! [`AsyncTradeoff`], [`AsyncLevels`].
//!
//! Probabilities use natural logarithms; structural quantities such as level
//! counts use base 2.

mod async_levels;
mod async_tradeoff;
mod improved_ag;
mod las_vegas;
mod small_id;
mod two_round;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use async_levels::{AsyncLevels, LevelMsg, LevelNode};
pub use async_tradeoff::{AsyncTradeoff, RefereeRule, TradeoffMsg, TradeoffNode};
pub use improved_ag::{AgMsg, AgNode, ImprovedAfekGafni};
pub use las_vegas::{LasVegasThreeRound, LvMsg, LvNode};
pub use small_id::{SmallIdBroadcast, SmallIdMsg, SmallIdNode};
pub use two_round::{TwoRoundAdversarial, TwoRoundMsg, TwoRoundNode};

use crate::net::Port;

/// A node's irrevocable output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    #[default]
    Undecided,
    Leader,
    NonLeader,
}

/// A random rank, uniform in `[1, n⁴]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rank(pub u64);

impl Rank {
    pub fn max_value(n: usize) -> u64 {
        (n as u128).pow(4).clamp(1, u64::MAX as u128) as u64
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Rank {
        Rank(rng.random_range(1..=Self::max_value(n)))
    }
}

/// `⌈n^(num/den)⌉`, computed exactly.
pub fn ceil_root_pow(n: usize, num: u32, den: u32) -> usize {
    assert!(den > 0);
    let target = (n as u128).saturating_pow(num);
    let pow = |c: u128| c.saturating_pow(den);
    let mut c = ((n as f64).powf(num as f64 / den as f64).ceil() as u128).max(1);
    while c > 1 && pow(c - 1) >= target {
        c -= 1;
    }
    while pow(c) < target {
        c += 1;
    }
    c as usize
}

/// `⌈√n⌉`.
pub fn ceil_sqrt(n: usize) -> usize {
    ceil_root_pow(n, 1, 2)
}

/// `count` distinct ports sampled uniformly without replacement, capped at
/// `n - 1`.
pub fn sample_ports<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Vec<Port> {
    let degree = n.saturating_sub(1);
    index::sample(rng, degree, count.min(degree)).into_iter().map(|i| i + 1).collect()
}

/// `min(1, x)` for a probability expression, treating NaN as 0.
fn probability(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn exact_roots() {
        assert_eq!(ceil_sqrt(16), 4);
        assert_eq!(ceil_sqrt(17), 5);
        assert_eq!(ceil_sqrt(400), 20);
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_root_pow(64, 1, 3), 4);
        assert_eq!(ceil_root_pow(64, 2, 3), 16);
        assert_eq!(ceil_root_pow(65, 1, 3), 5);
        assert_eq!(ceil_root_pow(256, 3, 4), 64);
        assert_eq!(ceil_root_pow(16, 1, 4), 2);
        for n in 1..300usize {
            for den in 1..6u32 {
                for num in 0..=den {
                    let c = ceil_root_pow(n, num, den) as u128;
                    let target = (n as u128).pow(num);
                    assert!(c.pow(den) >= target);
                    assert!(c == 1 || (c - 1).pow(den) < target, "n={n} {num}/{den}");
                }
            }
        }
    }

    #[test]
    fn rank_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Rank::max_value(10), 10_000);
        for _ in 0..1000 {
            let r = Rank::draw(&mut rng, 3);
            assert!((1..=81).contains(&r.0));
        }
        assert_eq!(Rank::draw(&mut rng, 1), Rank(1));
    }

    #[test]
    fn sampled_ports_are_distinct_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ports = sample_ports(&mut rng, 10, 20);
        assert_eq!(ports.len(), 9);
        let mut sorted = ports.clone();
        sorted.sort();
        assert_eq!(sorted, (1..10).collect::<Vec<_>>());
        assert!(sample_ports(&mut rng, 1, 3).is_empty());
    }
}
