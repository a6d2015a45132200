//! Adversaries: who wakes up, how ports get wired, and how long messages
//! take.

mod hostile;
mod isolating;
mod wake;

pub use hostile::{
    fast_wakeups_slow_elections, fifo_stress, slow_competes, FastWakeupsSlowElections, FifoStress, SlowCompetes,
};
pub use isolating::{GrowthRow, IsolatingAdversary, IsolationReport};
pub use wake::WakeStrategy;
