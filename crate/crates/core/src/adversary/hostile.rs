use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::event::{MessageInfo, SchedulerPolicy, SchedulerView, Time};
use crate::rng::{stream_rng, Stream};

fn is_election(kind: &str) -> bool {
    kind != "wake"
}

/// Competes and consults take a full unit; everything else 0.01.
#[derive(Debug, Clone, Default)]
pub struct SlowCompetes;

impl SchedulerPolicy for SlowCompetes {
    fn name(&self) -> &str {
        "slow-competes"
    }

    fn delay(&mut self, msg: &MessageInfo, _view: &dyn SchedulerView) -> Time {
        let raw = match msg.kind {
            "compete" | "consult" => Time::UNIT,
            _ => Time::from_units(0.01),
        };
        msg.clamp(raw)
    }
}

/// Wake-up messages race ahead; every other message takes a full unit.
#[derive(Debug, Clone, Default)]
pub struct FastWakeupsSlowElections;

impl SchedulerPolicy for FastWakeupsSlowElections {
    fn name(&self) -> &str {
        "fast-wakeups-slow-elections"
    }

    fn delay(&mut self, msg: &MessageInfo, _view: &dyn SchedulerView) -> Time {
        let raw = if is_election(msg.kind) { Time::UNIT } else { Time::from_units(0.001) };
        msg.clamp(raw)
    }
}

/// Each link gets a persistent bias, either near 0 or near 1, plus jitter
/// large enough that raw delays often violate FIFO and must be clamped.
#[derive(Debug, Clone)]
pub struct FifoStress {
    rng: ChaCha8Rng,
    /// Indexed by `node * n + port`; NaN until the link first sends.
    bias: Vec<f64>,
}

impl FifoStress {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, Stream::Scheduler), bias: Vec::new() }
    }
}

impl SchedulerPolicy for FifoStress {
    fn name(&self) -> &str {
        "fifo-stress"
    }

    fn delay(&mut self, msg: &MessageInfo, view: &dyn SchedulerView) -> Time {
        let n = view.n();
        if self.bias.len() != n * n {
            self.bias = vec![f64::NAN; n * n];
        }
        let slot = &mut self.bias[msg.from.node * n + msg.from.port];
        if slot.is_nan() {
            let base = if self.rng.random_bool(0.5) { 0.9 } else { 0.0 };
            *slot = base + self.rng.random_range(0.0..0.1);
        }
        let bias = *slot;
        let jitter: f64 = self.rng.random_range(-0.3..0.3);
        msg.clamp(Time::from_units(bias + jitter))
    }
}

pub fn slow_competes() -> SlowCompetes {
    SlowCompetes
}

pub fn fast_wakeups_slow_elections() -> FastWakeupsSlowElections {
    FastWakeupsSlowElections
}

pub fn fifo_stress(seed: u64) -> FifoStress {
    FifoStress::new(seed)
}
