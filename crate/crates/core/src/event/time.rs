use std::fmt;
use std::ops::{Add, Sub};

/// Simulated time in fixed point: `2^32` ticks per time unit.
///
/// Exact integer arithmetic keeps distinct scheduler choices from colliding
/// through rounding, and makes runs bit-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(pub u64);

impl Time {
    pub const TICKS_PER_UNIT: u64 = 1 << 32;
    pub const ZERO: Time = Time(0);
    /// Smallest positive delay.
    pub const TICK: Time = Time(1);
    /// One time unit, the largest legal delay.
    pub const UNIT: Time = Time(Self::TICKS_PER_UNIT);

    /// Nearest representable time; negative inputs clamp to zero.
    pub fn from_units(units: f64) -> Time {
        Time((units.max(0.0) * Self::TICKS_PER_UNIT as f64).round() as u64)
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / Self::TICKS_PER_UNIT as f64
    }

    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: Time) -> Time {
        Time(self.0.saturating_sub(other.0))
    }
}

impl Add for Time {
    type Output = Time;

    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;

    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_units())
    }
}
