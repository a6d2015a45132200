/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials` at 95%.
/// Returns `(0, 1)` for zero trials.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Half-width of the Wilson interval.
pub fn wilson_half_width(successes: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_interval(successes, trials);
    (hi - lo) / 2.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub trials: u64,
    pub successes: u64,
    pub mean_messages: f64,
    pub max_messages: u64,
    pub mean_time: f64,
    pub max_time: f64,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    /// Aggregates `(messages, rounds_or_time, success)` triples.
    pub fn from_samples(samples: impl IntoIterator<Item = (u64, f64, bool)>) -> Self {
        let mut s = Summary::default();
        let (mut msg_sum, mut time_sum) = (0f64, 0f64);
        for (messages, time, success) in samples {
            s.trials += 1;
            s.successes += success as u64;
            msg_sum += messages as f64;
            time_sum += time;
            s.max_messages = s.max_messages.max(messages);
            s.max_time = s.max_time.max(time);
        }
        if s.trials > 0 {
            let n = s.trials as f64;
            s.mean_messages = msg_sum / n;
            s.mean_time = time_sum / n;
            s.success_rate = s.successes as f64 / n;
        }
        (s.ci_low, s.ci_high) = wilson_interval(s.successes, s.trials);
        s
    }
}
