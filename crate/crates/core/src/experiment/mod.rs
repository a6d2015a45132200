//! Seeded Monte Carlo experiments over the protocols, with CSV and JSONL
//! output.
//!
//! Trial `t` of an experiment with base seed `s` uses run seed `s + t`; the
//! identities, the port mapping, node tapes and the scheduler all derive
//! from it. Trials run in parallel but records always come back in trial
//! order.

mod stats;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use stats::{wilson_half_width, wilson_interval, Summary, Z95};

use crate::adversary::{fast_wakeups_slow_elections, fifo_stress, slow_competes, IsolatingAdversary, WakeStrategy};
use crate::error::{ConfigError, SimError};
use crate::event::{
    run_async, uniform_random_delay, unit_delay, AsyncConfig, AsyncOutcome, AsyncProtocol, SchedulerPolicy,
    TimeAccounting,
};
use crate::net::{IdAssignment, PortMapping, Wiring};
use crate::protocols::{
    AsyncLevels, AsyncTradeoff, ImprovedAfekGafni, LasVegasThreeRound, SmallIdBroadcast, TwoRoundAdversarial,
};
use crate::rng::{stream_rng, Stream};
use crate::sync::{run_sync, SyncConfig, SyncOutcome, SyncProtocol};
use crate::trace::write_jsonl;

/// Environment variable holding the default base seed.
pub const SEED_ENV: &str = "CLIQUE_LAB_SEED";

/// Exact CSV header of per-trial records.
pub const RECORD_HEADER: &str =
    "trial,algo,n,params,rounds_or_time,messages,leader_count,leader_id,success,attempts,seconds";

/// Exact CSV header of sweep rows.
pub const SWEEP_HEADER: &str = "algo,n,param,mean_messages,max_messages,mean_time,success_rate,ci_low,ci_high";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    ImprovedAg,
    SmallId,
    LasVegas,
    TwoRound,
    AsyncTradeoff,
    AsyncLevels,
}

impl Algo {
    pub const ALL: [Algo; 6] =
        [Algo::ImprovedAg, Algo::SmallId, Algo::LasVegas, Algo::TwoRound, Algo::AsyncTradeoff, Algo::AsyncLevels];

    pub fn name(self) -> &'static str {
        match self {
            Algo::ImprovedAg => "improved_ag",
            Algo::SmallId => "small_id",
            Algo::LasVegas => "las_vegas",
            Algo::TwoRound => "two_round",
            Algo::AsyncTradeoff => "async_tradeoff",
            Algo::AsyncLevels => "async_levels",
        }
    }

    pub fn is_async(self) -> bool {
        matches!(self, Algo::AsyncTradeoff | Algo::AsyncLevels)
    }

    /// Whether the protocol assumes everyone wakes at once.
    pub fn needs_simultaneous_wake(self) -> bool {
        matches!(self, Algo::ImprovedAg | Algo::SmallId | Algo::LasVegas)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| ConfigError::Protocol(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Unit,
    #[default]
    Random,
    SlowCompetes,
    FastWakeupsSlowElections,
    FifoStress,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Unit => "unit",
            SchedulerKind::Random => "random",
            SchedulerKind::SlowCompetes => "slow-competes",
            SchedulerKind::FastWakeupsSlowElections => "fast-wakeups-slow-elections",
            SchedulerKind::FifoStress => "fifo-stress",
        }
    }

    pub fn build(self, seed: u64) -> Box<dyn SchedulerPolicy + Send> {
        match self {
            SchedulerKind::Unit => Box::new(unit_delay()),
            SchedulerKind::Random => Box::new(uniform_random_delay(seed)),
            SchedulerKind::SlowCompetes => Box::new(slow_competes()),
            SchedulerKind::FastWakeupsSlowElections => Box::new(fast_wakeups_slow_elections()),
            SchedulerKind::FifoStress => Box::new(fifo_stress(seed)),
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        [
            SchedulerKind::Unit,
            SchedulerKind::Random,
            SchedulerKind::SlowCompetes,
            SchedulerKind::FastWakeupsSlowElections,
            SchedulerKind::FifoStress,
        ]
        .into_iter()
        .find(|k| k.name() == s.replace('_', "-"))
        .ok_or_else(|| ConfigError::Protocol(format!("unknown scheduler {s:?}")))
    }
}

/// Parses `simultaneous`, `all`, `single`, `half` or `subset:1,2,3`.
/// `single` wakes node 0, which is as good as any node since identities and
/// wiring are random.
pub fn parse_wake(s: &str) -> Result<WakeStrategy, ConfigError> {
    match s {
        "simultaneous" | "all" => Ok(WakeStrategy::All),
        "single" => Ok(WakeStrategy::Single(0)),
        "half" => Ok(WakeStrategy::RandomHalf),
        _ => {
            let list = s
                .strip_prefix("subset:")
                .ok_or_else(|| ConfigError::Protocol(format!("unknown wake strategy {s:?}")))?;
            let nodes = list
                .split(',')
                .filter(|x| !x.is_empty())
                .map(|x| x.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConfigError::Protocol(format!("bad wake subset {list:?}: {e}")))?;
            Ok(WakeStrategy::Subset(nodes))
        }
    }
}

/// Protocol parameters; unset ones take the protocol's default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Params {
    pub ell: Option<u64>,
    pub k: Option<u32>,
    pub epsilon: Option<f64>,
    pub d: Option<u64>,
    pub g: Option<u64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
}

impl Params {
    /// `key=value` pairs joined by `;`, only those the protocol uses, with
    /// defaults filled in.
    pub fn describe(&self, algo: Algo) -> String {
        match algo {
            Algo::ImprovedAg => format!("ell={}", self.ell.unwrap_or(3)),
            Algo::SmallId => format!("d={};g={}", self.d.unwrap_or(1), self.g.unwrap_or(1)),
            Algo::LasVegas => format!("a={};b={}", self.a.unwrap_or(4.0), self.b.unwrap_or(4.0)),
            Algo::TwoRound => format!("epsilon={}", self.epsilon.unwrap_or(0.1)),
            Algo::AsyncTradeoff => format!("k={};gamma={}", self.k.unwrap_or(2), self.gamma.unwrap_or(4.0)),
            Algo::AsyncLevels => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(ConfigError::Protocol(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algo: Algo,
    pub n: usize,
    pub params: Params,
    pub trials: u64,
    pub base_seed: u64,
    pub wake: WakeStrategy,
    pub scheduler: SchedulerKind,
    /// Wire ports with [`IsolatingAdversary`] instead of a random mapping.
    /// Synchronous protocols only.
    pub isolating: bool,
    pub trace: bool,
    /// Record wall-clock seconds; off makes output byte-reproducible.
    pub wallclock: bool,
}

impl ExperimentSpec {
    pub fn new(algo: Algo, n: usize) -> Self {
        Self {
            algo,
            n,
            params: Params::default(),
            trials: 1,
            base_seed: 0,
            wake: WakeStrategy::All,
            scheduler: SchedulerKind::default(),
            isolating: false,
            trace: false,
            wallclock: true,
        }
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_wake(mut self, wake: WakeStrategy) -> Self {
        self.wake = wake;
        self
    }

    pub fn with_scheduler(mut self, scheduler: SchedulerKind) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn with_isolating(mut self, isolating: bool) -> Self {
        self.isolating = isolating;
        self
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_wallclock(mut self, wallclock: bool) -> Self {
        self.wallclock = wallclock;
        self
    }

    /// Checks everything that can be checked without running a trial.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Protocol("trials must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(ConfigError::Empty);
        }
        if self.algo.needs_simultaneous_wake() && self.wake != WakeStrategy::All {
            return Err(ConfigError::Protocol(format!("{} needs simultaneous wake-up", self.algo)));
        }
        if self.isolating && self.algo.is_async() {
            return Err(ConfigError::Protocol("the isolating adversary wires synchronous runs only".into()));
        }
        self.wake.nodes(self.n, self.base_seed)?;
        let ids = self.ids(self.base_seed);
        match self.algo {
            Algo::ImprovedAg => self.improved_ag().map(|_| ()),
            Algo::SmallId => self.small_id()?.validate(&ids),
            Algo::LasVegas => self.las_vegas().map(|_| ()),
            Algo::TwoRound => self.two_round().map(|_| ()),
            Algo::AsyncTradeoff => self.async_tradeoff()?.validate(&ids),
            Algo::AsyncLevels => Ok(()),
        }
    }

    fn improved_ag(&self) -> Result<ImprovedAfekGafni, ConfigError> {
        ImprovedAfekGafni::new(self.params.ell.unwrap_or(3))
    }

    fn small_id(&self) -> Result<SmallIdBroadcast, ConfigError> {
        SmallIdBroadcast::new(self.params.d.unwrap_or(1), self.params.g.unwrap_or(1))
    }

    fn las_vegas(&self) -> Result<LasVegasThreeRound, ConfigError> {
        LasVegasThreeRound::new(self.params.a.unwrap_or(4.0), self.params.b.unwrap_or(4.0))
    }

    fn two_round(&self) -> Result<TwoRoundAdversarial, ConfigError> {
        TwoRoundAdversarial::new(self.params.epsilon.unwrap_or(0.1))
    }

    fn async_tradeoff(&self) -> Result<AsyncTradeoff, ConfigError> {
        AsyncTradeoff::new(self.params.k.unwrap_or(2), self.params.gamma.unwrap_or(4.0))
    }

    /// Identity universe: `[1, n·g]` for the small-ID protocol, `[1, n²]`
    /// otherwise.
    pub fn universe(&self) -> u64 {
        let n = self.n as u64;
        match self.algo {
            Algo::SmallId => n * self.params.g.unwrap_or(1),
            _ => (n * n).max(1),
        }
    }

    pub fn ids(&self, seed: u64) -> IdAssignment {
        IdAssignment::random(self.n, self.universe(), &mut stream_rng(seed, Stream::Ids))
    }

    pub fn mapping(&self, seed: u64) -> PortMapping {
        PortMapping::random_with(self.n, &mut stream_rng(seed, Stream::Mapping))
    }
}

/// One trial, as written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub trial: u64,
    pub algo: &'static str,
    pub n: usize,
    pub params: String,
    pub rounds_or_time: f64,
    pub messages: u64,
    pub leader_count: usize,
    pub leader_id: Option<u64>,
    pub success: bool,
    pub attempts: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub record: ExperimentRecord,
    /// JSONL event trace, when requested.
    pub trace: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub runs: Vec<TrialRun>,
    pub summary: Summary,
}

impl Experiment {
    pub fn records(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.runs.iter().map(|r| &r.record)
    }
}

fn sync_record<P: SyncProtocol, W: Wiring>(
    protocol: &P,
    cfg: &SyncConfig,
    wiring: &mut W,
) -> Result<(SyncOutcome, Option<String>), SimError> {
    let out = run_sync(protocol, cfg, wiring)?;
    let trace = out.trace.as_ref().map(|t| jsonl(t));
    Ok((out, trace))
}

fn jsonl<T: Serialize>(records: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn run_sync_trial<P: SyncProtocol>(
    spec: &ExperimentSpec,
    protocol: &P,
    ids: IdAssignment,
    seed: u64,
) -> Result<(SyncOutcome, Option<String>), SimError> {
    let cfg = SyncConfig::new(ids).with_seed(seed).with_wake(spec.wake.sync_mode(spec.n, seed)?).with_trace(spec.trace);
    if spec.isolating {
        sync_record(protocol, &cfg, &mut IsolatingAdversary::new(spec.n))
    } else {
        sync_record(protocol, &cfg, &mut spec.mapping(seed))
    }
}

fn run_async_trial<P: AsyncProtocol>(
    spec: &ExperimentSpec,
    protocol: &P,
    ids: IdAssignment,
    seed: u64,
    accounting: TimeAccounting,
) -> Result<(AsyncOutcome, Option<String>), SimError> {
    let cfg = AsyncConfig::new(ids, spec.wake.async_schedule(spec.n, seed)?)
        .with_seed(seed)
        .with_accounting(accounting)
        .with_trace(spec.trace);
    let mut scheduler = spec.scheduler.build(seed);
    let out = run_async(protocol, &cfg, &spec.mapping(seed), &mut scheduler)?;
    let trace = out.trace.as_ref().map(|t| jsonl(t));
    Ok((out, trace))
}

/// Runs trial `trial` of `spec`.
pub fn run_trial(spec: &ExperimentSpec, trial: u64) -> Result<TrialRun, SimError> {
    let seed = spec.base_seed.wrapping_add(trial);
    let ids = spec.ids(seed);
    let start = Instant::now();
    let leader_id = |decisions: &[crate::Decision], ids: &IdAssignment| {
        decisions.iter().position(|d| *d == crate::Decision::Leader).map(|v| ids.get(v).0)
    };
    let (rounds_or_time, messages, decisions, attempts, trace) = match spec.algo {
        Algo::ImprovedAg | Algo::SmallId | Algo::LasVegas | Algo::TwoRound => {
            let (out, trace) = match spec.algo {
                Algo::ImprovedAg => run_sync_trial(spec, &spec.improved_ag()?, ids.clone(), seed)?,
                Algo::SmallId => run_sync_trial(spec, &spec.small_id()?, ids.clone(), seed)?,
                Algo::LasVegas => run_sync_trial(spec, &spec.las_vegas()?, ids.clone(), seed)?,
                _ => run_sync_trial(spec, &spec.two_round()?, ids.clone(), seed)?,
            };
            let attempts = if spec.algo == Algo::LasVegas { out.rounds_used.div_ceil(3) } else { 1 };
            (out.rounds_used as f64, out.messages_total, out.decisions, attempts, trace)
        }
        Algo::AsyncTradeoff => {
            let (out, trace) =
                run_async_trial(spec, &spec.async_tradeoff()?, ids.clone(), seed, TimeAccounting::FromFirstWake)?;
            (out.elapsed_time, out.messages_total, out.decisions, 1, trace)
        }
        Algo::AsyncLevels => {
            let accounting = if spec.wake == WakeStrategy::All {
                TimeAccounting::FromFirstWake
            } else {
                TimeAccounting::FromLastSpontaneousWake
            };
            let (out, trace) = run_async_trial(spec, &AsyncLevels::new(), ids.clone(), seed, accounting)?;
            (out.elapsed_time, out.messages_total, out.decisions, 1, trace)
        }
    };
    let seconds = if spec.wallclock { start.elapsed().as_secs_f64() } else { 0.0 };
    let leader_count = crate::sync::leader_count(&decisions);
    let record = ExperimentRecord {
        trial,
        algo: spec.algo.name(),
        n: spec.n,
        params: spec.params.describe(spec.algo),
        rounds_or_time,
        messages,
        leader_count,
        leader_id: leader_id(&decisions, &ids),
        success: leader_count == 1 && crate::sync::decided_all(&decisions),
        attempts,
        seconds,
    };
    Ok(TrialRun { record, trace })
}

/// Runs every trial of `spec`, in parallel, and summarizes.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment, SimError> {
    spec.validate()?;
    let runs = (0..spec.trials).into_par_iter().map(|t| run_trial(spec, t)).collect::<Result<Vec<_>, _>>()?;
    let summary =
        Summary::from_samples(runs.iter().map(|r| (r.record.messages, r.record.rounds_or_time, r.record.success)));
    Ok(Experiment { spec: spec.clone(), runs, summary })
}

pub fn write_records_csv<'a, W: Write>(
    w: W,
    records: impl IntoIterator<Item = &'a ExperimentRecord>,
) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(RECORD_HEADER.split(','))?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_jsonl<'a, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = &'a ExperimentRecord>,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Cross product of sizes and parameter points sharing one base spec.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub base: ExperimentSpec,
    pub ns: Vec<usize>,
    pub points: Vec<Params>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algo: &'static str,
    pub n: usize,
    pub param: String,
    pub mean_messages: f64,
    pub max_messages: u64,
    pub mean_time: f64,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One summary row per `(n, parameter point)`, `n` varying slowest.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>, SimError> {
    if grid.ns.is_empty() || grid.points.is_empty() {
        return Err(ConfigError::Protocol("sweep grid is empty".into()).into());
    }
    let mut rows = Vec::with_capacity(grid.ns.len() * grid.points.len());
    for &n in &grid.ns {
        for params in &grid.points {
            let mut spec = grid.base.clone();
            spec.n = n;
            spec.params = *params;
            let s = run_experiment(&spec)?.summary;
            rows.push(SweepRow {
                algo: spec.algo.name(),
                n,
                param: params.describe(spec.algo),
                mean_messages: s.mean_messages,
                max_messages: s.max_messages,
                mean_time: s.mean_time,
                success_rate: s.success_rate,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(SWEEP_HEADER.split(','))?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Roots of `(1 + z²/n)p² − (2p̂ + z²/n)p + p̂² = 0`, the Wilson bounds.
    fn quadratic_oracle(s: u64, n: u64) -> (f64, f64) {
        let (n, ph, z2) = (n as f64, s as f64 / n as f64, Z95 * Z95);
        let a = 1.0 + z2 / n;
        let b = -(2.0 * ph + z2 / n);
        let c = ph * ph;
        let disc = (b * b - 4.0 * a * c).sqrt();
        ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
    }

    #[test]
    fn wilson_matches_quadratic_roots() {
        for (s, n) in [(0, 10), (10, 10), (50, 100), (7, 30)] {
            let (lo, hi) = wilson_interval(s, n);
            let (olo, ohi) = quadratic_oracle(s, n);
            assert!((lo - olo.max(0.0)).abs() < 1e-12, "{s}/{n}");
            assert!((hi - ohi.min(1.0)).abs() < 1e-12, "{s}/{n}");
        }
        assert!((wilson_interval(0, 10).1 - 0.27753).abs() < 1e-5);
        assert!((wilson_interval(10, 10).0 - 0.72247).abs() < 1e-5);
    }

    #[test]
    fn parses_names() {
        assert_eq!("improved_ag".parse::<Algo>().unwrap(), Algo::ImprovedAg);
        assert_eq!("async-levels".parse::<Algo>().unwrap(), Algo::AsyncLevels);
        assert!("nope".parse::<Algo>().is_err());
        assert_eq!("fifo-stress".parse::<SchedulerKind>().unwrap(), SchedulerKind::FifoStress);
        assert_eq!(parse_wake("subset:1,3").unwrap(), WakeStrategy::Subset([1, 3].into()));
        assert_eq!(parse_wake("single").unwrap(), WakeStrategy::Single(0));
        assert!(parse_wake("some").is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let spec = ExperimentSpec::new(Algo::ImprovedAg, 16).with_trials(0);
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn improved_ag_experiment() {
        let spec = ExperimentSpec::new(Algo::ImprovedAg, 16).with_trials(10);
        let exp = run_experiment(&spec).unwrap();
        assert_eq!(exp.runs.len(), 10);
        for (t, r) in exp.records().enumerate() {
            assert_eq!(r.trial, t as u64);
            assert!(r.success);
            assert_eq!(r.rounds_or_time, 3.0);
        }
        assert_eq!(exp.summary.success_rate, 1.0);
    }

    #[test]
    fn small_id_block_bound() {
        let params = Params { d: Some(2), g: Some(1), ..Params::default() };
        let spec = ExperimentSpec::new(Algo::SmallId, 8).with_params(params);
        let exp = run_experiment(&spec).unwrap();
        assert!(exp.runs[0].record.messages <= 14);
    }

    #[test]
    fn empty_sweep_rejected() {
        let grid = SweepGrid { base: ExperimentSpec::new(Algo::ImprovedAg, 16), ns: vec![], points: vec![] };
        assert!(sweep(&grid).is_err());
    }
}
