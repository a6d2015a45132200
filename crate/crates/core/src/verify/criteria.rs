use rayon::prelude::*;

use super::audit::{audit_async_trace, audit_mapping, bfs_components, level_bound_violation};
use super::{Findings, VerifyOptions};
use crate::adversary::{fifo_stress, slow_competes, IsolatingAdversary, IsolationReport, WakeStrategy};
use crate::event::{execute_async, run_async, uniform_random_delay, AsyncConfig, SchedulerPolicy, Time};
use crate::experiment::wilson_half_width;
use crate::net::{CommGraph, IdAssignment, PortMapping, Wiring};
use crate::protocols::{
    AsyncLevels, AsyncTradeoff, ImprovedAfekGafni, LasVegasThreeRound, RefereeRule, SmallIdBroadcast,
    TwoRoundAdversarial,
};
use crate::rng::{stream_rng, Stream};
use crate::sync::{run_sync, SingleSend, SyncConfig, SyncOutcome, SyncProtocol};
use crate::trace::EventKind;

/// `C` in the level algorithm's message bound `C·n·log₂ n`. Fitted once at
/// `n = 16` with uniform random delays over seeds `0..10000` (worst ratio
/// 3.641), padded by 10% and rounded up to a half, then frozen.
pub const LEVELS_MESSAGE_CONSTANT: f64 = 4.5;
/// `C'` in the level algorithm's time bound `C'·log₂ n`, fitted the same
/// way (worst ratio 4.278).
pub const LEVELS_TIME_CONSTANT: f64 = 5.0;

pub(super) fn run(name: &str, opts: &VerifyOptions) -> (Findings, Option<f64>) {
    match name {
        "improved_ag" => (improved_ag(opts), Some(60.0)),
        "small_id" => (small_id(opts), Some(5.0)),
        "single_send" => (single_send(opts), Some(5.0)),
        "las_vegas" => (las_vegas(opts), Some(120.0)),
        "two_round" => (two_round(opts), Some(180.0)),
        "async_tradeoff" => (async_tradeoff(opts), Some(240.0)),
        "async_levels" => (async_levels(opts), Some(120.0)),
        "model" => (model(opts), Some(30.0)),
        "capacity" => (capacity(opts), None),
        _ => unreachable!("criterion names are validated by the caller"),
    }
}

/// Random identities from `[1, universe]` and a random mapping, both drawn
/// from `seed`.
fn inputs(n: usize, universe: u64, seed: u64) -> (IdAssignment, PortMapping) {
    let ids = IdAssignment::random(n, universe, &mut stream_rng(seed, Stream::Ids));
    let mapping = PortMapping::random_with(n, &mut stream_rng(seed, Stream::Mapping));
    (ids, mapping)
}

fn seeds(opts: &VerifyOptions, full: u64) -> impl IndexedParallelIterator<Item = u64> + '_ {
    (0..opts.trials(full) as usize).into_par_iter().map(move |t| opts.base_seed.wrapping_add(t as u64))
}

fn fraction(count: usize, total: usize) -> f64 {
    count as f64 / total.max(1) as f64
}

const AG_SIZES: [usize; 3] = [16, 64, 256];
const AG_ELLS: [u64; 3] = [3, 5, 7];
const SMALL_ID_DS: [u64; 3] = [1, 2, 4];
const SMALL_ID_GS: [u64; 2] = [1, 2];

fn run_ag<W: Wiring>(ag: &ImprovedAfekGafni, ids: &IdAssignment, seed: u64, wiring: &mut W) -> (bool, u64, u64) {
    let out = run_sync(ag, &SyncConfig::new(ids.clone()).with_seed(seed), wiring).expect("valid configuration");
    let correct = out.leaders() == vec![ids.argmax().unwrap()] && out.decided_all() && out.faults.is_empty();
    (correct, out.rounds_used, out.messages_total)
}

fn improved_ag(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    for n in AG_SIZES {
        for ell in AG_ELLS {
            let ag = ImprovedAfekGafni::new(ell).unwrap();
            let bound = ag.message_bound(n);
            let envelope = 8.0 * ell as f64 * (n as f64).powf(1.0 + 2.0 / (ell as f64 + 1.0));
            let runs: Vec<(bool, u64, u64)> = seeds(opts, 200)
                .map(|seed| {
                    let (ids, mut mapping) = inputs(n, (n * n) as u64, seed);
                    run_ag(&ag, &ids, seed, &mut mapping)
                })
                .collect();
            let correct = runs.iter().filter(|r| r.0).count();
            let rounds_ok = runs.iter().all(|r| r.1 == ell);
            let max = runs.iter().map(|r| r.2).max().unwrap_or(0);
            f.check(
                correct == runs.len() && rounds_ok && max <= bound && (max as f64) <= envelope,
                format!(
                    "n={n} ell={ell}: max-ID leader {correct}/{}, rounds=ell {rounds_ok}, max messages {max} <= {bound} (closed form), <= {envelope:.0}",
                    runs.len()
                ),
            );
        }
    }
    f
}

fn small_id(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    let n = 8usize;
    for d in SMALL_ID_DS {
        for g in SMALL_ID_GS {
            let p = SmallIdBroadcast::new(d, g).unwrap();
            let bad: usize = seeds(opts, 100)
                .filter(|&seed| {
                    let (ids, mut mapping) = inputs(n, n as u64 * g, seed);
                    let out = run_sync(&p, &SyncConfig::new(ids.clone()).with_seed(seed), &mut mapping).unwrap();
                    let min = ids.get(ids.argmin().unwrap()).0;
                    let rounds = min.div_ceil(d * g);
                    !(out.leaders() == vec![ids.argmin().unwrap()]
                        && out.decided_all()
                        && out.rounds_used == rounds
                        && rounds <= (n as u64).div_ceil(d)
                        && out.messages_total <= d * g * (n as u64 - 1))
                })
                .count();
            f.check(bad == 0, format!("d={d} g={g}: {bad} of {} runs off", opts.trials(100)));
        }
    }
    f
}

/// At most one send per node per round, judged from the trace.
fn single_sends_only(out: &SyncOutcome) -> bool {
    let mut seen = std::collections::HashSet::new();
    out.trace.iter().flatten().filter(|r| r.event.kind == EventKind::Send).all(|r| seen.insert((r.round, r.event.node)))
}

fn single_send(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    let (n, ell) = (16usize, 3u64);
    let ag = ImprovedAfekGafni::new(ell).unwrap();
    let wrapped = SingleSend::new(ag);
    let runs: Vec<(bool, bool, u64, bool)> = seeds(opts, 100)
        .map(|seed| {
            let (ids, mapping) = inputs(n, (n * n) as u64, seed);
            let cfg = SyncConfig::new(ids).with_seed(seed);
            let plain = run_sync(&ag, &cfg, &mut mapping.clone()).unwrap();
            let cfg = cfg.with_max_rounds(n as u64 * ell).with_trace(true);
            let single = run_sync(&wrapped, &cfg, &mut mapping.clone()).unwrap();
            (
                plain.leaders() == single.leaders() && single.leader_count() == 1,
                plain.messages_total == single.messages_total,
                single.rounds_used,
                single_sends_only(&single) && single.faults.is_empty() && !single.exhausted,
            )
        })
        .collect();
    let max_rounds = runs.iter().map(|r| r.2).max().unwrap_or(0);
    f.check(runs.iter().all(|r| r.0), "identical leaders");
    f.check(runs.iter().all(|r| r.1), "identical message totals");
    f.check(max_rounds <= n as u64 * ell, format!("max rounds {max_rounds} <= n*ell = {}", n as u64 * ell));
    f.check(runs.iter().all(|r| r.3), "one send per node per round");
    f
}

fn las_vegas(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    let lv = LasVegasThreeRound::default();
    let mut means = Vec::new();
    for n in [64usize, 256] {
        let runs: Vec<(bool, bool, bool, u64)> = seeds(opts, 2000)
            .map(|seed| {
                let (ids, mut mapping) = inputs(n, (n * n) as u64, seed);
                let out = run_sync(&lv, &SyncConfig::new(ids).with_seed(seed), &mut mapping).unwrap();
                let terminated = !out.exhausted;
                let safe = !terminated || (out.leader_count() == 1 && out.decided_all());
                (terminated, safe, out.rounds_used == 3, out.messages_total)
            })
            .collect();
        let violations = runs.iter().filter(|r| !r.1).count();
        let first = fraction(runs.iter().filter(|r| r.2).count(), runs.len());
        let mean = runs.iter().map(|r| r.3 as f64).sum::<f64>() / runs.len() as f64;
        let unfinished = runs.iter().filter(|r| !r.0).count();
        means.push(mean);
        f.check(
            violations == 0,
            format!("n={n}: {violations} terminating runs without exactly one leader ({unfinished} unfinished)"),
        );
        f.check(first >= 0.9, format!("n={n}: first-attempt rate {first:.4} >= 0.9, mean messages {mean:.0}"));
    }
    let ratio = means[1] / means[0];
    f.check(ratio <= 4.4, format!("mean messages ratio 256/64 = {ratio:.3} <= 4.4"));
    f
}

fn two_round(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    let (n, eps) = (400usize, 0.1);
    let p = TwoRoundAdversarial::new(eps).unwrap();
    let nf = n as f64;
    let mean_bound = 8.0 * nf.powf(1.5) * (1.0 / eps).ln();
    let max_bound = 8.0 * nf.powf(1.5) * nf.ln();
    for (label, wake) in
        [("single", WakeStrategy::Single(0)), ("all", WakeStrategy::All), ("half", WakeStrategy::RandomHalf)]
    {
        let runs: Vec<(bool, u64)> = seeds(opts, 5000)
            .map(|seed| {
                let (ids, mut mapping) = inputs(n, (n * n) as u64, seed);
                let cfg = SyncConfig::new(ids).with_seed(seed).with_wake(wake.sync_mode(n, seed).unwrap());
                let out = run_sync(&p, &cfg, &mut mapping).unwrap();
                (out.leader_count() == 1 && out.decided_all(), out.messages_total)
            })
            .collect();
        let trials = runs.len() as u64;
        let successes = runs.iter().filter(|r| r.0).count() as u64;
        let rate = successes as f64 / trials as f64;
        let target = 1.0 - eps - 1.0 / nf - wilson_half_width(successes, trials);
        let mean = runs.iter().map(|r| r.1 as f64).sum::<f64>() / trials as f64;
        let max = runs.iter().map(|r| r.1).max().unwrap_or(0);
        f.check(rate >= target, format!("{label}: success {rate:.4} >= {target:.4}"));
        f.check(
            mean <= mean_bound && max as f64 <= max_bound,
            format!("{label}: mean messages {mean:.0} <= {mean_bound:.0}, max {max} <= {max_bound:.0}"),
        );
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hostile {
    Random,
    SlowCompetes,
    FifoStress,
}

impl Hostile {
    fn build(self, seed: u64) -> Box<dyn SchedulerPolicy + Send> {
        match self {
            Hostile::Random => Box::new(uniform_random_delay(seed)),
            Hostile::SlowCompetes => Box::new(slow_competes()),
            Hostile::FifoStress => Box::new(fifo_stress(seed)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Hostile::Random => "random",
            Hostile::SlowCompetes => "slow-competes",
            Hostile::FifoStress => "fifo-stress",
        }
    }
}

fn async_tradeoff(opts: &VerifyOptions) -> Findings {
    const SCHEDULERS: [Hostile; 3] = [Hostile::Random, Hostile::SlowCompetes, Hostile::FifoStress];
    const KS: [u32; 2] = [2, 3];
    let mut f = Findings::new();
    let rule = if opts.sabotage { RefereeRule::AlwaysWin } else { RefereeRule::Faithful };
    for n in [256usize, 1024] {
        let protocols: Vec<AsyncTradeoff> =
            KS.iter().map(|&k| AsyncTradeoff::new(k, 4.0).unwrap().with_referee_rule(rule)).collect();
        // One wiring per seed, shared by every (k, scheduler) pair: building
        // it costs as much as a run.
        let runs: Vec<Vec<(bool, bool, bool, u64)>> = seeds(opts, 500)
            .map(|seed| {
                let (ids, mapping) = inputs(n, (n * n) as u64, seed);
                let cfg = AsyncConfig::new(ids, vec![(0, Time::ZERO)]).with_seed(seed);
                let mut row = Vec::with_capacity(KS.len() * SCHEDULERS.len());
                for (p, &k) in protocols.iter().zip(&KS) {
                    for sched in SCHEDULERS {
                        let out = run_async(p, &cfg, &mapping, &mut sched.build(seed)).unwrap();
                        let awake = out.all_awake_after().is_some_and(|t| t.as_units() <= k as f64 + 4.0);
                        row.push((
                            out.elapsed_time <= k as f64 + 8.0,
                            out.leader_count == 1,
                            awake,
                            out.messages_total,
                        ));
                    }
                }
                row
            })
            .collect();
        for (ki, &k) in KS.iter().enumerate() {
            let msg_bound = 16.0 * (n as f64).powf(1.0 + 1.0 / k as f64);
            for (si, sched) in SCHEDULERS.iter().enumerate() {
                let col: Vec<_> = runs.iter().map(|row| row[ki * SCHEDULERS.len() + si]).collect();
                let total = col.len();
                let timely = fraction(col.iter().filter(|r| r.0).count(), total);
                let unique = fraction(col.iter().filter(|r| r.1).count(), total);
                let awake = fraction(col.iter().filter(|r| r.2).count(), total);
                let max = col.iter().map(|r| r.3).max().unwrap_or(0);
                let unique_target = 1.0 - 5.0 / n as f64;
                f.check(
                    timely >= 0.99 && unique >= unique_target && awake >= 0.99 && max as f64 <= msg_bound,
                    format!(
                        "n={n} k={k} {}: time<=k+8 {timely:.3}, unique leader {unique:.4} (>= {unique_target:.4}), awake by k+4 {awake:.3}, max messages {max} <= {msg_bound:.0}",
                        sched.name()
                    ),
                );
            }
        }
    }
    f
}

fn async_levels(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    for n in [16usize, 64, 256] {
        let lg = (n as f64).log2();
        let (msg_bound, time_bound) = (LEVELS_MESSAGE_CONSTANT * n as f64 * lg, LEVELS_TIME_CONSTANT * lg);
        let runs: Vec<(bool, Option<u32>, u64, f64)> = seeds(opts, 500)
            .map(|seed| {
                let (ids, mapping) = inputs(n, (n * n) as u64, seed);
                let cfg = AsyncConfig::simultaneous(ids).with_seed(seed);
                let (out, nodes) =
                    execute_async(&AsyncLevels::new(), &cfg, &mapping, &mut uniform_random_delay(seed)).unwrap();
                (
                    out.leader_count == 1 && out.decided_all() && !out.exhausted,
                    level_bound_violation(&nodes),
                    out.messages_total,
                    out.elapsed_time,
                )
            })
            .collect();
        let unique = runs.iter().filter(|r| r.0).count();
        let level_bad = runs.iter().filter(|r| r.1.is_some()).count();
        let max_msgs = runs.iter().map(|r| r.2).max().unwrap_or(0);
        let max_time = runs.iter().map(|r| r.3).fold(0.0, f64::max);
        f.check(unique == runs.len(), format!("n={n}: unique leader {unique}/{}", runs.len()));
        f.check(level_bad == 0, format!("n={n}: level bound broken in {level_bad} runs"));
        f.check(
            max_msgs as f64 <= msg_bound,
            format!(
                "n={n}: max messages {max_msgs} <= {msg_bound:.0} (ratio {:.3})",
                max_msgs as f64 / (n as f64 * lg)
            ),
        );
        f.check(
            max_time <= time_bound,
            format!("n={n}: max time {max_time:.3} <= {time_bound:.2} (ratio {:.3})", max_time / lg),
        );
    }
    f
}

/// Weak components on every undirected edge set for small `n`, and random
/// graphs above, with edge directions drawn at random.
fn components_agree(opts: &VerifyOptions) -> (u64, u64) {
    use rand::Rng;
    let mut rng = stream_rng(opts.base_seed, Stream::Mapping);
    let (mut checked, mut bad) = (0u64, 0u64);
    let mut check = |g: &CommGraph| {
        checked += 1;
        bad += (g.weak_components() != bfs_components(g)) as u64;
    };
    for n in 1..=10usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let exhaustive = pairs.len() <= 15;
        let count: u64 = if exhaustive { 1 << pairs.len() } else { opts.trials(2000) };
        for mask in 0..count {
            let mut g = CommGraph::new(n);
            for (i, &(u, v)) in pairs.iter().enumerate() {
                let present = if exhaustive { mask >> i & 1 == 1 } else { rng.random_bool(0.15) };
                if present {
                    let (a, b) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
                    g.record_send(a, b).unwrap();
                }
            }
            check(&g);
        }
    }
    (checked, bad)
}

fn model(opts: &VerifyOptions) -> Findings {
    use rand::Rng;
    let mut f = Findings::new();

    let mut rng = stream_rng(opts.base_seed, Stream::Ids);
    let mappings = opts.trials(1000);
    let mut bad_mappings = 0;
    for _ in 0..mappings {
        let n = rng.random_range(1..=64);
        bad_mappings += audit_mapping(&PortMapping::random_with(n, &mut rng)).is_err() as u64;
    }
    f.check(bad_mappings == 0, format!("{bad_mappings} of {mappings} random mappings broken"));

    let audits: Vec<Result<(), String>> = seeds(opts, 1000)
        .enumerate()
        .map(|(i, seed)| {
            let n = 48;
            let (ids, mapping) = inputs(n, (n * n) as u64, seed);
            let cfg = AsyncConfig::new(ids.clone(), vec![(0, Time::ZERO)]).with_seed(seed).with_trace(true);
            let trace = match i % 4 {
                0 | 1 => {
                    let sched = if i % 4 == 0 { Hostile::FifoStress } else { Hostile::SlowCompetes };
                    let p = AsyncTradeoff::new(2, 4.0).unwrap();
                    run_async(&p, &cfg, &mapping, &mut sched.build(seed)).map(|o| o.trace)
                }
                2 => run_async(&AsyncLevels::new(), &cfg, &mapping, &mut fifo_stress(seed)).map(|o| o.trace),
                _ => {
                    let cfg = AsyncConfig::simultaneous(ids).with_seed(seed).with_trace(true);
                    run_async(&AsyncLevels::new(), &cfg, &mapping, &mut uniform_random_delay(seed)).map(|o| o.trace)
                }
            };
            match trace {
                Ok(t) => audit_async_trace(&t.unwrap_or_default()),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect();
    let failed: Vec<&String> = audits.iter().filter_map(|a| a.as_ref().err()).collect();
    f.check(
        failed.is_empty(),
        format!(
            "{} of {} async traces break FIFO or (0,1] delays{}",
            failed.len(),
            audits.len(),
            failed.first().map(|e| format!(", first: {e}")).unwrap_or_default()
        ),
    );

    let (checked, bad) = components_agree(opts);
    f.check(bad == 0, format!("weak components differ from BFS on {bad} of {checked} graphs"));
    f
}

#[derive(Default)]
struct CapacityTally {
    report: IsolationReport,
    runs: u64,
    wrong: u64,
    incomplete: u64,
}

impl CapacityTally {
    fn absorb(&mut self, other: CapacityTally) {
        self.report.checks += other.report.checks;
        self.report.violations += other.report.violations;
        self.report.inbound += other.report.inbound;
        self.report.cache_mismatches += other.report.cache_mismatches;
        self.runs += other.runs;
        self.wrong += other.wrong;
        self.incomplete += other.incomplete;
    }
}

/// Runs `protocol` against a fresh isolating adversary and checks its
/// bookkeeping: the component cache, and for `n ≤ 64` completability of the
/// wiring it chose.
fn isolated_run<P: SyncProtocol>(protocol: &P, cfg: &SyncConfig, expect: usize, seed: u64) -> CapacityTally {
    let n = cfg.n();
    let mut adv = IsolatingAdversary::new(n).with_audit(true);
    let out = run_sync(protocol, cfg, &mut adv).unwrap();
    let mut t = CapacityTally { report: adv.report(), runs: 1, ..CapacityTally::default() };
    t.wrong = (out.leaders() != vec![expect] || !out.decided_all()) as u64;
    if adv.mirror() != &out.comm_graph {
        t.report.cache_mismatches += 1;
    }
    if n <= 64 {
        let full = adv.completed(seed);
        t.incomplete = (audit_mapping(&full).is_err() || !adv.partial().is_compatible_with(&full)) as u64;
    }
    t
}

fn capacity(opts: &VerifyOptions) -> Findings {
    let mut f = Findings::new();
    let mut total = CapacityTally::default();
    for n in AG_SIZES {
        for ell in AG_ELLS {
            let ag = ImprovedAfekGafni::new(ell).unwrap();
            let tallies: Vec<CapacityTally> = seeds(opts, 200)
                .map(|seed| {
                    let (ids, _) = inputs(n, (n * n) as u64, seed);
                    isolated_run(&ag, &SyncConfig::new(ids.clone()).with_seed(seed), ids.argmax().unwrap(), seed)
                })
                .collect();
            tallies.into_iter().for_each(|t| total.absorb(t));
        }
    }
    for d in SMALL_ID_DS {
        for g in SMALL_ID_GS {
            let p = SmallIdBroadcast::new(d, g).unwrap();
            let tallies: Vec<CapacityTally> = seeds(opts, 100)
                .map(|seed| {
                    let (ids, _) = inputs(8, 8 * g, seed);
                    isolated_run(&p, &SyncConfig::new(ids.clone()).with_seed(seed), ids.argmin().unwrap(), seed)
                })
                .collect();
            tallies.into_iter().for_each(|t| total.absorb(t));
        }
    }
    let wrapped = SingleSend::new(ImprovedAfekGafni::new(3).unwrap());
    let tallies: Vec<CapacityTally> = seeds(opts, 100)
        .map(|seed| {
            let (ids, _) = inputs(16, 256, seed);
            let cfg = SyncConfig::new(ids.clone()).with_seed(seed).with_max_rounds(48);
            isolated_run(&wrapped, &cfg, ids.argmax().unwrap(), seed)
        })
        .collect();
    tallies.into_iter().for_each(|t| total.absorb(t));

    let r = total.report;
    f.check(
        r.violations == 0,
        format!(
            "{} runs, {} within-capacity component rounds, {} messages escaped (inbound merges {})",
            total.runs, r.checks, r.violations, r.inbound
        ),
    );
    f.check(total.wrong == 0, format!("{} runs elected the wrong leader under adaptive wiring", total.wrong));
    f.check(r.cache_mismatches == 0, format!("{} component cache mismatches", r.cache_mismatches));
    f.check(total.incomplete == 0, format!("{} partial wirings failed to complete", total.incomplete));
    f
}
