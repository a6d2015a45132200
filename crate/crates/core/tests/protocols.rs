use std::collections::{BTreeMap, BTreeSet};

use clique_lab::event::{execute_async, run_async, uniform_random_delay, unit_delay, AsyncConfig, Time};
use clique_lab::net::{IdAssignment, PortMapping};
use clique_lab::protocols::{
    AsyncLevels, AsyncTradeoff, ImprovedAfekGafni, LasVegasThreeRound, SmallIdBroadcast, TwoRoundAdversarial,
};
use clique_lab::rng::{stream_rng, Stream};
use clique_lab::sync::{execute_sync, run_sync, SyncConfig, WakeMode};
use clique_lab::trace::EventKind;
use clique_lab::verify::level_bound_violation;
use clique_lab::Decision;
use proptest::prelude::*;
use rand::seq::index::sample;

/// Smallest `m` with `m^den ≥ n^num`, in integers.
fn ceil_root(n: u64, num: u32, den: u32) -> u64 {
    let target = (n as u128).pow(num);
    let mut m = (target as f64).powf(1.0 / den as f64) as u64;
    while (m as u128).pow(den) >= target && m > 0 {
        m -= 1;
    }
    while (m as u128).pow(den) < target {
        m += 1;
    }
    m
}

/// Per-run message bound for the improved deterministic algorithm: each
/// iteration costs the survivors' fanout plus at most one reply per node,
/// and the final broadcast costs `n − 1` per survivor.
fn ag_bound(n: u64, ell: u32) -> u64 {
    let k = (ell + 3) / 2;
    let survivors = |i: u32| if i == 0 { n } else { ceil_root(n, k - 1 - i, k - 1) };
    let fanout = |i: u32| ceil_root(n, i, k - 1).min(n - 1);
    (1..=k - 2).map(|i| survivors(i - 1) * fanout(i) + n).sum::<u64>() + survivors(k - 2) * (n - 1)
}

fn random_ids(n: usize, universe: u64, seed: u64) -> IdAssignment {
    IdAssignment::random(n, universe, &mut stream_rng(seed, Stream::Ids))
}

#[test]
fn ag_bound_oracle_matches_hand_count() {
    assert_eq!(ag_bound(16, 3), 16 * 4 + 16 + 4 * 15);
    assert_eq!(ceil_root(1000, 1, 3), 10);
    assert_eq!(ceil_root(1001, 1, 3), 11);
}

#[test]
fn improved_ag_two_nodes() {
    let ids = IdAssignment::new(vec![5, 9], 9).unwrap();
    let out =
        run_sync(&ImprovedAfekGafni::new(3).unwrap(), &SyncConfig::new(ids), &mut PortMapping::random(2, 0)).unwrap();
    assert_eq!(out.decisions, vec![Decision::NonLeader, Decision::Leader]);
}

#[test]
fn improved_ag_sixteen_nodes_within_hand_bound() {
    for seed in 0..100 {
        let ids = random_ids(16, 256, seed);
        let out = run_sync(
            &ImprovedAfekGafni::new(3).unwrap(),
            &SyncConfig::new(ids.clone()),
            &mut PortMapping::random(16, seed),
        )
        .unwrap();
        assert_eq!(out.leaders(), vec![ids.argmax().unwrap()]);
        assert_eq!(out.rounds_used, 3);
        assert!(out.messages_total <= 140, "seed {seed}: {}", out.messages_total);
    }
}

#[test]
fn improved_ag_sixty_four_nodes_five_rounds() {
    let ag = ImprovedAfekGafni::new(5).unwrap();
    let envelope = 8.0 * 5.0 * 64f64.powf(1.0 + 2.0 / 6.0);
    for seed in 0..50 {
        let out =
            run_sync(&ag, &SyncConfig::new(random_ids(64, 4096, seed)), &mut PortMapping::random(64, seed)).unwrap();
        assert!(out.messages_total <= ag_bound(64, 5));
        assert!((out.messages_total as f64) <= envelope);
        assert_eq!(ag.message_bound(64), ag_bound(64, 5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn improved_ag_elects_the_max_id(n in 2usize..=64, ell in prop::sample::select(vec![3u64, 5, 7]), seed in any::<u64>()) {
        let ids = random_ids(n, (n * n) as u64, seed);
        let cfg = SyncConfig::new(ids.clone()).with_seed(seed);
        let out = run_sync(&ImprovedAfekGafni::new(ell).unwrap(), &cfg, &mut PortMapping::random(n, seed)).unwrap();
        prop_assert_eq!(out.leaders(), vec![ids.argmax().unwrap()]);
        prop_assert_eq!(out.rounds_used, ell);
        prop_assert!(out.decided_all());
        prop_assert!(out.messages_total <= ag_bound(n as u64, ell as u32));
    }

    #[test]
    fn two_round_never_elects_two(n in 2usize..=100, seed in any::<u64>(), mask in any::<u128>()) {
        let mut wake: BTreeSet<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        if wake.is_empty() {
            wake.insert(0);
        }
        let cfg = SyncConfig::new(IdAssignment::sequential(n)).with_seed(seed).with_wake(WakeMode::Adversarial(wake));
        let (out, nodes) = execute_sync(&TwoRoundAdversarial::new(0.1).unwrap(), &cfg, &mut PortMapping::random(n, seed)).unwrap();
        let ranks: Vec<_> = nodes.iter().filter_map(|v| v.rank()).collect();
        prop_assert!(out.leader_count() <= 1);
        if ranks.len() == 1 {
            prop_assert_eq!(out.leader_count(), 1, "a lone candidate always wins");
        }
        if out.leader_count() == 1 {
            let top = ranks.iter().max().copied();
            let leader = out.leaders()[0];
            prop_assert_eq!(nodes[leader].rank(), top);
        }
        prop_assert!(out.rounds_used <= 2);
    }
}

// Every (d, g) pair over random ID subsets of the universe.
#[test]
fn small_id_exhaustive_at_eight_nodes() {
    let n = 8;
    for d in [1u64, 2, 4] {
        for g in [1u64, 2] {
            for trial in 0..100 {
                let mut rng = stream_rng(trial, Stream::Ids);
                let ids: Vec<u64> =
                    sample(&mut rng, (n * g) as usize, n as usize).into_iter().map(|i| i as u64 + 1).collect();
                let min = *ids.iter().min().unwrap();
                let block = (min - 1) / (d * g) + 1;
                let in_block = ids.iter().filter(|&&id| (id - 1) / (d * g) + 1 == block).count() as u64;
                let assignment = IdAssignment::new(ids.clone(), n * g).unwrap();
                let out = run_sync(
                    &SmallIdBroadcast::new(d, g).unwrap(),
                    &SyncConfig::new(assignment.clone()),
                    &mut PortMapping::random(n as usize, trial),
                )
                .unwrap();
                assert_eq!(out.leaders(), vec![assignment.argmin().unwrap()]);
                assert_eq!(out.rounds_used, min.div_ceil(d * g));
                assert!(out.rounds_used <= n.div_ceil(d));
                assert_eq!(out.messages_total, in_block * (n - 1));
                assert!(out.messages_total <= d * g * (n - 1));
            }
        }
    }
}

#[test]
fn small_id_examples() {
    let run = |ids: Vec<u64>, d, g| {
        let a = IdAssignment::new(ids, 4 * g).unwrap();
        run_sync(&SmallIdBroadcast::new(d, g).unwrap(), &SyncConfig::new(a), &mut PortMapping::random(4, 0)).unwrap()
    };
    let out = run(vec![1, 2, 3, 4], 1, 1);
    assert_eq!((out.leaders(), out.rounds_used, out.messages_total), (vec![0], 1, 3));
    let out = run(vec![5, 6, 7, 8], 2, 2);
    assert_eq!((out.leaders(), out.rounds_used, out.messages_total), (vec![0], 2, 12));
    let out = run(vec![3, 1, 4, 2], 4, 1);
    assert_eq!((out.leaders(), out.rounds_used, out.messages_total), (vec![1], 1, 12));
}

#[test]
fn las_vegas_is_always_safe_and_unanimous() {
    let lv = LasVegasThreeRound::default();
    for seed in 0..300 {
        let n = 2 + (seed % 63) as usize;
        let cfg = SyncConfig::new(IdAssignment::sequential(n)).with_seed(seed).with_max_rounds(300);
        let (out, nodes) = execute_sync(&lv, &cfg, &mut PortMapping::random(n, seed)).unwrap();
        assert_eq!(out.leader_count(), 1, "seed {seed}");
        assert!(out.decided_all());
        let attempts: BTreeSet<u64> = nodes.iter().map(|v| v.attempts()).collect();
        assert_eq!(attempts.len(), 1, "restart decisions split: {attempts:?}");
        assert_eq!(out.rounds_used, 3 * nodes[0].attempts());
    }
}

// With few candidates some attempts have none and restart; the first
// attempt with exactly one candidate costs two messages per referee plus
// the announcement.
#[test]
fn las_vegas_attempt_costs() {
    let lv = LasVegasThreeRound::new(0.5, 4.0).unwrap();
    let n = 64;
    let referees = lv.referee_count(n) as u64;
    let (mut restarts, mut singles) = (0, 0);
    for seed in 0..200 {
        let cfg = SyncConfig::new(IdAssignment::sequential(n)).with_seed(seed).with_max_rounds(3000).with_trace(true);
        let out = run_sync(&lv, &cfg, &mut PortMapping::random(n, seed)).unwrap();
        assert_eq!(out.leader_count(), 1);
        let per_round = &out.per_round_messages;
        if per_round[0] == 0 {
            restarts += 1;
            assert_eq!(per_round[..3], [0, 0, 0], "an empty attempt stays silent");
            assert!(out.rounds_used > 3);
        }
        let trace = out.trace.unwrap();
        let first_senders: BTreeSet<usize> =
            trace.iter().filter(|r| r.round == 1 && r.event.kind == EventKind::Send).map(|r| r.event.node).collect();
        if first_senders.len() == 1 && out.rounds_used == 3 {
            singles += 1;
            assert_eq!(out.messages_total, 2 * referees + (n as u64 - 1));
        }
    }
    assert!(restarts > 0 && singles > 0, "restarts {restarts}, singles {singles}");
}

fn tradeoff_run(
    n: usize,
    k: u32,
    seed: u64,
) -> (clique_lab::event::AsyncOutcome, Vec<clique_lab::protocols::TradeoffNode>) {
    let ids = random_ids(n, (n * n) as u64, seed);
    let cfg = AsyncConfig::new(ids, vec![((seed as usize) % n, Time::ZERO)]).with_seed(seed).with_trace(true);
    execute_async(
        &AsyncTradeoff::new(k, 4.0).unwrap(),
        &cfg,
        &PortMapping::random(n, seed),
        &mut uniform_random_delay(seed),
    )
    .unwrap()
}

// Trace predicates: a loser never leads, and each compete gets one answer.
#[test]
fn tradeoff_trace_predicates() {
    for seed in 0..40 {
        let (out, _) = tradeoff_run(128, 2, seed);
        let trace = out.trace.as_ref().unwrap();
        let mut lost = BTreeSet::new();
        let mut competes: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        let mut sent_on = BTreeMap::new();
        for r in trace {
            let (e, port) = (&r.event, r.event.port.unwrap_or(0));
            match (e.kind, e.payload) {
                (EventKind::Send, _) => {
                    sent_on.insert(e.msg, (e.node, port));
                }
                (EventKind::Deliver, Some("lose")) => {
                    lost.insert(e.node);
                }
                (EventKind::Deliver, Some("compete")) => *competes.entry((e.node, port)).or_default() += 1,
                _ => {}
            }
            if e.kind == EventKind::Send && matches!(e.payload, Some("win" | "lose")) {
                *competes.entry((e.node, port)).or_default() -= 1;
            }
        }
        assert!(out.leaders().iter().all(|v| !lost.contains(v)), "seed {seed}");
        assert!(competes.values().all(|&c| c == 0), "seed {seed}: unanswered or doubly answered compete");
        assert_eq!(out.leader_count, 1);
    }
}

#[test]
fn tradeoff_wakes_everyone_in_time() {
    for n in [256usize, 1024] {
        for k in [2u32, 3] {
            let ids = random_ids(n, (n * n) as u64, 7);
            let cfg = AsyncConfig::new(ids, vec![(0, Time::ZERO)]).with_seed(7);
            let out =
                run_async(&AsyncTradeoff::new(k, 4.0).unwrap(), &cfg, &PortMapping::random(n, 7), &mut unit_delay())
                    .unwrap();
            let awake = out.all_awake_after().unwrap().as_units();
            assert!(awake <= (k + 4) as f64, "n={n} k={k}: {awake}");
            assert!(out.elapsed_time <= (k + 8) as f64);
        }
    }
}

#[test]
fn tradeoff_rejects_large_k() {
    let cfg = AsyncConfig::simultaneous(IdAssignment::sequential(16));
    let too_big = AsyncTradeoff::max_k(16) + 1;
    assert!(run_async(
        &AsyncTradeoff::new(too_big, 4.0).unwrap(),
        &cfg,
        &PortMapping::random(16, 0),
        &mut unit_delay()
    )
    .is_err());
}

#[test]
fn levels_two_nodes() {
    let ids = IdAssignment::new(vec![3, 7], 9).unwrap();
    let (out, nodes) = execute_async(
        &AsyncLevels::new(),
        &AsyncConfig::simultaneous(ids),
        &PortMapping::random(2, 1),
        &mut unit_delay(),
    )
    .unwrap();
    assert_eq!(out.leaders(), vec![1]);
    assert!(!nodes[0].is_alive());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn levels_elect_one_leader_within_level_bound(n in 1usize..=40, seed in any::<u64>(), stagger in any::<bool>()) {
        let ids = random_ids(n, (n * n).max(1) as u64, seed);
        let schedule = (0..n)
            .map(|v| (v, if stagger { Time::from_units((v % 5) as f64 * 0.3) } else { Time::ZERO }))
            .collect();
        let cfg = AsyncConfig::new(ids, schedule).with_seed(seed);
        let (out, nodes) = execute_async(&AsyncLevels::new(), &cfg, &PortMapping::random(n, seed), &mut uniform_random_delay(seed)).unwrap();
        prop_assert_eq!(out.leader_count, 1);
        prop_assert!(out.decided_all());
        // Count by level against n / min(2^i, n), straight from the nodes.
        let top = nodes.iter().filter_map(|v| v.completed_level()).max().unwrap_or(0);
        for i in 0..=top {
            let reached = nodes.iter().filter(|v| v.completed_level().is_some_and(|c| c >= i)).count();
            let span = (1usize << i.min(62)).min(n);
            prop_assert!(reached * span <= n, "level {}: {} candidates", i, reached);
        }
        prop_assert_eq!(level_bound_violation(&nodes), None);
    }
}
