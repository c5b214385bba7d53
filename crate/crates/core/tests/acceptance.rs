//! Acceptance criteria, run in order by one test so that timed criteria do
//! not compete for cores. Each criterion prints one PASS/FAIL line.
//!
//! `BATREE_CRITERIA=1,4,9` restricts the run to the listed criteria.

mod common;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use batree::oracle::{apply_tree, height_bound, Op};
use batree::reclaim::{double_retires, poisoned_reads};
use batree::workload::{self, BenchOp, BenchVariant, Distribution, Mix, OpGen, QueryKind, WorkloadConfig};
use batree::{quiescent_compare, BatTree, Config, SequentialOracle, Size, Variant, Version, INF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Counters summed over every tree the suite builds, for the CAS-direction
/// check: version CASes, propagates, recursive CASes expecting non-nil, and
/// top-level CASes expecting nil.
static TALLY: [AtomicU64; 4] = [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)];

fn tally(t: &BatTree) {
    let s = t.stats();
    for (c, n) in TALLY.iter().zip([s.version_cas, s.propagates, s.nil_cas_nonnil_expected, s.top_cas_nil_expected]) {
        c.fetch_add(n, Ordering::Relaxed);
    }
}

fn hw_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

// 1. Sequential oracle equivalence.
fn sequential_equivalence() -> Verdict {
    const OPS: usize = 1_000_000;
    const MK: u64 = 10_000;
    let start = Instant::now();
    let mut configs = Vec::new();
    for v in Variant::ALL {
        configs.push(Config::new(v));
        configs.push(Config::new(v).unbalanced());
    }
    for (i, cfg) in configs.iter().enumerate() {
        let t = BatTree::with_config(cfg.clone());
        let mut o = SequentialOracle::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for step in 0..OPS {
            let k = rng.random_range(0..MK);
            let op = match rng.random_range(0..10) {
                0..=2 => Op::Insert(k),
                3..=5 => Op::Delete(k),
                6 => Op::Find(k),
                7 => Op::Rank(k),
                8 => Op::Select(rng.random_range(0..=o.len() + 1)),
                _ => Op::RangeCount(k, rng.random_range(0..MK)),
            };
            let (got, want) = (apply_tree(&t, op), o.apply(op));
            if got != want {
                return verdict(false, format!("{cfg:?} step {step}: {op:?} gave {got:?}, oracle {want:?}"));
            }
        }
        if let Err(d) = quiescent_compare(&t, &o) {
            return verdict(false, format!("{cfg:?}: {d}"));
        }
        tally(&t);
    }
    let took = start.elapsed();
    verdict(
        took < Duration::from_secs(60),
        format!("6 configs x {OPS} ops, MK {MK}, exact; {} (limit 60 s)", secs(took)),
    )
}

// 2. Quiescent concurrent equivalence on disjoint partitions.
fn concurrent_equivalence() -> Verdict {
    const THREADS: u64 = 8;
    const OPS: usize = 100_000;
    let start = Instant::now();
    let mut heights = Vec::new();
    for v in Variant::ALL {
        let t = BatTree::with_config(Config::new(v));
        let barrier = Barrier::new(THREADS as usize);
        let parts: Vec<SequentialOracle> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..THREADS)
                .map(|th| {
                    let (t, barrier) = (&t, &barrier);
                    s.spawn(move || {
                        let mut o = SequentialOracle::new();
                        let mut rng = ChaCha8Rng::seed_from_u64(th);
                        barrier.wait();
                        for _ in 0..OPS {
                            let k = rng.random_range(0..2000) * THREADS + th;
                            match rng.random_range(0..5) {
                                0 | 1 => assert_eq!(t.insert(k).unwrap(), o.insert(k)),
                                2 | 3 => assert_eq!(t.delete(k).unwrap(), o.delete(k)),
                                _ => assert_eq!(t.contains(k).unwrap(), o.find(k)),
                            }
                        }
                        t.detach_thread();
                        o
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut all = SequentialOracle::new();
        for p in &parts {
            for &k in p.keys() {
                all.insert(k);
            }
        }
        match quiescent_compare(&t, &all) {
            Ok(r) => heights.push(format!("{v} h={} n={}", r.height, r.keys)),
            Err(d) => return verdict(false, format!("{v}: {d}")),
        }
        tally(&t);
    }
    let took = start.elapsed();
    verdict(
        took < Duration::from_secs(120),
        format!("8 threads x {OPS} ops, {}; {} (limit 120 s)", heights.join(", "), secs(took)),
    )
}

/// Snapshot self-consistency: full-range count, root size and walked
/// leaves agree, and the walk found BST order and exact sizes.
fn check_snapshot(t: &BatTree) -> Result<u64, String> {
    let s = t.snapshot();
    let count = s.range_count(0, INF - 1);
    let walk = s.walk().map_err(|e| e.to_string())?;
    if count != s.len() || walk.keys.len() as u64 != count {
        return Err(format!("range {count}, root {}, leaves {}", s.len(), walk.keys.len()));
    }
    Ok(count)
}

// 3. Snapshot consistency under stress, and monotone counts.
fn snapshot_consistency() -> Verdict {
    let workers = hw_threads().max(4) as u64;
    let per_variant = Duration::from_secs(10);
    let mut snaps = 0;
    for v in Variant::ALL {
        let t = BatTree::with_config(Config::new(v));
        let stop = AtomicBool::new(false);
        let res = std::thread::scope(|s| {
            for th in 0..workers {
                let (t, stop) = (&t, &stop);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(th + 30);
                    while !stop.load(Ordering::Relaxed) {
                        let k = rng.random_range(0..10_000);
                        match rng.random_range(0..4) {
                            0 => _ = t.insert(k),
                            1 => _ = t.delete(k),
                            2 => _ = t.contains(k),
                            _ => _ = t.range_count(k, k + 100),
                        }
                    }
                    t.detach_thread();
                });
            }
            let end = Instant::now() + per_variant;
            let mut r = Ok(());
            while Instant::now() < end {
                if let Err(e) = check_snapshot(&t) {
                    r = Err(e);
                    break;
                }
                snaps += 1;
            }
            stop.store(true, Ordering::Relaxed);
            r
        });
        if let Err(e) = res {
            return verdict(false, format!("{v}: {e}"));
        }
        tally(&t);
    }
    for v in Variant::ALL {
        for inserting in [true, false] {
            if let Err(e) = monotone(v, inserting, workers) {
                return verdict(false, format!("{v} inserting={inserting}: {e}"));
            }
        }
    }
    verdict(
        true,
        format!("{snaps} snapshots over 30 s with {workers} updaters, zero failures; monotone insert-only/delete-only"),
    )
}

fn monotone(v: Variant, inserting: bool, workers: u64) -> Result<(), String> {
    const N: u64 = 20_000;
    let t = BatTree::with_config(Config::new(v));
    if !inserting {
        for k in 0..N {
            t.insert(k).unwrap();
        }
    }
    let done = AtomicU64::new(0);
    let r = std::thread::scope(|s| {
        for th in 0..workers {
            let (t, done) = (&t, &done);
            s.spawn(move || {
                for k in (th..N).step_by(workers as usize) {
                    if inserting {
                        t.insert(k).unwrap();
                    } else {
                        t.delete(k).unwrap();
                    }
                }
                t.detach_thread();
                done.fetch_add(1, Ordering::SeqCst);
            });
        }
        let mut last = if inserting { 0 } else { N };
        loop {
            let finished = done.load(Ordering::SeqCst) == workers;
            let c = check_snapshot(&t)?;
            if (inserting && c < last) || (!inserting && c > last) {
                return Err(format!("count went from {last} to {c}"));
            }
            last = c;
            if finished {
                return Ok(());
            }
        }
    });
    tally(&t);
    r
}

// 4. Staged delegation scenarios.
fn delegation_safety() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut run = |name: &str, r: Result<common::Observed, String>, check: &dyn Fn(&common::Observed) -> bool| match r {
        Ok(o) if o.len == o.expected_len && check(&o) => {}
        Ok(o) => failures.push(format!("{name}: {o:?}")),
        Err(e) => failures.push(format!("{name}: {e}")),
    };
    run("double failure", common::double_failure(), &|o| o.delegations == 1);
    run("eager single failure", common::eager_single_failure(), &|o| o.delegations == 1);
    run("finalized node", common::finalized_no_delegation(), &|o| o.delegations == 0);
    for v in Variant::ALL {
        for first in [true, false] {
            run(&format!("rotation race {v} refresh_first={first}"), common::rotation_race(v, first), &|_| true);
        }
    }
    run("timeout resume", common::timeout_resume(), &|o| o.timeouts >= 1);
    let took = start.elapsed();
    let pass = failures.is_empty() && took < Duration::from_secs(10);
    let detail = if failures.is_empty() {
        format!("10 schedules, root size matches oracle; {} (limit 10 s)", secs(took))
    } else {
        failures.join("; ")
    };
    verdict(pass, detail)
}

// 5. CAS direction, over every tree the suite built.
fn cas_direction() -> Verdict {
    let [cas, props, nil_dir, top_dir] = TALLY.each_ref().map(|c| c.load(Ordering::Relaxed));
    verdict(
        nil_dir == 0 && top_dir == 0 && cas > 0,
        format!(
            "{cas} version CASes over {props} propagates: {nil_dir} recursive with non-nil expected, {top_dir} top-level with nil expected"
        ),
    )
}

// 6. Reclamation under poison-on-reclaim stress.
fn reclamation() -> Verdict {
    let threads = hw_threads().max(4) as u64;
    let per_variant = Duration::from_secs(20);
    let before = (poisoned_reads(), double_retires());
    let mut notes = Vec::new();
    let mut pass = cfg!(debug_assertions);
    if !pass {
        notes.push("poison checks need debug assertions".to_string());
    }
    for v in Variant::ALL {
        let t = BatTree::with_config(Config::new(v).poison(true));
        let stop = AtomicBool::new(false);
        std::thread::scope(|s| {
            for th in 0..threads {
                let (t, stop) = (&t, &stop);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(th + 60);
                    while !stop.load(Ordering::Relaxed) {
                        let k = rng.random_range(0..4096);
                        match rng.random_range(0..8) {
                            0..=2 => _ = t.insert(k),
                            3..=5 => _ = t.delete(k),
                            6 => _ = t.range_count(k, k + 512),
                            _ => {
                                let snap = t.snapshot();
                                std::hint::black_box(snap.rank(k));
                            }
                        }
                    }
                    t.detach_thread();
                });
            }
            std::thread::sleep(per_variant);
            stop.store(true, Ordering::Relaxed);
        });
        t.flush();
        let rs = t.reclaim_stats();
        let cap = t.config().reclaim.watermark as u64 * threads;
        let ok = rs.retired == rs.reclaimed && rs.limbo_peak_total < cap;
        pass &= ok;
        notes.push(format!(
            "{v}: retired {} reclaimed {} peak limbo {} < {cap}",
            rs.retired, rs.reclaimed, rs.limbo_peak_total
        ));
        tally(&t);
    }
    let after = (poisoned_reads(), double_retires());
    pass &= after == before;
    notes.push(format!("poisoned reads {}, double retires {}", after.0 - before.0, after.1 - before.1));
    verdict(pass, format!("{threads} threads, 60 s: {}", notes.join("; ")))
}

fn trial(cfg: &WorkloadConfig) -> workload::Metrics {
    let rows: Vec<_> = (0..cfg.trials).map(|i| workload::run_trial(cfg, i).unwrap()).collect();
    workload::summarize(&rows).unwrap().metrics
}

// 7. Balancing trend on sorted inserts.
fn balancing_trend() -> Verdict {
    let threads = hw_threads().max(8);
    let base = WorkloadConfig {
        threads,
        max_key: 10_000_000,
        mix: Mix::new(100, 0, 0, 0),
        dist: Distribution::Sorted,
        prefill: false,
        seconds: 3.0,
        trials: 1,
        ..WorkloadConfig::default()
    };
    let bat = trial(&WorkloadConfig { variant: BenchVariant::Tree(Variant::Bat), ..base.clone() });
    let flat = trial(&WorkloadConfig { variant: BenchVariant::UnbalancedBaseline, ..base });
    let speedup = bat.throughput / flat.throughput;
    let nodes = bat.avg_nodes_per_propagate / flat.avg_nodes_per_propagate;
    verdict(
        speedup >= 2.0 && nodes < 0.5,
        format!(
            "{threads} threads: throughput {:.0} vs {:.0} ops/s ({speedup:.1}x, need >= 2); nodes/propagate {:.1} vs {:.1} ({nodes:.3}x, need < 0.5)",
            bat.throughput, flat.throughput, bat.avg_nodes_per_propagate, flat.avg_nodes_per_propagate
        ),
    )
}

// 8. Delegation trend on an update-heavy mix.
fn delegation_trend() -> Verdict {
    let threads = hw_threads();
    let base = WorkloadConfig {
        threads,
        max_key: 100_000,
        mix: Mix::new(50, 50, 0, 0),
        dist: Distribution::Uniform,
        seconds: 3.0,
        trials: 3,
        ..WorkloadConfig::default()
    };
    let bat = trial(&WorkloadConfig { variant: BenchVariant::Tree(Variant::Bat), ..base.clone() });
    let eager = trial(&WorkloadConfig { variant: BenchVariant::Tree(Variant::BatEagerDel), ..base });
    let speedup = eager.throughput / bat.throughput;
    verdict(
        speedup >= 1.2 && eager.avg_cas_per_propagate < bat.avg_cas_per_propagate,
        format!(
            "{threads} hardware threads: throughput {:.0} vs {:.0} ops/s ({speedup:.2}x, need >= 1.2); CAS/propagate {:.2} vs {:.2}",
            eager.throughput, bat.throughput, eager.avg_cas_per_propagate, bat.avg_cas_per_propagate
        ),
    )
}

/// Reference range query: visits every leaf of the snapshot in `[lo, hi]`.
fn leaf_walk_count(root: &Version<Size>, lo: u64, hi: u64) -> u64 {
    let mut n = 0;
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        match v.children() {
            None => n += u64::from(v.key() >= lo && v.key() <= hi && v.key() != INF),
            Some((l, r)) => {
                if lo < v.key() {
                    stack.push(l);
                }
                if hi >= v.key() {
                    stack.push(r);
                }
            }
        }
    }
    n
}

/// Throughput of the 10-10-40-40 mix with range queries answered by `augmented`
/// or by the leaf walk.
fn range_mix(t: &BatTree, rq: u64, augmented: bool, threads: usize, dur: Duration) -> f64 {
    let cfg = WorkloadConfig {
        threads,
        max_key: 200_000,
        rq_size: rq,
        mix: Mix::new(10, 10, 40, 40),
        query: QueryKind::Range,
        seed: rq,
        ..WorkloadConfig::default()
    };
    let stop = AtomicBool::new(false);
    let total = AtomicU64::new(0);
    let barrier = Barrier::new(threads + 1);
    let start = std::thread::scope(|s| {
        for th in 0..threads {
            let (stop, total, barrier) = (&stop, &total, &barrier);
            let mut gen = OpGen::new(&cfg, th, None, Arc::new(AtomicU64::new(0)));
            s.spawn(move || {
                barrier.wait();
                let mut n = 0;
                while !stop.load(Ordering::Relaxed) {
                    match gen.next_op() {
                        BenchOp::Insert(k) => _ = t.insert(k),
                        BenchOp::Delete(k) => _ = t.delete(k),
                        BenchOp::Find(k) => _ = t.contains(k),
                        BenchOp::Range(lo, hi) if augmented => _ = std::hint::black_box(t.range_count(lo, hi)),
                        BenchOp::Range(lo, hi) => _ = std::hint::black_box(t.read(|v| leaf_walk_count(v, lo, hi))),
                        op => unreachable!("{op:?}"),
                    }
                    n += 1;
                }
                total.fetch_add(n, Ordering::Relaxed);
                t.detach_thread();
            });
        }
        barrier.wait();
        let start = Instant::now();
        std::thread::sleep(dur);
        stop.store(true, Ordering::Relaxed);
        start
    });
    total.load(Ordering::Relaxed) as f64 / start.elapsed().as_secs_f64()
}

// 9. Range-size flatness against a leaf-walking reference.
fn range_flatness() -> Verdict {
    const SIZES: [u64; 4] = [8, 256, 8192, 65536];
    let threads = hw_threads();
    let t = BatTree::new();
    workload::prefill(&t, 200_000, 9);
    // The reference has to agree with the augmented query before it is timed.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let lo = rng.random_range(0..200_000);
        let hi = lo + rng.random_range(0..70_000);
        if t.range_count(lo, hi) != t.read(|v| leaf_walk_count(v, lo, hi)) {
            return verdict(false, format!("leaf walk disagrees on [{lo}, {hi}]"));
        }
    }
    let dur = Duration::from_secs(1);
    let aug: Vec<f64> = SIZES.iter().map(|&rq| range_mix(&t, rq, true, threads, dur)).collect();
    let walk: Vec<f64> = SIZES.iter().map(|&rq| range_mix(&t, rq, false, threads, dur)).collect();
    tally(&t);
    let spread = aug.iter().cloned().fold(0.0, f64::max) / aug.iter().cloned().fold(f64::INFINITY, f64::min);
    let drop = walk[0] / walk[3];
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join("/");
    verdict(
        spread < 3.0 && drop > 10.0,
        format!(
            "{} keys, RQ 8/256/8192/65536: augmented {} ops/s ({spread:.2}x spread, need < 3); leaf walk {} ops/s ({drop:.1}x drop, need > 10)",
            t.len(),
            fmt(&aug),
            fmt(&walk)
        ),
    )
}

// 10. Height after sorted insertion, balanced and not.
fn sorted_heights() -> Verdict {
    const N: u64 = 1 << 16;
    let start = Instant::now();
    let t = BatTree::new();
    for k in 0..N {
        t.insert(k).unwrap();
    }
    let a = t.audit();
    tally(&t);
    drop(t);
    let balanced_took = start.elapsed();
    let u = BatTree::with_config(Config::default().unbalanced());
    for k in 0..N {
        u.insert(k).unwrap();
    }
    let ua = u.audit();
    tally(&u);
    drop(u);
    let took = start.elapsed();
    let bound = height_bound(N);
    verdict(
        a.height <= 34
            && a.height <= bound
            && a.violations() == 0
            && ua.height as u64 >= N / 2
            && took < Duration::from_secs(30),
        format!(
            "balanced height {} (<= 34), {} violations, {}; unbalanced height {} (>= {}); total {} (limit 30 s)",
            a.height,
            a.violations(),
            secs(balanced_took),
            ua.height,
            N / 2,
            secs(took)
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "sequential oracle equivalence", sequential_equivalence),
    (2, "quiescent concurrent equivalence", concurrent_equivalence),
    (3, "snapshot consistency", snapshot_consistency),
    (4, "delegation safety", delegation_safety),
    (6, "reclamation safety and boundedness", reclamation),
    (7, "balancing trend", balancing_trend),
    (8, "delegation trend", delegation_trend),
    (9, "range-size flatness", range_flatness),
    (10, "height after sorted insertion", sorted_heights),
    // Last, so that it covers every tree built above.
    (5, "CAS-direction discipline", cas_direction),
];

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<u32>> =
        std::env::var("BATREE_CRITERIA").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut results = Vec::new();
    println!();
    for (id, name, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let line = format!(
            "criterion {id:>2} {} {name}: {} [{}]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            secs(start.elapsed())
        );
        println!("{line}");
        results.push((id, v.pass, line));
    }
    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    for (_, _, line) in &results {
        println!("  {line}");
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
