//! Staged interleavings shared by the scenario tests and the acceptance suite.

#![allow(dead_code)]

use std::sync::Arc;

use batree::staging::*;
use batree::{quiescent_compare, BatTree, Config, SequentialOracle, Shape, Variant, INF};

/// What a scenario observed, for assertions beyond oracle agreement.
#[derive(Debug)]
pub struct Observed {
    pub outcome: StagedOutcome<bool>,
    pub delegations: u64,
    pub timeouts: u64,
    pub len: u64,
    pub expected_len: u64,
}

type Work = fn(&BatTree, u64) -> bool;

fn ins(t: &BatTree, k: u64) -> bool {
    t.insert(k).unwrap()
}

fn del(t: &BatTree, k: u64) -> bool {
    t.delete(k).unwrap()
}

fn staged(tree: &Arc<BatTree>, work: &[(Work, u64)]) -> StagedRun<bool> {
    let mut run = StagedRun::new();
    for &(f, k) in work {
        let t = tree.clone();
        run = run.thread(move || {
            let r = f(&t, k);
            t.detach_thread();
            r
        });
    }
    run
}

fn finish(tree: &BatTree, outcome: StagedOutcome<bool>, oracle: &SequentialOracle) -> Result<Observed, String> {
    quiescent_compare(tree, oracle).map_err(|d| d.to_string())?;
    let s = tree.stats();
    Ok(Observed {
        outcome,
        delegations: s.delegations,
        timeouts: s.timeouts,
        len: tree.len(),
        expected_len: oracle.len(),
    })
}

fn prefilled(cfg: Config, keys: &[u64]) -> (Arc<BatTree>, SequentialOracle) {
    let t = BatTree::with_config(cfg);
    let mut o = SequentialOracle::new();
    for &k in keys {
        t.insert(k).unwrap();
        o.insert(k);
    }
    t.reset_stats();
    (Arc::new(t), o)
}

const PREFILL: [u64; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

/// Three inserters reach the root together. The third wins the first round,
/// the second wins the second round, and the first, having failed twice at a
/// live node, links itself to the second.
pub fn double_failure() -> Result<Observed, String> {
    let (t, mut o) = prefilled(Config::new(Variant::BatDel), &PREFILL);
    let run = staged(&t, &[(ins, 15), (ins, 45), (ins, 75)]);
    let out = run
        .run(&[
            Step::at(0, ROOT_CAS_PRE),
            Step::at(1, ROOT_CAS_PRE),
            Step::at(2, ROOT_CAS_POST),
            Step::at(0, ROOT_CAS_PRE),
            Step::at(1, ROOT_CAS_PRE),
            Step::at(1, ROOT_CAS_POST),
            Step::at(0, DELEGATEE_WRITE),
        ])
        .map_err(|e| e.to_string())?;
    for k in [15, 45, 75] {
        o.insert(k);
    }
    finish(&t, out, &o)
}

/// Eager variant: one failed root refresh against a live node is enough to
/// delegate.
pub fn eager_single_failure() -> Result<Observed, String> {
    let (t, mut o) = prefilled(Config::new(Variant::BatEagerDel), &PREFILL);
    let run = staged(&t, &[(ins, 15), (ins, 45)]);
    let out = run
        .run(&[Step::at(0, ROOT_CAS_PRE), Step::at(1, ROOT_CAS_POST), Step::at(0, DELEGATEE_WRITE)])
        .map_err(|e| e.to_string())?;
    o.insert(15);
    o.insert(45);
    finish(&t, out, &o)
}

/// Two absent-key deletes and a real delete meet at the parent of leaf 10.
/// The real delete removes that parent, so the first thread's double
/// failure there must not delegate.
pub fn finalized_no_delegation() -> Result<Observed, String> {
    let shape = Shape::node(
        INF,
        1,
        Shape::node(
            30,
            1,
            Shape::node(20, 1, Shape::leaf(10), Shape::leaf(20)),
            Shape::node(40, 1, Shape::leaf(30), Shape::leaf(40)),
        ),
        Shape::leaf(INF),
    );
    let t = Arc::new(BatTree::from_shape(&shape, Config::new(Variant::BatDel).unbalanced()));
    let mut o = SequentialOracle::new();
    for k in [10, 20, 30, 40] {
        o.insert(k);
    }
    let run = staged(&t, &[(del, 15), (del, 10), (del, 17)]);
    let out = run
        .run(&[
            Step::at_key(0, REFRESH_CAS_PRE, 20),
            Step::at_key(2, REFRESH_CAS_POST, 20),
            Step::at_key(0, REFRESH_CAS_PRE, 20),
            Step::at_key(1, REFRESH_CAS_POST, 20),
            Step::finish(0),
        ])
        .map_err(|e| e.to_string())?;
    o.delete(10);
    finish(&t, out, &o)
}

/// Tree whose insert of 5 triggers a single rotation at the node keyed 50,
/// under the node keyed 100.
pub fn rotation_shape() -> Shape {
    Shape::node(
        100,
        1,
        Shape::node(
            50,
            1,
            Shape::Node { key: 30, weight: 0, left: Box::new(Shape::leaf(10)), right: Box::new(Shape::leaf(30)) },
            Shape::leaf(50),
        ),
        Shape::node(INF, 1, Shape::leaf(100), Shape::leaf(INF)),
    )
}

/// A refresh of the node keyed 100 races with the rotation that installs
/// nil-versioned nodes beneath it. `refresh_first` picks which reaches its
/// atomic step first.
pub fn rotation_race(variant: Variant, refresh_first: bool) -> Result<Observed, String> {
    let t = Arc::new(BatTree::from_shape(&rotation_shape(), Config::new(variant)));
    let mut o = SequentialOracle::new();
    for k in [10, 30, 50, 100] {
        o.insert(k);
    }
    let run = staged(&t, &[(del, 40), (ins, 5)]);
    let refresh = Step::at_key(0, REFRESH_CAS_PRE, 100);
    let rotate = [Step::at(1, REBALANCE_SCX_PRE), Step::at(1, SCX_POST)];
    let schedule: Vec<Step> = if refresh_first {
        std::iter::once(refresh).chain(rotate).collect()
    } else {
        rotate.into_iter().chain(std::iter::once(refresh)).collect()
    };
    let out = run.run(&schedule).map_err(|e| e.to_string())?;
    o.insert(5);
    let obs = finish(&t, out, &o)?;
    if t.stats().rule_rb1 != 1 {
        return Err(format!("expected one single rotation, saw {:?}", t.stats()));
    }
    Ok(obs)
}

/// The delegatee stalls after its root CAS; the waiter times out, resumes,
/// and completes with its own update at the root while the delegatee is
/// still parked.
pub fn timeout_resume() -> Result<Observed, String> {
    let cfg = Config::new(Variant::BatEagerDel).timeout(Some(2000));
    let (t, mut o) = prefilled(cfg, &PREFILL);
    let run = staged(&t, &[(ins, 15), (ins, 45)]);
    let mut seen_early = None;
    let probe = t.clone();
    let out = run
        .run_with(&[Step::at(0, ROOT_CAS_PRE), Step::at(1, ROOT_CAS_POST), Step::finish(0)], |i| {
            if i == 2 {
                seen_early = Some((probe.contains(15).unwrap(), probe.len()));
            }
        })
        .map_err(|e| e.to_string())?;
    o.insert(15);
    o.insert(45);
    if seen_early != Some((true, o.len())) {
        return Err(format!("after the waiter resumed, the root showed {seen_early:?}"));
    }
    finish(&t, out, &o)
}
