//! Sequential reference sets and quiescent comparison against a tree.

use std::fmt;

use crate::augment::Size;
use crate::tree::BatTree;
use crate::Error;

/// One set operation, as issued to either a tree or an oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Insert(u64),
    Delete(u64),
    Find(u64),
    Rank(u64),
    Select(u64),
    RangeCount(u64, u64),
}

/// Result of an [`Op`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Bool(bool),
    Count(u64),
    Key(Result<u64, Error>),
}

/// Applies `op` to `tree`.
pub fn apply_tree(tree: &BatTree<Size>, op: Op) -> Outcome {
    match op {
        Op::Insert(k) => Outcome::Bool(tree.insert(k).unwrap()),
        Op::Delete(k) => Outcome::Bool(tree.delete(k).unwrap()),
        Op::Find(k) => Outcome::Bool(tree.contains(k).unwrap()),
        Op::Rank(k) => Outcome::Count(tree.rank(k)),
        Op::Select(i) => Outcome::Key(tree.select(i)),
        Op::RangeCount(lo, hi) => Outcome::Count(tree.range_count(lo, hi)),
    }
}

/// A sorted, duplicate-free vector answering every query by bisection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequentialOracle {
    keys: Vec<u64>,
}

impl SequentialOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn len(&self) -> u64 {
        self.keys.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn insert(&mut self, k: u64) -> bool {
        match self.keys.binary_search(&k) {
            Ok(_) => false,
            Err(i) => {
                self.keys.insert(i, k);
                true
            }
        }
    }

    pub fn delete(&mut self, k: u64) -> bool {
        match self.keys.binary_search(&k) {
            Ok(i) => {
                self.keys.remove(i);
                true
            }
            Err(_) => false,
        }
    }

    pub fn find(&self, k: u64) -> bool {
        self.keys.binary_search(&k).is_ok()
    }

    pub fn rank(&self, k: u64) -> u64 {
        self.keys.partition_point(|&x| x <= k) as u64
    }

    pub fn select(&self, i: u64) -> Result<u64, Error> {
        if i == 0 || i > self.len() {
            return Err(Error::OutOfRange { index: i, len: self.len() });
        }
        Ok(self.keys[i as usize - 1])
    }

    pub fn range_count(&self, lo: u64, hi: u64) -> u64 {
        if lo > hi {
            return 0;
        }
        (self.keys.partition_point(|&x| x <= hi) - self.keys.partition_point(|&x| x < lo)) as u64
    }

    pub fn apply(&mut self, op: Op) -> Outcome {
        match op {
            Op::Insert(k) => Outcome::Bool(self.insert(k)),
            Op::Delete(k) => Outcome::Bool(self.delete(k)),
            Op::Find(k) => Outcome::Bool(self.find(k)),
            Op::Rank(k) => Outcome::Count(self.rank(k)),
            Op::Select(i) => Outcome::Key(self.select(i)),
            Op::RangeCount(lo, hi) => Outcome::Count(self.range_count(lo, hi)),
        }
    }
}

/// A second oracle over a bounded key universe, answering by bit scans.
#[derive(Clone, Debug)]
pub struct BitsetOracle {
    words: Vec<u64>,
    universe: u64,
}

impl BitsetOracle {
    /// Keys must be below `universe`.
    pub fn new(universe: u64) -> Self {
        BitsetOracle { words: vec![0; universe.div_ceil(64) as usize], universe }
    }

    fn bit(&self, k: u64) -> bool {
        k < self.universe && self.words[(k / 64) as usize] >> (k % 64) & 1 == 1
    }

    fn count_below(&self, end: u64) -> u64 {
        let end = end.min(self.universe);
        let full = (end / 64) as usize;
        let mut n: u64 = self.words[..full].iter().map(|w| u64::from(w.count_ones())).sum();
        if !end.is_multiple_of(64) {
            n += u64::from((self.words[full] & ((1u64 << (end % 64)) - 1)).count_ones());
        }
        n
    }

    pub fn apply(&mut self, op: Op) -> Outcome {
        match op {
            Op::Insert(k) => {
                let had = self.bit(k);
                self.words[(k / 64) as usize] |= 1 << (k % 64);
                Outcome::Bool(!had)
            }
            Op::Delete(k) => {
                let had = self.bit(k);
                if k < self.universe {
                    self.words[(k / 64) as usize] &= !(1 << (k % 64));
                }
                Outcome::Bool(had)
            }
            Op::Find(k) => Outcome::Bool(self.bit(k)),
            Op::Rank(k) => Outcome::Count(self.count_below(k.saturating_add(1))),
            Op::Select(i) => {
                let len = self.count_below(self.universe);
                if i == 0 || i > len {
                    return Outcome::Key(Err(Error::OutOfRange { index: i, len }));
                }
                let mut seen = 0;
                for k in 0..self.universe {
                    if self.bit(k) {
                        seen += 1;
                        if seen == i {
                            return Outcome::Key(Ok(k));
                        }
                    }
                }
                unreachable!()
            }
            Op::RangeCount(lo, hi) => {
                Outcome::Count(if lo > hi { 0 } else { self.count_below(hi.saturating_add(1)) - self.count_below(lo) })
            }
        }
    }
}

/// What a successful comparison measured.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub keys: u64,
    pub height: usize,
    pub versions: usize,
}

/// Everything that disagreed in a failed comparison.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diff {
    /// In the oracle but not the snapshot.
    pub missing: Vec<u64>,
    /// In the snapshot but not the oracle.
    pub extra: Vec<u64>,
    pub problems: Vec<String>,
}

impl fmt::Display for Diff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOW: usize = 10;
        if !self.missing.is_empty() {
            writeln!(
                f,
                "missing {} keys, first {:?}",
                self.missing.len(),
                &self.missing[..self.missing.len().min(SHOW)]
            )?;
        }
        if !self.extra.is_empty() {
            writeln!(f, "extra {} keys, first {:?}", self.extra.len(), &self.extra[..self.extra.len().min(SHOW)])?;
        }
        for p in &self.problems {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diff {}

/// Height allowed for `n` keys in balanced mode.
pub fn height_bound(n: u64) -> usize {
    (2.0 * ((n + 1) as f64).log2()).floor() as usize + 2
}

/// Compares a quiescent tree with the oracle holding the same operations.
///
/// Checks the snapshot's keys, every version's size and routing, the node
/// tree's order and balance, and the height bound when balanced.
pub fn quiescent_compare(tree: &BatTree<Size>, oracle: &SequentialOracle) -> Result<Report, Diff> {
    let mut diff = Diff::default();
    let snap = tree.snapshot();
    let walk = match snap.walk() {
        Ok(w) => w,
        Err(e) => {
            diff.problems.push(format!("version tree: {e}"));
            return Err(diff);
        }
    };
    let (mut i, mut j) = (0, 0);
    let (a, b) = (oracle.keys(), &walk.keys);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                diff.missing.push(*x);
                i += 1;
            }
            (Some(x), None) => {
                diff.missing.push(*x);
                i += 1;
            }
            (_, Some(y)) => {
                diff.extra.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let audit = tree.audit();
    if audit.keys != oracle.len() {
        diff.problems.push(format!("node tree holds {} keys, oracle {}", audit.keys, oracle.len()));
    }
    if !audit.bst_ok {
        diff.problems.push("node tree violates search order".into());
    }
    if audit.nil_versions + audit.bad_versions > 0 {
        diff.problems.push(format!("node versions: {} nil, {} inconsistent", audit.nil_versions, audit.bad_versions));
    }
    if audit.finalized_reachable > 0 {
        diff.problems.push(format!("{} finalized nodes still reachable", audit.finalized_reachable));
    }
    if tree.config().balanced {
        if audit.violations() > 0 || !audit.weights_ok {
            diff.problems.push(format!(
                "balance: {} red-red, {} overweight, equal path weights {}",
                audit.red_red, audit.overweight, audit.weights_ok
            ));
        }
        let bound = height_bound(oracle.len());
        if audit.height > bound {
            diff.problems.push(format!("height {} exceeds {bound}", audit.height));
        }
    }
    if diff == Diff::default() {
        Ok(Report { keys: oracle.len(), height: audit.height, versions: walk.versions })
    } else {
        Err(diff)
    }
}
