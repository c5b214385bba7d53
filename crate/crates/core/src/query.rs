//! Queries over immutable version trees.

use std::marker::PhantomData;

use crate::augment::{Augmentation, Counted, Version};
use crate::reclaim::DetachedGuard;
use crate::{Error, INF};

/// Whether `k` is a leaf key of the version tree rooted at `v`.
pub fn find<A: Augmentation>(mut v: &Version<A>, k: u64) -> bool {
    while !v.is_leaf() {
        v = v.child(k);
    }
    v.key() == k
}

/// Number of keys `<= k`.
pub fn rank<A: Counted>(mut v: &Version<A>, k: u64) -> u64 {
    let mut acc = 0;
    while let Some((l, r)) = v.children() {
        if k < v.key() {
            v = l;
        } else {
            acc += l.count();
            v = r;
        }
    }
    if v.key() <= k {
        acc += v.count();
    }
    acc
}

/// The `i`-th smallest key, 1-based.
pub fn select<A: Counted>(mut v: &Version<A>, i: u64) -> Result<u64, Error> {
    let len = v.count();
    if i == 0 || i > len {
        return Err(Error::OutOfRange { index: i, len });
    }
    let mut i = i;
    while let Some((l, r)) = v.children() {
        let c = l.count();
        if i <= c {
            v = l;
        } else {
            i -= c;
            v = r;
        }
    }
    Ok(v.key())
}

/// Number of keys in `[lo, hi]`.
pub fn range_count<A: Counted>(v: &Version<A>, lo: u64, hi: u64) -> u64 {
    if lo > hi {
        return 0;
    }
    let below = if lo == 0 { 0 } else { rank(v, lo - 1) };
    rank(v, hi) - below
}

/// Summary of a full version-tree walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionWalk {
    /// Non-sentinel leaf keys in order.
    pub keys: Vec<u64>,
    pub versions: usize,
    pub height: usize,
}

/// Why a version tree failed validation.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VersionError {
    #[error("version with key {key} lies outside its routing interval [{lo}, {hi})")]
    Order { key: u64, lo: u128, hi: u128 },
    #[error("version with key {key} has size {stored}, expected {counted}")]
    Size { key: u64, stored: u64, counted: u64 },
}

/// Walks every version below `v`, checking BST routing and that each stored
/// count equals the number of non-sentinel leaves below it.
pub fn walk<A: Counted>(v: &Version<A>) -> Result<VersionWalk, VersionError> {
    enum Visit<'a, A: Augmentation> {
        Enter(&'a Version<A>, u128, u128, usize),
        Exit(&'a Version<A>),
    }
    let mut out = VersionWalk { keys: Vec::new(), versions: 0, height: 0 };
    let mut counts: Vec<u64> = Vec::new();
    let mut stack = vec![Visit::Enter(v, 0, 1 << 64, 0)];
    while let Some(item) = stack.pop() {
        match item {
            Visit::Enter(v, lo, hi, depth) => {
                out.versions += 1;
                let key = u128::from(v.key());
                let sentinel_ok = v.key() == INF;
                match v.children() {
                    None => {
                        if key < lo || (key >= hi && !sentinel_ok) {
                            return Err(VersionError::Order { key: v.key(), lo, hi });
                        }
                        let counted = u64::from(v.key() != INF);
                        if v.count() != counted {
                            return Err(VersionError::Size { key: v.key(), stored: v.count(), counted });
                        }
                        if v.key() != INF {
                            out.keys.push(v.key());
                        }
                        out.height = out.height.max(depth);
                        counts.push(counted);
                    }
                    Some((l, r)) => {
                        if key < lo || key > hi {
                            return Err(VersionError::Order { key: v.key(), lo, hi });
                        }
                        stack.push(Visit::Exit(v));
                        stack.push(Visit::Enter(r, key, hi, depth + 1));
                        stack.push(Visit::Enter(l, lo, key, depth + 1));
                    }
                }
            }
            Visit::Exit(v) => {
                let r = counts.pop().unwrap();
                let l = counts.pop().unwrap();
                if v.count() != l + r {
                    return Err(VersionError::Size { key: v.key(), stored: v.count(), counted: l + r });
                }
                counts.push(l + r);
            }
        }
    }
    Ok(out)
}

/// An immutable view of the set at one instant.
///
/// Holds reclamation protection for its versions until dropped. Can be
/// shared across threads.
pub struct Snapshot<'t, A: Augmentation> {
    root: *const Version<A>,
    _guard: DetachedGuard,
    _tree: PhantomData<&'t ()>,
}

unsafe impl<A: Augmentation> Send for Snapshot<'_, A> {}
unsafe impl<A: Augmentation> Sync for Snapshot<'_, A> {}

impl<'t, A: Augmentation> Snapshot<'t, A> {
    pub(crate) fn new(root: *const Version<A>, guard: DetachedGuard) -> Self {
        Snapshot { root, _guard: guard, _tree: PhantomData }
    }

    /// Root version of the snapshot.
    pub fn root(&self) -> &Version<A> {
        unsafe { &*self.root }
    }

    pub fn contains(&self, k: u64) -> bool {
        find(self.root(), k)
    }

    pub fn value(&self) -> A::Value {
        *self.root().value()
    }

    /// Identity of the root version, for telling snapshots apart.
    pub fn id(&self) -> usize {
        self.root as usize
    }
}

impl<A: Counted> Snapshot<'_, A> {
    pub fn len(&self) -> u64 {
        self.root().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self, k: u64) -> u64 {
        rank(self.root(), k)
    }

    pub fn select(&self, i: u64) -> Result<u64, Error> {
        select(self.root(), i)
    }

    pub fn range_count(&self, lo: u64, hi: u64) -> u64 {
        range_count(self.root(), lo, hi)
    }

    pub fn walk(&self) -> Result<VersionWalk, VersionError> {
        walk(self.root())
    }
}
