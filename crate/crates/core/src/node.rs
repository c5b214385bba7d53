//! The mutable node tree: a leaf-oriented chromatic search tree whose
//! structural changes are SCX patch replacements.

use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};

use crate::augment::{Augmentation, Version};
use crate::llx_scx::{self, llx, Linked, Llx, LlxSnapshot, Record, ScxArgs};
use crate::reclaim::{Header, Local, Reclaim};
use crate::staging::{DELETE_SCX_PRE, INSERT_SCX_PRE, REBALANCE_SCX_PRE};
use crate::stats::ThreadStats;
use crate::tree::Config;
use crate::INF;

pub(crate) struct Node<A: Augmentation> {
    header: Header,
    pub(crate) key: u64,
    pub(crate) weight: u32,
    pub(crate) leaf: bool,
    rec: Record<Node<A>>,
    pub(crate) version: AtomicPtr<Version<A>>,
}

impl<A: Augmentation> Linked for Node<A> {
    fn record(&self) -> &Record<Self> {
        &self.rec
    }
}

unsafe impl<A: Augmentation> Reclaim for Node<A> {
    fn header(&self) -> &Header {
        &self.header
    }

    unsafe fn release(this: *mut Self, local: &Local) {
        let v = (*this).version.load(Ordering::Relaxed);
        if !v.is_null() {
            local.retire(v);
        }
        llx_scx::release_record(this, local);
    }
}

pub(crate) type Snap<A> = LlxSnapshot<Node<A>>;

impl<A: Augmentation> Node<A> {
    pub(crate) fn new_leaf(key: u64, weight: u32) -> *mut Self {
        Box::into_raw(Box::new(Node {
            header: Header::new(),
            key,
            weight,
            leaf: true,
            rec: Record::new(ptr::null_mut(), ptr::null_mut()),
            version: AtomicPtr::new(Version::<A>::new_leaf(key)),
        }))
    }

    pub(crate) fn new_internal(key: u64, weight: u32, left: *mut Self, right: *mut Self) -> *mut Self {
        Box::into_raw(Box::new(Node {
            header: Header::new(),
            key,
            weight,
            leaf: false,
            rec: Record::new(left, right),
            version: AtomicPtr::new(ptr::null_mut()),
        }))
    }

    #[inline]
    pub(crate) fn child(&self, dir: usize) -> *mut Self {
        self.rec.field(dir)
    }

    /// Child in the search direction of `k`.
    #[inline]
    pub(crate) fn next(&self, k: u64) -> *mut Self {
        self.rec.field(dir(self.key, k))
    }

    #[inline]
    pub(crate) fn is_finalized(&self) -> bool {
        self.rec.is_marked()
    }

    #[inline]
    pub(crate) fn check(&self) {
        self.header.check();
    }

    /// Frees a node that was never published, with its initial version.
    pub(crate) unsafe fn free_unpublished(this: *mut Self) {
        let v = (*this).version.load(Ordering::Relaxed);
        if !v.is_null() {
            drop(Box::from_raw(v));
        }
        drop(Box::from_raw(this));
    }
}

#[inline]
pub(crate) fn dir(node_key: u64, k: u64) -> usize {
    usize::from(k >= node_key)
}

#[inline]
pub(crate) fn nref<'a, A: Augmentation>(n: *mut Node<A>) -> &'a Node<A> {
    let r = unsafe { &*n };
    r.check();
    r
}

/// Thread context for one operation on one tree.
pub(crate) struct Cx<'a, A: Augmentation> {
    pub(crate) root: *mut Node<A>,
    pub(crate) local: &'a Local,
    pub(crate) stats: &'a ThreadStats,
    pub(crate) cfg: &'a Config,
}

/// Outcome of one rebalancing attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepOutcome {
    Applied,
    Retry,
    Vanished,
}

/// New nodes built for a patch; freed if the SCX fails.
struct Fresh<A: Augmentation> {
    nodes: [*mut Node<A>; 4],
    len: usize,
}

impl<A: Augmentation> Fresh<A> {
    fn new() -> Self {
        Fresh { nodes: [ptr::null_mut(); 4], len: 0 }
    }

    fn add(&mut self, n: *mut Node<A>) -> *mut Node<A> {
        self.nodes[self.len] = n;
        self.len += 1;
        n
    }

    fn leaf(&mut self, key: u64, weight: u32) -> *mut Node<A> {
        self.add(Node::new_leaf(key, weight))
    }

    fn internal(&mut self, key: u64, weight: u32, l: *mut Node<A>, r: *mut Node<A>) -> *mut Node<A> {
        self.add(Node::new_internal(key, weight, l, r))
    }

    /// Copy of the node behind `s` with a new weight.
    fn copy(&mut self, s: &Snap<A>, weight: u32) -> *mut Node<A> {
        let n = nref(s.node());
        if n.leaf {
            self.leaf(n.key, weight)
        } else {
            self.internal(n.key, weight, s.fields[0], s.fields[1])
        }
    }

    fn discard(self) {
        for &n in &self.nodes[..self.len] {
            unsafe { Node::free_unpublished(n) };
        }
    }
}

impl<'a, A: Augmentation> Cx<'a, A> {
    #[inline]
    fn balanced(&self) -> bool {
        self.cfg.balanced
    }

    fn llx(&self, n: *mut Node<A>) -> Option<Snap<A>> {
        match llx(n, self.local) {
            Llx::Snapshot(s) => Some(s),
            Llx::Fail | Llx::Finalized => None,
        }
    }

    /// Descends to the leaf for `k`, recording the internal nodes visited.
    pub(crate) fn search(&self, k: u64, path: &mut Vec<usize>) -> *mut Node<A> {
        path.clear();
        let mut p = self.root;
        loop {
            path.push(p as usize);
            let c = nref(p).next(k);
            if nref(c).leaf {
                return c;
            }
            p = c;
        }
    }

    /// Runs an SCX and, on success, retires the finalized nodes.
    #[allow(clippy::too_many_arguments)]
    fn commit(
        &self,
        v: &[Snap<A>],
        finalize: u32,
        field: usize,
        new: *mut Node<A>,
        site: &'static str,
        key: u64,
        fresh: Fresh<A>,
    ) -> bool {
        ThreadStats::bump(&self.stats.scx_attempts);
        let ok = llx_scx::scx_staged(ScxArgs { v, finalize, target: 0, field, new }, self.local, site, key);
        if ok {
            ThreadStats::bump(&self.stats.scx_commits);
            for (i, s) in v.iter().enumerate() {
                if finalize & (1 << i) != 0 {
                    self.local.retire(s.node());
                }
            }
        } else {
            fresh.discard();
        }
        ok
    }

    /// Weight for the top of a new patch whose parent is `parent`.
    #[inline]
    fn top_weight(&self, parent: *mut Node<A>, w: u32) -> u32 {
        if !self.balanced() || parent == self.root {
            1
        } else {
            w
        }
    }

    pub(crate) fn insert(&self, k: u64, path: &mut Vec<usize>) -> bool {
        loop {
            let l = self.search(k, path);
            let leaf = nref(l);
            if leaf.key == k {
                return false;
            }
            let p = *path.last().unwrap() as *mut Node<A>;
            let Some(sp) = self.llx(p) else { continue };
            let d = dir(nref(p).key, k);
            if sp.fields[d] != l {
                continue;
            }
            let Some(sl) = self.llx(l) else { continue };
            let w = self.top_weight(p, leaf.weight.saturating_sub(1));
            let mut fresh = Fresh::new();
            let new_leaf = fresh.leaf(k, 1);
            let old_leaf = fresh.leaf(leaf.key, 1);
            let (a, b) = if k < leaf.key { (new_leaf, old_leaf) } else { (old_leaf, new_leaf) };
            let top = fresh.internal(k.max(leaf.key), w, a, b);
            if self.commit(&[sp, sl], 0b10, d, top, INSERT_SCX_PRE, k, fresh) {
                if self.balanced() && (w > 1 || (w == 0 && nref(p).weight == 0)) {
                    self.cleanup(k);
                }
                return true;
            }
        }
    }

    pub(crate) fn delete(&self, k: u64, path: &mut Vec<usize>) -> bool {
        loop {
            let l = self.search(k, path);
            if nref(l).key != k {
                return false;
            }
            let n = path.len();
            debug_assert!(n >= 2);
            let (gp, p) = (path[n - 2] as *mut Node<A>, path[n - 1] as *mut Node<A>);
            let Some(sgp) = self.llx(gp) else { continue };
            let dp = dir(nref(gp).key, k);
            if sgp.fields[dp] != p {
                continue;
            }
            let Some(sp) = self.llx(p) else { continue };
            let dl = dir(nref(p).key, k);
            if sp.fields[dl] != l {
                continue;
            }
            let s = sp.fields[1 - dl];
            let Some(sl) = self.llx(l) else { continue };
            let Some(ss) = self.llx(s) else { continue };
            let w = self.top_weight(gp, nref(p).weight + nref(s).weight);
            let mut fresh = Fresh::new();
            let copy = fresh.copy(&ss, w);
            let v = if dl == 0 { [sgp, sp, sl, ss] } else { [sgp, sp, ss, sl] };
            if self.commit(&v, 0b1110, dp, copy, DELETE_SCX_PRE, k, fresh) {
                if self.balanced() && w != 1 {
                    self.cleanup(k);
                }
                return true;
            }
        }
    }

    /// Repairs violations on the search path for `k` until a full pass sees none.
    pub(crate) fn cleanup(&self, k: u64) {
        if !self.balanced() {
            return;
        }
        while let Some(outcome) = self.cleanup_once(k) {
            if outcome == StepOutcome::Retry {
                ThreadStats::bump(&self.stats.rebalance_retries);
            }
        }
    }

    /// Attempts a fix at the first violation on the search path for `k`.
    /// `None` means the path is clean.
    pub(crate) fn cleanup_once(&self, k: u64) -> Option<StepOutcome> {
        let mut u: *mut Node<A> = ptr::null_mut();
        let mut g: *mut Node<A> = ptr::null_mut();
        let mut p = self.root;
        let mut x = nref(p).child(0);
        loop {
            let (xn, pn) = (nref(x), nref(p));
            if xn.weight > 1 || (xn.weight == 0 && pn.weight == 0) {
                break;
            }
            if xn.leaf {
                return None;
            }
            u = g;
            g = p;
            p = x;
            x = xn.next(k);
        }
        Some(if nref(x).weight > 1 { self.fix_overweight(g, p, x) } else { self.fix_red_red(u, g, p, x) })
    }

    /// Replaces `x`, a child of the root, by a copy with weight 1.
    fn fix_root_child(&self, x: *mut Node<A>) -> StepOutcome {
        let Some(sr) = self.llx(self.root) else { return StepOutcome::Retry };
        if sr.fields[0] != x {
            return StepOutcome::Retry;
        }
        let Some(sx) = self.llx(x) else { return StepOutcome::Retry };
        let mut fresh = Fresh::new();
        let copy = fresh.copy(&sx, 1);
        if self.commit(&[sr, sx], 0b10, 0, copy, REBALANCE_SCX_PRE, nref(x).key, fresh) {
            ThreadStats::bump(&self.stats.rule_root);
            StepOutcome::Applied
        } else {
            StepOutcome::Retry
        }
    }

    /// Fixes a red-red violation at `c`, whose parent is `r`, grandparent
    /// `g` and great-grandparent `u`.
    pub(crate) fn fix_red_red(
        &self,
        u: *mut Node<A>,
        g: *mut Node<A>,
        r: *mut Node<A>,
        c: *mut Node<A>,
    ) -> StepOutcome {
        use StepOutcome::*;
        if nref(c).weight != 0 || nref(r).weight != 0 {
            return Vanished;
        }
        if g == self.root {
            return self.fix_root_child(r);
        }
        let Some(su) = self.llx(u) else { return Retry };
        let Some(dg) = position(&su, g) else { return Retry };
        let Some(sg) = self.llx(g) else { return Retry };
        let Some(dr) = position(&sg, r) else { return Retry };
        let Some(sr) = self.llx(r) else { return Retry };
        let Some(dc) = position(&sr, c) else { return Retry };
        let gn = nref(g);
        if gn.weight == 0 {
            return Retry;
        }
        let t = sg.fields[1 - dr];
        let key = nref(c).key;
        let mut fresh = Fresh::new();
        if nref(t).weight == 0 {
            let Some(st) = self.llx(t) else { return Retry };
            let r2 = fresh.copy(&sr, 1);
            let t2 = fresh.copy(&st, 1);
            let (a, b) = order(dr, r2, t2);
            let g2 = fresh.internal(gn.key, self.top_weight(u, gn.weight - 1), a, b);
            let v = if dr == 0 { [su, sg, sr, st] } else { [su, sg, st, sr] };
            return self.applied(self.commit(&v, 0b1110, dg, g2, REBALANCE_SCX_PRE, key, fresh), &self.stats.rule_blk);
        }
        let top_w = self.top_weight(u, gn.weight);
        if dc == dr {
            let inner = sr.fields[1 - dr];
            let (a, b) = order(dr, inner, t);
            let g2 = fresh.internal(gn.key, 0, a, b);
            let (a, b) = order(dr, c, g2);
            let r2 = fresh.internal(nref(r).key, top_w, a, b);
            self.applied(self.commit(&[su, sg, sr], 0b110, dg, r2, REBALANCE_SCX_PRE, key, fresh), &self.stats.rule_rb1)
        } else {
            let Some(sc) = self.llx(c) else { return Retry };
            let top = if dr == 0 {
                let r2 = fresh.internal(nref(r).key, 0, sr.fields[0], sc.fields[0]);
                let g2 = fresh.internal(gn.key, 0, sc.fields[1], t);
                fresh.internal(nref(c).key, top_w, r2, g2)
            } else {
                let g2 = fresh.internal(gn.key, 0, t, sc.fields[0]);
                let r2 = fresh.internal(nref(r).key, 0, sc.fields[1], sr.fields[1]);
                fresh.internal(nref(c).key, top_w, g2, r2)
            };
            self.applied(
                self.commit(&[su, sg, sr, sc], 0b1110, dg, top, REBALANCE_SCX_PRE, key, fresh),
                &self.stats.rule_rb2,
            )
        }
    }

    /// Fixes an overweight violation at `x`, whose parent is `p` and
    /// grandparent `u`.
    pub(crate) fn fix_overweight(&self, u: *mut Node<A>, p: *mut Node<A>, x: *mut Node<A>) -> StepOutcome {
        use StepOutcome::*;
        if nref(x).weight <= 1 {
            return Vanished;
        }
        if p == self.root {
            return self.fix_root_child(x);
        }
        let Some(su) = self.llx(u) else { return Retry };
        let Some(dp) = position(&su, p) else { return Retry };
        let Some(sp) = self.llx(p) else { return Retry };
        let Some(dx) = position(&sp, x) else { return Retry };
        let (pn, xn) = (nref(p), nref(x));
        if pn.weight > 1 || (pn.weight == 0 && nref(u).weight == 0) {
            return Retry;
        }
        let s = sp.fields[1 - dx];
        let sn = nref(s);
        let key = xn.key;
        let Some(ss) = self.llx(s) else { return Retry };
        let mut fresh = Fresh::new();

        if sn.weight == 0 {
            let (near, far) = (ss.fields[dx], ss.fields[1 - dx]);
            let (a, b) = order(dx, x, near);
            let p2 = fresh.internal(pn.key, 0, a, b);
            let (a, b) = order(dx, p2, far);
            let s2 = fresh.internal(sn.key, self.top_weight(u, pn.weight), a, b);
            return self.applied(
                self.commit(&[su, sp, ss], 0b110, dp, s2, REBALANCE_SCX_PRE, key, fresh),
                &self.stats.rule_w_rotate,
            );
        }
        if sn.leaf && sn.weight == 1 {
            debug_assert!(false, "path weights disagree at an overweight node");
            return Retry;
        }
        let Some(sx) = self.llx(x) else { return Retry };
        let red_child = !sn.leaf && (nref(ss.fields[0]).weight == 0 || nref(ss.fields[1]).weight == 0);
        if sn.weight >= 2 || !red_child {
            let x2 = fresh.copy(&sx, xn.weight - 1);
            let s2 = fresh.copy(&ss, sn.weight - 1);
            let (a, b) = order(dx, x2, s2);
            let p2 = fresh.internal(pn.key, self.top_weight(u, pn.weight + 1), a, b);
            let v = if dx == 0 { [su, sp, sx, ss] } else { [su, sp, ss, sx] };
            return self.applied(self.commit(&v, 0b1110, dp, p2, REBALANCE_SCX_PRE, key, fresh), &self.stats.rule_push);
        }
        let (near, far) = (ss.fields[dx], ss.fields[1 - dx]);
        let top_w = self.top_weight(u, pn.weight);
        if nref(far).weight == 0 {
            let Some(sf) = self.llx(far) else { return Retry };
            let x2 = fresh.copy(&sx, xn.weight - 1);
            let f2 = fresh.copy(&sf, 1);
            let (a, b) = order(dx, x2, near);
            let p2 = fresh.internal(pn.key, 1, a, b);
            let (a, b) = order(dx, p2, f2);
            let s2 = fresh.internal(sn.key, top_w, a, b);
            let v = if dx == 0 { [su, sp, sx, ss, sf] } else { [su, sp, ss, sf, sx] };
            let mask = 0b11110;
            self.applied(self.commit(&v, mask, dp, s2, REBALANCE_SCX_PRE, key, fresh), &self.stats.rule_w_single)
        } else {
            let Some(sm) = self.llx(near) else { return Retry };
            let mn = nref(near);
            if mn.weight != 0 {
                return Retry;
            }
            let x2 = fresh.copy(&sx, xn.weight - 1);
            let top = if dx == 0 {
                let p2 = fresh.internal(pn.key, 1, x2, sm.fields[0]);
                let s2 = fresh.internal(sn.key, 1, sm.fields[1], far);
                fresh.internal(mn.key, top_w, p2, s2)
            } else {
                let s2 = fresh.internal(sn.key, 1, far, sm.fields[0]);
                let p2 = fresh.internal(pn.key, 1, sm.fields[1], x2);
                fresh.internal(mn.key, top_w, s2, p2)
            };
            let v = if dx == 0 { [su, sp, sx, ss, sm] } else { [su, sp, ss, sm, sx] };
            self.applied(self.commit(&v, 0b11110, dp, top, REBALANCE_SCX_PRE, key, fresh), &self.stats.rule_w_double)
        }
    }

    fn applied(&self, ok: bool, rule: &std::sync::atomic::AtomicU64) -> StepOutcome {
        if ok {
            ThreadStats::bump(rule);
            StepOutcome::Applied
        } else {
            StepOutcome::Retry
        }
    }
}

/// Which field of `s` points at `child`.
#[inline]
fn position<A: Augmentation>(s: &Snap<A>, child: *mut Node<A>) -> Option<usize> {
    if s.fields[0] == child {
        Some(0)
    } else if s.fields[1] == child {
        Some(1)
    } else {
        None
    }
}

/// Orders `near` and `other` so that `near` sits on side `d`.
#[inline]
fn order<T>(d: usize, near: T, other: T) -> (T, T) {
    if d == 0 {
        (near, other)
    } else {
        (other, near)
    }
}

/// Builds the fixed root over an empty set.
pub(crate) fn empty_root<A: Augmentation>() -> *mut Node<A> {
    let left = Node::new_leaf(INF, 1);
    let right = Node::new_leaf(INF, 1);
    Node::new_internal(INF, 1, left, right)
}
