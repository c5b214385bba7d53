//! Refresh and the three propagate variants.
//!
//! Recursive refreshes only fill nil version links; top-level refreshes read
//! the old version through [`Cx::read_version`] and so only replace non-nil
//! links. Every variant keeps that split, which lets the versions displaced by
//! top-level refreshes be retired once the propagate reaches the root.

use std::collections::HashSet;
use std::hash::{BuildHasherDefault, Hasher};
use std::ptr;
use std::sync::atomic::Ordering;

use crate::augment::{Augmentation, Version};
use crate::delegation::{wait_for_delegatee, PropStatus, WaitOutcome};
use crate::node::{nref, Cx, Node};
use crate::staging::*;
use crate::stats::ThreadStats;
use crate::tree::Variant;

/// Multiplicative hasher for node addresses.
#[derive(Default)]
pub(crate) struct AddrHasher(u64);

impl Hasher for AddrHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(8) ^ u64::from(b)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
    }
    fn write_usize(&mut self, n: usize) {
        self.0 = (n as u64 >> 4).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
}

pub(crate) type AddrSet = HashSet<usize, BuildHasherDefault<AddrHasher>>;

/// Reusable per-thread buffers for propagate.
#[derive(Default)]
pub(crate) struct Scratch {
    pub(crate) path: Vec<usize>,
    pub(crate) stack: Vec<usize>,
    pub(crate) refreshed: AddrSet,
    pub(crate) to_retire: Vec<usize>,
}

pub(crate) struct Refresh<A: Augmentation> {
    pub(crate) success: bool,
    pub(crate) blocker: *mut PropStatus,
    pub(crate) vl: *const Version<A>,
    pub(crate) vr: *const Version<A>,
}

impl<'a, A: Augmentation> Cx<'a, A> {
    /// The version of `x`, filling it first if it is nil.
    pub(crate) fn read_version(&self, x: *mut Node<A>) -> *const Version<A> {
        let n = nref(x);
        let v = n.version.load(Ordering::Acquire);
        if !v.is_null() {
            return v;
        }
        self.refresh_nil(x);
        let v = n.version.load(Ordering::Acquire);
        debug_assert!(!v.is_null());
        v
    }

    /// Reads a child link and that child's version until the link is stable.
    fn read_child(&self, n: &Node<A>, d: usize) -> *const Version<A> {
        loop {
            let c = n.child(d);
            let v = self.read_version(c);
            if n.child(d) == c {
                return v;
            }
        }
    }

    /// The single version CAS site. Counts CASes whose expected value breaks
    /// the direction rule for their kind.
    fn install(
        &self,
        n: &Node<A>,
        expected: *const Version<A>,
        new: *mut Version<A>,
        recursive: bool,
    ) -> Result<*mut Version<A>, *mut Version<A>> {
        ThreadStats::bump(&self.stats.version_cas);
        match (recursive, expected.is_null()) {
            (true, false) => ThreadStats::bump(&self.stats.nil_cas_nonnil_expected),
            (false, true) => ThreadStats::bump(&self.stats.top_cas_nil_expected),
            _ => {}
        }
        n.version.compare_exchange(expected as *mut _, new, Ordering::AcqRel, Ordering::Acquire)
    }

    /// Recursive refresh: installs a version only over nil.
    pub(crate) fn refresh_nil(&self, x: *mut Node<A>) {
        let n = nref(x);
        let vl = self.read_child(n, 0);
        let vr = self.read_child(n, 1);
        let new = Version::new_internal(n.key, vl, vr, ptr::null());
        yield_point(NIL_CAS_PRE, n.key);
        match self.install(n, ptr::null(), new, true) {
            Ok(_) => ThreadStats::bump(&self.stats.nil_filled),
            Err(_) => unsafe { drop(Box::from_raw(new)) },
        }
    }

    /// Top-level refresh of `x` on behalf of the propagate owning `ps`.
    pub(crate) fn refresh(&self, x: *mut Node<A>, ps: *mut PropStatus, to_retire: &mut Vec<usize>) -> Refresh<A> {
        let n = nref(x);
        let old = self.read_version(x);
        let vl = self.read_child(n, 0);
        let vr = self.read_child(n, 1);
        let new = Version::new_internal(n.key, vl, vr, ps);
        let (pre, post) =
            if x == self.root { (ROOT_CAS_PRE, ROOT_CAS_POST) } else { (REFRESH_CAS_PRE, REFRESH_CAS_POST) };
        yield_point(pre, n.key);
        let res = self.install(n, old, new, false);
        yield_point(post, n.key);
        match res {
            Ok(_) => {
                to_retire.push(old as usize);
                Refresh { success: true, blocker: ptr::null_mut(), vl, vr }
            }
            Err(cur) => {
                unsafe { drop(Box::from_raw(new)) };
                let blocker = unsafe { (*cur).status as *mut PropStatus };
                Refresh { success: false, blocker, vl, vr }
            }
        }
    }

    /// Carries the effect of an update on key `k` up to the root version.
    ///
    /// With `seeded`, `scratch.path` holds the internal nodes visited by the
    /// update's search and becomes the initial stack.
    pub(crate) fn propagate(&self, k: u64, scratch: &mut Scratch, seeded: bool) {
        ThreadStats::bump(&self.stats.propagates);
        yield_point(PROPAGATE_BEGIN, k);
        let variant = self.cfg.variant;
        let ps = match variant {
            Variant::Bat => ptr::null_mut(),
            Variant::BatDel | Variant::BatEagerDel => PropStatus::new(),
        };
        let Scratch { path, stack, refreshed, to_retire } = scratch;
        stack.clear();
        if seeded && !path.is_empty() {
            std::mem::swap(stack, path);
        } else {
            stack.push(self.root as usize);
        }
        refreshed.clear();
        to_retire.clear();
        let mut nodes = 0;
        loop {
            let mut next = *stack.last().unwrap() as *mut Node<A>;
            loop {
                next = nref(next).next(k);
                if nref(next).leaf || refreshed.contains(&(next as usize)) {
                    break;
                }
                stack.push(next as usize);
            }
            let top = stack.pop().unwrap() as *mut Node<A>;
            nodes += 1;
            let finished = match variant {
                Variant::Bat => {
                    if !self.refresh(top, ps, to_retire).success {
                        self.refresh(top, ps, to_retire);
                    }
                    false
                }
                Variant::BatDel => self.refresh_del(top, ps, to_retire),
                Variant::BatEagerDel => self.refresh_eager(top, ps, to_retire),
            };
            if finished {
                break;
            }
            refreshed.insert(top as usize);
            if top == self.root {
                break;
            }
        }
        ThreadStats::add(&self.stats.propagate_nodes, nodes);
        if !ps.is_null() {
            yield_point(DONE_WRITE, k);
            unsafe { PropStatus::finish(ps, self.local) };
        }
        ThreadStats::add(&self.stats.versions_retired, to_retire.len() as u64);
        for v in to_retire.drain(..) {
            self.local.retire(v as *mut Version<A>);
        }
        yield_point(PROPAGATE_END, k);
    }

    /// Double refresh of one node with delegation. Returns true when the
    /// propagate is complete because a delegatee finished it.
    fn refresh_del(&self, top: *mut Node<A>, ps: *mut PropStatus, to_retire: &mut Vec<usize>) -> bool {
        loop {
            if self.refresh(top, ps, to_retire).success {
                return false;
            }
            let r = self.refresh(top, ps, to_retire);
            if r.success || nref(top).is_finalized() {
                return false;
            }
            match self.delegate(ps, r.blocker, nref(top).key) {
                Some(WaitOutcome::Done) => return true,
                Some(WaitOutcome::TimedOut) => continue,
                None => return false,
            }
        }
    }

    /// Eager variant: delegate on the first failure at a live node, and
    /// retry until a successful refresh saw stable child versions.
    fn refresh_eager(&self, top: *mut Node<A>, ps: *mut PropStatus, to_retire: &mut Vec<usize>) -> bool {
        let n = nref(top);
        loop {
            let r = self.refresh(top, ps, to_retire);
            if !r.success {
                if n.is_finalized() {
                    continue;
                }
                match self.delegate(ps, r.blocker, n.key) {
                    Some(WaitOutcome::Done) => return true,
                    Some(WaitOutcome::TimedOut) => continue,
                    None => return false,
                }
            }
            let cl = nref(n.child(0)).version.load(Ordering::Acquire);
            let cr = nref(n.child(1)).version.load(Ordering::Acquire);
            if ptr::eq(cl, r.vl) && ptr::eq(cr, r.vr) {
                return false;
            }
        }
    }

    /// Links `ps` to `blocker` and waits. `None` means there was nothing
    /// to wait for and the node counts as refreshed.
    fn delegate(&self, ps: *mut PropStatus, blocker: *mut PropStatus, key: u64) -> Option<WaitOutcome> {
        if blocker.is_null() {
            debug_assert!(false, "top-level CAS lost to a version without status");
            return None;
        }
        if !unsafe { PropStatus::link(ps, blocker) } {
            return Some(WaitOutcome::Done);
        }
        ThreadStats::bump(&self.stats.delegations);
        yield_point(DELEGATEE_WRITE, key);
        // Statuses are freed through the collector, and this thread is pinned.
        let out = unsafe { wait_for_delegatee(blocker, self.cfg.delegation_timeout) };
        if out == WaitOutcome::TimedOut {
            ThreadStats::bump(&self.stats.timeouts);
            unsafe { PropStatus::unlink(ps, self.local) };
        }
        Some(out)
    }
}
