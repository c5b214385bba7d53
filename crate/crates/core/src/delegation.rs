//! Propagation status objects and waiting on delegation chains.
//!
//! A status starts with one reference held by its owning propagate. A
//! propagate that delegates takes a reference on the blocker's status before
//! linking to it, and gives it back when its own status is freed or when it
//! abandons the wait. A failed acquire means the blocker already finished.

use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};

use crate::reclaim::{Header, Local, Reclaim, RefCount};
use crate::staging::{yield_point, WAIT_SPIN, WAIT_TIMEOUT};

pub struct PropStatus {
    header: Header,
    done: AtomicBool,
    delegatee: AtomicPtr<PropStatus>,
    refs: RefCount,
}

unsafe impl Reclaim for PropStatus {
    fn header(&self) -> &Header {
        &self.header
    }

    unsafe fn release(this: *mut Self, local: &Local) {
        let d = (*this).delegatee.swap(std::ptr::null_mut(), Ordering::Relaxed);
        PropStatus::unref(d, local);
    }
}

/// Result of waiting on a delegation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Done,
    TimedOut,
}

impl PropStatus {
    pub(crate) fn new() -> *mut PropStatus {
        Box::into_raw(Box::new(PropStatus {
            header: Header::new(),
            done: AtomicBool::new(false),
            delegatee: AtomicPtr::new(std::ptr::null_mut()),
            refs: RefCount::new(1),
        }))
    }

    pub fn is_done(&self) -> bool {
        self.header.check();
        self.done.load(Ordering::Acquire)
    }

    pub(crate) fn delegatee(&self) -> *mut PropStatus {
        self.delegatee.load(Ordering::Acquire)
    }

    /// Drops a reference, retiring the status if it was the last one.
    pub(crate) unsafe fn unref(ps: *mut PropStatus, local: &Local) {
        if !ps.is_null() && (*ps).refs.release() {
            local.retire(ps);
        }
    }

    /// Links `ps` to `blocker`. Returns false if the blocker already finished.
    pub(crate) unsafe fn link(ps: *mut PropStatus, blocker: *mut PropStatus) -> bool {
        if !(*blocker).refs.acquire() {
            return false;
        }
        let prev = (*ps).delegatee.swap(blocker, Ordering::AcqRel);
        debug_assert!(prev.is_null());
        true
    }

    /// Clears the delegatee link after a timeout.
    pub(crate) unsafe fn unlink(ps: *mut PropStatus, local: &Local) {
        let d = (*ps).delegatee.swap(std::ptr::null_mut(), Ordering::AcqRel);
        PropStatus::unref(d, local);
    }

    /// Marks the owning propagate finished and drops the owner's reference.
    pub(crate) unsafe fn finish(ps: *mut PropStatus, local: &Local) {
        (*ps).done.store(true, Ordering::Release);
        PropStatus::unref(ps, local);
    }
}

/// Waits until some status on the chain starting at `d` is done.
///
/// `limit` bounds the number of polling iterations.
///
/// # Safety
///
/// Every status on the chain must stay allocated for the duration of the
/// call, which holds while the caller is pinned.
pub unsafe fn wait_for_delegatee(mut d: *const PropStatus, limit: Option<u64>) -> WaitOutcome {
    let mut spins = 0u64;
    loop {
        let s = unsafe { &*d };
        if s.is_done() {
            return WaitOutcome::Done;
        }
        let next = s.delegatee();
        if !next.is_null() {
            d = next;
            continue;
        }
        spins += 1;
        if limit.is_some_and(|l| spins >= l) {
            yield_point(WAIT_TIMEOUT, spins);
            return WaitOutcome::TimedOut;
        }
        if spins.is_multiple_of(32) {
            yield_point(WAIT_SPIN, spins);
            std::thread::yield_now();
        } else {
            std::hint::spin_loop();
        }
    }
}
