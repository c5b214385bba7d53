//! Epoch-based reclamation.
//!
//! Each thread owns a [`Local`] per [`Collector`]. Objects are retired into the
//! thread's limbo list tagged with the global epoch and are released once the
//! epoch has moved two steps past that tag. A participant can lower its
//! announced epoch while pinned to protect objects that were live when some
//! older operation started; the LLX/SCX helping path relies on that.

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::ptr;
use std::sync::atomic::{fence, AtomicBool, AtomicPtr, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

const ACTIVE: u64 = 1;

const LIVE: u32 = 0;
const RETIRED: u32 = 1;
const DEAD: u32 = 2;

static POISONED_READS: AtomicU64 = AtomicU64::new(0);
static DOUBLE_RETIRES: AtomicU64 = AtomicU64::new(0);

/// Number of accesses to objects that were already reclaimed, across the process.
///
/// Only counted in debug builds with poison mode on; anything but zero is a bug.
pub fn poisoned_reads() -> u64 {
    POISONED_READS.load(Ordering::Relaxed)
}

/// Number of objects retired more than once, across the process.
pub fn double_retires() -> u64 {
    DOUBLE_RETIRES.load(Ordering::Relaxed)
}

/// Lifecycle word embedded at the start of every reclaimable object.
#[derive(Debug)]
pub(crate) struct Header {
    state: AtomicU32,
}

impl Header {
    pub(crate) const fn new() -> Self {
        Header { state: AtomicU32::new(LIVE) }
    }

    /// Records a poisoned access if the object has already been reclaimed.
    #[inline(always)]
    pub(crate) fn check(&self) {
        #[cfg(debug_assertions)]
        if self.state.load(Ordering::Relaxed) == DEAD {
            POISONED_READS.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn mark_retired(&self) -> bool {
        self.state.compare_exchange(LIVE, RETIRED, Ordering::Relaxed, Ordering::Relaxed).is_ok()
    }

    fn mark_dead(&self) {
        self.state.store(DEAD, Ordering::Relaxed);
    }
}

/// An object that can pass through the limbo list.
///
/// # Safety
/// `header` must return the header embedded in the object, and `dealloc`
/// must free an object allocated with `Box`.
pub(crate) unsafe trait Reclaim: Sized + 'static {
    fn header(&self) -> &Header;

    /// Releases references held by the object. Runs once, when the grace
    /// period has elapsed and before the memory goes away.
    unsafe fn release(_this: *mut Self, _local: &Local) {}

    unsafe fn dealloc(this: *mut Self) {
        drop(Box::from_raw(this));
    }
}

struct Retired {
    ptr: *mut u8,
    header: *const Header,
    release: unsafe fn(*mut u8, &Local),
    dealloc: unsafe fn(*mut u8),
}

unsafe impl Send for Retired {}

impl Retired {
    fn new<T: Reclaim>(ptr: *mut T) -> Self {
        unsafe fn release<T: Reclaim>(p: *mut u8, local: &Local) {
            T::release(p.cast(), local)
        }
        unsafe fn dealloc<T: Reclaim>(p: *mut u8) {
            T::dealloc(p.cast())
        }
        Retired { ptr: ptr.cast(), header: unsafe { (*ptr).header() }, release: release::<T>, dealloc: dealloc::<T> }
    }
}

/// Tuning for a collector.
#[derive(Clone, Debug)]
pub struct ReclaimConfig {
    /// Guard entries between epoch advance attempts.
    pub advance_every: u32,
    /// Limbo length per thread that triggers a forced advance.
    pub watermark: usize,
    /// Keep reclaimed objects in a quarantine instead of freeing them, so
    /// late accesses can be detected.
    pub poison: bool,
    /// Quarantine capacity in objects when poisoning.
    pub quarantine: usize,
}

impl Default for ReclaimConfig {
    fn default() -> Self {
        ReclaimConfig { advance_every: 256, watermark: 4096, poison: false, quarantine: 1 << 16 }
    }
}

/// Counters reported by a collector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReclaimStats {
    pub retired: u64,
    pub reclaimed: u64,
    /// Largest limbo list observed on any single thread.
    pub limbo_high_water: u64,
    /// Largest total of all limbo lists, sampled when operations end.
    pub limbo_peak_total: u64,
}

struct Participant {
    epoch: AtomicU64,
    in_use: AtomicBool,
    next: *mut Participant,
}

struct Global {
    epoch: AtomicU64,
    head: AtomicPtr<Participant>,
    orphans: Mutex<Vec<(u64, Retired)>>,
    quarantine: Mutex<VecDeque<Retired>>,
    retired: AtomicU64,
    reclaimed: AtomicU64,
    high_water: AtomicU64,
    peak_total: AtomicU64,
    config: ReclaimConfig,
}

unsafe impl Send for Global {}
unsafe impl Sync for Global {}

impl Global {
    fn acquire_participant(&self) -> *const Participant {
        let mut cur = self.head.load(Ordering::Acquire);
        while !cur.is_null() {
            let p = unsafe { &*cur };
            if !p.in_use.load(Ordering::Relaxed)
                && p.in_use.compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed).is_ok()
            {
                return cur;
            }
            cur = p.next;
        }
        let node = Box::into_raw(Box::new(Participant {
            epoch: AtomicU64::new(0),
            in_use: AtomicBool::new(true),
            next: ptr::null_mut(),
        }));
        let mut head = self.head.load(Ordering::Acquire);
        loop {
            unsafe { (*node).next = head };
            match self.head.compare_exchange_weak(head, node, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return node,
                Err(h) => head = h,
            }
        }
    }

    fn participants(&self) -> impl Iterator<Item = &Participant> {
        let mut cur = self.head.load(Ordering::Acquire);
        std::iter::from_fn(move || {
            if cur.is_null() {
                return None;
            }
            let p = unsafe { &*cur };
            cur = p.next;
            Some(p)
        })
    }

    fn try_advance(&self) -> u64 {
        let e = self.epoch.load(Ordering::SeqCst);
        fence(Ordering::SeqCst);
        for p in self.participants() {
            let s = p.epoch.load(Ordering::SeqCst);
            if s & ACTIVE != 0 && s >> 1 != e {
                return e;
            }
        }
        match self.epoch.compare_exchange(e, e + 1, Ordering::SeqCst, Ordering::SeqCst) {
            Ok(_) => e + 1,
            Err(now) => now,
        }
    }

    fn announce(&self, p: &Participant) -> u64 {
        let mut e = self.epoch.load(Ordering::SeqCst);
        loop {
            p.epoch.store(e << 1 | ACTIVE, Ordering::SeqCst);
            fence(Ordering::SeqCst);
            let now = self.epoch.load(Ordering::SeqCst);
            if now == e {
                return e;
            }
            e = now;
        }
    }
}

impl Drop for Global {
    fn drop(&mut self) {
        // Every Local holds an Arc, so nobody can be pinned here.
        let orphans = std::mem::take(self.orphans.get_mut().unwrap());
        let quarantine = std::mem::take(self.quarantine.get_mut().unwrap());
        let scratch = Local::scratch();
        for (_, r) in orphans {
            unsafe {
                (r.release)(r.ptr, &scratch);
                (r.dealloc)(r.ptr);
            }
        }
        scratch.drain_all_now();
        for r in quarantine {
            unsafe { (r.dealloc)(r.ptr) };
        }
        let mut cur = *self.head.get_mut();
        while !cur.is_null() {
            let b = unsafe { Box::from_raw(cur) };
            cur = b.next;
        }
    }
}

/// Shared reclamation domain.
#[derive(Clone)]
pub struct Collector {
    global: Arc<Global>,
}

impl Collector {
    pub fn new(config: ReclaimConfig) -> Self {
        Collector {
            global: Arc::new(Global {
                epoch: AtomicU64::new(2),
                head: AtomicPtr::new(ptr::null_mut()),
                orphans: Mutex::new(Vec::new()),
                quarantine: Mutex::new(VecDeque::new()),
                retired: AtomicU64::new(0),
                reclaimed: AtomicU64::new(0),
                high_water: AtomicU64::new(0),
                peak_total: AtomicU64::new(0),
                config,
            }),
        }
    }

    pub fn config(&self) -> &ReclaimConfig {
        &self.global.config
    }

    /// Registers a new participant for the calling thread.
    pub fn register(&self) -> Local {
        let participant = self.global.acquire_participant();
        Local {
            global: Some(self.global.clone()),
            participant,
            limbo: RefCell::new(VecDeque::new()),
            depth: Cell::new(0),
            pins: Cell::new(0),
            high_water: Cell::new(0),
            force_at: Cell::new(0),
            collecting: Cell::new(false),
        }
    }

    /// Pins a dedicated participant slot that is not tied to any thread.
    pub fn pin_detached(&self) -> DetachedGuard {
        let participant = self.global.acquire_participant();
        self.global.announce(unsafe { &*participant });
        DetachedGuard { _global: self.global.clone(), participant }
    }

    pub fn stats(&self) -> ReclaimStats {
        let g = &self.global;
        ReclaimStats {
            retired: g.retired.load(Ordering::Relaxed),
            reclaimed: g.reclaimed.load(Ordering::Relaxed),
            limbo_high_water: g.high_water.load(Ordering::Relaxed),
            limbo_peak_total: g.peak_total.load(Ordering::Relaxed),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.global.epoch.load(Ordering::SeqCst)
    }

    /// Releases orphaned garbage that is past its grace period.
    pub fn collect_orphans(&self, local: &Local) {
        local.collect_orphans();
    }
}

/// A participant slot pinned independently of any thread.
pub struct DetachedGuard {
    /// Keeps the participant slot allocated.
    _global: Arc<Global>,
    participant: *const Participant,
}

unsafe impl Send for DetachedGuard {}
unsafe impl Sync for DetachedGuard {}

impl Drop for DetachedGuard {
    fn drop(&mut self) {
        let p = unsafe { &*self.participant };
        p.epoch.store(0, Ordering::Release);
        p.in_use.store(false, Ordering::Release);
    }
}

/// Per-thread handle onto a [`Collector`].
pub struct Local {
    global: Option<Arc<Global>>,
    participant: *const Participant,
    limbo: RefCell<VecDeque<(u64, Retired)>>,
    depth: Cell<u32>,
    pins: Cell<u32>,
    high_water: Cell<usize>,
    force_at: Cell<usize>,
    collecting: Cell<bool>,
}

/// Keeps the owning thread pinned while alive.
pub struct Guard<'a> {
    local: &'a Local,
}

impl Drop for Guard<'_> {
    fn drop(&mut self) {
        self.local.unpin();
    }
}

impl Local {
    /// A participant-less handle used to run release callbacks on teardown.
    fn scratch() -> Local {
        Local {
            global: None,
            participant: ptr::null(),
            limbo: RefCell::new(VecDeque::new()),
            depth: Cell::new(0),
            pins: Cell::new(0),
            high_water: Cell::new(0),
            force_at: Cell::new(0),
            collecting: Cell::new(false),
        }
    }

    fn global(&self) -> &Global {
        self.global.as_deref().expect("participant-less handle")
    }

    fn participant(&self) -> &Participant {
        unsafe { &*self.participant }
    }

    pub fn pin(&self) -> Guard<'_> {
        let d = self.depth.get();
        self.depth.set(d + 1);
        if d == 0 && self.global.is_some() {
            let g = self.global();
            // A nearly full limbo list is drained before new work starts,
            // while this thread holds back nobody, leaving room for the
            // garbage of the operation about to run.
            if self.limbo.borrow().len() > self.force_threshold(g) {
                self.force();
            }
            g.announce(self.participant());
            let n = self.pins.get().wrapping_add(1);
            self.pins.set(n);
            if n.is_multiple_of(g.config.advance_every.max(1)) {
                g.try_advance();
                self.collect();
            }
        }
        Guard { local: self }
    }

    fn unpin(&self) {
        let d = self.depth.get() - 1;
        self.depth.set(d);
        if d == 0 && self.global.is_some() {
            self.participant().epoch.store(0, Ordering::Release);
            self.collect_own();
            if self.limbo.borrow().len() > self.force_threshold(self.global()) {
                self.force();
            }
        }
    }

    pub fn is_pinned(&self) -> bool {
        self.depth.get() > 0
    }

    /// The epoch this thread currently announces.
    pub(crate) fn announced(&self) -> u64 {
        if self.global.is_none() {
            return 0;
        }
        self.participant().epoch.load(Ordering::Relaxed) >> 1
    }

    /// Lowers the announced epoch to `epoch` for the rest of the pin.
    ///
    /// Objects retired at or after `epoch` stay allocated until this thread
    /// unpins, provided the caller confirms afterwards that some thread
    /// pinned at `epoch` is still pinned.
    pub(crate) fn inherit(&self, epoch: u64) {
        if self.global.is_none() {
            return;
        }
        debug_assert!(self.is_pinned());
        let p = self.participant();
        if p.epoch.load(Ordering::Relaxed) >> 1 > epoch {
            p.epoch.store(epoch << 1 | ACTIVE, Ordering::SeqCst);
            fence(Ordering::SeqCst);
        }
    }

    pub(crate) fn retire<T: Reclaim>(&self, ptr: *mut T) {
        let header = unsafe { (*ptr).header() };
        if !header.mark_retired() {
            DOUBLE_RETIRES.fetch_add(1, Ordering::Relaxed);
            debug_assert!(false, "object retired twice");
            return;
        }
        let Some(g) = self.global.as_deref() else {
            self.limbo.borrow_mut().push_back((0, Retired::new(ptr)));
            return;
        };
        let retired = g.retired.fetch_add(1, Ordering::Relaxed) + 1;
        let total = retired.saturating_sub(g.reclaimed.load(Ordering::Relaxed));
        g.peak_total.fetch_max(total, Ordering::Relaxed);
        let e = g.epoch.load(Ordering::SeqCst);
        let len = {
            let mut limbo = self.limbo.borrow_mut();
            limbo.push_back((e, Retired::new(ptr)));
            limbo.len()
        };
        if len > self.high_water.get() {
            self.high_water.set(len);
            g.high_water.fetch_max(len as u64, Ordering::Relaxed);
        }
        if len > g.config.watermark {
            // Try right away rather than waiting for the operation to end.
            if (len - g.config.watermark) % 64 == 1 && !self.collecting.get() {
                g.try_advance();
                self.collect();
            }
        }
    }

    fn force_threshold(&self, g: &Global) -> usize {
        self.force_at.get().max(g.config.watermark / 8 * 7)
    }

    /// Advances and collects, yielding to stalled readers, until the limbo
    /// list is half drained or the epoch stops moving. After a failed drain
    /// the next attempt waits for the list to grow further.
    fn force(&self) {
        let g = self.global();
        let mut last = g.epoch.load(Ordering::SeqCst);
        let mut stuck = 0;
        while self.limbo.borrow().len() > g.config.watermark / 2 && stuck < 16 {
            let e = g.try_advance();
            self.collect();
            if e == last {
                stuck += 1;
                std::thread::yield_now();
            } else {
                last = e;
                stuck = 0;
            }
        }
        let len = self.limbo.borrow().len();
        self.force_at.set(if len > g.config.watermark / 2 { len + g.config.watermark / 8 } else { 0 });
    }

    /// Releases every limbo entry whose grace period has elapsed.
    pub fn collect(&self) {
        if self.collect_own() {
            self.collect_orphans();
        }
    }

    /// Releases this thread's expired limbo entries. Returns false when a
    /// collection is already running further up the stack.
    fn collect_own(&self) -> bool {
        let Some(g) = self.global.as_deref() else { return false };
        if self.collecting.replace(true) {
            return false;
        }
        let e = g.epoch.load(Ordering::SeqCst);
        let mut ready = Vec::new();
        {
            let mut limbo = self.limbo.borrow_mut();
            while let Some(&(tag, _)) = limbo.front() {
                if tag + 2 > e {
                    break;
                }
                ready.push(limbo.pop_front().unwrap().1);
            }
        }
        for r in ready {
            self.reclaim(r);
        }
        self.collecting.set(false);
        true
    }

    fn collect_orphans(&self) {
        let Some(g) = self.global.as_deref() else { return };
        let e = g.epoch.load(Ordering::SeqCst);
        let ready: Vec<Retired> = match g.orphans.try_lock() {
            Ok(mut orphans) if !orphans.is_empty() => {
                let (ready, keep) =
                    std::mem::take(&mut *orphans).into_iter().partition::<Vec<_>, _>(|(tag, _)| tag + 2 <= e);
                *orphans = keep;
                ready.into_iter().map(|(_, r)| r).collect()
            }
            _ => return,
        };
        for r in ready {
            self.reclaim(r);
        }
    }

    fn reclaim(&self, r: Retired) {
        let g = self.global();
        unsafe { (r.release)(r.ptr, self) };
        g.reclaimed.fetch_add(1, Ordering::Relaxed);
        if g.config.poison {
            unsafe { (*r.header).mark_dead() };
            let evicted = {
                let mut q = g.quarantine.lock().unwrap();
                q.push_back(r);
                if q.len() > g.config.quarantine {
                    q.pop_front()
                } else {
                    None
                }
            };
            if let Some(old) = evicted {
                unsafe { (old.dealloc)(old.ptr) };
            }
        } else {
            unsafe { (r.dealloc)(r.ptr) };
        }
    }

    /// Frees everything in limbo without waiting. Only valid when no other
    /// thread can hold references to the retired objects.
    pub(crate) fn drain_all_now(&self) {
        loop {
            let next = self.limbo.borrow_mut().pop_front();
            let Some((_, r)) = next else { break };
            unsafe { (r.release)(r.ptr, self) };
            if let Some(g) = self.global.as_deref() {
                g.reclaimed.fetch_add(1, Ordering::Relaxed);
            }
            unsafe { (r.dealloc)(r.ptr) };
        }
    }

    pub fn limbo_len(&self) -> usize {
        self.limbo.borrow().len()
    }

    /// Runs advance and collect until this thread's limbo list and the
    /// orphan list are empty, or no further progress is possible.
    pub fn flush(&self) {
        let Some(g) = self.global.as_deref() else { return };
        debug_assert!(!self.is_pinned());
        for attempt in 0..256 {
            g.try_advance();
            self.collect();
            if self.limbo.borrow().is_empty() && g.orphans.lock().unwrap().is_empty() {
                return;
            }
            if attempt > 8 {
                std::thread::yield_now();
            }
        }
    }
}

impl Drop for Local {
    fn drop(&mut self) {
        let Some(g) = self.global.take() else {
            self.drain_all_now();
            return;
        };
        let p = unsafe { &*self.participant };
        p.epoch.store(0, Ordering::Release);
        let rest: Vec<_> = self.limbo.get_mut().drain(..).collect();
        if !rest.is_empty() {
            g.orphans.lock().unwrap().extend(rest);
        }
        p.in_use.store(false, Ordering::Release);
    }
}

/// Reference count helper shared by descriptors and propagation statuses.
#[derive(Debug)]
pub(crate) struct RefCount(AtomicUsize);

impl RefCount {
    pub(crate) const fn new(n: usize) -> Self {
        RefCount(AtomicUsize::new(n))
    }

    /// Increments unless the count already reached zero.
    pub(crate) fn acquire(&self) -> bool {
        let mut n = self.0.load(Ordering::Relaxed);
        loop {
            if n == 0 {
                return false;
            }
            match self.0.compare_exchange_weak(n, n + 1, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => return true,
                Err(m) => n = m,
            }
        }
    }

    /// Decrements and reports whether this was the last reference.
    pub(crate) fn release(&self) -> bool {
        let prev = self.0.fetch_sub(1, Ordering::AcqRel);
        debug_assert!(prev > 0);
        prev == 1
    }

    #[cfg(test)]
    pub(crate) fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}
