//! Load-link extended and store-conditional extended over two-child records.
//!
//! An SCX freezes every record it depends on by installing its descriptor in
//! the record's `info` field, marks the records it removes, swings one child
//! link and commits. Any thread that finds a record frozen by an in-progress
//! descriptor helps it to a terminal state.
//!
//! Descriptors are reference counted: one count for the creator and one for
//! every `info` field that points at the descriptor. The descriptor is retired
//! when the count drops to zero.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, AtomicU8, Ordering};

use crate::reclaim::{Header, Local, Reclaim, RefCount};
use crate::staging::yield_point;

/// Largest number of records a single SCX may depend on.
pub const MAX_V: usize = 6;

/// Terminal and non-terminal states of a descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ScxState {
    InProgress = 0,
    Committed = 1,
    Aborted = 2,
}

impl ScxState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => ScxState::InProgress,
            1 => ScxState::Committed,
            _ => ScxState::Aborted,
        }
    }
}

/// Synchronisation fields of a record with two mutable child pointers.
pub struct Record<T> {
    info: AtomicPtr<Descriptor<T>>,
    marked: AtomicBool,
    fields: [AtomicPtr<T>; 2],
}

impl<T> Record<T> {
    pub fn new(left: *mut T, right: *mut T) -> Self {
        Record {
            info: AtomicPtr::new(ptr::null_mut()),
            marked: AtomicBool::new(false),
            fields: [AtomicPtr::new(left), AtomicPtr::new(right)],
        }
    }

    #[inline]
    pub fn field(&self, i: usize) -> *mut T {
        self.fields[i].load(Ordering::Acquire)
    }

    /// Whether the record has been removed by a committed or committing SCX.
    #[inline]
    pub fn is_marked(&self) -> bool {
        self.marked.load(Ordering::Acquire)
    }
}

/// Types that embed a [`Record`].
pub trait Linked: Sized + 'static {
    fn record(&self) -> &Record<Self>;
}

/// State captured by a successful LLX.
pub struct LlxSnapshot<T> {
    node: *mut T,
    info: *mut Descriptor<T>,
    pub fields: [*mut T; 2],
}

impl<T> Clone for LlxSnapshot<T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for LlxSnapshot<T> {}

impl<T> LlxSnapshot<T> {
    pub fn node(&self) -> *mut T {
        self.node
    }
}

pub enum Llx<T> {
    Snapshot(LlxSnapshot<T>),
    Fail,
    Finalized,
}

impl<T> Llx<T> {
    pub fn ok(self) -> Option<LlxSnapshot<T>> {
        match self {
            Llx::Snapshot(s) => Some(s),
            _ => None,
        }
    }
}

pub struct Descriptor<T> {
    header: Header,
    state: AtomicU8,
    all_frozen: AtomicBool,
    refs: RefCount,
    /// Epoch announced by the creator when the descriptor was built.
    epoch: u64,
    len: usize,
    nodes: [*mut T; MAX_V],
    expected: [*mut Descriptor<T>; MAX_V],
    finalize: u32,
    target: *mut T,
    field: usize,
    old: *mut T,
    new: *mut T,
}

unsafe impl<T: Linked> Reclaim for Descriptor<T> {
    fn header(&self) -> &Header {
        &self.header
    }
}

impl<T> Descriptor<T> {
    pub fn state(&self) -> ScxState {
        ScxState::from_u8(self.state.load(Ordering::Acquire))
    }
}

/// Counters for SCX activity, kept by the caller.
#[derive(Default, Debug)]
pub struct ScxCounters {
    pub attempts: AtomicU64,
    pub commits: AtomicU64,
    pub helps: AtomicU64,
}

/// Drops one reference to `d`, retiring it when it was the last.
pub(crate) unsafe fn release_descriptor<T: Linked>(d: *mut Descriptor<T>, local: &Local) {
    if !d.is_null() && (*d).refs.release() {
        local.retire(d);
    }
}

#[inline]
fn record<'a, T: Linked>(node: *mut T) -> &'a Record<T> {
    unsafe { (*node).record() }
}

/// Load-link extended on `node`.
///
/// Must be called while pinned.
pub fn llx<T: Linked>(node: *mut T, local: &Local) -> Llx<T> {
    let r = record(node);
    let marked1 = r.marked.load(Ordering::Acquire);
    let info = r.info.load(Ordering::Acquire);
    let state = if info.is_null() {
        ScxState::Aborted
    } else {
        unsafe { (*info).header.check() };
        unsafe { (*info).state() }
    };
    let marked2 = r.marked.load(Ordering::Acquire);
    if state == ScxState::Aborted || (state == ScxState::Committed && !marked2) {
        let fields = [r.field(0), r.field(1)];
        if r.info.load(Ordering::Acquire) == info {
            return Llx::Snapshot(LlxSnapshot { node, info, fields });
        }
    }
    if marked1 && !info.is_null() {
        let s = unsafe { (*info).state() };
        if s == ScxState::Committed || (s == ScxState::InProgress && help_other(info, local)) {
            return Llx::Finalized;
        }
    }
    let cur = r.info.load(Ordering::Acquire);
    if !cur.is_null() && unsafe { (*cur).state() } == ScxState::InProgress {
        help_other(cur, local);
    }
    Llx::Fail
}

/// Whether `node` has been removed from the structure.
pub fn is_finalized<T: Linked>(node: *mut T) -> bool {
    record(node).is_marked()
}

/// Helps a descriptor this thread did not create.
///
/// The records and descriptors `d` depends on were live when its creator
/// pinned. Lowering this thread's epoch to the creator's, then confirming the
/// creator is still inside its SCX, keeps them allocated while we help.
fn help_other<T: Linked>(d: *mut Descriptor<T>, local: &Local) -> bool {
    let dd = unsafe { &*d };
    local.inherit(dd.epoch);
    match dd.state() {
        ScxState::InProgress => help(d, local),
        ScxState::Committed => true,
        ScxState::Aborted => false,
    }
}

/// Drives `d` to a terminal state and reports whether it committed.
pub(crate) fn help<T: Linked>(d: *mut Descriptor<T>, local: &Local) -> bool {
    let dd = unsafe { &*d };
    dd.header.check();
    for i in 0..dd.len {
        let r = record(dd.nodes[i]);
        let exp = dd.expected[i];
        if !dd.refs.acquire() {
            return dd.state() == ScxState::Committed;
        }
        match r.info.compare_exchange(exp, d, Ordering::AcqRel, Ordering::Acquire) {
            Ok(_) => unsafe { release_descriptor(exp, local) },
            Err(cur) => {
                unsafe { release_descriptor(d, local) };
                if cur != d {
                    if dd.all_frozen.load(Ordering::Acquire) {
                        return true;
                    }
                    dd.state.store(ScxState::Aborted as u8, Ordering::Release);
                    return false;
                }
            }
        }
    }
    dd.all_frozen.store(true, Ordering::Release);
    for i in 0..dd.len {
        if dd.finalize & (1 << i) != 0 {
            record(dd.nodes[i]).marked.store(true, Ordering::Release);
        }
    }
    let _ = record(dd.target).fields[dd.field].compare_exchange(dd.old, dd.new, Ordering::AcqRel, Ordering::Acquire);
    dd.state.store(ScxState::Committed as u8, Ordering::Release);
    true
}

/// Argument bundle for [`scx`].
pub struct ScxArgs<'a, T> {
    /// Snapshots of the records the update depends on, in a fixed order.
    pub v: &'a [LlxSnapshot<T>],
    /// Bit `i` set means `v[i]` is removed by the update.
    pub finalize: u32,
    /// Index into `v` of the record whose child link changes.
    pub target: usize,
    pub field: usize,
    pub new: *mut T,
}

pub(crate) fn build<T: Linked>(args: &ScxArgs<'_, T>, local: &Local) -> *mut Descriptor<T> {
    assert!(args.v.len() <= MAX_V && args.target < args.v.len());
    let mut nodes = [ptr::null_mut(); MAX_V];
    let mut expected = [ptr::null_mut(); MAX_V];
    for (i, s) in args.v.iter().enumerate() {
        nodes[i] = s.node;
        expected[i] = s.info;
    }
    let t = &args.v[args.target];
    Box::into_raw(Box::new(Descriptor {
        header: Header::new(),
        state: AtomicU8::new(ScxState::InProgress as u8),
        all_frozen: AtomicBool::new(false),
        refs: RefCount::new(1),
        epoch: local.announced(),
        len: args.v.len(),
        nodes,
        expected,
        finalize: args.finalize,
        target: t.node,
        field: args.field,
        old: t.fields[args.field],
        new: args.new,
    }))
}

/// Store-conditional extended.
///
/// Succeeds iff no record in `args.v` changed since its LLX. On success the
/// finalized records are marked and the target field holds `args.new`.
pub fn scx<T: Linked>(args: ScxArgs<'_, T>, local: &Local) -> bool {
    let d = build(&args, local);
    let ok = help(d, local);
    unsafe { release_descriptor(d, local) };
    ok
}

/// Like [`scx`], with yield points around the help call for staged runs.
pub(crate) fn scx_staged<T: Linked>(args: ScxArgs<'_, T>, local: &Local, site: &'static str, key: u64) -> bool {
    let d = build(&args, local);
    yield_point(site, key);
    let ok = help(d, local);
    yield_point(SCX_POST, key);
    unsafe { release_descriptor(d, local) };
    ok
}

pub(crate) const SCX_POST: &str = "scx.post";

/// Drops the `info` reference held by a record that is being freed.
pub(crate) unsafe fn release_record<T: Linked>(node: *mut T, local: &Local) {
    let info = record(node).info.load(Ordering::Relaxed);
    release_descriptor(info, local);
}
