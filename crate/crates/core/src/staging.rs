//! Deterministic interleavings for concurrency tests.
//!
//! Algorithm code calls [`yield_point`] at labelled steps. A [`StagedRun`]
//! starts a set of threads parked before their first instruction and then
//! executes a schedule: each [`Step`] lets exactly one thread run until it
//! next reaches the named label, so the order of the labelled events is fixed
//! by the schedule. Hooks are compiled only into debug builds.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

/// Label of a top-level version CAS on a non-root node, before the CAS.
pub const REFRESH_CAS_PRE: &str = "refresh.cas.pre";
pub const REFRESH_CAS_POST: &str = "refresh.cas.post";
/// Same as the above for the root.
pub const ROOT_CAS_PRE: &str = "refresh.root.cas.pre";
pub const ROOT_CAS_POST: &str = "refresh.root.cas.post";
/// Recursive refresh of a node whose version is still nil.
pub const NIL_CAS_PRE: &str = "refresh.nil.cas.pre";
pub const INSERT_SCX_PRE: &str = "insert.scx.pre";
pub const DELETE_SCX_PRE: &str = "delete.scx.pre";
pub const REBALANCE_SCX_PRE: &str = "rebalance.scx.pre";
pub const SCX_POST: &str = crate::llx_scx::SCX_POST;
pub const PROPAGATE_BEGIN: &str = "propagate.begin";
pub const PROPAGATE_END: &str = "propagate.end";
/// Written just after a propagate records its delegatee.
pub const DELEGATEE_WRITE: &str = "delegatee.write";
pub const DONE_WRITE: &str = "done.write";
pub const WAIT_SPIN: &str = "wait.spin";
pub const WAIT_TIMEOUT: &str = "wait.timeout";

#[cfg(debug_assertions)]
type Hook = Arc<dyn Fn(&'static str, u64) + Send + Sync>;

#[cfg(debug_assertions)]
static ACTIVE_HOOKS: AtomicUsize = AtomicUsize::new(0);

#[cfg(debug_assertions)]
thread_local! {
    static HOOK: std::cell::RefCell<Option<Hook>> = const { std::cell::RefCell::new(None) };
}

/// Marks a labelled step. `key` identifies the node involved, if any.
#[inline(always)]
pub fn yield_point(label: &'static str, key: u64) {
    #[cfg(debug_assertions)]
    if ACTIVE_HOOKS.load(Ordering::Relaxed) > 0 {
        let hook = HOOK.with(|h| h.borrow().clone());
        if let Some(h) = hook {
            h(label, key);
        }
    }
    #[cfg(not(debug_assertions))]
    let _ = (label, key);
}

/// One scheduling step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// Run `thread` until it reaches `label`, optionally only at a node with `key`.
    At { thread: usize, label: &'static str, key: Option<u64> },
    /// Run `thread` to completion while the others stay parked.
    Finish { thread: usize },
}

impl Step {
    pub fn at(thread: usize, label: &'static str) -> Step {
        Step::At { thread, label, key: None }
    }

    pub fn at_key(thread: usize, label: &'static str, key: u64) -> Step {
        Step::At { thread, label, key: Some(key) }
    }

    pub fn finish(thread: usize) -> Step {
        Step::Finish { thread }
    }

    fn thread(&self) -> usize {
        match *self {
            Step::At { thread, .. } | Step::Finish { thread } => thread,
        }
    }
}

/// Failure to execute a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StagingError {
    /// Yield points are compiled out of release builds.
    Unavailable,
    /// The thread finished without reaching the step's label.
    Unreachable {
        step: usize,
        detail: String,
    },
    /// The thread did not reach the label within the time limit.
    Stuck {
        step: usize,
        detail: String,
    },
    NoSuchThread(usize),
    /// A staged thread panicked.
    Panicked(usize),
}

impl fmt::Display for StagingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StagingError::Unavailable => write!(f, "staged runs need a debug build"),
            StagingError::Unreachable { step, detail } => write!(f, "step {step} unreachable: {detail}"),
            StagingError::Stuck { step, detail } => write!(f, "step {step} did not complete: {detail}"),
            StagingError::NoSuchThread(t) => write!(f, "no thread {t}"),
            StagingError::Panicked(t) => write!(f, "thread {t} panicked"),
        }
    }
}

impl std::error::Error for StagingError {}

/// A labelled event observed during a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub thread: usize,
    pub label: &'static str,
    pub key: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Mode {
    /// Parked; waiting for a target.
    Parked,
    /// Running until the target label.
    Target(&'static str, Option<u64>),
    /// Running with no more parking.
    Free,
    Done,
}

struct Control {
    modes: Vec<Mode>,
    trace: Vec<Event>,
    panicked: Vec<bool>,
}

struct Shared {
    state: Mutex<Control>,
    cv: Condvar,
}

type Job<R> = Box<dyn FnOnce() -> R + Send>;

/// A set of threads driven through a fixed schedule.
pub struct StagedRun<R> {
    jobs: Vec<Job<R>>,
    limit: Duration,
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct StagedOutcome<R> {
    /// Return value of each thread, by index.
    pub results: Vec<R>,
    /// Every labelled event in the order it happened.
    pub trace: Vec<Event>,
}

impl<R> StagedOutcome<R> {
    pub fn reached(&self, thread: usize, label: &str) -> usize {
        self.trace.iter().filter(|e| e.thread == thread && e.label == label).count()
    }
}

impl<R: Send + 'static> Default for StagedRun<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Send + 'static> StagedRun<R> {
    pub fn new() -> Self {
        StagedRun { jobs: Vec::new(), limit: Duration::from_secs(10) }
    }

    /// Time allowed for a single step.
    pub fn step_limit(mut self, limit: Duration) -> Self {
        self.limit = limit;
        self
    }

    /// Adds a thread; threads are numbered in insertion order from zero.
    pub fn thread(mut self, f: impl FnOnce() -> R + Send + 'static) -> Self {
        self.jobs.push(Box::new(f));
        self
    }

    /// Executes `schedule`, then releases every remaining thread at once.
    ///
    /// `between` runs after each step while all threads are parked.
    pub fn run(self, schedule: &[Step]) -> Result<StagedOutcome<R>, StagingError> {
        self.run_with(schedule, |_| {})
    }

    pub fn run_with(self, schedule: &[Step], mut between: impl FnMut(usize)) -> Result<StagedOutcome<R>, StagingError> {
        #[cfg(not(debug_assertions))]
        {
            let _ = (schedule, &mut between);
            return Err(StagingError::Unavailable);
        }
        #[cfg(debug_assertions)]
        {
            let n = self.jobs.len();
            if let Some(s) = schedule.iter().find(|s| s.thread() >= n) {
                return Err(StagingError::NoSuchThread(s.thread()));
            }
            let shared = Arc::new(Shared {
                state: Mutex::new(Control {
                    modes: vec![Mode::Parked; n],
                    trace: Vec::new(),
                    panicked: vec![false; n],
                }),
                cv: Condvar::new(),
            });
            ACTIVE_HOOKS.fetch_add(1, Ordering::SeqCst);
            let _active = ActiveGuard;
            let mut handles = Vec::with_capacity(n);
            for (id, job) in self.jobs.into_iter().enumerate() {
                let sh = shared.clone();
                handles.push(std::thread::spawn(move || {
                    let hook_sh = sh.clone();
                    let hook: Hook = Arc::new(move |label, key| on_yield(&hook_sh, id, label, key));
                    HOOK.with(|h| *h.borrow_mut() = Some(hook));
                    park(&sh, id);
                    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(job));
                    HOOK.with(|h| *h.borrow_mut() = None);
                    let mut st = sh.state.lock().unwrap();
                    st.modes[id] = Mode::Done;
                    st.panicked[id] = out.is_err();
                    sh.cv.notify_all();
                    drop(st);
                    out.ok()
                }));
            }
            let mut failure = None;
            for (i, step) in schedule.iter().enumerate() {
                if let Err(e) = drive(&shared, i, step, self.limit) {
                    failure = Some(e);
                    break;
                }
                between(i);
            }
            {
                let mut st = shared.state.lock().unwrap();
                for m in st.modes.iter_mut() {
                    if *m != Mode::Done {
                        *m = Mode::Free;
                    }
                }
                shared.cv.notify_all();
            }
            let mut results = Vec::with_capacity(n);
            let mut panicked = None;
            for (id, h) in handles.into_iter().enumerate() {
                match h.join() {
                    Ok(Some(r)) => results.push(r),
                    _ => panicked = panicked.or(Some(id)),
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
            if let Some(id) = panicked {
                return Err(StagingError::Panicked(id));
            }
            let trace = std::mem::take(&mut shared.state.lock().unwrap().trace);
            Ok(StagedOutcome { results, trace })
        }
    }
}

#[cfg(debug_assertions)]
struct ActiveGuard;

#[cfg(debug_assertions)]
impl Drop for ActiveGuard {
    fn drop(&mut self) {
        ACTIVE_HOOKS.fetch_sub(1, Ordering::SeqCst);
    }
}

#[cfg(debug_assertions)]
fn park(sh: &Shared, id: usize) {
    let mut st = sh.state.lock().unwrap();
    while st.modes[id] == Mode::Parked {
        st = sh.cv.wait(st).unwrap();
    }
}

#[cfg(debug_assertions)]
fn on_yield(sh: &Shared, id: usize, label: &'static str, key: u64) {
    let mut st = sh.state.lock().unwrap();
    st.trace.push(Event { thread: id, label, key });
    let hit = match st.modes[id] {
        Mode::Target(l, k) => l == label && k.is_none_or(|k| k == key),
        _ => false,
    };
    if hit {
        st.modes[id] = Mode::Parked;
        sh.cv.notify_all();
        while st.modes[id] == Mode::Parked {
            st = sh.cv.wait(st).unwrap();
        }
    }
}

#[cfg(debug_assertions)]
fn drive(sh: &Shared, index: usize, step: &Step, limit: Duration) -> Result<(), StagingError> {
    let (id, target) = match *step {
        Step::At { thread, label, key } => (thread, Mode::Target(label, key)),
        Step::Finish { thread } => (thread, Mode::Free),
    };
    let mut st = sh.state.lock().unwrap();
    if st.modes[id] == Mode::Done {
        return Err(StagingError::Unreachable { step: index, detail: format!("{step:?} after thread finished") });
    }
    st.modes[id] = target.clone();
    sh.cv.notify_all();
    let deadline = std::time::Instant::now() + limit;
    loop {
        match st.modes[id] {
            Mode::Parked => return Ok(()),
            Mode::Done if matches!(step, Step::Finish { .. }) => return Ok(()),
            Mode::Done => {
                let detail = format!("{step:?}: thread finished first");
                return Err(StagingError::Unreachable { step: index, detail });
            }
            _ => {}
        }
        let now = std::time::Instant::now();
        if now >= deadline {
            return Err(StagingError::Stuck { step: index, detail: format!("{step:?}") });
        }
        st = sh.cv.wait_timeout(st, deadline - now).unwrap().0;
    }
}

/// Counts how often each label was reached by each thread.
pub fn tally(trace: &[Event]) -> HashMap<(usize, &'static str), usize> {
    let mut m = HashMap::new();
    for e in trace {
        *m.entry((e.thread, e.label)).or_insert(0) += 1;
    }
    m
}
