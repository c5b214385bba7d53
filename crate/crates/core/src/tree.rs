//! The public set type.

use std::cell::RefCell;
use std::fmt;
use std::marker::PhantomData;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::augment::{Augmentation, Counted, Size, Version};
use crate::llx_scx;
use crate::node::{empty_root, nref, Cx, Node};
use crate::propagate::Scratch;
use crate::query::{self, Snapshot};
use crate::reclaim::{Collector, Local, ReclaimConfig, ReclaimStats};
use crate::stats::{ThreadStats, TreeStats};
use crate::{Error, INF};

/// How updates carry their effect to the root version.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Double refresh at every node.
    Bat,
    /// Delegate after a double refresh fails at a live node.
    BatDel,
    /// Delegate after a single failed refresh at a live node.
    BatEagerDel,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Bat, Variant::BatDel, Variant::BatEagerDel];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bat => "bat",
            Variant::BatDel => "bat-del",
            Variant::BatEagerDel => "bat-eagerdel",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Construction-time options.
#[derive(Clone, Debug)]
pub struct Config {
    pub variant: Variant,
    /// Rebalance with chromatic rules. When false every weight is 1 and
    /// cleanup does nothing.
    pub balanced: bool,
    /// Polling iterations before a waiting propagate resumes on its own.
    /// `None` waits indefinitely.
    pub delegation_timeout: Option<u64>,
    /// Start propagate from the update's search path instead of the root.
    pub seed_stack: bool,
    pub reclaim: ReclaimConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            variant: Variant::Bat,
            balanced: true,
            delegation_timeout: Some(4096),
            seed_stack: true,
            reclaim: ReclaimConfig::default(),
        }
    }
}

impl Config {
    pub fn new(variant: Variant) -> Self {
        Config { variant, ..Config::default() }
    }

    pub fn unbalanced(mut self) -> Self {
        self.balanced = false;
        self
    }

    pub fn timeout(mut self, iterations: Option<u64>) -> Self {
        self.delegation_timeout = iterations;
        self
    }

    pub fn poison(mut self, on: bool) -> Self {
        self.reclaim.poison = on;
        self
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct ThreadCtx {
    tree: u64,
    closed: Arc<AtomicBool>,
    local: Local,
    stats: Arc<ThreadStats>,
    scratch: RefCell<Scratch>,
}

thread_local! {
    static CONTEXTS: RefCell<Vec<Rc<ThreadCtx>>> = const { RefCell::new(Vec::new()) };
}

/// A lock-free ordered set of `u64` keys with snapshot queries.
///
/// `u64::MAX` is reserved.
pub struct BatTree<A: Augmentation = Size> {
    root: *mut Node<A>,
    config: Config,
    id: u64,
    closed: Arc<AtomicBool>,
    collector: Collector,
    threads: Mutex<Vec<Arc<ThreadStats>>>,
    _marker: PhantomData<A>,
}

unsafe impl<A: Augmentation> Send for BatTree<A> {}
unsafe impl<A: Augmentation> Sync for BatTree<A> {}

impl Default for BatTree<Size> {
    fn default() -> Self {
        Self::new()
    }
}

impl BatTree<Size> {
    pub fn new() -> Self {
        Self::with_config(Config::default())
    }

    pub fn with_config(config: Config) -> Self {
        Self::from_root(empty_root(), config)
    }
}

fn check_key(k: u64) -> Result<(), Error> {
    if k == INF {
        Err(Error::ReservedKey(k))
    } else {
        Ok(())
    }
}

impl<A: Augmentation> BatTree<A> {
    /// A tree maintaining augmentation `A`.
    pub fn with_augmentation(config: Config) -> Self {
        Self::from_root(empty_root(), config)
    }

    fn from_root(root: *mut Node<A>, config: Config) -> Self {
        let tree = BatTree {
            root,
            collector: Collector::new(config.reclaim.clone()),
            config,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            closed: Arc::new(AtomicBool::new(false)),
            threads: Mutex::new(Vec::new()),
            _marker: PhantomData,
        };
        tree.with(|cx, _| {
            cx.read_version(tree.root);
        });
        tree
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn ctx(&self) -> Rc<ThreadCtx> {
        CONTEXTS.with(|c| {
            let mut v = c.borrow_mut();
            if let Some(x) = v.iter().find(|x| x.tree == self.id) {
                return x.clone();
            }
            v.retain(|x| !x.closed.load(Ordering::Relaxed));
            let stats = Arc::new(ThreadStats::default());
            self.threads.lock().unwrap().push(stats.clone());
            let x = Rc::new(ThreadCtx {
                tree: self.id,
                closed: self.closed.clone(),
                local: self.collector.register(),
                stats,
                scratch: RefCell::new(Scratch::default()),
            });
            v.push(x.clone());
            x
        })
    }

    /// Runs `f` pinned, with this thread's context.
    fn with<R>(&self, f: impl FnOnce(&Cx<'_, A>, &mut Scratch) -> R) -> R {
        let ctx = self.ctx();
        let _guard = ctx.local.pin();
        let cx = Cx { root: self.root, local: &ctx.local, stats: &ctx.stats, cfg: &self.config };
        let mut scratch = ctx.scratch.borrow_mut();
        f(&cx, &mut scratch)
    }

    /// Adds `k`. Returns false if it was already present.
    pub fn insert(&self, k: u64) -> Result<bool, Error> {
        check_key(k)?;
        Ok(self.with(|cx, s| {
            let r = cx.insert(k, &mut s.path);
            cx.propagate(k, s, self.config.seed_stack);
            r
        }))
    }

    /// Removes `k`. Returns false if it was absent.
    pub fn delete(&self, k: u64) -> Result<bool, Error> {
        check_key(k)?;
        Ok(self.with(|cx, s| {
            let r = cx.delete(k, &mut s.path);
            cx.propagate(k, s, self.config.seed_stack);
            r
        }))
    }

    /// Membership, answered from a snapshot.
    pub fn contains(&self, k: u64) -> Result<bool, Error> {
        check_key(k)?;
        Ok(self.read(|v| query::find(v, k)))
    }

    /// Runs `f` on the current root version while pinned.
    pub fn read<R>(&self, f: impl FnOnce(&Version<A>) -> R) -> R {
        let ctx = self.ctx();
        let _guard = ctx.local.pin();
        let v = nref(self.root).version.load(Ordering::Acquire);
        f(unsafe { &*v })
    }

    /// Takes a snapshot that can be queried repeatedly and shared across threads.
    pub fn snapshot(&self) -> Snapshot<'_, A> {
        let guard = self.collector.pin_detached();
        let v = nref(self.root).version.load(Ordering::Acquire);
        Snapshot::new(v, guard)
    }

    /// Aggregate over the whole set.
    pub fn value(&self) -> A::Value {
        self.read(|v| *v.value())
    }

    pub fn stats(&self) -> TreeStats {
        let mut t = TreeStats::default();
        for s in self.threads.lock().unwrap().iter() {
            s.add_into(&mut t);
        }
        t
    }

    pub fn reset_stats(&self) {
        for s in self.threads.lock().unwrap().iter() {
            s.reset();
        }
    }

    pub fn reclaim_stats(&self) -> ReclaimStats {
        self.collector.stats()
    }

    /// Advances epochs and frees what this thread can. Call while no
    /// operation of this thread is in flight.
    pub fn flush(&self) {
        let ctx = self.ctx();
        ctx.local.flush();
    }

    /// Drops this thread's context, handing its pending garbage to the tree.
    pub fn detach_thread(&self) {
        CONTEXTS.with(|c| c.borrow_mut().retain(|x| x.tree != self.id));
    }

    /// Walks the node tree. Only meaningful while no update is running.
    pub fn audit(&self) -> Audit {
        let ctx = self.ctx();
        let _g = ctx.local.pin();
        audit_nodes(self.root)
    }

    /// Node-tree shape of the data subtree, for structural comparisons.
    pub fn shape(&self) -> Shape {
        let ctx = self.ctx();
        let _g = ctx.local.pin();
        Shape::of(nref(self.root).child(0))
    }

    /// Builds a tree whose data subtree (left child of the root) is `shape`.
    ///
    /// Internal versions are computed before the tree is returned.
    pub fn from_shape(shape: &Shape, config: Config) -> Self {
        let top = shape.build::<A>();
        let root = Node::new_internal(INF, 1, top, Node::new_leaf(INF, 1));
        Self::from_root(root, config)
    }

    /// Applies one rebalancing step at the first violation on the path to
    /// `k`, if any. Returns the name of the rule applied.
    pub fn rebalance_once(&self, k: u64) -> Option<&'static str> {
        self.with(|cx, _| {
            let before = cx.stats_snapshot();
            cx.cleanup_once(k);
            cx.rule_diff(&before)
        })
    }

    /// Search path for `k`: keys of the internal nodes visited and the leaf key.
    pub fn search_path(&self, k: u64) -> (Vec<u64>, u64) {
        self.with(|cx, s| {
            let leaf = cx.search(k, &mut s.path);
            let keys = s.path.iter().map(|&n| nref(n as *mut Node<A>).key).collect();
            (keys, nref(leaf).key)
        })
    }
}

impl<A: Counted> BatTree<A> {
    /// Number of keys.
    pub fn len(&self) -> u64 {
        self.read(|v| v.count())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of keys `<= k`.
    pub fn rank(&self, k: u64) -> u64 {
        self.read(|v| query::rank(v, k))
    }

    /// The `i`-th smallest key, 1-based.
    pub fn select(&self, i: u64) -> Result<u64, Error> {
        self.read(|v| query::select(v, i))
    }

    /// Number of keys in `[lo, hi]`.
    pub fn range_count(&self, lo: u64, hi: u64) -> u64 {
        self.read(|v| query::range_count(v, lo, hi))
    }
}

impl<A: Augmentation> Drop for BatTree<A> {
    fn drop(&mut self) {
        let ctx = self.ctx();
        let mut stack = vec![self.root];
        let mut nodes = Vec::new();
        while let Some(n) = stack.pop() {
            nodes.push(n);
            let r = unsafe { &*n };
            if !r.leaf {
                stack.push(r.child(0));
                stack.push(r.child(1));
            }
        }
        for n in nodes {
            unsafe {
                llx_scx::release_record(n, &ctx.local);
                let v = (*n).version.load(Ordering::Relaxed);
                if !v.is_null() {
                    drop(Box::from_raw(v));
                }
                drop(Box::from_raw(n));
            }
        }
        ctx.local.drain_all_now();
        self.closed.store(true, Ordering::Relaxed);
        drop(ctx);
        self.detach_thread();
    }
}

/// Result of a node-tree walk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Audit {
    /// Keys held, excluding sentinels.
    pub keys: u64,
    /// Edges on the longest path from the root to a leaf.
    pub height: usize,
    pub red_red: usize,
    pub overweight: usize,
    /// Every internal key separates its subtrees.
    pub bst_ok: bool,
    /// Weight sums from the data subtree's top to every leaf agree.
    pub weights_ok: bool,
    /// Reachable nodes whose version link is nil.
    pub nil_versions: usize,
    /// Reachable nodes whose version disagrees with the node's key or subtree.
    pub bad_versions: usize,
    pub finalized_reachable: usize,
}

impl Audit {
    pub fn violations(&self) -> usize {
        self.red_red + self.overweight
    }
}

/// (node, depth, lo, hi, weight sum from top, parent weight)
type AuditFrame<A> = (*mut Node<A>, usize, u128, u128, u64, u32);

fn audit_nodes<A: Augmentation>(root: *mut Node<A>) -> Audit {
    let mut a = Audit { bst_ok: true, weights_ok: true, ..Audit::default() };
    let top = nref(root).child(0);
    let mut path_weight = None;
    let mut stack: Vec<AuditFrame<A>> = vec![(top, 1, 0, 1 << 64, 0, 1)];
    let mut leaf_values: std::collections::HashMap<usize, A::Value> = Default::default();
    let mut order = Vec::new();
    while let Some((n, depth, lo, hi, sum, pw)) = stack.pop() {
        let r = nref(n);
        order.push(n);
        let k = u128::from(r.key);
        let sum = sum + u64::from(r.weight);
        if r.weight > 1 {
            a.overweight += 1;
        }
        if r.weight == 0 && pw == 0 {
            a.red_red += 1;
        }
        if r.is_finalized() {
            a.finalized_reachable += 1;
        }
        if r.leaf {
            a.height = a.height.max(depth);
            if r.key != INF {
                a.keys += 1;
            }
            if k < lo || (k >= hi && r.key != INF) {
                a.bst_ok = false;
            }
            match path_weight {
                None => path_weight = Some(sum),
                Some(w) if w != sum => a.weights_ok = false,
                _ => {}
            }
        } else {
            if k < lo || k > hi {
                a.bst_ok = false;
            }
            stack.push((r.child(0), depth + 1, lo, k, sum, r.weight));
            stack.push((r.child(1), depth + 1, k, hi, sum, r.weight));
        }
    }
    for &n in order.iter().rev() {
        let r = nref(n);
        let v = r.version.load(Ordering::Acquire);
        let expect = if r.leaf {
            Some(if r.key == INF { A::sentinel() } else { A::leaf(r.key) })
        } else {
            let l = leaf_values.get(&(r.child(0) as usize)).copied();
            let rt = leaf_values.get(&(r.child(1) as usize)).copied();
            l.zip(rt).map(|(l, rt)| A::combine(&l, &rt))
        };
        if let Some(e) = expect {
            leaf_values.insert(n as usize, e);
        }
        if v.is_null() {
            a.nil_versions += 1;
            continue;
        }
        let v = unsafe { &*v };
        if v.key != r.key || Some(*v.value()) != expect {
            a.bad_versions += 1;
        }
    }
    a
}

/// A literal description of a node tree, used to build and compare shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Leaf { key: u64, weight: u32 },
    Node { key: u64, weight: u32, left: Box<Shape>, right: Box<Shape> },
}

impl Shape {
    pub fn leaf(key: u64) -> Shape {
        Shape::Leaf { key, weight: 1 }
    }

    pub fn node(key: u64, weight: u32, left: Shape, right: Shape) -> Shape {
        Shape::Node { key, weight, left: Box::new(left), right: Box::new(right) }
    }

    pub fn key(&self) -> u64 {
        match *self {
            Shape::Leaf { key, .. } | Shape::Node { key, .. } => key,
        }
    }

    pub fn weight(&self) -> u32 {
        match *self {
            Shape::Leaf { weight, .. } | Shape::Node { weight, .. } => weight,
        }
    }

    /// Leaf keys from left to right.
    pub fn leaves(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(s) = stack.pop() {
            match s {
                Shape::Leaf { key, .. } => out.push(*key),
                Shape::Node { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    fn build<A: Augmentation>(&self) -> *mut Node<A> {
        match self {
            Shape::Leaf { key, weight } => Node::new_leaf(*key, *weight),
            Shape::Node { key, weight, left, right } => {
                Node::new_internal(*key, *weight, left.build::<A>(), right.build::<A>())
            }
        }
    }

    fn of<A: Augmentation>(n: *mut Node<A>) -> Shape {
        let r = nref(n);
        if r.leaf {
            Shape::Leaf { key: r.key, weight: r.weight }
        } else {
            Shape::node(r.key, r.weight, Shape::of(r.child(0)), Shape::of(r.child(1)))
        }
    }
}

impl<'a, A: Augmentation> Cx<'a, A> {
    fn stats_snapshot(&self) -> TreeStats {
        let mut t = TreeStats::default();
        self.stats.add_into(&mut t);
        t
    }

    fn rule_diff(&self, before: &TreeStats) -> Option<&'static str> {
        let now = self.stats_snapshot();
        [
            (now.rule_blk, before.rule_blk, "BLK"),
            (now.rule_rb1, before.rule_rb1, "RB1"),
            (now.rule_rb2, before.rule_rb2, "RB2"),
            (now.rule_push, before.rule_push, "PUSH"),
            (now.rule_w_single, before.rule_w_single, "W1"),
            (now.rule_w_double, before.rule_w_double, "W2"),
            (now.rule_w_rotate, before.rule_w_rotate, "W3"),
            (now.rule_root, before.rule_root, "ROOT"),
        ]
        .into_iter()
        .find(|(a, b, _)| a != b)
        .map(|(_, _, name)| name)
    }
}
