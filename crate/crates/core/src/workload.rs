//! Benchmark workloads: operation generation, prefill, timed trials and CSV
//! output.

use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::Size;
use crate::oracle::SequentialOracle;
use crate::query;
use crate::tree::{BatTree, Config, Variant};

/// Tree configuration under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchVariant {
    Tree(Variant),
    /// Same propagation as `bat`, without rebalancing.
    UnbalancedBaseline,
}

impl BenchVariant {
    pub fn config(self) -> Config {
        match self {
            BenchVariant::Tree(v) => Config::new(v),
            BenchVariant::UnbalancedBaseline => Config::new(Variant::Bat).unbalanced(),
        }
    }
}

impl fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchVariant::Tree(v) => v.fmt(f),
            BenchVariant::UnbalancedBaseline => f.write_str("unbalanced-baseline"),
        }
    }
}

impl FromStr for BenchVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "unbalanced-baseline" {
            return Ok(BenchVariant::UnbalancedBaseline);
        }
        s.parse().map(BenchVariant::Tree)
    }
}

/// Operation percentages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mix {
    pub insert: u32,
    pub delete: u32,
    pub find: u32,
    pub query: u32,
}

impl Mix {
    pub const fn new(insert: u32, delete: u32, find: u32, query: u32) -> Self {
        Mix { insert, delete, find, query }
    }

    fn total(&self) -> u32 {
        self.insert + self.delete + self.find + self.query
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.insert, self.delete, self.find, self.query)
    }
}

impl FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<u32> = s
            .split([':', '-'])
            .map(|p| p.trim().parse().map_err(|_| format!("bad mix component `{p}`")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [i, d, f, q] => Ok(Mix::new(i, d, f, q)),
            _ => Err(format!("mix `{s}` needs four components i:d:f:q")),
        }
    }
}

/// What the query share of the mix runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Range,
    Rank,
    Select,
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::Range => "range",
            QueryKind::Rank => "rank",
            QueryKind::Select => "select",
        })
    }
}

impl FromStr for QueryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "range" => Ok(QueryKind::Range),
            "rank" => Ok(QueryKind::Rank),
            "select" => Ok(QueryKind::Select),
            _ => Err(format!("unknown query kind `{s}`")),
        }
    }
}

/// Key distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform,
    Zipf(f64),
    /// Increasing keys handed out from a shared counter in batches of 100.
    Sorted,
}

pub const DEFAULT_ZIPF: f64 = 0.95;
pub const SORTED_BATCH: u64 = 100;

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Zipf(t) => write!(f, "zipf:{t}"),
            Distribution::Sorted => f.write_str("sorted"),
        }
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "sorted" => Ok(Distribution::Sorted),
            "zipf" => Ok(Distribution::Zipf(DEFAULT_ZIPF)),
            _ => match s.strip_prefix("zipf:") {
                Some(t) => t.parse().map(Distribution::Zipf).map_err(|_| format!("bad zipf parameter `{t}`")),
                None => Err(format!("unknown distribution `{s}`")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("mix percentages sum to {0}, expected 100")]
    MixSum(u32),
    #[error("max key must be at least 2")]
    MaxKey,
    #[error("at least one thread is required")]
    Threads,
    #[error("range size must be between 1 and the max key")]
    RangeSize,
    #[error("zipf parameter must lie in (0, 1)")]
    Zipf,
    #[error("trial length must be positive")]
    Seconds,
}

/// Parameters of one benchmark configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub variant: BenchVariant,
    pub threads: usize,
    pub max_key: u64,
    pub rq_size: u64,
    pub mix: Mix,
    pub query: QueryKind,
    pub dist: Distribution,
    pub seconds: f64,
    pub trials: usize,
    pub seed: u64,
    pub prefill: bool,
    pub pin: bool,
    /// Every this many operations one is timed.
    pub latency_every: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            variant: BenchVariant::Tree(Variant::Bat),
            threads: 1,
            max_key: 100_000,
            rq_size: 100,
            mix: Mix::new(50, 50, 0, 0),
            query: QueryKind::Range,
            dist: Distribution::Uniform,
            seconds: 1.0,
            trials: 3,
            seed: 1,
            prefill: true,
            pin: false,
            latency_every: 64,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mix.total() != 100 {
            return Err(ConfigError::MixSum(self.mix.total()));
        }
        if self.max_key < 2 {
            return Err(ConfigError::MaxKey);
        }
        if self.threads == 0 {
            return Err(ConfigError::Threads);
        }
        if self.rq_size == 0 || self.rq_size > self.max_key {
            return Err(ConfigError::RangeSize);
        }
        if let Distribution::Zipf(t) = self.dist {
            if !(t > 0.0 && t < 1.0) {
                return Err(ConfigError::Zipf);
            }
        }
        if self.seconds.is_nan() || self.seconds <= 0.0 {
            return Err(ConfigError::Seconds);
        }
        Ok(())
    }
}

/// Zipfian ranks over `1..=n` by the closed-form inversion of Gray et al.,
/// with the normalising constants computed once.
#[derive(Clone, Debug)]
pub struct Zipf {
    n: u64,
    theta: f64,
    alpha: f64,
    zetan: f64,
    eta: f64,
}

impl Zipf {
    pub fn new(n: u64, theta: f64) -> Self {
        let zeta = |n: u64| (1..=n).map(|i| 1.0 / (i as f64).powf(theta)).sum::<f64>();
        let zetan = zeta(n);
        let zeta2 = zeta(2.min(n));
        let alpha = 1.0 / (1.0 - theta);
        let eta = (1.0 - (2.0 / n as f64).powf(1.0 - theta)) / (1.0 - zeta2 / zetan);
        Zipf { n, theta, alpha, zetan, eta }
    }

    /// A rank in `1..=n`; rank 1 is the most frequent.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let uz = u * self.zetan;
        if uz < 1.0 {
            return 1;
        }
        if uz < 1.0 + 0.5f64.powf(self.theta) {
            return 2.min(self.n);
        }
        let r = 1 + (self.n as f64 * (self.eta * u - self.eta + 1.0).powf(self.alpha)) as u64;
        r.min(self.n)
    }
}

/// One generated benchmark operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchOp {
    Insert(u64),
    Delete(u64),
    Find(u64),
    Range(u64, u64),
    Rank(u64),
    /// The index is `1 + frac * len / 2^64` for the size seen at run time.
    Select(u64),
}

/// Per-thread operation stream.
pub struct OpGen {
    rng: ChaCha8Rng,
    mix: Mix,
    query: QueryKind,
    max_key: u64,
    rq_size: u64,
    keys: KeySource,
}

enum KeySource {
    Uniform,
    Zipf(Arc<Zipf>),
    Sorted { shared: Arc<AtomicU64>, next: u64, end: u64 },
}

impl OpGen {
    /// Streams are determined by `(cfg.seed, thread)`, except that sorted
    /// keys depend on how threads interleave on `counter`.
    pub fn new(cfg: &WorkloadConfig, thread: usize, zipf: Option<Arc<Zipf>>, counter: Arc<AtomicU64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(thread as u64);
        let keys = match cfg.dist {
            Distribution::Uniform => KeySource::Uniform,
            Distribution::Zipf(t) => KeySource::Zipf(zipf.unwrap_or_else(|| Arc::new(Zipf::new(cfg.max_key, t)))),
            Distribution::Sorted => KeySource::Sorted { shared: counter, next: 0, end: 0 },
        };
        OpGen { rng, mix: cfg.mix, query: cfg.query, max_key: cfg.max_key, rq_size: cfg.rq_size, keys }
    }

    fn key(&mut self) -> u64 {
        match &mut self.keys {
            KeySource::Uniform => self.rng.random_range(0..self.max_key),
            KeySource::Zipf(z) => z.sample(&mut self.rng) - 1,
            KeySource::Sorted { shared, next, end } => {
                if next == end {
                    *next = shared.fetch_add(SORTED_BATCH, Ordering::Relaxed);
                    *end = *next + SORTED_BATCH;
                }
                *next += 1;
                *next - 1
            }
        }
    }

    pub fn next_op(&mut self) -> BenchOp {
        let r = self.rng.random_range(0..100);
        let m = self.mix;
        if r < m.insert {
            BenchOp::Insert(self.key())
        } else if r < m.insert + m.delete {
            BenchOp::Delete(self.key())
        } else if r < m.insert + m.delete + m.find {
            BenchOp::Find(self.key())
        } else {
            match self.query {
                QueryKind::Range => {
                    let lo = self.rng.random_range(0..=self.max_key - self.rq_size);
                    BenchOp::Range(lo, lo + self.rq_size - 1)
                }
                QueryKind::Rank => BenchOp::Rank(self.rng.random_range(0..self.max_key)),
                QueryKind::Select => BenchOp::Select(self.rng.random()),
            }
        }
    }
}

/// Hash of the first `n` operations of `thread`'s stream.
pub fn stream_hash(cfg: &WorkloadConfig, thread: usize, n: usize) -> u64 {
    let mut g = OpGen::new(cfg, thread, None, Arc::new(AtomicU64::new(0)));
    let mut h = DefaultHasher::new();
    for _ in 0..n {
        g.next_op().hash(&mut h);
    }
    h.finish()
}

/// Random inserts and deletes until exactly half the key range is present.
/// Inserts are favoured while below the target and deletes above it.
///
/// Returns an oracle holding the final set, tracked independently of the tree.
pub fn prefill(tree: &BatTree<Size>, max_key: u64, seed: u64) -> SequentialOracle {
    let target = max_key / 2;
    let mut present = vec![false; max_key as usize];
    let mut len = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    while len != target {
        let k = rng.random_range(0..max_key);
        if rng.random_bool(if len < target { 0.9 } else { 0.1 }) {
            if tree.insert(k).unwrap() {
                present[k as usize] = true;
                len += 1;
            }
        } else if tree.delete(k).unwrap() {
            present[k as usize] = false;
            len -= 1;
        }
    }
    let mut o = SequentialOracle::new();
    for (k, _) in present.iter().enumerate().filter(|(_, p)| **p) {
        o.insert(k as u64);
    }
    o
}

#[derive(Default, Clone, Copy)]
struct OpCounters {
    ops: [u64; 4],
    sampled: [u64; 4],
    nanos: [u64; 4],
}

impl OpCounters {
    fn merge(&mut self, o: &OpCounters) {
        for i in 0..4 {
            self.ops[i] += o.ops[i];
            self.sampled[i] += o.sampled[i];
            self.nanos[i] += o.nanos[i];
        }
    }
}

fn run_op(tree: &BatTree<Size>, op: BenchOp) -> usize {
    match op {
        BenchOp::Insert(k) => {
            std::hint::black_box(tree.insert(k).unwrap());
            0
        }
        BenchOp::Delete(k) => {
            std::hint::black_box(tree.delete(k).unwrap());
            1
        }
        BenchOp::Find(k) => {
            std::hint::black_box(tree.contains(k).unwrap());
            2
        }
        BenchOp::Range(lo, hi) => {
            std::hint::black_box(tree.range_count(lo, hi));
            3
        }
        BenchOp::Rank(k) => {
            std::hint::black_box(tree.rank(k));
            3
        }
        BenchOp::Select(frac) => {
            std::hint::black_box(tree.read(|v| {
                let len = v.count();
                let i = 1 + ((u128::from(frac) * u128::from(len)) >> 64) as u64;
                query::select(v, i).ok()
            }));
            3
        }
    }
}

fn pin_to(cpu: usize) {
    #[cfg(target_os = "linux")]
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
    #[cfg(not(target_os = "linux"))]
    let _ = cpu;
}

macro_rules! metrics {
    ($($name:ident),* $(,)?) => {
        /// Measured values of one trial.
        #[derive(Clone, Copy, Debug, Default, PartialEq)]
        pub struct Metrics {
            $(pub $name: f64,)*
        }

        impl Metrics {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$name),*]
            }

            fn mean(all: &[Metrics]) -> Metrics {
                let n = all.len().max(1) as f64;
                Metrics { $($name: all.iter().map(|m| m.$name).sum::<f64>() / n,)* }
            }
        }
    };
}

metrics! {
    elapsed_s,
    ops,
    throughput,
    insert_ops,
    delete_ops,
    find_ops,
    query_ops,
    insert_latency_ns,
    delete_latency_ns,
    find_latency_ns,
    query_latency_ns,
    avg_nodes_per_propagate,
    avg_cas_per_propagate,
    avg_nil_filled_per_propagate,
    delegations,
    timeouts,
    rebalance_steps,
    retired,
    reclaimed,
    limbo_high_water,
    limbo_peak_total,
    height,
    size,
}

/// One trial's configuration and measurements. `trial` is `None` for an
/// average over trials.
#[derive(Clone, Debug)]
pub struct TrialStats {
    pub config: WorkloadConfig,
    pub trial: Option<usize>,
    pub metrics: Metrics,
}

/// Runs one timed trial on a fresh tree.
pub fn run_trial(cfg: &WorkloadConfig, trial: usize) -> Result<TrialStats, ConfigError> {
    cfg.validate()?;
    let tree = BatTree::with_config(cfg.variant.config());
    let trial_seed = cfg.seed.wrapping_add(trial as u64);
    if cfg.prefill {
        prefill(&tree, cfg.max_key, trial_seed);
    }
    tree.reset_stats();
    let zipf = match cfg.dist {
        Distribution::Zipf(t) => Some(Arc::new(Zipf::new(cfg.max_key, t))),
        _ => None,
    };
    let counter = Arc::new(AtomicU64::new(0));
    let stop = AtomicBool::new(false);
    let barrier = Barrier::new(cfg.threads + 1);
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut total = OpCounters::default();
    let mut elapsed = Duration::ZERO;
    let trial_cfg = WorkloadConfig { seed: trial_seed, ..cfg.clone() };
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (tree, stop, barrier) = (&tree, &stop, &barrier);
                let mut gen = OpGen::new(&trial_cfg, t, zipf.clone(), counter.clone());
                let every = cfg.latency_every.max(1);
                let pin = cfg.pin;
                s.spawn(move || {
                    if pin {
                        pin_to(t % cpus);
                    }
                    let mut c = OpCounters::default();
                    let mut n = 0u64;
                    barrier.wait();
                    while !stop.load(Ordering::Relaxed) {
                        let op = gen.next_op();
                        n += 1;
                        if n.is_multiple_of(every) {
                            let t0 = Instant::now();
                            let i = run_op(tree, op);
                            c.nanos[i] += t0.elapsed().as_nanos() as u64;
                            c.sampled[i] += 1;
                            c.ops[i] += 1;
                        } else {
                            c.ops[run_op(tree, op)] += 1;
                        }
                    }
                    tree.detach_thread();
                    c
                })
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        std::thread::sleep(Duration::from_secs_f64(cfg.seconds));
        stop.store(true, Ordering::Relaxed);
        for h in handles {
            total.merge(&h.join().expect("worker panicked"));
        }
        elapsed = start.elapsed();
    });
    tree.flush();
    let ts = tree.stats();
    let rs = tree.reclaim_stats();
    let audit = tree.audit();
    let ops: u64 = total.ops.iter().sum();
    let lat = |i: usize| if total.sampled[i] == 0 { 0.0 } else { total.nanos[i] as f64 / total.sampled[i] as f64 };
    let secs = elapsed.as_secs_f64();
    let metrics = Metrics {
        elapsed_s: secs,
        ops: ops as f64,
        throughput: ops as f64 / secs,
        insert_ops: total.ops[0] as f64,
        delete_ops: total.ops[1] as f64,
        find_ops: total.ops[2] as f64,
        query_ops: total.ops[3] as f64,
        insert_latency_ns: lat(0),
        delete_latency_ns: lat(1),
        find_latency_ns: lat(2),
        query_latency_ns: lat(3),
        avg_nodes_per_propagate: ts.avg_nodes_per_propagate(),
        avg_cas_per_propagate: ts.avg_cas_per_propagate(),
        avg_nil_filled_per_propagate: ts.avg_nil_filled_per_propagate(),
        delegations: ts.delegations as f64,
        timeouts: ts.timeouts as f64,
        rebalance_steps: ts.rebalance_steps() as f64,
        retired: rs.retired as f64,
        reclaimed: rs.reclaimed as f64,
        limbo_high_water: rs.limbo_high_water as f64,
        limbo_peak_total: rs.limbo_peak_total as f64,
        height: audit.height as f64,
        size: audit.keys as f64,
    };
    Ok(TrialStats { config: cfg.clone(), trial: Some(trial), metrics })
}

/// Averages trials of the same configuration into one row.
pub fn summarize(trials: &[TrialStats]) -> Option<TrialStats> {
    let first = trials.first()?;
    let all: Vec<Metrics> = trials.iter().map(|t| t.metrics).collect();
    Some(TrialStats { config: first.config.clone(), trial: None, metrics: Metrics::mean(&all) })
}

const CONFIG_COLUMNS: &[&str] =
    &["variant", "threads", "max_key", "rq_size", "mix", "query", "dist", "seconds", "seed", "prefill", "trial"];

/// Formats `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(e - 5);
    let r = (x / scale).round() * scale;
    let prec = (5 - e).max(0) as usize;
    format!("{r:.prec$}")
}

/// Writes a header row and one row per entry of `rows`.
pub fn write_csv<W: Write>(out: W, rows: &[TrialStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONFIG_COLUMNS.iter().chain(Metrics::NAMES))?;
    for r in rows {
        let c = &r.config;
        let mut rec = vec![
            c.variant.to_string(),
            c.threads.to_string(),
            c.max_key.to_string(),
            c.rq_size.to_string(),
            c.mix.to_string(),
            c.query.to_string(),
            c.dist.to_string(),
            sig6(c.seconds),
            c.seed.to_string(),
            if c.prefill { "on" } else { "off" }.to_string(),
            r.trial.map_or_else(|| "mean".to_string(), |t| t.to_string()),
        ];
        rec.extend(r.metrics.values().into_iter().map(sig6));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(3.0), "3.00000");
        assert_eq!(sig6(-42.4242424), "-42.4242");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn parses_flags() {
        assert_eq!("50:50:0:0".parse::<Mix>(), Ok(Mix::new(50, 50, 0, 0)));
        assert_eq!("zipf".parse::<Distribution>(), Ok(Distribution::Zipf(0.95)));
        assert_eq!("zipf:0.99".parse::<Distribution>(), Ok(Distribution::Zipf(0.99)));
        assert_eq!("unbalanced-baseline".parse::<BenchVariant>(), Ok(BenchVariant::UnbalancedBaseline));
        assert_eq!("bat-eagerdel".parse::<BenchVariant>(), Ok(BenchVariant::Tree(Variant::BatEagerDel)));
        assert!("bogus".parse::<BenchVariant>().is_err());
    }

    #[test]
    fn validation() {
        let ok = WorkloadConfig::default();
        assert_eq!(ok.validate(), Ok(()));
        let zero = WorkloadConfig { mix: Mix::new(0, 0, 0, 0), ..ok.clone() };
        assert_eq!(zero.validate(), Err(ConfigError::MixSum(0)));
        assert_eq!(WorkloadConfig { max_key: 1, ..ok.clone() }.validate(), Err(ConfigError::MaxKey));
        assert_eq!(WorkloadConfig { threads: 0, ..ok.clone() }.validate(), Err(ConfigError::Threads));
        assert_eq!(WorkloadConfig { dist: Distribution::Zipf(1.0), ..ok }.validate(), Err(ConfigError::Zipf));
    }

    #[test]
    fn zipf_favours_low_ranks() {
        let z = Zipf::new(1000, 0.95);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = [0u32; 3];
        for _ in 0..100_000 {
            let r = z.sample(&mut rng);
            assert!((1..=1000).contains(&r));
            if r <= 3 {
                hits[r as usize - 1] += 1;
            }
        }
        assert!(hits[0] > hits[1] && hits[1] > hits[2]);
    }

    #[test]
    fn sorted_keys_come_in_batches() {
        let cfg = WorkloadConfig { dist: Distribution::Sorted, mix: Mix::new(100, 0, 0, 0), ..Default::default() };
        let counter = Arc::new(AtomicU64::new(0));
        let mut a = OpGen::new(&cfg, 0, None, counter.clone());
        let mut b = OpGen::new(&cfg, 1, None, counter);
        assert_eq!(a.next_op(), BenchOp::Insert(0));
        assert_eq!(b.next_op(), BenchOp::Insert(100));
        assert_eq!(a.next_op(), BenchOp::Insert(1));
    }

    #[test]
    fn zero_trials_write_only_the_header() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("variant,threads,"));
    }
}
