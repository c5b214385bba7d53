//! Fixtures shared by the benchmarks.

use batree::{BatTree, Config, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every configuration worth timing: the three variants, then the
/// unbalanced baseline.
pub fn configs() -> Vec<(String, Config)> {
    let mut out: Vec<_> = Variant::ALL.into_iter().map(|v| (v.to_string(), Config::new(v))).collect();
    out.push(("unbalanced-baseline".into(), Config::new(Variant::Bat).unbalanced()));
    out
}

/// A tree holding `n` distinct random keys below `max_key`.
pub fn filled(cfg: Config, n: u64, max_key: u64, seed: u64) -> BatTree {
    assert!(n <= max_key);
    let t = BatTree::with_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while t.len() < n {
        t.insert(rng.random_range(0..max_key)).unwrap();
    }
    t
}

/// A deterministic key stream below `max_key`.
pub fn keys(n: usize, max_key: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..max_key)).collect()
}
