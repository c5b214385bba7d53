//! Per-thread counters, summed on demand.

use std::sync::atomic::{AtomicU64, Ordering};

macro_rules! counters {
    ($($(#[$m:meta])* $name:ident),* $(,)?) => {
        /// Counters owned by one thread for one tree.
        #[derive(Default, Debug)]
        pub(crate) struct ThreadStats {
            $(pub(crate) $name: AtomicU64,)*
        }

        /// Totals across threads.
        #[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
        pub struct TreeStats {
            $($(#[$m])* pub $name: u64,)*
        }

        impl ThreadStats {
            pub(crate) fn add_into(&self, t: &mut TreeStats) {
                $(t.$name += self.$name.load(Ordering::Relaxed);)*
            }

            pub(crate) fn reset(&self) {
                $(self.$name.store(0, Ordering::Relaxed);)*
            }
        }
    };
}

counters! {
    propagates,
    /// Nodes refreshed by top-level refreshes, summed over propagates.
    propagate_nodes,
    /// Version CAS attempts of any kind made by propagates.
    version_cas,
    /// Nil versions filled by recursive refreshes.
    nil_filled,
    /// Versions displaced by top-level refreshes and retired by propagate.
    versions_retired,
    delegations,
    timeouts,
    /// Top-level version CASes whose expected value was nil. Must stay zero.
    top_cas_nil_expected,
    /// Recursive version CASes whose expected value was not nil. Must stay zero.
    nil_cas_nonnil_expected,
    scx_attempts,
    scx_commits,
    /// Rebalancing steps applied, by rule.
    rule_blk,
    rule_rb1,
    rule_rb2,
    rule_push,
    rule_w_single,
    rule_w_double,
    rule_w_rotate,
    rule_root,
    rebalance_retries,
}

impl ThreadStats {
    #[inline]
    pub(crate) fn bump(c: &AtomicU64) {
        c.store(c.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
    }

    #[inline]
    pub(crate) fn add(c: &AtomicU64, n: u64) {
        c.store(c.load(Ordering::Relaxed) + n, Ordering::Relaxed);
    }
}

impl TreeStats {
    pub fn rebalance_steps(&self) -> u64 {
        self.rule_blk
            + self.rule_rb1
            + self.rule_rb2
            + self.rule_push
            + self.rule_w_single
            + self.rule_w_double
            + self.rule_w_rotate
            + self.rule_root
    }

    pub fn avg_nodes_per_propagate(&self) -> f64 {
        ratio(self.propagate_nodes, self.propagates)
    }

    pub fn avg_cas_per_propagate(&self) -> f64 {
        ratio(self.version_cas, self.propagates)
    }

    pub fn avg_nil_filled_per_propagate(&self) -> f64 {
        ratio(self.nil_filled, self.propagates)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
