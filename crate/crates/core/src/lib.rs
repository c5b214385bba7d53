//! A lock-free balanced search tree over `u64` keys whose subtree sizes are
//! kept in immutable versions, so order-statistic and range-count queries run
//! on atomic snapshots in time proportional to the height.
//!
//! ```
//! use batree::BatTree;
//!
//! let t = BatTree::new();
//! for k in [2, 5, 9] {
//!     t.insert(k).unwrap();
//! }
//! assert_eq!(t.rank(5), 2);
//! assert_eq!(t.select(2), Ok(5));
//! assert_eq!(t.range_count(3, 9), 2);
//! ```

pub mod augment;
pub mod delegation;
pub mod llx_scx;
mod node;
pub mod oracle;
mod propagate;
pub mod query;
pub mod reclaim;
pub mod staging;
mod stats;
mod tree;
pub mod workload;

pub use augment::{Augmentation, Counted, Size, Version};
pub use oracle::{quiescent_compare, Diff, Report, SequentialOracle};
pub use query::{Snapshot, VersionError, VersionWalk};
pub use reclaim::{ReclaimConfig, ReclaimStats};
pub use stats::TreeStats;
pub use tree::{Audit, BatTree, Config, Shape, Variant};

/// Key of the sentinel leaves. Not a valid user key.
pub const INF: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("key {0} is reserved for sentinels")]
    ReservedKey(u64),
    #[error("index {index} is out of range for a set of {len} keys")]
    OutOfRange { index: u64, len: u64 },
}
