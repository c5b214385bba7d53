//! Supplementary fields kept in immutable versions.

use std::fmt::Debug;
use std::ptr;

use crate::delegation::PropStatus;
use crate::reclaim::{Header, Reclaim};
use crate::INF;

/// A monoid-like summary maintained for every subtree.
///
/// `leaf` gives the value of a leaf holding a key, `sentinel` the value of a
/// sentinel leaf, and `combine` merges the values of two sibling subtrees.
pub trait Augmentation: Send + Sync + 'static {
    type Value: Copy + Debug + PartialEq + Send + Sync + 'static;

    fn leaf(key: u64) -> Self::Value;
    fn sentinel() -> Self::Value;
    fn combine(left: &Self::Value, right: &Self::Value) -> Self::Value;
}

/// Augmentations that count keys, enabling the order-statistic queries.
pub trait Counted: Augmentation {
    fn count(v: &Self::Value) -> u64;
}

/// Subtree size.
#[derive(Debug, Clone, Copy, Default)]
pub struct Size;

impl Augmentation for Size {
    type Value = u64;

    fn leaf(_: u64) -> u64 {
        1
    }
    fn sentinel() -> u64 {
        0
    }
    fn combine(l: &u64, r: &u64) -> u64 {
        l + r
    }
}

impl Counted for Size {
    #[inline]
    fn count(v: &u64) -> u64 {
        *v
    }
}

/// One immutable version of a node's supplementary fields.
pub struct Version<A: Augmentation> {
    header: Header,
    pub(crate) key: u64,
    pub(crate) left: *const Version<A>,
    pub(crate) right: *const Version<A>,
    pub(crate) value: A::Value,
    pub(crate) status: *const PropStatus,
}

unsafe impl<A: Augmentation> Reclaim for Version<A> {
    fn header(&self) -> &Header {
        &self.header
    }
}

impl<A: Augmentation> Version<A> {
    /// Version of a freshly created leaf.
    pub(crate) fn new_leaf(key: u64) -> *mut Self {
        let value = if key == INF { A::sentinel() } else { A::leaf(key) };
        Box::into_raw(Box::new(Version {
            header: Header::new(),
            key,
            left: ptr::null(),
            right: ptr::null(),
            value,
            status: ptr::null(),
        }))
    }

    pub(crate) fn new_internal(
        key: u64,
        left: *const Self,
        right: *const Self,
        status: *const PropStatus,
    ) -> *mut Self {
        let (l, r) = unsafe { (&*left, &*right) };
        l.header.check();
        r.header.check();
        Box::into_raw(Box::new(Version {
            header: Header::new(),
            key,
            left,
            right,
            value: A::combine(&l.value, &r.value),
            status,
        }))
    }

    #[inline]
    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn value(&self) -> &A::Value {
        self.header.check();
        &self.value
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left.is_null()
    }

    /// Left and right child versions, or `None` for a leaf version.
    pub fn children(&self) -> Option<(&Self, &Self)> {
        (!self.is_leaf()).then(|| (self.left(), self.right()))
    }

    #[inline]
    pub(crate) fn left(&self) -> &Self {
        unsafe { &*self.left }
    }

    #[inline]
    pub(crate) fn right(&self) -> &Self {
        unsafe { &*self.right }
    }

    /// Child in the search direction of `k`.
    #[inline]
    pub(crate) fn child(&self, k: u64) -> &Self {
        if k < self.key {
            self.left()
        } else {
            self.right()
        }
    }
}

impl<A: Counted> Version<A> {
    #[inline]
    pub fn count(&self) -> u64 {
        A::count(self.value())
    }
}
