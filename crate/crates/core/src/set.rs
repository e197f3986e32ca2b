//! Bitmask user sets for subset enumeration.

use std::fmt;

/// Set of users out of a universe of at most 32, stored as a bitmask.
/// Bit `i` set means user `i` is a member.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserSet(pub u32);

impl UserSet {
    pub const EMPTY: UserSet = UserSet(0);

    pub fn singleton(u: usize) -> Self {
        debug_assert!(u < 32);
        UserSet(1 << u)
    }

    /// All users `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= 32);
        if n == 32 {
            UserSet(u32::MAX)
        } else {
            UserSet((1u32 << n) - 1)
        }
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, u: usize) -> bool {
        u < 32 && self.0 & (1 << u) != 0
    }

    pub fn insert(self, u: usize) -> Self {
        UserSet(self.0 | (1 << u))
    }

    pub fn union(self, other: Self) -> Self {
        UserSet(self.0 | other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        UserSet(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(u)
            }
        })
    }

    /// Every subset of this set, empty set and the set itself included,
    /// in increasing mask order (carry-ripple enumeration).
    pub fn subsets(self) -> Subsets {
        Subsets {
            set: self.0,
            next: Some(0),
        }
    }
}

pub struct Subsets {
    set: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = UserSet;

    fn next(&mut self) -> Option<UserSet> {
        let cur = self.next?;
        let succ = cur.wrapping_sub(self.set) & self.set;
        self.next = if succ == 0 { None } else { Some(succ) };
        Some(UserSet(cur))
    }
}

impl fmt::Debug for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
