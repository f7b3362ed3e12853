//! Ground sets and their subsets, encoded as 64-bit masks.

use core::fmt;
use core::ops::{BitAnd, BitOr, BitXor, Not, Sub};

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Hard limit imposed by the mask width.
pub const MAX_POINTS: usize = 64;

/// Default cap for a single factor space, small enough for power-set oracles.
pub const DEFAULT_CAP: usize = 16;

/// Default cap for materialized product spaces.
pub const DEFAULT_PRODUCT_CAP: usize = 64;

/// A finite ground set `{0, .., size-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroundSet {
    size: u8,
}

impl GroundSet {
    pub fn new(size: usize) -> Result<Self> {
        Self::with_cap(size, DEFAULT_CAP)
    }

    pub fn with_cap(size: usize, cap: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyGround);
        }
        let cap = cap.min(MAX_POINTS);
        if size > cap {
            return Err(Error::CapExceeded { size, cap });
        }
        Ok(GroundSet { size: size as u8 })
    }

    pub fn size(self) -> usize {
        self.size as usize
    }

    pub fn full(self) -> MSet {
        MSet {
            bits: mask(self.size()),
            size: self.size,
        }
    }

    pub fn empty(self) -> MSet {
        MSet {
            bits: 0,
            size: self.size,
        }
    }

    pub fn point(self, index: usize) -> MSet {
        debug_assert!(index < self.size());
        MSet {
            bits: 1 << index,
            size: self.size,
        }
    }

    pub fn set(self, indices: &[usize]) -> Result<MSet> {
        let mut bits = 0u64;
        for &i in indices {
            if i >= self.size() {
                return Err(Error::OutsideGround {
                    set: MSet {
                        bits: if i < 64 { 1 << i } else { 0 },
                        size: MAX_POINTS as u8,
                    },
                    ground: self.size(),
                });
            }
            bits |= 1 << i;
        }
        Ok(MSet {
            bits,
            size: self.size,
        })
    }

    pub fn from_bits(self, bits: u64) -> Result<MSet> {
        if bits & !mask(self.size()) != 0 {
            return Err(Error::OutsideGround {
                set: MSet {
                    bits,
                    size: MAX_POINTS as u8,
                },
                ground: self.size(),
            });
        }
        Ok(MSet {
            bits,
            size: self.size,
        })
    }

    pub fn points(self) -> core::ops::Range<usize> {
        0..self.size()
    }

    /// All `2^size` subsets in mask order.
    pub fn subsets(self) -> impl Iterator<Item = MSet> {
        let size = self.size;
        (0..(1u64 << size)).map(move |bits| MSet { bits, size })
    }
}

fn mask(size: usize) -> u64 {
    if size >= 64 {
        u64::MAX
    } else {
        (1u64 << size) - 1
    }
}

/// A subset of a ground set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MSet {
    bits: u64,
    size: u8,
}

impl MSet {
    pub fn ground(self) -> GroundSet {
        GroundSet { size: self.size }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn with_bits(self, bits: u64) -> MSet {
        debug_assert!(bits & !mask(self.size as usize) == 0);
        MSet {
            bits,
            size: self.size,
        }
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(self, point: usize) -> bool {
        point < 64 && self.bits & (1 << point) != 0
    }

    pub fn insert(&mut self, point: usize) {
        debug_assert!(point < self.size as usize);
        self.bits |= 1 << point;
    }

    pub fn remove(&mut self, point: usize) {
        self.bits &= !(1u64 << point);
    }

    pub fn is_subset(self, other: MSet) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn meets(self, other: MSet) -> bool {
        self.bits & other.bits != 0
    }

    pub fn complement(self) -> MSet {
        MSet {
            bits: !self.bits & mask(self.size as usize),
            size: self.size,
        }
    }

    pub fn first(self) -> Option<usize> {
        if self.bits == 0 {
            None
        } else {
            Some(self.bits.trailing_zeros() as usize)
        }
    }

    pub fn last(self) -> Option<usize> {
        if self.bits == 0 {
            None
        } else {
            Some(63 - self.bits.leading_zeros() as usize)
        }
    }

    pub fn iter(self) -> Points {
        Points { bits: self.bits }
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for MSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for MSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

/// Iterator over the members of a set in increasing order.
#[derive(Clone)]
pub struct Points {
    bits: u64,
}

impl Iterator for Points {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.bits == 0 {
            return None;
        }
        let p = self.bits.trailing_zeros() as usize;
        self.bits &= self.bits - 1;
        Some(p)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.bits.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Points {}

impl BitOr for MSet {
    type Output = MSet;
    fn bitor(self, rhs: MSet) -> MSet {
        debug_assert_eq!(self.size, rhs.size);
        MSet {
            bits: self.bits | rhs.bits,
            size: self.size,
        }
    }
}

impl BitAnd for MSet {
    type Output = MSet;
    fn bitand(self, rhs: MSet) -> MSet {
        debug_assert_eq!(self.size, rhs.size);
        MSet {
            bits: self.bits & rhs.bits,
            size: self.size,
        }
    }
}

impl BitXor for MSet {
    type Output = MSet;
    fn bitxor(self, rhs: MSet) -> MSet {
        debug_assert_eq!(self.size, rhs.size);
        MSet {
            bits: self.bits ^ rhs.bits,
            size: self.size,
        }
    }
}

impl Sub for MSet {
    type Output = MSet;
    fn sub(self, rhs: MSet) -> MSet {
        debug_assert_eq!(self.size, rhs.size);
        MSet {
            bits: self.bits & !rhs.bits,
            size: self.size,
        }
    }
}

impl Not for MSet {
    type Output = MSet;
    fn not(self) -> MSet {
        self.complement()
    }
}
