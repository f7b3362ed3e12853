//! Finite measurable spaces.
//!
//! A σ-algebra over a finite ground set is stored as its atom partition,
//! sorted by least element. Measures are exact point weights; the measure
//! of a measurable set is the sum of the weights of its points.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{one, zero, Rational};
use crate::set::{GroundSet, MSet};

/// A σ-algebra given by its atoms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SigmaAlg {
    ground: GroundSet,
    atoms: Vec<MSet>,
    atom_of: Vec<u8>,
}

impl SigmaAlg {
    /// Builds an algebra from blocks that must partition the ground set.
    pub fn from_blocks(ground: GroundSet, blocks: &[MSet]) -> Result<Self> {
        let mut seen = ground.empty();
        for &b in blocks {
            if b.ground() != ground {
                return Err(Error::OutsideGround {
                    set: b,
                    ground: ground.size(),
                });
            }
            if b.is_empty() {
                return Err(Error::NotPartition {
                    reason: "empty block",
                });
            }
            if b.meets(seen) {
                return Err(Error::NotPartition {
                    reason: "blocks overlap",
                });
            }
            seen = seen | b;
        }
        if seen != ground.full() {
            return Err(Error::NotPartition {
                reason: "blocks do not cover the ground set",
            });
        }
        Ok(Self::from_partition_unchecked(ground, blocks.to_vec()))
    }

    fn from_partition_unchecked(ground: GroundSet, mut atoms: Vec<MSet>) -> Self {
        atoms.sort_by_key(|a| a.first());
        let mut atom_of = vec![0u8; ground.size()];
        for (i, a) in atoms.iter().enumerate() {
            for p in a.iter() {
                atom_of[p] = i as u8;
            }
        }
        SigmaAlg {
            ground,
            atoms,
            atom_of,
        }
    }

    /// The coarsest algebra in which every given set is measurable.
    pub fn generate(ground: GroundSet, sets: &[MSet]) -> Result<Self> {
        let full = ground.full();
        let mut blocks = vec![full];
        for &s in sets {
            let s = ground.from_bits(s.bits())?;
            let mut next = Vec::with_capacity(blocks.len() * 2);
            for b in blocks {
                let inside = b & s;
                let outside = b - s;
                if !inside.is_empty() {
                    next.push(inside);
                }
                if !outside.is_empty() {
                    next.push(outside);
                }
            }
            blocks = next;
        }
        Ok(Self::from_partition_unchecked(ground, blocks))
    }

    pub fn discrete(ground: GroundSet) -> Self {
        let atoms = ground.points().map(|p| ground.point(p)).collect();
        Self::from_partition_unchecked(ground, atoms)
    }

    pub fn trivial(ground: GroundSet) -> Self {
        Self::from_partition_unchecked(ground, vec![ground.full()])
    }

    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    pub fn atoms(&self) -> &[MSet] {
        &self.atoms
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, index: usize) -> MSet {
        self.atoms[index]
    }

    pub fn atom_index_of(&self, point: usize) -> usize {
        self.atom_of[point] as usize
    }

    pub fn atom_containing(&self, point: usize) -> MSet {
        self.atoms[self.atom_index_of(point)]
    }

    /// Union of the atoms meeting `e`.
    pub fn cover(&self, e: MSet) -> MSet {
        self.set_of_mask(self.atom_mask(e))
    }

    /// Union of the atoms contained in `e`.
    pub fn kernel(&self, e: MSet) -> MSet {
        let mut out = self.ground.empty();
        for &a in &self.atoms {
            if a.is_subset(e) {
                out = out | a;
            }
        }
        out
    }

    pub fn is_measurable(&self, e: MSet) -> bool {
        self.cover(e) == e
    }

    /// Bit `i` is set when atom `i` meets `e`.
    pub fn atom_mask(&self, e: MSet) -> u64 {
        let mut mask = 0u64;
        for p in e.iter() {
            if p < self.atom_of.len() {
                mask |= 1 << self.atom_of[p];
            }
        }
        mask
    }

    /// Union of the atoms selected by `mask`.
    pub fn set_of_mask(&self, mask: u64) -> MSet {
        let mut bits = 0u64;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            bits |= self.atoms[i].bits();
        }
        self.ground.empty().with_bits(bits)
    }

    pub fn full_mask(&self) -> u64 {
        if self.atoms.len() >= 64 {
            u64::MAX
        } else {
            (1u64 << self.atoms.len()) - 1
        }
    }

    /// True when every atom of `self` is measurable in `finer`.
    pub fn is_coarser_than(&self, finer: &SigmaAlg) -> bool {
        self.ground == finer.ground && self.atoms.iter().all(|&a| finer.is_measurable(a))
    }

    /// Returns the first atom of `self` that `finer` cannot measure.
    pub fn check_coarser_than(&self, finer: &SigmaAlg) -> Result<()> {
        if self.ground != finer.ground {
            return Err(Error::ShapeMismatch {
                expected: finer.ground.size(),
                found: self.ground.size(),
            });
        }
        match self.atoms.iter().find(|&&a| !finer.is_measurable(a)) {
            Some(&atom) => Err(Error::NotSubAlgebra { atom }),
            None => Ok(()),
        }
    }

    /// The smallest algebra containing both.
    pub fn join(&self, other: &SigmaAlg) -> SigmaAlg {
        let mut blocks = Vec::new();
        for &a in &self.atoms {
            for &b in &other.atoms {
                let c = a & b;
                if !c.is_empty() {
                    blocks.push(c);
                }
            }
        }
        Self::from_partition_unchecked(self.ground, blocks)
    }

    /// The largest algebra contained in both.
    pub fn meet(&self, other: &SigmaAlg) -> SigmaAlg {
        let n = self.ground.size();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for alg in [self, other] {
            for a in &alg.atoms {
                let first = a.first().unwrap();
                for p in a.iter() {
                    let (r1, r2) = (find(&mut parent, first), find(&mut parent, p));
                    if r1 != r2 {
                        parent[r2] = r1;
                    }
                }
            }
        }
        let mut blocks: Vec<MSet> = Vec::new();
        let mut root_block: Vec<Option<usize>> = vec![None; n];
        for p in 0..n {
            let r = find(&mut parent, p);
            match root_block[r] {
                Some(i) => blocks[i].insert(p),
                None => {
                    root_block[r] = Some(blocks.len());
                    blocks.push(self.ground.point(p));
                }
            }
        }
        Self::from_partition_unchecked(self.ground, blocks)
    }

    /// `σ(self ∪ {m})`.
    pub fn with_set(&self, m: MSet) -> SigmaAlg {
        let mut blocks = Vec::with_capacity(self.atoms.len() + 1);
        for &a in &self.atoms {
            for part in [a & m, a - m] {
                if !part.is_empty() {
                    blocks.push(part);
                }
            }
        }
        Self::from_partition_unchecked(self.ground, blocks)
    }

    /// Every measurable set, indexed by atom mask.
    pub fn measurable_sets(&self) -> impl Iterator<Item = MSet> + '_ {
        assert!(self.atoms.len() < 64, "too many atoms to enumerate");
        (0..(1u64 << self.atoms.len())).map(move |m| self.set_of_mask(m))
    }
}

/// How to pick an envelope among the valid ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EnvelopeRule {
    /// The union of sub-atoms meeting the set.
    #[default]
    Minimal,
    /// The minimal cover together with every null sub-atom.
    Maximal,
}

/// An exact probability measure on an algebra, given by point weights.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FinMeasure {
    algebra: SigmaAlg,
    weights: Vec<Rational>,
}

impl FinMeasure {
    pub fn new(algebra: SigmaAlg, weights: Vec<Rational>) -> Result<Self> {
        let n = algebra.ground().size();
        if weights.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: weights.len(),
            });
        }
        if let Some(x) = weights.iter().position(|w| w.is_negative()) {
            return Err(Error::InvalidWeights {
                reason: alloc::format!("weight of point {x} is negative"),
            });
        }
        let total: Rational = weights.iter().sum();
        if total != one() {
            return Err(Error::InvalidWeights {
                reason: alloc::format!("weights sum to {total}, not 1"),
            });
        }
        Ok(FinMeasure { algebra, weights })
    }

    /// Uniform weights on the discrete algebra.
    pub fn uniform(ground: GroundSet) -> Self {
        let w = Rational::new(1.into(), (ground.size() as i64).into());
        FinMeasure {
            algebra: SigmaAlg::discrete(ground),
            weights: vec![w; ground.size()],
        }
    }

    pub fn algebra(&self) -> &SigmaAlg {
        &self.algebra
    }

    pub fn ground(&self) -> GroundSet {
        self.algebra.ground()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weight(&self, point: usize) -> &Rational {
        &self.weights[point]
    }

    /// Same weights, viewed on another algebra over the same ground set.
    pub fn on(&self, algebra: SigmaAlg) -> FinMeasure {
        debug_assert_eq!(algebra.ground(), self.ground());
        FinMeasure {
            algebra,
            weights: self.weights.clone(),
        }
    }

    /// Sum of point weights over `e`.
    pub fn mass(&self, e: MSet) -> Rational {
        mass(&self.weights, e)
    }

    pub fn support(&self) -> MSet {
        support(&self.weights, self.ground())
    }

    pub fn null_points(&self) -> MSet {
        self.support().complement()
    }

    pub fn is_null(&self, e: MSet) -> bool {
        !e.meets(self.support())
    }

    /// Atom mask of the positive-mass atoms of `alg`.
    pub fn positive_atoms(&self, alg: &SigmaAlg) -> u64 {
        alg.atom_mask(self.support())
    }

    pub fn inner_measure(&self, sub: &SigmaAlg, a: MSet) -> Result<Rational> {
        sub.check_coarser_than(&self.algebra)?;
        Ok(self.mass(sub.kernel(a)))
    }

    pub fn outer_measure(&self, sub: &SigmaAlg, a: MSet) -> Result<Rational> {
        sub.check_coarser_than(&self.algebra)?;
        Ok(self.mass(sub.cover(a)))
    }

    /// The canonical `sub`-envelope of `a`.
    pub fn envelope(&self, sub: &SigmaAlg, a: MSet) -> Result<MSet> {
        self.envelope_with(sub, a, EnvelopeRule::Minimal)
    }

    pub fn envelope_with(&self, sub: &SigmaAlg, a: MSet, rule: EnvelopeRule) -> Result<MSet> {
        sub.check_coarser_than(&self.algebra)?;
        Ok(envelope_in(sub, &self.weights, a, rule))
    }

    /// `e ⊇ a`, `e` is `sub`-measurable and no positive `sub`-set fits in `e ∖ a`.
    pub fn is_envelope(&self, sub: &SigmaAlg, a: MSet, e: MSet) -> bool {
        is_envelope_in(sub, &self.weights, a, e)
    }

    pub fn completion(&self) -> CompleteSpace {
        let support = self.support();
        let mut blocks = Vec::new();
        for &a in self.algebra.atoms() {
            let positive = a & support;
            if !positive.is_empty() {
                blocks.push(positive);
            }
            for p in (a - support).iter() {
                blocks.push(self.ground().point(p));
            }
        }
        let completed = SigmaAlg::from_partition_unchecked(self.ground(), blocks);
        CompleteSpace {
            base: self.clone(),
            completed,
        }
    }
}

pub(crate) fn mass(weights: &[Rational], e: MSet) -> Rational {
    let mut total = zero();
    for p in e.iter() {
        total += &weights[p];
    }
    total
}

pub(crate) fn support(weights: &[Rational], ground: GroundSet) -> MSet {
    let mut s = ground.empty();
    for (p, w) in weights.iter().enumerate() {
        if !w.is_zero() {
            s.insert(p);
        }
    }
    s
}

/// Envelope of `a` in `sub` for the given point weights.
pub fn envelope_in(sub: &SigmaAlg, weights: &[Rational], a: MSet, rule: EnvelopeRule) -> MSet {
    let cover = sub.cover(a);
    match rule {
        EnvelopeRule::Minimal => cover,
        EnvelopeRule::Maximal => {
            let s = support(weights, sub.ground());
            let mut e = cover;
            for &atom in sub.atoms() {
                if !atom.meets(s) {
                    e = e | atom;
                }
            }
            e
        }
    }
}

pub fn is_envelope_in(sub: &SigmaAlg, weights: &[Rational], a: MSet, e: MSet) -> bool {
    a.is_subset(e) && sub.is_measurable(e) && mass(weights, sub.kernel(e - a)).is_zero()
}

/// A measure together with its completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompleteSpace {
    base: FinMeasure,
    completed: SigmaAlg,
}

impl CompleteSpace {
    pub fn base(&self) -> &FinMeasure {
        &self.base
    }

    pub fn completed(&self) -> &SigmaAlg {
        &self.completed
    }

    /// The extended measure on the completed algebra.
    pub fn measure(&self) -> FinMeasure {
        self.base.on(self.completed.clone())
    }

    /// Null sets of the completion are exactly the subsets of null points.
    pub fn is_null(&self, e: MSet) -> bool {
        self.base.is_null(e)
    }
}
