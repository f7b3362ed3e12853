//! Skew products on `X×Y`, their disintegrations and the Fubini identities.
//!
//! The pair `(x, y)` is stored as the point `y * |X| + x` of a materialized
//! product ground set, so the section `E^y` is a shifted slice of the mask.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::densities::Coverage;
use crate::error::{Error, Result};
use crate::finspace::{FinMeasure, SigmaAlg};
use crate::rational::{zero, Rational};
use crate::set::{GroundSet, MSet, DEFAULT_PRODUCT_CAP};

/// Two probability spaces and their product algebra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductSpace {
    p: FinMeasure,
    q: FinMeasure,
    ground: GroundSet,
    algebra: SigmaAlg,
}

impl ProductSpace {
    pub fn new(p: FinMeasure, q: FinMeasure) -> Result<Self> {
        Self::with_cap(p, q, DEFAULT_PRODUCT_CAP)
    }

    pub fn with_cap(p: FinMeasure, q: FinMeasure, cap: usize) -> Result<Self> {
        let ground = GroundSet::with_cap(p.ground().size() * q.ground().size(), cap)?;
        let mut space = ProductSpace {
            p,
            q,
            ground,
            algebra: SigmaAlg::trivial(ground),
        };
        space.algebra = space.tensor(space.p.algebra(), space.q.algebra());
        Ok(space)
    }

    pub fn p(&self) -> &FinMeasure {
        &self.p
    }

    pub fn q(&self) -> &FinMeasure {
        &self.q
    }

    pub fn x_alg(&self) -> &SigmaAlg {
        self.p.algebra()
    }

    pub fn y_alg(&self) -> &SigmaAlg {
        self.q.algebra()
    }

    pub fn xg(&self) -> GroundSet {
        self.p.ground()
    }

    pub fn yg(&self) -> GroundSet {
        self.q.ground()
    }

    pub fn nx(&self) -> usize {
        self.xg().size()
    }

    pub fn ny(&self) -> usize {
        self.yg().size()
    }

    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    /// The product algebra `𝔄⊗𝔅`.
    pub fn algebra(&self) -> &SigmaAlg {
        &self.algebra
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.nx() + x
    }

    pub fn coords(&self, point: usize) -> (usize, usize) {
        (point % self.nx(), point / self.nx())
    }

    fn row_mask(&self) -> u64 {
        self.xg().full().bits()
    }

    /// `E^y = {x : (x, y) ∈ E}`.
    pub fn section(&self, e: MSet, y: usize) -> MSet {
        let bits = (e.bits() >> (y * self.nx())) & self.row_mask();
        self.xg().empty().with_bits(bits)
    }

    /// `E_x = {y : (x, y) ∈ E}`.
    pub fn section_x(&self, e: MSet, x: usize) -> MSet {
        let mut out = self.yg().empty();
        for y in 0..self.ny() {
            if e.contains(self.index(x, y)) {
                out.insert(y);
            }
        }
        out
    }

    /// The set whose `y`-section is `rows[y]`.
    pub fn from_sections(&self, rows: &[MSet]) -> MSet {
        debug_assert_eq!(rows.len(), self.ny());
        let mut bits = 0u64;
        for (y, r) in rows.iter().enumerate() {
            bits |= r.bits() << (y * self.nx());
        }
        self.ground.empty().with_bits(bits)
    }

    pub fn with_section(&self, e: MSet, y: usize, row: MSet) -> MSet {
        let shift = y * self.nx();
        let bits = (e.bits() & !(self.row_mask() << shift)) | (row.bits() << shift);
        self.ground.empty().with_bits(bits)
    }

    pub fn rect(&self, a: MSet, b: MSet) -> MSet {
        let mut bits = 0u64;
        for y in b.iter() {
            bits |= a.bits() << (y * self.nx());
        }
        self.ground.empty().with_bits(bits)
    }

    /// The product `c⊗b` of an algebra on `X` and one on `Y`.
    pub fn tensor(&self, c: &SigmaAlg, b: &SigmaAlg) -> SigmaAlg {
        let mut blocks = Vec::with_capacity(c.num_atoms() * b.num_atoms());
        for &yb in b.atoms() {
            for &xa in c.atoms() {
                blocks.push(self.rect(xa, yb));
            }
        }
        SigmaAlg::from_blocks(self.ground, &blocks).expect("rectangles partition the product")
    }
}

/// A measure `R` on `𝔄⊗𝔅` with marginals `P` and `Q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewProduct {
    space: ProductSpace,
    measure: FinMeasure,
}

impl SkewProduct {
    /// Checks non-negativity, total mass and both marginals.
    pub fn new(space: ProductSpace, weights: Vec<Rational>) -> Result<Self> {
        let r = Self::new_unchecked(space, weights)?;
        r.check_marginals()?;
        Ok(r)
    }

    /// Only checks that the weights form a probability; marginals are left
    /// to [`SkewProduct::check_marginals`].
    pub fn new_unchecked(space: ProductSpace, weights: Vec<Rational>) -> Result<Self> {
        let measure = FinMeasure::new(space.algebra().clone(), weights)?;
        Ok(SkewProduct { space, measure })
    }

    /// Builds weights from a dense matrix indexed `[x][y]`.
    pub fn from_matrix(space: ProductSpace, matrix: &[Vec<Rational>]) -> Result<Self> {
        if matrix.len() != space.nx() {
            return Err(Error::ShapeMismatch {
                expected: space.nx(),
                found: matrix.len(),
            });
        }
        let mut weights = vec![zero(); space.ground().size()];
        for (x, row) in matrix.iter().enumerate() {
            if row.len() != space.ny() {
                return Err(Error::ShapeMismatch {
                    expected: space.ny(),
                    found: row.len(),
                });
            }
            for (y, w) in row.iter().enumerate() {
                weights[space.index(x, y)] = w.clone();
            }
        }
        Self::new(space, weights)
    }

    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn measure(&self) -> &FinMeasure {
        &self.measure
    }

    pub fn weight(&self, x: usize, y: usize) -> &Rational {
        self.measure.weight(self.space.index(x, y))
    }

    /// Dense `[x][y]` view of the weights.
    pub fn matrix(&self) -> Vec<Vec<Rational>> {
        (0..self.space.nx())
            .map(|x| {
                (0..self.space.ny())
                    .map(|y| self.weight(x, y).clone())
                    .collect()
            })
            .collect()
    }

    pub fn check_marginals(&self) -> Result<()> {
        let s = &self.space;
        for &a in s.x_alg().atoms() {
            let found = self.measure.mass(s.rect(a, s.yg().full()));
            let expected = s.p().mass(a);
            if found != expected {
                return Err(Error::MarginalMismatch {
                    side: 'X',
                    atom: a,
                    expected,
                    found,
                });
            }
        }
        for &b in s.y_alg().atoms() {
            let found = self.measure.mass(s.rect(s.xg().full(), b));
            let expected = s.q().mass(b);
            if found != expected {
                return Err(Error::MarginalMismatch {
                    side: 'Y',
                    atom: b,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

/// North-west-corner coupling of two weight vectors visited in the given
/// orders. Returns a `[x][y]` matrix.
pub fn northwest_corner(
    p: &[Rational],
    q: &[Rational],
    x_order: &[usize],
    y_order: &[usize],
) -> Vec<Vec<Rational>> {
    let mut out = vec![vec![zero(); q.len()]; p.len()];
    let mut rp: Vec<Rational> = p.to_vec();
    let mut rq: Vec<Rational> = q.to_vec();
    let (mut i, mut j) = (0, 0);
    while i < x_order.len() && j < y_order.len() {
        let (x, y) = (x_order[i], y_order[j]);
        let t = if rp[x] < rq[y] {
            rp[x].clone()
        } else {
            rq[y].clone()
        };
        rp[x] -= &t;
        rq[y] -= &t;
        out[x][y] += t;
        if rp[x].is_zero() {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Seeded north-west-corner skew product of `P` and `Q`.
///
/// The corner rule runs between `P` and the block masses of `𝔅` under
/// random orders, and each block's column is spread over its points in
/// proportion to `Q`. On a discrete `𝔅` this is the plain corner rule on
/// points.
pub fn skew_product_generate(p: &FinMeasure, q: &FinMeasure, seed: u64) -> Result<SkewProduct> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    block_coupling(p, q, &mut rng, false)
}

pub(crate) fn block_coupling(
    p: &FinMeasure,
    q: &FinMeasure,
    rng: &mut ChaCha8Rng,
    mix_independent: bool,
) -> Result<SkewProduct> {
    let space = ProductSpace::new(p.clone(), q.clone())?;
    let blocks = q.algebra().atoms();
    let block_mass: Vec<Rational> = blocks.iter().map(|&b| q.mass(b)).collect();
    let mut x_order: Vec<usize> = (0..p.ground().size()).collect();
    let mut b_order: Vec<usize> = (0..blocks.len()).collect();
    x_order.shuffle(rng);
    b_order.shuffle(rng);
    let mut nw = northwest_corner(p.weights(), &block_mass, &x_order, &b_order);
    if mix_independent {
        let half = Rational::new(1.into(), 2.into());
        for (x, row) in nw.iter_mut().enumerate() {
            for (b, w) in row.iter_mut().enumerate() {
                let independent = p.weight(x) * &block_mass[b];
                *w = (&*w + independent) * &half;
            }
        }
    }
    let mut weights = vec![zero(); space.ground().size()];
    for (bi, &b) in blocks.iter().enumerate() {
        if block_mass[bi].is_zero() {
            continue;
        }
        for y in b.iter() {
            let share = q.weight(y) / &block_mass[bi];
            for (x, row) in nw.iter().enumerate() {
                weights[space.index(x, y)] = &row[bi] * &share;
            }
        }
    }
    SkewProduct::new(space, weights)
}

/// A family `{(𝔄_y, S_y)}` of measures on `X`, one per `y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disintegration {
    measures: Vec<FinMeasure>,
}

impl Disintegration {
    pub fn new(measures: Vec<FinMeasure>) -> Result<Self> {
        if let Some(first) = measures.first() {
            let g = first.ground();
            if let Some(bad) = measures.iter().find(|m| m.ground() != g) {
                return Err(Error::ShapeMismatch {
                    expected: g.size(),
                    found: bad.ground().size(),
                });
            }
        }
        Ok(Disintegration { measures })
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn s(&self, y: usize) -> &FinMeasure {
        &self.measures[y]
    }

    pub fn algebra(&self, y: usize) -> &SigmaAlg {
        self.measures[y].algebra()
    }

    pub fn measures(&self) -> &[FinMeasure] {
        &self.measures
    }
}

/// `S_y(x) = R(x, y) / Q({y})`, and `S_y = P` where `Q({y}) = 0`.
///
/// Fails when a `Q`-null point carries `R`-mass or when a row mass differs
/// from `Q({y})`, since no probability `S_y` fits the rule then, and when
/// the result breaks the measurability condition in `y`.
pub fn disintegrate(r: &SkewProduct) -> Result<Disintegration> {
    let s = r.space();
    let mut measures = Vec::with_capacity(s.ny());
    for y in 0..s.ny() {
        let qy = s.q().weight(y);
        let row_mass = r.measure().mass(s.rect(s.xg().full(), s.yg().point(y)));
        if &row_mass != qy {
            return Err(Error::Precondition {
                reason: alloc::format!(
                    "row {y} carries mass {row_mass} of R but Q({{y}}) = {qy}"
                ),
            });
        }
        if qy.is_zero() {
            measures.push(s.p().clone());
        } else {
            let weights = (0..s.nx()).map(|x| r.weight(x, y) / qy).collect();
            measures.push(FinMeasure::new(s.x_alg().clone(), weights)?);
        }
    }
    let dis = Disintegration::new(measures)?;
    check_dis1(r, &dis)?;
    Ok(dis)
}

/// `y ↦ S_y(A)` is constant on the `Q`-positive points of every `𝔅`-atom.
pub fn check_dis1(r: &SkewProduct, dis: &Disintegration) -> Result<()> {
    let s = r.space();
    check_shape(r, dis)?;
    for &a in s.x_alg().atoms() {
        for &b in s.y_alg().atoms() {
            let mut first: Option<(usize, Rational)> = None;
            for y in b.iter().filter(|&y| !s.q().weight(y).is_zero()) {
                let v = dis.s(y).mass(a);
                match &first {
                    None => first = Some((y, v)),
                    Some((y0, v0)) if *v0 != v => {
                        return Err(Error::Dis1Failure {
                            set: a,
                            first: *y0,
                            second: y,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }
    Ok(())
}

/// `Σ_{y∈B} Q({y}) S_y(A) = R(A×B)` on atoms, hence on all measurable sets.
pub fn check_dis2(r: &SkewProduct, dis: &Disintegration) -> Result<()> {
    let s = r.space();
    check_shape(r, dis)?;
    for &a in s.x_alg().atoms() {
        for &b in s.y_alg().atoms() {
            let lhs: Rational = b.iter().map(|y| s.q().weight(y) * dis.s(y).mass(a)).sum();
            let rect = s.rect(a, b);
            let rhs = r.measure().mass(rect);
            if lhs != rhs {
                return Err(Error::IdentityFailure {
                    check: "dis2",
                    set: rect,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(())
}

fn check_shape(r: &SkewProduct, dis: &Disintegration) -> Result<()> {
    let s = r.space();
    if dis.len() != s.ny() {
        return Err(Error::ShapeMismatch {
            expected: s.ny(),
            found: dis.len(),
        });
    }
    if let Some(m) = dis.measures().iter().find(|m| m.ground() != s.xg()) {
        return Err(Error::ShapeMismatch {
            expected: s.nx(),
            found: m.ground().size(),
        });
    }
    Ok(())
}

/// Outcome of [`fubini_check`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FubiniReport {
    /// `∫ f dR`.
    pub lhs: Rational,
    /// `Σ_y Q({y}) Σ_x S_y({x}) f(x, y)`.
    pub rhs: Rational,
    /// Whether `y ↦ ∫ f^y dS_y` is constant on the `Q`-positive part of
    /// every `𝔅`-atom.
    pub section_integral_measurable: bool,
    /// For an `R`-null `f` in completed mode: the `y` whose section is not
    /// `S_y`-null. Must be `Q`-null.
    pub null_section_exceptions: Option<MSet>,
}

impl FubiniReport {
    pub fn holds(&self, q: &FinMeasure) -> bool {
        self.lhs == self.rhs
            && self.section_integral_measurable
            && self.null_section_exceptions.map_or(true, |n| q.is_null(n))
    }
}

/// Checks that `f` (indexed by product points) is constant on the atoms of
/// `alg`, naming two points of one atom with different values otherwise.
pub fn check_function_measurable(alg: &SigmaAlg, f: &[Rational]) -> Result<()> {
    if f.len() != alg.ground().size() {
        return Err(Error::ShapeMismatch {
            expected: alg.ground().size(),
            found: f.len(),
        });
    }
    for a in alg.atoms() {
        let first = a.first().unwrap();
        if let Some(second) = a.iter().find(|&p| f[p] != f[first]) {
            return Err(Error::FunctionNotMeasurable { first, second });
        }
    }
    Ok(())
}

/// The Fubini identity for `f` against the disintegration. In completed
/// mode `f` may be measurable for the completion of `R` only, and the null
/// sections clause is checked as well.
pub fn fubini_check(
    r: &SkewProduct,
    dis: &Disintegration,
    f: &[Rational],
    completed: bool,
) -> Result<FubiniReport> {
    let s = r.space();
    check_shape(r, dis)?;
    if completed {
        check_function_measurable(r.measure().completion().completed(), f)?;
    } else {
        check_function_measurable(s.algebra(), f)?;
    }
    let mut lhs = zero();
    for (p, w) in r.measure().weights().iter().enumerate() {
        lhs += w * &f[p];
    }
    let section_integral: Vec<Rational> = (0..s.ny())
        .map(|y| {
            (0..s.nx())
                .map(|x| dis.s(y).weight(x) * &f[s.index(x, y)])
                .sum()
        })
        .collect();
    let rhs: Rational = (0..s.ny())
        .map(|y| s.q().weight(y) * &section_integral[y])
        .sum();
    let mut measurable = true;
    for &b in s.y_alg().atoms() {
        let mut vals = b
            .iter()
            .filter(|&y| !s.q().weight(y).is_zero())
            .map(|y| &section_integral[y]);
        if let Some(v0) = vals.next() {
            if vals.any(|v| v != v0) {
                measurable = false;
            }
        }
    }
    let null_section_exceptions = if completed {
        let support = r.measure().support();
        let is_null = f
            .iter()
            .enumerate()
            .all(|(p, v)| v.is_zero() || !support.contains(p));
        if is_null {
            let mut n = s.yg().empty();
            for y in 0..s.ny() {
                let bad = (0..s.nx())
                    .any(|x| !f[s.index(x, y)].is_zero() && !dis.s(y).weight(x).is_zero());
                if bad {
                    n.insert(y);
                }
            }
            Some(n)
        } else {
            None
        }
    } else {
        None
    };
    Ok(FubiniReport {
        lhs,
        rhs,
        section_integral_measurable: measurable,
        null_section_exceptions,
    })
}

/// Indicator of `e` as a function on the product points.
pub fn indicator(ground: GroundSet, e: MSet) -> Vec<Rational> {
    ground
        .points()
        .map(|p| {
            if e.contains(p) {
                crate::rational::one()
            } else {
                zero()
            }
        })
        .collect()
}

/// Checks `R(E) = Σ_y Q({y}) S_y(E^y)` for every product-measurable `E`
/// visited by `coverage`, returning the number of sets checked.
///
/// Both sides are expanded into point weights `R({(x, y)})` and
/// `Q({y}) S_y({x})`, scaled to integers over a common denominator and
/// summed per set.
pub fn fubini_sweep(r: &SkewProduct, dis: &Disintegration, coverage: Coverage) -> Result<u64> {
    let s = r.space();
    check_shape(r, dis)?;
    let alg = s.algebra();
    let atoms: Vec<MSet> = alg.atoms().to_vec();
    let side = |w: &dyn Fn(usize) -> Rational| -> Vec<Rational> {
        atoms.iter().map(|a| a.iter().map(w).sum()).collect()
    };
    let lhs = side(&|p| r.measure().weight(p).clone());
    let rhs = side(&|p| {
        let (x, y) = s.coords(p);
        s.q().weight(y) * dis.s(y).weight(x)
    });
    let den = lhs
        .iter()
        .chain(&rhs)
        .fold(BigInt::from(1), |acc, v| acc.lcm(v.denom()));
    let scaled = |v: &[Rational]| -> Option<Vec<i128>> {
        v.iter().map(|q| (q.numer() * (&den / q.denom())).to_i128()).collect()
    };
    let fits = den.to_i128().is_some_and(|d| d < i128::MAX / 4);
    let mut checked = 0;
    let fail = |mask: u64| {
        let e = alg.set_of_mask(mask);
        let (lhs, rhs) = fubini_indicator(r, dis, e);
        Error::IdentityFailure {
            check: "fubini",
            set: e,
            lhs,
            rhs,
        }
    };
    match (fits, scaled(&lhs), scaled(&rhs)) {
        (true, Some(l), Some(rr)) => {
            for mask in coverage.masks(atoms.len()) {
                let sum = |v: &[i128]| -> i128 {
                    (0..atoms.len()).filter(|i| mask >> i & 1 == 1).map(|i| v[i]).sum()
                };
                if sum(&l) != sum(&rr) {
                    return Err(fail(mask));
                }
                checked += 1;
            }
        }
        _ => {
            for mask in coverage.masks(atoms.len()) {
                let sum = |v: &[Rational]| -> Rational {
                    (0..atoms.len()).filter(|i| mask >> i & 1 == 1).map(|i| &v[i]).sum()
                };
                if sum(&lhs) != sum(&rhs) {
                    return Err(fail(mask));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// `R(E) = Σ_y Q({y}) S_y(E^y)` for one set.
pub fn fubini_indicator(r: &SkewProduct, dis: &Disintegration, e: MSet) -> (Rational, Rational) {
    let s = r.space();
    let lhs = r.measure().mass(e);
    let rhs = (0..s.ny())
        .map(|y| s.q().weight(y) * dis.s(y).mass(s.section(e, y)))
        .sum();
    (lhs, rhs)
}

/// Points positive under `P` or some `S_y`.
fn heavy_points(r: &SkewProduct, dis: &Disintegration) -> MSet {
    let mut h = r.space().p().support();
    for m in dis.measures() {
        h = h | m.support();
    }
    h
}

/// A sub-algebra of `𝔄 ∩ ⋂_y 𝔄_y` for which `P` and every `S_y` are inner
/// regular.
///
/// Atoms of the common coarsening that carry mass somewhere are kept; the
/// remaining null atoms are merged into one block, or into a seeded random
/// grouping when `seed` is given.
pub fn make_inner_regular_subalgebra(
    r: &SkewProduct,
    dis: &Disintegration,
    seed: Option<u64>,
) -> SigmaAlg {
    let s = r.space();
    let mut common = s.x_alg().clone();
    for m in dis.measures() {
        common = common.meet(m.algebra());
    }
    let heavy = heavy_points(r, dis);
    let mut blocks = Vec::new();
    let mut null_atoms = Vec::new();
    for &a in common.atoms() {
        if a.meets(heavy) {
            blocks.push(a);
        } else {
            null_atoms.push(a);
        }
    }
    match seed {
        None => {
            if let Some(merged) = null_atoms.iter().copied().reduce(|u, v| u | v) {
                blocks.push(merged);
            }
        }
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = null_atoms.len();
            let mut groups = vec![s.xg().empty(); k];
            for &a in &null_atoms {
                let g = rng.gen_range(0..k);
                groups[g] = groups[g] | a;
            }
            blocks.extend(groups.into_iter().filter(|g| !g.is_empty()));
        }
    }
    SigmaAlg::from_blocks(s.xg(), &blocks).expect("regrouped atoms partition X")
}

/// Certifies inner regularity of `P` and every `S_y` with respect to `c`:
/// for each `𝔄`-measurable `A` the kernel `D` of `A` in `c` satisfies
/// `P(A∖D) = 0` and `S_y(A∖D) = 0`.
///
/// All `A` are enumerated when `𝔄` has at most 12 atoms; above that the
/// atoms are checked, which suffices because the kernel of a union
/// contains the union of the kernels.
pub fn check_inner_regular(r: &SkewProduct, dis: &Disintegration, c: &SigmaAlg) -> Result<()> {
    let s = r.space();
    c.check_coarser_than(s.x_alg())?;
    for m in dis.measures() {
        c.check_coarser_than(m.algebra())?;
    }
    let check = |a: MSet| -> Result<()> {
        let rest = a - c.kernel(a);
        let ok = s.p().is_null(rest) && dis.measures().iter().all(|m| m.is_null(rest));
        if ok {
            Ok(())
        } else {
            Err(Error::NotInnerRegular { set: a })
        }
    };
    if s.x_alg().num_atoms() <= 12 {
        for a in s.x_alg().measurable_sets() {
            check(a)?;
        }
    } else {
        for &a in s.x_alg().atoms() {
            check(a)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{one, rat};

    fn measure(weights: &[(i64, i64)]) -> FinMeasure {
        let g = GroundSet::new(weights.len()).unwrap();
        FinMeasure::new(
            SigmaAlg::discrete(g),
            weights.iter().map(|&(n, d)| rat(n, d)).collect(),
        )
        .unwrap()
    }

    /// `X = {0,1,2}`, `P = (1/2,1/2,0)`, `Y = {a,b}`, `R(0,a) = R(1,b) = 1/2`.
    fn fixture() -> SkewProduct {
        let p = measure(&[(1, 2), (1, 2), (0, 1)]);
        let q = measure(&[(1, 2), (1, 2)]);
        let space = ProductSpace::new(p, q).unwrap();
        let m = vec![
            vec![rat(1, 2), zero()],
            vec![zero(), rat(1, 2)],
            vec![zero(), zero()],
        ];
        SkewProduct::from_matrix(space, &m).unwrap()
    }

    #[test]
    fn northwest_corner_examples() {
        let h = [rat(1, 2), rat(1, 2)];
        let m = northwest_corner(&h, &h, &[0, 1], &[0, 1]);
        assert_eq!(m, vec![vec![rat(1, 2), zero()], vec![zero(), rat(1, 2)]]);
        let p = measure(&[(1, 1)]);
        let r = skew_product_generate(&p, &p, 7).unwrap();
        assert_eq!(r.weight(0, 0), &one());
    }

    #[test]
    fn generated_marginals_are_exact() {
        let p = measure(&[(1, 3), (1, 6), (1, 2)]);
        let q = measure(&[(1, 4), (3, 4)]);
        for seed in 0..20 {
            let r = skew_product_generate(&p, &q, seed).unwrap();
            r.check_marginals().unwrap();
        }
    }

    #[test]
    fn disintegrate_examples() {
        let r = fixture();
        let dis = disintegrate(&r).unwrap();
        assert_eq!(dis.s(0).weights(), &[one(), zero(), zero()]);
        assert_eq!(dis.s(1).weights(), &[zero(), one(), zero()]);
        check_dis2(&r, &dis).unwrap();

        let p = measure(&[(1, 3), (2, 3)]);
        let q = measure(&[(1, 2), (1, 2)]);
        let space = ProductSpace::new(p.clone(), q.clone()).unwrap();
        let w = (0..4)
            .map(|i| p.weight(i % 2) * q.weight(i / 2))
            .collect();
        let indep = SkewProduct::new(space, w).unwrap();
        let dis = disintegrate(&indep).unwrap();
        assert!(dis.measures().iter().all(|m| m.weights() == p.weights()));

        let q0 = measure(&[(1, 1), (0, 1)]);
        let space = ProductSpace::new(p.clone(), q0).unwrap();
        let w = vec![rat(1, 3), rat(2, 3), zero(), zero()];
        let dis = disintegrate(&SkewProduct::new(space, w).unwrap()).unwrap();
        assert_eq!(dis.s(1), &p);
    }

    #[test]
    fn marginal_mismatch_is_rejected() {
        let p = measure(&[(1, 2), (1, 2)]);
        let space = ProductSpace::new(p.clone(), p).unwrap();
        let w = vec![rat(1, 4), rat(1, 4), rat(1, 2), zero()];
        assert!(matches!(
            SkewProduct::new(space, w),
            Err(Error::MarginalMismatch { side: 'X', .. })
        ));
    }

    #[test]
    fn fubini_examples() {
        let r = fixture();
        let dis = disintegrate(&r).unwrap();
        let s = r.space();
        let e = s.rect(s.xg().point(0), s.yg().point(0));
        let rep = fubini_check(&r, &dis, &indicator(s.ground(), e), false).unwrap();
        assert_eq!((rep.lhs.clone(), rep.rhs.clone()), (rat(1, 2), rat(1, 2)));
        assert!(rep.holds(s.q()));
        let c = vec![rat(3, 7); s.ground().size()];
        let rep = fubini_check(&r, &dis, &c, false).unwrap();
        assert_eq!((rep.lhs, rep.rhs), (rat(3, 7), rat(3, 7)));
        for e in s.algebra().measurable_sets() {
            let (l, rr) = fubini_indicator(&r, &dis, e);
            assert_eq!(l, rr);
        }
    }

    #[test]
    fn fubini_rejects_non_measurable_functions() {
        let p = measure(&[(1, 2), (1, 2)]);
        let q = FinMeasure::new(SigmaAlg::trivial(GroundSet::new(2).unwrap()), vec![rat(1, 2), rat(1, 2)]).unwrap();
        let space = ProductSpace::new(p, q).unwrap();
        let r = SkewProduct::new(space, vec![rat(1, 4); 4]).unwrap();
        let dis = disintegrate(&r).unwrap();
        let f = vec![one(), zero(), zero(), zero()];
        assert_eq!(
            fubini_check(&r, &dis, &f, false),
            Err(Error::FunctionNotMeasurable { first: 0, second: 2 })
        );
    }

    #[test]
    fn completed_null_function_has_null_sections() {
        let r = fixture();
        let dis = disintegrate(&r).unwrap();
        let s = r.space();
        let mut f = vec![zero(); s.ground().size()];
        f[s.index(2, 0)] = one();
        f[s.index(1, 0)] = rat(5, 1);
        let rep = fubini_check(&r, &dis, &f, true).unwrap();
        assert_eq!(rep.null_section_exceptions, Some(s.yg().empty()));
        assert!(rep.holds(s.q()));
    }

    #[test]
    fn inner_regular_examples() {
        let p = measure(&[(1, 3), (2, 3)]);
        let space = ProductSpace::new(p.clone(), p.clone()).unwrap();
        let w = (0..4).map(|i| p.weight(i % 2) * p.weight(i / 2)).collect();
        let r = SkewProduct::new(space, w).unwrap();
        let dis = disintegrate(&r).unwrap();
        assert_eq!(&make_inner_regular_subalgebra(&r, &dis, None), p.algebra());

        let p3 = measure(&[(1, 2), (1, 2), (0, 1)]);
        let q = measure(&[(1, 1)]);
        let space = ProductSpace::new(p3.clone(), q).unwrap();
        let r = SkewProduct::new(space, p3.weights().to_vec()).unwrap();
        let dis = disintegrate(&r).unwrap();
        let c = make_inner_regular_subalgebra(&r, &dis, None);
        assert_eq!(c.num_atoms(), 3);
        check_inner_regular(&r, &dis, &c).unwrap();

        let p4 = measure(&[(1, 2), (1, 2), (0, 1), (0, 1)]);
        let q = measure(&[(1, 1)]);
        let space = ProductSpace::new(p4.clone(), q).unwrap();
        let r = SkewProduct::new(space, p4.weights().to_vec()).unwrap();
        let dis = disintegrate(&r).unwrap();
        let c = make_inner_regular_subalgebra(&r, &dis, None);
        let atoms: Vec<_> = c.atoms().iter().map(|a| a.to_vec()).collect();
        assert_eq!(atoms, [vec![0], vec![1], vec![2, 3]]);
        check_inner_regular(&r, &dis, &c).unwrap();
        for seed in 0..8 {
            let c = make_inner_regular_subalgebra(&r, &dis, Some(seed));
            check_inner_regular(&r, &dis, &c).unwrap();
        }
        let too_coarse = SigmaAlg::trivial(p4.ground());
        assert!(matches!(
            check_inner_regular(&r, &dis, &too_coarse),
            Err(Error::NotInnerRegular { .. })
        ));
    }
}
