//! Lower densities and liftings on finite spaces.
//!
//! On a finite measure algebra every density is determined by the filter
//! each point selects, and every such filter is principal. A density is
//! therefore stored as a class per atom of its domain: a positive atom's
//! class is the atom itself and a null atom's class is a nonempty union of
//! positive atoms. Then `x ∈ δ(E)` iff the class of `x` lies inside `E`.
//!
//! Constructions are still evaluated as set functions, and the class form
//! is recovered by probing and checked against the set function.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::condexp::{cond_expect_values, with_null_atoms, VersionPolicy};
use crate::error::{Error, Result};
use crate::finspace::{envelope_in, is_envelope_in, mass, EnvelopeRule, SigmaAlg};
use crate::product::Disintegration;
use crate::rational::{one, threshold_index, Rational};
use crate::set::MSet;

/// Algebras with at most this many atoms are checked exhaustively.
pub const EXHAUSTIVE_ATOMS: usize = 12;

/// Number of sampled sets or pairs above [`EXHAUSTIVE_ATOMS`].
pub const SAMPLES: usize = 10_000;

/// Which measurable sets a verifier visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    Exhaustive,
    Sampled { seed: u64, samples: usize },
}

impl Coverage {
    pub fn auto(atoms: usize, seed: u64) -> Self {
        if atoms <= EXHAUSTIVE_ATOMS {
            Coverage::Exhaustive
        } else {
            Coverage::Sampled {
                seed,
                samples: SAMPLES,
            }
        }
    }

    /// Atom masks to visit. Sampling always includes the empty and full
    /// masks, every single atom and every single co-atom.
    pub fn masks(&self, atoms: usize) -> Vec<u64> {
        let full = full_mask(atoms);
        match *self {
            Coverage::Exhaustive => {
                assert!(atoms < 40, "exhaustive enumeration over {atoms} atoms");
                (0..=full).collect()
            }
            Coverage::Sampled { seed, samples } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = vec![0, full];
                for i in 0..atoms {
                    out.push(1 << i);
                    out.push(full & !(1 << i));
                }
                while out.len() < samples {
                    out.push(rng.gen::<u64>() & full);
                }
                out
            }
        }
    }
}

fn full_mask(atoms: usize) -> u64 {
    if atoms >= 64 {
        u64::MAX
    } else {
        (1u64 << atoms) - 1
    }
}

/// Atoms of `alg` contained in `e`.
fn kernel_mask(alg: &SigmaAlg, e: MSet) -> u64 {
    alg.atom_mask(e) & !alg.atom_mask(e.complement())
}

/// A lower density in class form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowerDensity {
    domain: SigmaAlg,
    weights: Vec<Rational>,
    positive: u64,
    class: Vec<u64>,
}

impl LowerDensity {
    /// Validates the class structure.
    pub fn new(domain: SigmaAlg, weights: Vec<Rational>, class: Vec<u64>) -> Result<Self> {
        let positive = positive_mask(&domain, &weights);
        if class.len() != domain.num_atoms() {
            return Err(Error::ShapeMismatch {
                expected: domain.num_atoms(),
                found: class.len(),
            });
        }
        for (i, &c) in class.iter().enumerate() {
            let atom = domain.atom(i);
            let ok = if positive & (1 << i) != 0 {
                c == 1 << i
            } else {
                c != 0 && c & !positive == 0
            };
            if !ok {
                return Err(Error::AxiomFailure {
                    axiom: "class structure",
                    first: atom,
                    second: domain.set_of_mask(c),
                });
            }
        }
        Ok(LowerDensity {
            domain,
            weights,
            positive,
            class,
        })
    }

    /// Recovers the class form of a set function by probing
    /// `f(Z ∖ v)` for every positive atom `v`. The result agrees with `f`
    /// whenever `f` is a density; [`LowerDensity::check_matches`] verifies it.
    pub fn from_set_function(
        domain: &SigmaAlg,
        weights: &[Rational],
        f: &dyn Fn(MSet) -> MSet,
    ) -> Result<Self> {
        let positive = positive_mask(domain, weights);
        let full = domain.ground().full();
        let k = domain.num_atoms();
        let mut class = vec![0u64; k];
        let probes: Vec<(usize, MSet)> = (0..k)
            .filter(|&v| positive & (1 << v) != 0)
            .map(|v| (v, f(full - domain.atom(v))))
            .collect();
        for (i, c) in class.iter_mut().enumerate() {
            if positive & (1 << i) != 0 {
                *c = 1 << i;
                continue;
            }
            let x = domain.atom(i).first().unwrap();
            for &(v, out) in &probes {
                if !out.contains(x) {
                    *c |= 1 << v;
                }
            }
            if *c == 0 {
                return Err(Error::AxiomFailure {
                    axiom: "empty set maps to empty set",
                    first: domain.atom(i),
                    second: full,
                });
            }
        }
        Ok(LowerDensity {
            domain: domain.clone(),
            weights: weights.to_vec(),
            positive,
            class,
        })
    }

    pub fn domain(&self) -> &SigmaAlg {
        &self.domain
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn positive_atoms(&self) -> u64 {
        self.positive
    }

    pub fn class_mask(&self, atom: usize) -> u64 {
        self.class[atom]
    }

    pub fn classes(&self) -> &[u64] {
        &self.class
    }

    /// The class of the atom containing `point`, as a set.
    pub fn class_of_point(&self, point: usize) -> MSet {
        self.domain
            .set_of_mask(self.class[self.domain.atom_index_of(point)])
    }

    pub fn apply_mask(&self, mask: u64) -> u64 {
        let mut out = 0u64;
        for (i, &c) in self.class.iter().enumerate() {
            if c & !mask == 0 {
                out |= 1 << i;
            }
        }
        out
    }

    /// `δ(E)` for a measurable `E`.
    pub fn apply(&self, e: MSet) -> Result<MSet> {
        if !self.domain.is_measurable(e) {
            return Err(Error::NotMeasurable { set: e });
        }
        Ok(self.eval(e))
    }

    /// `δ(E)`, reading a non-measurable `E` through its kernel.
    pub fn eval(&self, e: MSet) -> MSet {
        self.domain
            .set_of_mask(self.apply_mask(kernel_mask(&self.domain, e)))
    }

    pub fn is_lifting(&self) -> bool {
        self.class.iter().all(|c| c.count_ones() == 1)
    }

    /// Null atoms and their classes.
    pub fn null_classes(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.class
            .iter()
            .enumerate()
            .filter(|(i, _)| self.positive & (1 << i) == 0)
            .map(|(i, &c)| (i, c))
    }

    /// Checks that `f` agrees with this density on the visited sets.
    pub fn check_matches(&self, f: &dyn Fn(MSet) -> MSet, coverage: Coverage) -> Result<()> {
        for m in coverage.masks(self.domain.num_atoms()) {
            let e = self.domain.set_of_mask(m);
            let value = f(e);
            let expected = self.domain.set_of_mask(self.apply_mask(m));
            if value != expected {
                return Err(Error::AxiomFailure {
                    axiom: "set function equals its class form",
                    first: e,
                    second: value,
                });
            }
        }
        Ok(())
    }
}

fn positive_mask(domain: &SigmaAlg, weights: &[Rational]) -> u64 {
    let mut out = 0u64;
    for (i, &a) in domain.atoms().iter().enumerate() {
        if !mass(weights, a).is_zero() {
            out |= 1 << i;
        }
    }
    out
}

/// A lower density whose classes are single atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lifting(LowerDensity);

impl Lifting {
    pub fn new(density: LowerDensity) -> Result<Self> {
        if let Some((i, c)) = density.null_classes().find(|(_, c)| c.count_ones() != 1) {
            return Err(Error::AxiomFailure {
                axiom: "lifting classes are single atoms",
                first: density.domain.atom(i),
                second: density.domain.set_of_mask(c),
            });
        }
        Ok(Lifting(density))
    }

    pub fn density(&self) -> &LowerDensity {
        &self.0
    }

    pub fn into_density(self) -> LowerDensity {
        self.0
    }

    pub fn apply(&self, e: MSet) -> Result<MSet> {
        self.0.apply(e)
    }

    pub fn eval(&self, e: MSet) -> MSet {
        self.0.eval(e)
    }

    /// The positive atom whose filter the atom of `point` follows.
    pub fn representative(&self, point: usize) -> usize {
        let d = &self.0.domain;
        self.0.class[d.atom_index_of(point)].trailing_zeros() as usize
    }
}

/// Summary of an axiom run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AxiomReport {
    pub sets: u64,
    pub pairs: u64,
    pub exhaustive: bool,
}

/// Checks the density axioms of a set function on the measurable sets of
/// `domain`: `δ(∅) = ∅`, `δ(Z) = Z`, measurable values, multiplicativity,
/// invariance on a.e.-classes and `δ(A) = A` a.e. With `lifting` it also
/// checks `δ(Z ∖ A) = Z ∖ δ(A)`.
pub fn check_density_axioms(
    domain: &SigmaAlg,
    weights: &[Rational],
    f: &dyn Fn(MSet) -> MSet,
    lifting: bool,
    coverage: Coverage,
) -> Result<AxiomReport> {
    let k = domain.num_atoms();
    let full = full_mask(k);
    let positive = positive_mask(domain, weights);
    let value = |m: u64| -> Result<u64> {
        let e = domain.set_of_mask(m);
        let v = f(e);
        if !domain.is_measurable(v) {
            return Err(Error::AxiomFailure {
                axiom: "values are measurable",
                first: e,
                second: v,
            });
        }
        Ok(domain.atom_mask(v))
    };
    let fail = |axiom: &'static str, a: u64, b: u64| Error::AxiomFailure {
        axiom,
        first: domain.set_of_mask(a),
        second: domain.set_of_mask(b),
    };
    let masks = coverage.masks(k);
    let mut table: BTreeMap<u64, u64> = BTreeMap::new();
    let mut dense: Vec<u64> = Vec::new();
    let exhaustive = matches!(coverage, Coverage::Exhaustive);
    for &m in &masks {
        let v = value(m)?;
        if exhaustive {
            dense.push(v);
        } else {
            table.insert(m, v);
        }
    }
    let mut lookup = |m: u64| -> Result<u64> {
        if exhaustive {
            return Ok(dense[m as usize]);
        }
        if let Some(&v) = table.get(&m) {
            return Ok(v);
        }
        let v = value(m)?;
        table.insert(m, v);
        Ok(v)
    };
    if lookup(0)? != 0 {
        return Err(fail("empty set maps to empty set", 0, lookup(0)?));
    }
    if lookup(full)? != full {
        return Err(fail("whole space maps to itself", full, lookup(full)?));
    }
    let mut report = AxiomReport {
        sets: masks.len() as u64,
        pairs: 0,
        exhaustive,
    };
    for &a in &masks {
        let va = lookup(a)?;
        if lookup(a & positive)? != va {
            return Err(fail("equal on a.e.-equal sets", a, a & positive));
        }
        if (va ^ a) & positive != 0 {
            return Err(fail("value equals the set a.e.", a, va));
        }
        if lifting && lookup(full & !a)? != full & !va {
            return Err(fail("complements map to complements", a, va));
        }
    }
    if exhaustive {
        for a in 0..=full {
            let va = dense[a as usize];
            for b in a..=full {
                if dense[(a & b) as usize] != va & dense[b as usize] {
                    return Err(fail("multiplicative", a, b));
                }
            }
        }
        report.pairs = (full + 1) * (full + 2) / 2;
    } else {
        let seed = match coverage {
            Coverage::Sampled { seed, .. } => seed,
            Coverage::Exhaustive => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..SAMPLES {
            let a = masks[rng.gen_range(0..masks.len())];
            let b = masks[rng.gen_range(0..masks.len())];
            let (va, vb) = (lookup(a)?, lookup(b)?);
            if lookup(a & b)? != va & vb {
                return Err(fail("multiplicative", a, b));
            }
        }
        report.pairs = SAMPLES as u64;
    }
    Ok(report)
}

/// Checks the axioms of a constructed density through its own evaluation.
pub fn verify_density(d: &LowerDensity, lifting: bool, coverage: Coverage) -> Result<AxiomReport> {
    check_density_axioms(d.domain(), d.weights(), &|e| d.eval(e), lifting, coverage)
}

/// The algebra generated by the null atoms of `alg`.
pub fn null_algebra(alg: &SigmaAlg, weights: &[Rational]) -> SigmaAlg {
    let mut blocks = Vec::new();
    let mut rest = alg.ground().empty();
    for &a in alg.atoms() {
        if mass(weights, a).is_zero() {
            blocks.push(a);
        } else {
            rest = rest | a;
        }
    }
    if !rest.is_empty() {
        blocks.push(rest);
    }
    SigmaAlg::from_blocks(alg.ground(), &blocks).expect("null atoms and their complement")
}

/// The only density on the algebra generated by the null sets.
pub fn initial_density(ambient: &SigmaAlg, weights: &[Rational]) -> LowerDensity {
    let domain = null_algebra(ambient, weights);
    let positive = positive_mask(&domain, weights);
    let class = (0..domain.num_atoms())
        .map(|i| if positive & (1 << i) != 0 { 1 << i } else { positive })
        .collect();
    LowerDensity {
        domain,
        weights: weights.to_vec(),
        positive,
        class,
    }
}

/// Result of one extension step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct L3Extension {
    pub density: LowerDensity,
    /// Number of `(G, H)` representations compared during verification.
    pub representations: u64,
    pub axioms: Option<AxiomReport>,
}

/// The extension formula evaluated on one representation `(G, H)`.
fn l3_formula(delta: &LowerDensity, m: MSet, m1: MSet, m2: MSet, g: MSet, h: MSet) -> MSet {
    let mc = m.complement();
    let first = delta.eval((g & m1) | (h - m1));
    let second = delta.eval((h & m2) | (g - m2));
    (m & first) | (mc & second)
}

/// The canonical representation of `e` in `σ(𝔠 ∪ {M})`: `G` collects the
/// atoms `a` with `∅ ≠ a ∩ M ⊆ E`, `H` those with `∅ ≠ a ∩ M^c ⊆ E`.
fn canonical_rep(domain: &SigmaAlg, m: MSet, e: MSet) -> (MSet, MSet) {
    let mut g = domain.ground().empty();
    let mut h = domain.ground().empty();
    for &a in domain.atoms() {
        let (inside, outside) = (a & m, a - m);
        if !inside.is_empty() && inside.is_subset(e) {
            g = g | a;
        }
        if !outside.is_empty() && outside.is_subset(e) {
            h = h | a;
        }
    }
    (g, h)
}

/// Extends `delta` from its domain `𝔠` to `σ(𝔠 ∪ {M})`.
///
/// `ambient` is any algebra containing `M` and `𝔠` whose null sets must
/// all lie in `𝔠`; `m1` and `m2` must be `𝔠`-envelopes of `M` and `M^c`.
/// With `verify` the result is checked against the set function, the
/// axioms, every alternative representation and the restriction to `𝔠`.
pub fn extend_density_l3(
    ambient: &SigmaAlg,
    delta: &LowerDensity,
    m: MSet,
    m1: MSet,
    m2: MSet,
    verify: bool,
) -> Result<L3Extension> {
    let c = delta.domain();
    let weights = delta.weights();
    c.check_coarser_than(ambient)?;
    if !ambient.is_measurable(m) {
        return Err(Error::NotMeasurable { set: m });
    }
    for &a in ambient.atoms() {
        if mass(weights, a).is_zero() && !c.is_measurable(a) {
            return Err(Error::NullSetsMissing { null_atom: a });
        }
    }
    if c.is_measurable(m) {
        return Ok(L3Extension {
            density: delta.clone(),
            representations: 0,
            axioms: None,
        });
    }
    if !is_envelope_in(c, weights, m, m1) {
        return Err(Error::NotEnvelope { set: m1, target: m });
    }
    if !is_envelope_in(c, weights, m.complement(), m2) {
        return Err(Error::NotEnvelope {
            set: m2,
            target: m.complement(),
        });
    }
    let domain = c.with_set(m);
    let value = |e: MSet| -> MSet {
        let (g, h) = canonical_rep(c, m, e);
        l3_formula(delta, m, m1, m2, g, h)
    };
    let density = LowerDensity::from_set_function(&domain, weights, &value)?;
    let coverage = Coverage::auto(domain.num_atoms(), 0x13);
    density.check_matches(&value, coverage)?;
    let mut representations = 0u64;
    let mut axioms = None;
    if verify {
        axioms = Some(check_density_axioms(
            &domain, weights, &value, false, coverage,
        )?);
        // Atoms of 𝔠 that miss M (or M^c) may be added to G (or H) freely.
        let mut free: Vec<(bool, MSet)> = Vec::new();
        for &a in c.atoms() {
            if !a.meets(m) {
                free.push((true, a));
            }
            if a.is_subset(m) {
                free.push((false, a));
            }
        }
        let choices: Vec<u64> = if free.len() <= 10 {
            (0..(1u64 << free.len())).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x17);
            (0..64).map(|_| rng.gen::<u64>() & full_mask(free.len())).collect()
        };
        for mask in coverage.masks(domain.num_atoms()) {
            let e = domain.set_of_mask(mask);
            let expected = value(e);
            let (g0, h0) = canonical_rep(c, m, e);
            for &choice in &choices {
                let (mut g, mut h) = (g0, h0);
                for (j, &(is_g, a)) in free.iter().enumerate() {
                    if choice & (1 << j) != 0 {
                        if is_g {
                            g = g ^ a;
                        } else {
                            h = h ^ a;
                        }
                    }
                }
                debug_assert_eq!((g & m) | (h - m), e);
                representations += 1;
                if l3_formula(delta, m, m1, m2, g, h) != expected {
                    return Err(Error::ConstructionFailure {
                        what: "extension depends on the representation",
                        set: e,
                        y: 0,
                    });
                }
            }
        }
        for mask in Coverage::auto(c.num_atoms(), 0x19).masks(c.num_atoms()) {
            let e = c.set_of_mask(mask);
            if value(e) != delta.eval(e) {
                return Err(Error::ConstructionFailure {
                    what: "extension does not restrict to the input density",
                    set: e,
                    y: 0,
                });
            }
        }
    }
    Ok(L3Extension {
        density,
        representations,
        axioms,
    })
}

/// One stage of an admissible construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    /// Position in the generator list, `None` for the initial stage.
    pub generator_index: Option<usize>,
    pub generator: Option<MSet>,
    /// The generator was already measurable, so the stage repeats the last.
    pub skipped: bool,
    pub envelopes: Option<(MSet, MSet)>,
    /// The envelope `V_1` was narrowed to lie inside a prescribed set.
    pub coupled: Option<bool>,
    pub density: LowerDensity,
}

/// The full trace of an admissible construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainState {
    pub stages: Vec<Stage>,
}

impl ChainState {
    pub fn last(&self) -> &LowerDensity {
        &self.stages.last().expect("at least the initial stage").density
    }

    pub fn skipped(&self) -> usize {
        self.stages.iter().filter(|s| s.skipped).count()
    }

    /// Every stage restricts to the previous one.
    pub fn check_coherence(&self) -> Result<()> {
        for pair in self.stages.windows(2) {
            let (prev, next) = (&pair[0].density, &pair[1].density);
            let c = prev.domain();
            if !c.is_coarser_than(next.domain()) {
                return Err(Error::NotIncreasing {
                    index: pair[1].generator_index.unwrap_or(0),
                });
            }
            for mask in Coverage::auto(c.num_atoms(), 0x23).masks(c.num_atoms()) {
                let e = c.set_of_mask(mask);
                if next.eval(e) != prev.eval(e) {
                    return Err(Error::ConstructionFailure {
                        what: "stage does not restrict to its predecessor",
                        set: e,
                        y: 0,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Runs the admissible recursion along `gens` on `(Z, ambient, weights)`.
pub fn build_admissible(
    ambient: &SigmaAlg,
    weights: &[Rational],
    gens: &[MSet],
    rule: EnvelopeRule,
    verify: bool,
) -> Result<(LowerDensity, ChainState)> {
    build_admissible_coupled(ambient, weights, gens, rule, verify, &|_| None)
}

/// As [`build_admissible`], narrowing `V_1` and `V_2` to the sets returned
/// by `coupling` for the generator index whenever the narrowed sets are
/// still envelopes.
pub fn build_admissible_coupled(
    ambient: &SigmaAlg,
    weights: &[Rational],
    gens: &[MSet],
    rule: EnvelopeRule,
    verify: bool,
    coupling: &dyn Fn(usize) -> Option<(MSet, MSet)>,
) -> Result<(LowerDensity, ChainState)> {
    let tau0 = initial_density(ambient, weights);
    let mut chain = ChainState {
        stages: vec![Stage {
            generator_index: None,
            generator: None,
            skipped: false,
            envelopes: None,
            coupled: None,
            density: tau0,
        }],
    };
    if gens.is_empty() {
        return Ok((chain.last().clone(), chain));
    }
    for (i, &m) in gens.iter().enumerate() {
        if !ambient.is_measurable(m) {
            return Err(Error::NotMeasurable { set: m });
        }
        let tau = chain.last().clone();
        let c = tau.domain();
        if c.is_measurable(m) {
            chain.stages.push(Stage {
                generator_index: Some(i),
                generator: Some(m),
                skipped: true,
                envelopes: None,
                coupled: None,
                density: tau,
            });
            continue;
        }
        let mut v1 = envelope_in(c, weights, m, rule);
        let mut v2 = envelope_in(c, weights, m.complement(), rule);
        let mut coupled = None;
        if let Some((w1, w2)) = coupling(i) {
            let (n1, n2) = (v1 & w1, v2 & w2);
            let ok = is_envelope_in(c, weights, m, n1)
                && is_envelope_in(c, weights, m.complement(), n2);
            if ok {
                v1 = n1;
                v2 = n2;
            }
            coupled = Some(ok);
        }
        let ext = extend_density_l3(ambient, &tau, m, v1, v2, verify)?;
        chain.stages.push(Stage {
            generator_index: Some(i),
            generator: Some(m),
            skipped: false,
            envelopes: Some((v1, v2)),
            coupled,
            density: ext.density,
        });
    }
    if chain.last().domain() != ambient {
        return Err(Error::Precondition {
            reason: alloc::format!(
                "generators and null sets produce {} of the {} atoms of the target algebra",
                chain.last().domain().num_atoms(),
                ambient.num_atoms()
            ),
        });
    }
    Ok((chain.last().clone(), chain))
}

/// Evaluates the countable-cofinality formula on a finite chain, padded
/// with its last stage.
///
/// `τ(B) = ⋂_k ⋃_n ⋂_{m≥n} τ_m({𝔼_{m}(χ_B) > 1 − 1/k})`, with `k` running
/// up to the first index after which every level set is `{𝔼_m(χ_B) = 1}`.
pub fn limit_density_e20(stages: &[LowerDensity], b: MSet) -> Result<MSet> {
    let last = stages.last().ok_or(Error::Precondition {
        reason: "empty chain".into(),
    })?;
    for (i, pair) in stages.windows(2).enumerate() {
        if !pair[0].domain().is_coarser_than(pair[1].domain()) {
            return Err(Error::NotIncreasing { index: i + 1 });
        }
    }
    if !last.domain().is_measurable(b) {
        return Err(Error::NotMeasurable { set: b });
    }
    let ground = b.ground();
    let weights = last.weights();
    let chi = crate::product::indicator(ground, b);
    let expectations: Vec<Vec<Rational>> = stages
        .iter()
        .map(|s| cond_expect_values(weights, s.domain(), &chi, &VersionPolicy::default()))
        .collect();
    let mut k_max = 1u64;
    for values in &expectations {
        for v in values {
            if *v < one() {
                k_max = k_max.max(threshold_index(v));
            }
        }
    }
    let mut result = ground.full();
    for k in 1..=k_max {
        let threshold = one() - Rational::new(1.into(), (k as i64).into());
        let taus: Vec<MSet> = stages
            .iter()
            .zip(&expectations)
            .map(|(s, values)| {
                let mut level = ground.empty();
                for (x, v) in values.iter().enumerate() {
                    if *v > threshold {
                        level.insert(x);
                    }
                }
                s.eval(level)
            })
            .collect();
        let mut union = ground.empty();
        for n in 0..taus.len() {
            let tail = taus[n..].iter().fold(ground.full(), |acc, &t| acc & t);
            union = union | tail;
        }
        result = result & union;
    }
    Ok(result)
}

/// Which atom of a class a lifting keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    Lowest,
    Highest,
}

/// Refines every class to one of its atoms.
pub fn lift_from_density(delta: &LowerDensity, tie: TieBreak) -> Lifting {
    let class = delta
        .class
        .iter()
        .map(|&c| match tie {
            TieBreak::Lowest => c & c.wrapping_neg(),
            TieBreak::Highest => 1u64 << (63 - c.leading_zeros()),
        })
        .collect();
    Lifting(LowerDensity {
        domain: delta.domain.clone(),
        weights: delta.weights.clone(),
        positive: delta.positive,
        class,
    })
}

/// `δ(A) ⊆ π(A)` on the visited sets.
pub fn dominates(pi: &LowerDensity, delta: &LowerDensity, coverage: Coverage) -> Result<()> {
    let d = delta.domain();
    for mask in coverage.masks(d.num_atoms()) {
        let e = d.set_of_mask(mask);
        let (a, b) = (delta.eval(e), pi.eval(e));
        if !a.is_subset(b) {
            return Err(Error::AxiomFailure {
                axiom: "lifting contains the density",
                first: e,
                second: b,
            });
        }
    }
    Ok(())
}

/// Extends a density on a sub-algebra `𝔠` to a finer algebra in which every
/// set agrees a.e. with a `𝔠`-set.
pub fn extend_to_finer(delta: &LowerDensity, target: &SigmaAlg) -> Result<LowerDensity> {
    let c = delta.domain();
    let weights = delta.weights();
    c.check_coarser_than(target)?;
    let support = crate::finspace::support(weights, target.ground());
    for &a in target.atoms() {
        if a.meets(support) {
            let inner = c.cover(a & support);
            if inner & support != a & support {
                return Err(Error::NotInnerRegular { set: a });
            }
        }
    }
    let value = |e: MSet| -> MSet {
        let core = e & support;
        let mut v = c.ground().empty();
        for &a in c.atoms() {
            if a.meets(support) && (a & support).is_subset(core) {
                v = v | a;
            }
        }
        delta.eval(v)
    };
    let d = LowerDensity::from_set_function(target, weights, &value)?;
    d.check_matches(&value, Coverage::auto(target.num_atoms(), 0x29))?;
    Ok(d)
}

/// One coupling decision of an equi-admissible family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingRecord {
    pub generator_index: usize,
    pub y: usize,
    pub coupled: bool,
}

/// Densities `τ_y` on `(X, 𝔠, S_y)` built along one generator order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquiFamily {
    pub taus: Vec<LowerDensity>,
    pub chains: Vec<ChainState>,
    /// `𝔠_γ` after each generator, starting from `{∅, X}`.
    pub common: Vec<SigmaAlg>,
    /// Generators skipped because they were already in `𝔠_β`.
    pub skipped: Vec<usize>,
    pub coupling: Vec<CouplingRecord>,
}

impl EquiFamily {
    /// `𝔠_{yγ}` for stage `gamma` (0 is the initial stage).
    pub fn stage_algebra(&self, y: usize, gamma: usize) -> &SigmaAlg {
        self.chains[y].stages[gamma].density.domain()
    }

    pub fn stage_density(&self, y: usize, gamma: usize) -> &LowerDensity {
        &self.chains[y].stages[gamma].density
    }
}

/// Builds `τ_y` for every `y` along `gens`, skipping generators that are
/// already in the common chain `𝔠_β`. `coupling(i, y)` may prescribe sets
/// that contain the envelopes `V_{1y}` and `V_{2y}` at generator `i`.
pub fn equi_admissible_family(
    dis: &Disintegration,
    c: &SigmaAlg,
    gens: &[MSet],
    rule: EnvelopeRule,
    verify: bool,
    coupling: &dyn Fn(usize, usize) -> Option<(MSet, MSet)>,
) -> Result<EquiFamily> {
    for m in dis.measures() {
        c.check_coarser_than(m.algebra())?;
    }
    let xg = c.ground();
    let mut common = vec![SigmaAlg::trivial(xg)];
    let mut skipped = Vec::new();
    for (i, &m) in gens.iter().enumerate() {
        let cur = common.last().unwrap().clone();
        if cur.is_measurable(m) {
            skipped.push(i);
            common.push(cur);
        } else {
            common.push(cur.with_set(m));
        }
    }
    let mut taus = Vec::with_capacity(dis.len());
    let mut chains = Vec::with_capacity(dis.len());
    let mut records = Vec::new();
    for y in 0..dis.len() {
        let weights = dis.s(y).weights();
        let mut chain = ChainState {
            stages: vec![Stage {
                generator_index: None,
                generator: None,
                skipped: false,
                envelopes: None,
                coupled: None,
                density: initial_density(c, weights),
            }],
        };
        for (i, &m) in gens.iter().enumerate() {
            let tau = chain.last().clone();
            let cy = tau.domain();
            if skipped.contains(&i) || cy.is_measurable(m) {
                chain.stages.push(Stage {
                    generator_index: Some(i),
                    generator: Some(m),
                    skipped: true,
                    envelopes: None,
                    coupled: None,
                    density: tau,
                });
                continue;
            }
            let mut v1 = envelope_in(cy, weights, m, rule);
            let mut v2 = envelope_in(cy, weights, m.complement(), rule);
            let mut coupled = None;
            if let Some((w1, w2)) = coupling(i, y) {
                let (n1, n2) = (v1 & w1, v2 & w2);
                let ok = is_envelope_in(cy, weights, m, n1)
                    && is_envelope_in(cy, weights, m.complement(), n2);
                if ok {
                    v1 = n1;
                    v2 = n2;
                }
                coupled = Some(ok);
                records.push(CouplingRecord {
                    generator_index: i,
                    y,
                    coupled: ok,
                });
            }
            let ext = extend_density_l3(c, &tau, m, v1, v2, verify)?;
            chain.stages.push(Stage {
                generator_index: Some(i),
                generator: Some(m),
                skipped: false,
                envelopes: Some((v1, v2)),
                coupled,
                density: ext.density,
            });
        }
        let tau = chain.last().clone();
        if tau.domain() != c {
            return Err(Error::Precondition {
                reason: alloc::format!(
                    "generators do not generate the sub-algebra for y = {y}"
                ),
            });
        }
        for (gamma, stage) in chain.stages.iter().enumerate() {
            let cyb = stage.density.domain();
            debug_assert_eq!(cyb, &with_null_atoms(&common[gamma], c, dis.s(y)));
            for mask in Coverage::auto(cyb.num_atoms(), 0x31).masks(cyb.num_atoms()) {
                let e = cyb.set_of_mask(mask);
                if !cyb.is_measurable(tau.eval(e)) {
                    return Err(Error::ConstructionFailure {
                        what: "final density leaves a stage algebra",
                        set: e,
                        y,
                    });
                }
            }
        }
        taus.push(tau);
        chains.push(chain);
    }
    Ok(EquiFamily {
        taus,
        chains,
        common,
        skipped,
        coupling: records,
    })
}
