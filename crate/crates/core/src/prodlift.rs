//! Densities and liftings on the completed product.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`build_phi_t2`] runs the transfinite recursion along the generators
//!    of `𝔠`, one density extension step per retained generator, on the algebras
//!    `𝔐_γ = σ(𝔠_γ ⊗ 𝔅 ∪ 𝔓_0)`, and extends the result to `R̂`.
//! 2. [`saturate_psi_p3`] narrows the filters of `φ` until every section
//!    splits every set.
//! 3. [`build_split_lifting_t3`] produces `π` and `σ_y` with
//!    `[π(E)]^y = σ_y([π(E)]^y)` for every `y`.
//! 4. [`NilExtension`] carries `π` over to the nil extension.
//!
//! `𝔓_0` is represented by the null rectangles `c × B` with `c` an atom of
//! `𝔠` and `B` an atom of `𝔅`. Checks visit every set when the algebra has
//! at most [`EXHAUSTIVE_ATOMS`] atoms and a sample otherwise.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::densities::{
    build_admissible, check_density_axioms, dominates, equi_admissible_family, extend_density_l3,
    extend_to_finer, lift_from_density, verify_density, AxiomReport, Coverage, EquiFamily,
    Lifting, LowerDensity, TieBreak, EXHAUSTIVE_ATOMS,
};
use crate::error::{Error, Result};
use crate::finspace::{envelope_in, mass, EnvelopeRule, SigmaAlg};
use crate::product::{check_inner_regular, Disintegration, ProductSpace, SkewProduct};
use crate::rational::Rational;
use crate::set::MSet;

/// The completed product algebra `𝔄 ⊗̂_R 𝔅`.
pub fn completion_algebra(r: &SkewProduct) -> SigmaAlg {
    r.measure().completion().completed().clone()
}

/// Null rectangles `c × B`, `c` an atom of `𝔠` and `B` an atom of `𝔅`.
pub fn null_rectangles(r: &SkewProduct, c: &SigmaAlg) -> Vec<MSet> {
    let s = r.space();
    let mut out = Vec::new();
    for &b in s.y_alg().atoms() {
        for &a in c.atoms() {
            let rect = s.rect(a, b);
            if r.measure().mass(rect).is_zero() {
                out.push(rect);
            }
        }
    }
    out
}

/// `σ(𝔠_α ⊗ 𝔅 ∪ rects)`.
pub fn m_algebra(s: &ProductSpace, c_alpha: &SigmaAlg, rects: &[MSet]) -> SigmaAlg {
    let mut alg = s.tensor(c_alpha, s.y_alg());
    for &w in rects {
        alg = alg.with_set(w);
    }
    alg
}

/// Rows `y` through which every null rectangle passes in an `S_y`-null set.
fn regular_rows(r: &SkewProduct, dis: &Disintegration, rects: &[MSet]) -> MSet {
    let s = r.space();
    let mut rows = s.yg().empty();
    for y in 0..s.ny() {
        if rects.iter().all(|&w| dis.s(y).is_null(s.section(w, y))) {
            rows.insert(y);
        }
    }
    rows
}

/// Applies `τ_y` to each section of `e` in `rows`.
fn renormalize(s: &ProductSpace, taus: &[LowerDensity], rows: MSet, e: MSet) -> MSet {
    let mut out = e;
    for y in rows.iter() {
        out = s.with_section(out, y, taus[y].eval(s.section(e, y)));
    }
    out
}

/// The `𝔐_β`-envelopes `W_1 ⊇ M_β × Y` and `W_2 ⊇ M_β^c × Y` of every
/// retained generator, `None` for skipped ones.
pub fn product_envelopes(
    r: &SkewProduct,
    c: &SigmaAlg,
    gens: &[MSet],
    rule: EnvelopeRule,
) -> Vec<Option<(MSet, MSet)>> {
    let s = r.space();
    let rects = null_rectangles(r, c);
    let weights = r.measure().weights();
    let full_y = s.yg().full();
    let mut cur = SigmaAlg::trivial(s.xg());
    let mut out = Vec::with_capacity(gens.len());
    for &m in gens {
        if cur.is_measurable(m) {
            out.push(None);
            continue;
        }
        let alg = m_algebra(s, &cur, &rects);
        let w1 = envelope_in(&alg, weights, s.rect(m, full_y), rule);
        let w2 = envelope_in(&alg, weights, s.rect(m.complement(), full_y), rule);
        out.push(Some((w1, w2)));
        cur = cur.with_set(m);
    }
    out
}

/// Builds the equi-admissible family with `V_{iy}` narrowed into the
/// sections of the product envelopes.
pub fn build_family(
    r: &SkewProduct,
    dis: &Disintegration,
    c: &SigmaAlg,
    gens: &[MSet],
    rule: EnvelopeRule,
    verify: bool,
) -> Result<(EquiFamily, Vec<Option<(MSet, MSet)>>)> {
    let s = r.space();
    let envelopes = product_envelopes(r, c, gens, rule);
    let coupling = |i: usize, y: usize| {
        envelopes[i].map(|(w1, w2)| (s.section(w1, y), s.section(w2, y)))
    };
    let family = equi_admissible_family(dis, c, gens, rule, verify, &coupling)?;
    Ok((family, envelopes))
}

/// One stage of the product recursion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiStage {
    pub generator_index: Option<usize>,
    pub skipped: bool,
    pub envelopes: Option<(MSet, MSet)>,
    pub density: LowerDensity,
}

/// Output of the product recursion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiT2 {
    /// The density on `R̂`.
    pub phi: LowerDensity,
    /// The recursion's last stage, on `𝔐_κ`.
    pub inductive: LowerDensity,
    pub stages: Vec<PhiStage>,
    pub null_rectangles: Vec<MSet>,
    /// Rows renormalized at every stage. The remaining rows, all `Q`-null,
    /// are renormalized once after the recursion.
    pub regular_rows: MSet,
}

/// Runs the product recursion for an equi-admissible family built by
/// [`build_family`] along the same generators.
pub fn build_phi_t2(
    r: &SkewProduct,
    dis: &Disintegration,
    c: &SigmaAlg,
    family: &EquiFamily,
    gens: &[MSet],
    envelopes: &[Option<(MSet, MSet)>],
    verify: bool,
) -> Result<PhiT2> {
    check_inner_regular(r, dis, c)?;
    if family.common.len() != gens.len() + 1 || envelopes.len() != gens.len() {
        return Err(Error::ShapeMismatch {
            expected: gens.len() + 1,
            found: family.common.len(),
        });
    }
    let s = r.space();
    let weights = r.measure().weights();
    let taus = &family.taus;
    let rects = null_rectangles(r, c);
    let regular = regular_rows(r, dis, &rects);
    let full_x = s.xg().full();
    let y_alg = s.y_alg();

    // The first stage lives on σ({∅, X} ⊗ 𝔅 ∪ 𝔓_0) and follows an
    // admissible density ρ of (Y, 𝔅, Q) across the rows.
    let q = s.q();
    let (rho, _) = build_admissible(y_alg, q.weights(), y_alg.atoms(), EnvelopeRule::Minimal, false)?;
    let heavy: Vec<(MSet, MSet)> = y_alg
        .atoms()
        .iter()
        .filter(|&&b| !q.mass(b).is_zero())
        .map(|&b| {
            let strip = s.rect(full_x, b);
            let rest = rects.iter().fold(strip, |acc, &w| acc - w);
            (b, rest)
        })
        .collect();
    let phi1 = |e: MSet| -> MSet {
        let mut bf = s.yg().empty();
        for &(b, rest) in &heavy {
            if rest.is_subset(e) {
                bf = bf | b;
            }
        }
        s.rect(full_x, rho.eval(bf))
    };
    let mut cur_c = SigmaAlg::trivial(s.xg());
    let mut alg = m_algebra(s, &cur_c, &rects);
    let mut phi = LowerDensity::from_set_function(&alg, weights, &phi1)?;
    phi.check_matches(&phi1, Coverage::auto(alg.num_atoms(), 0x41))?;
    let mut stages = vec![PhiStage {
        generator_index: None,
        skipped: false,
        envelopes: None,
        density: phi.clone(),
    }];
    for (i, &m) in gens.iter().enumerate() {
        let Some((w1, w2)) = envelopes[i] else {
            stages.push(PhiStage {
                generator_index: Some(i),
                skipped: true,
                envelopes: None,
                density: phi.clone(),
            });
            continue;
        };
        let next_c = cur_c.with_set(m);
        let next_alg = m_algebra(s, &next_c, &rects);
        let bar = extend_density_l3(&next_alg, &phi, s.rect(m, s.yg().full()), w1, w2, verify)?
            .density;
        let f = |e: MSet| renormalize(s, taus, regular, bar.eval(e));
        let coverage = Coverage::auto(next_alg.num_atoms(), 0x43 + i as u64);
        let next = LowerDensity::from_set_function(&next_alg, weights, &f)?;
        next.check_matches(&f, coverage)?;
        if verify {
            check_stage_sections(s, family, &next, regular, i + 1, coverage)?;
            for mask in Coverage::auto(alg.num_atoms(), 0x47).masks(alg.num_atoms()) {
                let e = alg.set_of_mask(mask);
                if next.eval(e) != phi.eval(e) {
                    return Err(Error::ConstructionFailure {
                        what: "product stage does not restrict to its predecessor",
                        set: e,
                        y: 0,
                    });
                }
            }
        }
        phi = next;
        alg = next_alg;
        cur_c = next_c;
        stages.push(PhiStage {
            generator_index: Some(i),
            skipped: false,
            envelopes: Some((w1, w2)),
            density: phi.clone(),
        });
    }
    if cur_c != *c {
        return Err(Error::Precondition {
            reason: "generators do not generate the sub-algebra".into(),
        });
    }

    // Extension to R̂ through the 𝔠 ⊗ 𝔅 representative of each set.
    let rhat = completion_algebra(r);
    let support = r.measure().support();
    let tensor = s.tensor(c, y_alg);
    let cover = |e: MSet| -> MSet {
        let mut v = s.ground().empty();
        for &t in tensor.atoms() {
            let tp = t & support;
            if !tp.is_empty() && tp.is_subset(e) {
                v = v | t;
            }
        }
        v
    };
    for &a in rhat.atoms() {
        if a.meets(support) && cover(a) & support != a & support {
            return Err(Error::NotInnerRegular { set: a });
        }
    }
    let all_rows = s.yg().full();
    let inductive = phi;
    let fin = |e: MSet| renormalize(s, taus, all_rows, inductive.eval(cover(e)));
    let phi_hat = LowerDensity::from_set_function(&rhat, weights, &fin)?;
    phi_hat.check_matches(&fin, Coverage::auto(rhat.num_atoms(), 0x4b))?;
    Ok(PhiT2 {
        phi: phi_hat,
        inductive,
        stages,
        null_rectangles: rects,
        regular_rows: regular,
    })
}

/// The stage identities on the regular rows: sections lie in `𝔠_{yγ}`
/// and are fixed by `τ_y`.
fn check_stage_sections(
    s: &ProductSpace,
    family: &EquiFamily,
    phi: &LowerDensity,
    rows: MSet,
    gamma: usize,
    coverage: Coverage,
) -> Result<()> {
    let alg = phi.domain();
    for mask in coverage.masks(alg.num_atoms()) {
        let value = alg.set_of_mask(phi.apply_mask(mask));
        for y in rows.iter() {
            let row = s.section(value, y);
            let ok = family.stage_algebra(y, gamma).is_measurable(row)
                && family.taus[y].eval(row) == row;
            if !ok {
                return Err(Error::ConstructionFailure {
                    what: "stage section is not a fixed point in its stage algebra",
                    set: alg.set_of_mask(mask),
                    y,
                });
            }
        }
    }
    Ok(())
}

/// Where the values of `φ` land, for the open question on its codomain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CodomainRecord {
    pub values: u64,
    /// Values in `σ(𝔠 ⊗ 𝔅 ∪ 𝔓_0)`.
    pub in_c_tensor_b: u64,
    /// Values in `σ(𝔄 ⊗ 𝔅 ∪ 𝔓_0)`.
    pub in_a_tensor_b: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct T2Report {
    pub sets: u64,
    pub section_checks: u64,
    pub exhaustive: bool,
    pub axioms: AxiomReport,
    pub codomain: CodomainRecord,
}

/// Checks that `φ` is a density on `R̂`, `[φ(F)]^y = τ_y([φ(F)]^y)` for all
/// `y` and `[φ(F)]_x` is measurable for the completion of `Q` for all `x`.
pub fn check_t2(
    r: &SkewProduct,
    c: &SigmaAlg,
    family: &EquiFamily,
    phi: &PhiT2,
    seed: u64,
) -> Result<T2Report> {
    let s = r.space();
    let d = &phi.phi;
    let rhat = d.domain();
    let coverage = Coverage::auto(rhat.num_atoms(), seed);
    let axioms = verify_density(d, false, coverage)?;
    if let Some(rec) = family
        .coupling
        .iter()
        .find(|rec| !rec.coupled && !s.q().weight(rec.y).is_zero())
    {
        return Err(Error::ConstructionFailure {
            what: "section envelopes do not fit inside the product envelopes",
            set: family.chains[rec.y].stages[rec.generator_index + 1]
                .generator
                .unwrap_or(s.xg().empty()),
            y: rec.y,
        });
    }
    let q_hat = s.q().completion().completed().clone();
    let mc = m_algebra(s, c, &phi.null_rectangles);
    let ma = m_algebra(s, s.x_alg(), &phi.null_rectangles);
    let mut report = T2Report {
        exhaustive: matches!(coverage, Coverage::Exhaustive),
        axioms,
        ..T2Report::default()
    };
    for mask in coverage.masks(rhat.num_atoms()) {
        let f = rhat.set_of_mask(mask);
        let value = rhat.set_of_mask(d.apply_mask(mask));
        for y in 0..s.ny() {
            let row = s.section(value, y);
            if family.taus[y].apply(row)? != row {
                return Err(Error::SectionFailure {
                    check: "section fixed by its density",
                    y,
                    set: f,
                    points: row ^ family.taus[y].eval(row),
                });
            }
            report.section_checks += 1;
        }
        for x in 0..s.nx() {
            let col = s.section_x(value, x);
            if !q_hat.is_measurable(col) {
                return Err(Error::NotMeasurable { set: col });
            }
            report.section_checks += 1;
        }
        report.sets += 1;
        report.codomain.values += 1;
        report.codomain.in_c_tensor_b += mc.is_measurable(value) as u64;
        report.codomain.in_a_tensor_b += ma.is_measurable(value) as u64;
    }
    Ok(report)
}

/// One class narrowed by the saturation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaturationStep {
    pub x: usize,
    pub y: usize,
    pub before: MSet,
    pub after: MSet,
}

/// The saturated density together with the extended section densities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiP3 {
    pub psi: LowerDensity,
    /// `τ_y` extended to the completion of `S_y`.
    pub tau_hat: Vec<LowerDensity>,
    pub trace: Vec<SaturationStep>,
}

/// `τ_y` extended from `𝔠` to the completion of `S_y`.
pub fn extend_family(dis: &Disintegration, family: &EquiFamily) -> Result<Vec<LowerDensity>> {
    (0..dis.len())
        .map(|y| extend_to_finer(&family.taus[y], dis.s(y).completion().completed()))
        .collect()
}

/// Saturates `φ` row by row in `(y, x)` order.
///
/// On a finite space the maximal element is reached in one sweep: an
/// `S_y`-positive point keeps the lowest atom of its `φ`-class, and an
/// `S_y`-null point `x` takes the union of the classes of the points in its
/// `τ_y`-class. Rows with `Q({y}) > 0` come out unchanged.
pub fn saturate_psi_p3(
    r: &SkewProduct,
    dis: &Disintegration,
    family: &EquiFamily,
    phi: &LowerDensity,
) -> Result<PsiP3> {
    let s = r.space();
    let rhat = phi.domain();
    let positive = phi.positive_atoms();
    let tau_hat = extend_family(dis, family)?;
    let mut class: Vec<u64> = phi.classes().to_vec();
    let mut trace = Vec::new();
    for y in 0..s.ny() {
        let sy = dis.s(y);
        let (pos, null): (Vec<usize>, Vec<usize>) =
            (0..s.nx()).partition(|&x| !sy.weight(x).is_zero());
        for x in pos {
            let ai = rhat.atom_index_of(s.index(x, y));
            if positive & (1 << ai) == 0 {
                let k = class[ai];
                class[ai] = k & k.wrapping_neg();
            }
        }
        for x in null {
            let ai = rhat.atom_index_of(s.index(x, y));
            class[ai] = tau_hat[y]
                .class_of_point(x)
                .iter()
                .fold(0, |acc, u| acc | class[rhat.atom_index_of(s.index(u, y))]);
        }
        for x in 0..s.nx() {
            let ai = rhat.atom_index_of(s.index(x, y));
            if class[ai] != phi.class_mask(ai) {
                trace.push(SaturationStep {
                    x,
                    y,
                    before: rhat.set_of_mask(phi.class_mask(ai)),
                    after: rhat.set_of_mask(class[ai]),
                });
            }
        }
    }
    let psi = LowerDensity::new(rhat.clone(), phi.weights().to_vec(), class)?;
    Ok(PsiP3 {
        psi,
        tau_hat,
        trace,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct P3Report {
    pub sets: u64,
    pub section_checks: u64,
}

/// Checks the three saturation properties and `φ ⊆ ψ`.
pub fn check_p3(r: &SkewProduct, dis: &Disintegration, psi: &PsiP3, phi: &LowerDensity, seed: u64) -> Result<P3Report> {
    let s = r.space();
    let d = &psi.psi;
    let rhat = d.domain();
    let coverage = Coverage::auto(rhat.num_atoms(), seed);
    dominates(d, phi, coverage)?;
    let q_hat = s.q().completion().completed().clone();
    let full = rhat.full_mask();
    let mut report = P3Report::default();
    for mask in coverage.masks(rhat.num_atoms()) {
        let e = rhat.set_of_mask(mask);
        let v = rhat.set_of_mask(d.apply_mask(mask));
        let vc = rhat.set_of_mask(d.apply_mask(full & !mask));
        for y in 0..s.ny() {
            let (row, row_c) = (s.section(v, y), s.section(vc, y));
            if !dis.s(y).mass(row | row_c).is_one() {
                return Err(Error::SectionFailure {
                    check: "a set or its complement covers almost every point",
                    y,
                    set: e,
                    points: (row | row_c).complement(),
                });
            }
            if psi.tau_hat[y].eval(row) != row {
                return Err(Error::SectionFailure {
                    check: "section fixed by its density",
                    y,
                    set: e,
                    points: row ^ psi.tau_hat[y].eval(row),
                });
            }
            report.section_checks += 2;
        }
        for x in 0..s.nx() {
            if !q_hat.is_measurable(s.section_x(v, x)) {
                return Err(Error::NotMeasurable {
                    set: s.section_x(v, x),
                });
            }
            report.section_checks += 1;
        }
        report.sets += 1;
    }
    Ok(report)
}

/// A lifting of `R̂` that splits into liftings `σ_y` of the sections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitLifting {
    pub pi: Lifting,
    pub sigma: Vec<Lifting>,
}

/// `σ_y` refines `τ_y`, and `[π(E)]^y = σ_y([ψ(E)]^y)`.
pub fn build_split_lifting_t3(
    r: &SkewProduct,
    dis: &Disintegration,
    psi: &PsiP3,
    tie: TieBreak,
) -> Result<SplitLifting> {
    let s = r.space();
    let d = &psi.psi;
    let rhat = d.domain();
    let sigma: Vec<Lifting> = psi.tau_hat.iter().map(|t| lift_from_density(t, tie)).collect();
    let mut class = d.classes().to_vec();
    for y in 0..s.ny() {
        let sy = dis.s(y);
        for x in 0..s.nx() {
            if sy.weight(x).is_zero() {
                let u = sigma[y].representative(x);
                let ai = rhat.atom_index_of(s.index(x, y));
                class[ai] = d.class_mask(rhat.atom_index_of(s.index(u, y)));
            }
        }
    }
    let pi = Lifting::new(LowerDensity::new(rhat.clone(), d.weights().to_vec(), class)?)?;
    let formula = |e: MSet| -> MSet {
        let v = d.eval(e);
        let rows: Vec<MSet> = (0..s.ny())
            .map(|y| sigma[y].eval(s.section(v, y)))
            .collect();
        s.from_sections(&rows)
    };
    pi.density()
        .check_matches(&formula, Coverage::auto(rhat.num_atoms(), 0x53))?;
    Ok(SplitLifting { pi, sigma })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct T3Report {
    pub sets: u64,
    /// `(E, y)` pairs on which the splitting identity was checked.
    pub pairs: u64,
    pub exhaustive: bool,
}

/// Lifting axioms for `π` and every `σ_y`, `ψ ⊆ π`, `τ_y ⊆ σ_y`, and the
/// splitting identity for every visited `E` and every `y`.
pub fn check_t3(r: &SkewProduct, split: &SplitLifting, psi: &PsiP3, seed: u64) -> Result<T3Report> {
    let s = r.space();
    let pi = split.pi.density();
    let rhat = pi.domain();
    let coverage = Coverage::auto(rhat.num_atoms(), seed);
    verify_density(pi, true, coverage)?;
    dominates(pi, &psi.psi, coverage)?;
    for (sig, tau) in split.sigma.iter().zip(&psi.tau_hat) {
        let cov = Coverage::auto(sig.density().domain().num_atoms(), seed);
        verify_density(sig.density(), true, cov)?;
        dominates(sig.density(), tau, cov)?;
    }
    let mut report = T3Report {
        exhaustive: matches!(coverage, Coverage::Exhaustive),
        ..T3Report::default()
    };
    for mask in coverage.masks(rhat.num_atoms()) {
        let v = rhat.set_of_mask(pi.apply_mask(mask));
        for y in 0..s.ny() {
            let row = s.section(v, y);
            let fixed = split.sigma[y].eval(row);
            if fixed != row {
                return Err(Error::SectionFailure {
                    check: "splitting identity",
                    y,
                    set: rhat.set_of_mask(mask),
                    points: fixed ^ row,
                });
            }
            report.pairs += 1;
        }
        report.sets += 1;
    }
    Ok(report)
}

/// Everything built from one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pipeline {
    pub family: EquiFamily,
    pub envelopes: Vec<Option<(MSet, MSet)>>,
    pub phi: PhiT2,
    pub psi: PsiP3,
    pub split: SplitLifting,
}

pub fn run_pipeline(
    r: &SkewProduct,
    dis: &Disintegration,
    c: &SigmaAlg,
    gens: &[MSet],
    rule: EnvelopeRule,
    tie: TieBreak,
    verify: bool,
) -> Result<Pipeline> {
    let (family, envelopes) = build_family(r, dis, c, gens, rule, verify)?;
    let phi = build_phi_t2(r, dis, c, &family, gens, &envelopes, verify)?;
    let psi = saturate_psi_p3(r, dis, &family, &phi.phi)?;
    let split = build_split_lifting_t3(r, dis, &psi, tie)?;
    Ok(Pipeline {
        family,
        envelopes,
        phi,
        psi,
        split,
    })
}

/// Result of the section modification `Ẽ^y = σ_y(E^y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct C1Report {
    pub tilde: MSet,
    /// Rows where `Ẽ` and `π(E)` differ.
    pub exceptional: MSet,
    pub exceptional_null: bool,
    pub measurable: bool,
}

impl C1Report {
    pub fn holds(&self) -> bool {
        self.exceptional_null && self.measurable
    }
}

pub fn section_modification_c1(r: &SkewProduct, split: &SplitLifting, e: MSet) -> Result<C1Report> {
    let s = r.space();
    let pe = split.pi.apply(e)?;
    let rows: Vec<MSet> = (0..s.ny())
        .map(|y| split.sigma[y].eval(s.section(e, y)))
        .collect();
    let tilde = s.from_sections(&rows);
    let mut exceptional = s.yg().empty();
    for y in 0..s.ny() {
        if s.section(tilde, y) != s.section(pe, y) {
            exceptional.insert(y);
        }
    }
    Ok(C1Report {
        tilde,
        exceptional,
        exceptional_null: s.q().is_null(s.y_alg().cover(exceptional)),
        measurable: completion_algebra(r).is_measurable(tilde),
    })
}

/// Points `(x, y)` with `S_y({x}) = 0` or `y` in a `Q`-null atom of `𝔅`.
/// Every nil set is a subset of this one.
pub fn nil_points(r: &SkewProduct, dis: &Disintegration) -> MSet {
    let s = r.space();
    let mut out = s.ground().empty();
    for &b in s.y_alg().atoms() {
        let null_block = s.q().is_null(b);
        for y in b.iter() {
            for x in 0..s.nx() {
                if null_block || dis.s(y).weight(x).is_zero() {
                    out.insert(s.index(x, y));
                }
            }
        }
    }
    out
}

/// Nil membership with the least exceptional row set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NilVerdict {
    pub nil: bool,
    /// `{y : S_y(E^y) > 0}`.
    pub witness: MSet,
    /// `Q` of the `𝔅`-cover of the witness.
    pub witness_mass: Rational,
}

pub fn is_nil(r: &SkewProduct, dis: &Disintegration, e: MSet) -> NilVerdict {
    let s = r.space();
    let mut witness = s.yg().empty();
    for y in 0..s.ny() {
        if !dis.s(y).is_null(s.section(e, y)) {
            witness.insert(y);
        }
    }
    let witness_mass = s.q().mass(s.y_alg().cover(witness));
    NilVerdict {
        nil: witness_mass.is_zero(),
        witness,
        witness_mass,
    }
}

/// The nil extension `𝔄∂𝔅 = {W △ N}` with `R_∂(W △ N) = R(W)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NilExtension {
    pub algebra: SigmaAlg,
    pub nil_points: MSet,
    base: SigmaAlg,
    weights: Vec<Rational>,
}

impl NilExtension {
    pub fn new(r: &SkewProduct, dis: &Disintegration) -> Self {
        let nil = nil_points(r, dis);
        let base = r.space().algebra().clone();
        let mut blocks = Vec::new();
        for &a in base.atoms() {
            if !(a - nil).is_empty() {
                blocks.push(a - nil);
            }
        }
        for p in nil.iter() {
            blocks.push(nil.ground().point(p));
        }
        let algebra = SigmaAlg::from_blocks(nil.ground(), &blocks).expect("atoms split by nil points");
        NilExtension {
            algebra,
            nil_points: nil,
            base,
            weights: r.measure().weights().to_vec(),
        }
    }

    /// Product atoms made of nil points only. Any of them may be moved
    /// between `W` and `N`.
    pub fn free_atoms(&self) -> Vec<MSet> {
        self.base
            .atoms()
            .iter()
            .copied()
            .filter(|a| a.is_subset(self.nil_points))
            .collect()
    }

    /// The least `W` with `E △ W` nil.
    pub fn canonical(&self, e: MSet) -> Result<MSet> {
        if !self.algebra.is_measurable(e) {
            return Err(Error::NotMeasurable { set: e });
        }
        let mut w = e.ground().empty();
        for &a in self.base.atoms() {
            let core = a - self.nil_points;
            if !core.is_empty() && core.is_subset(e) {
                w = w | a;
            }
        }
        Ok(w)
    }

    /// Up to `limit` decompositions `(W, N)` of `e`, the canonical one first.
    pub fn decompositions(&self, e: MSet, limit: usize) -> Result<Vec<(MSet, MSet)>> {
        let w0 = self.canonical(e)?;
        let free = self.free_atoms();
        let count = if free.len() >= 20 { 1 << 20 } else { 1usize << free.len() };
        let mut out = Vec::new();
        for choice in 0..count.min(limit.max(1)) {
            let mut w = w0;
            for (j, &a) in free.iter().enumerate() {
                if choice & (1 << j) != 0 {
                    w = w | a;
                }
            }
            out.push((w, e ^ w));
        }
        Ok(out)
    }

    pub fn measure(&self, e: MSet) -> Result<Rational> {
        Ok(mass(&self.weights, self.canonical(e)?))
    }

    /// `R(W)` agrees across the decompositions of `e`; returns their number.
    pub fn check_well_defined(&self, e: MSet, limit: usize) -> Result<usize> {
        let decs = self.decompositions(e, limit)?;
        let m0 = mass(&self.weights, decs[0].0);
        for &(w, n) in &decs {
            if !n.is_subset(self.nil_points) || mass(&self.weights, w) != m0 {
                return Err(Error::IdentityFailure {
                    check: "nil extension measure",
                    set: e,
                    lhs: m0,
                    rhs: mass(&self.weights, w),
                });
            }
        }
        Ok(decs.len())
    }

    /// Every null atom is a single point, so all null subsets are measurable.
    pub fn is_complete(&self) -> bool {
        self.algebra
            .atoms()
            .iter()
            .all(|&a| a.len() == 1 || !mass(&self.weights, a).is_zero())
    }

    /// Every `R̂`-atom lies in `𝔄∂𝔅` with the same measure.
    pub fn extends_completion(&self, rhat: &SigmaAlg) -> bool {
        rhat.atoms().iter().all(|&a| {
            self.algebra.is_measurable(a)
                && self.measure(a).map(|m| m == mass(&self.weights, a)).unwrap_or(false)
        })
    }

    /// `π_2(W △ N) = π_1(W)`.
    pub fn lift(&self, pi1: &Lifting, e: MSet) -> Result<MSet> {
        pi1.apply(self.canonical(e)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct T4Report {
    pub sets: u64,
    pub decompositions: u64,
    pub pairs: u64,
}

/// For every visited `E ∈ 𝔄∂𝔅`: `π_2(E)` agrees across decompositions,
/// `R_∂` is well defined, `E △ π_2(E)` is nil and `π_2(E)` splits.
pub fn check_t4(
    r: &SkewProduct,
    dis: &Disintegration,
    ext: &NilExtension,
    split: &SplitLifting,
    seed: u64,
) -> Result<T4Report> {
    let s = r.space();
    let alg = &ext.algebra;
    let coverage = Coverage::auto(alg.num_atoms(), seed);
    let mut report = T4Report::default();
    let nil_ok = is_nil(r, dis, ext.nil_points).nil;
    if !nil_ok {
        return Err(Error::ConstructionFailure {
            what: "nil points do not form a nil set",
            set: ext.nil_points,
            y: 0,
        });
    }
    for mask in coverage.masks(alg.num_atoms()) {
        let e = alg.set_of_mask(mask);
        report.decompositions += ext.check_well_defined(e, 8)? as u64;
        let decs = ext.decompositions(e, 8)?;
        let lifted = split.pi.apply(decs[0].0)?;
        for &(w, _) in &decs[1..] {
            let other = split.pi.apply(w)?;
            if other != lifted {
                return Err(Error::ConstructionFailure {
                    what: "lifted value depends on the decomposition",
                    set: e,
                    y: 0,
                });
            }
        }
        let residual = is_nil(r, dis, e ^ lifted);
        if !residual.nil {
            return Err(Error::ConstructionFailure {
                what: "E and its lifting differ by a set that is not nil",
                set: e,
                y: residual.witness.first().unwrap_or(0),
            });
        }
        for y in 0..s.ny() {
            let row = s.section(lifted, y);
            if split.sigma[y].eval(row) != row {
                return Err(Error::SectionFailure {
                    check: "splitting identity on the nil extension",
                    y,
                    set: e,
                    points: row ^ split.sigma[y].eval(row),
                });
            }
            report.pairs += 1;
        }
        report.sets += 1;
    }
    Ok(report)
}

/// Outcome of the exhaustive search for splitting liftings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleReport {
    /// Liftings of `R̂` enumerated.
    pub candidates: u64,
    /// Of those, liftings that split for some section family.
    pub splitting: u64,
    pub constructed_valid: bool,
}

/// All choices of one element per slot.
fn assignments(options: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for prefix in &out {
            for &o in opts {
                let mut v = prefix.clone();
                v.push(o);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn lifting_from_choice(
    alg: &SigmaAlg,
    weights: &[Rational],
    null_atoms: &[usize],
    choice: &[usize],
) -> Result<LowerDensity> {
    let mut class: Vec<u64> = (0..alg.num_atoms()).map(|i| 1u64 << i).collect();
    for (&a, &v) in null_atoms.iter().zip(choice) {
        class[a] = 1 << v;
    }
    LowerDensity::new(alg.clone(), weights.to_vec(), class)
}

/// Set-level splitting test over every set of `R̂`.
fn splits(s: &ProductSpace, pi: &LowerDensity, sigma: &[&LowerDensity]) -> bool {
    let alg = pi.domain();
    (0..=alg.full_mask()).all(|mask| {
        let v = alg.set_of_mask(pi.apply_mask(mask));
        (0..s.ny()).all(|y| sigma[y].eval(s.section(v, y)) == s.section(v, y))
    })
}

/// Enumerates every lifting of `R̂` and every family of section liftings,
/// and tests the splitting identity on every set. Returns `None` when
/// `R̂` has more than [`EXHAUSTIVE_ATOMS`] atoms or the search exceeds
/// `budget` set evaluations.
pub fn brute_force_splitting(
    r: &SkewProduct,
    dis: &Disintegration,
    split: &SplitLifting,
    budget: u64,
) -> Result<Option<OracleReport>> {
    let s = r.space();
    let rhat = completion_algebra(r);
    let weights = r.measure().weights();
    let k = rhat.num_atoms();
    if k > EXHAUSTIVE_ATOMS {
        return Ok(None);
    }
    let pos: Vec<usize> = (0..k).filter(|&i| !mass(weights, rhat.atom(i)).is_zero()).collect();
    let null: Vec<usize> = (0..k).filter(|&i| mass(weights, rhat.atom(i)).is_zero()).collect();
    let pi_count = (pos.len() as u64).saturating_pow(null.len() as u32);
    let mut section_families: Vec<Vec<LowerDensity>> = Vec::new();
    let mut sigma_total = 0u64;
    for y in 0..s.ny() {
        let sy = dis.s(y);
        let alg = sy.completion().completed().clone();
        let p: Vec<usize> = (0..alg.num_atoms()).filter(|&i| !sy.is_null(alg.atom(i))).collect();
        let n: Vec<usize> = (0..alg.num_atoms()).filter(|&i| sy.is_null(alg.atom(i))).collect();
        let count = (p.len() as u64).saturating_pow(n.len() as u32);
        sigma_total = sigma_total.saturating_add(count);
        if sigma_total > budget {
            return Ok(None);
        }
        let options = vec![p; n.len()];
        let fam = assignments(&options)
            .iter()
            .map(|ch| lifting_from_choice(&alg, sy.weights(), &n, ch))
            .collect::<Result<Vec<_>>>()?;
        section_families.push(fam);
    }
    let cost = pi_count
        .saturating_mul(sigma_total)
        .saturating_mul(1u64 << k);
    if cost > budget {
        return Ok(None);
    }
    let options = vec![pos.clone(); null.len()];
    let mut report = OracleReport::default();
    let full = rhat.full_mask();
    for choice in assignments(&options) {
        let pi = lifting_from_choice(&rhat, weights, &null, &choice)?;
        debug_assert!(check_density_axioms(&rhat, weights, &|e| pi.eval(e), true, Coverage::Exhaustive).is_ok());
        report.candidates += 1;
        let values: Vec<MSet> = (0..=full).map(|m| rhat.set_of_mask(pi.apply_mask(m))).collect();
        let ok = (0..s.ny()).all(|y| {
            section_families[y].iter().any(|sig| {
                values
                    .iter()
                    .all(|&v| sig.eval(s.section(v, y)) == s.section(v, y))
            })
        });
        if ok {
            report.splitting += 1;
        }
    }
    let sigma: Vec<&LowerDensity> = split.sigma.iter().map(|l| l.density()).collect();
    report.constructed_valid = split.pi.density().domain() == &rhat
        && check_density_axioms(&rhat, weights, &|e| split.pi.eval(e), true, Coverage::Exhaustive)
            .is_ok()
        && splits(s, split.pi.density(), &sigma);
    Ok(Some(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finspace::FinMeasure;
    use crate::product::disintegrate;
    use crate::rational::{rat, zero};
    use crate::set::GroundSet;

    fn measure(w: &[Rational]) -> FinMeasure {
        FinMeasure::new(SigmaAlg::discrete(GroundSet::new(w.len()).unwrap()), w.to_vec()).unwrap()
    }

    /// `X = {0,1,2}` with `P = (1/2, 1/2, 0)`, `Y = {0,1}` uniform,
    /// `R(0,0) = R(1,1) = 1/2`.
    fn fixture() -> (SkewProduct, Disintegration, SigmaAlg) {
        let p = measure(&[rat(1, 2), rat(1, 2), zero()]);
        let q = measure(&[rat(1, 2), rat(1, 2)]);
        let space = ProductSpace::new(p, q).unwrap();
        let m = vec![vec![rat(1, 2), zero()], vec![zero(), rat(1, 2)], vec![zero(), zero()]];
        let r = SkewProduct::from_matrix(space, &m).unwrap();
        let dis = disintegrate(&r).unwrap();
        let c = SigmaAlg::discrete(r.space().xg());
        (r, dis, c)
    }

    fn gens(c: &SigmaAlg) -> Vec<MSet> {
        c.atoms().to_vec()
    }

    #[test]
    fn fixture_pipeline_verifies() {
        let (r, dis, c) = fixture();
        let g = gens(&c);
        let p = run_pipeline(&r, &dis, &c, &g, EnvelopeRule::Minimal, TieBreak::Lowest, true).unwrap();
        let t2 = check_t2(&r, &c, &p.family, &p.phi, 1).unwrap();
        assert!(t2.exhaustive);
        check_p3(&r, &dis, &p.psi, &p.phi.phi, 1).unwrap();
        let t3 = check_t3(&r, &p.split, &p.psi, 1).unwrap();
        assert!(t3.pairs > 0);
        let oracle = brute_force_splitting(&r, &dis, &p.split, 10_000_000).unwrap().unwrap();
        assert!(oracle.constructed_valid);
        assert!(oracle.splitting >= 1);
    }

    #[test]
    fn independent_product_without_null_points_gives_identity() {
        let p = measure(&[rat(1, 2), rat(1, 2)]);
        let q = measure(&[rat(1, 3), rat(2, 3)]);
        let space = ProductSpace::new(p.clone(), q.clone()).unwrap();
        let w: Vec<Rational> = (0..4)
            .map(|i| p.weight(i % 2) * q.weight(i / 2))
            .collect();
        let r = SkewProduct::new(space, w).unwrap();
        let dis = disintegrate(&r).unwrap();
        let c = SigmaAlg::discrete(r.space().xg());
        let out = run_pipeline(&r, &dis, &c, &gens(&c), EnvelopeRule::Minimal, TieBreak::Lowest, true).unwrap();
        for e in r.space().ground().subsets() {
            assert_eq!(out.phi.phi.apply(e).unwrap(), e);
            assert_eq!(out.split.pi.apply(e).unwrap(), e);
        }
    }

    #[test]
    fn single_row_reduces_to_section_density() {
        let p = measure(&[rat(1, 2), rat(1, 2), zero()]);
        let q = measure(&[rat(1, 1)]);
        let space = ProductSpace::new(p.clone(), q).unwrap();
        let r = SkewProduct::new(space, p.weights().to_vec()).unwrap();
        let dis = disintegrate(&r).unwrap();
        let c = SigmaAlg::discrete(r.space().xg());
        let out = run_pipeline(&r, &dis, &c, &gens(&c), EnvelopeRule::Minimal, TieBreak::Lowest, true).unwrap();
        for e in r.space().xg().subsets() {
            assert_eq!(out.phi.phi.apply(e).unwrap(), out.family.taus[0].apply(e).unwrap());
            assert_eq!(out.split.pi.apply(e).unwrap(), out.split.sigma[0].apply(e).unwrap());
        }
    }

    #[test]
    fn nil_examples() {
        let (r, dis, _) = fixture();
        let s = r.space();
        let empty = is_nil(&r, &dis, s.ground().empty());
        assert!(empty.nil && empty.witness.is_empty());
        let strip = s.rect(s.xg().point(2), s.yg().full());
        assert!(is_nil(&r, &dis, strip).nil);
        let heavy = is_nil(&r, &dis, s.rect(s.xg().point(0), s.yg().point(0)));
        assert!(!heavy.nil);
        assert_eq!(heavy.witness, s.yg().point(0));
    }

    #[test]
    fn nil_extension_on_fixture() {
        let (r, dis, c) = fixture();
        let ext = NilExtension::new(&r, &dis);
        assert!(ext.is_complete());
        assert!(ext.extends_completion(&completion_algebra(&r)));
        assert!(ext.free_atoms().len() >= 2);
        let p = run_pipeline(&r, &dis, &c, &gens(&c), EnvelopeRule::Minimal, TieBreak::Lowest, false).unwrap();
        let t4 = check_t4(&r, &dis, &ext, &p.split, 3).unwrap();
        assert!(t4.decompositions >= 3 * t4.sets);
        let w = r.space().algebra().atom(0);
        assert_eq!(ext.lift(&p.split.pi, w).unwrap(), p.split.pi.apply(w).unwrap());
    }

    #[test]
    fn c1_fixture() {
        let (r, dis, c) = fixture();
        let p = run_pipeline(&r, &dis, &c, &gens(&c), EnvelopeRule::Minimal, TieBreak::Lowest, false).unwrap();
        let rhat = completion_algebra(&r);
        for e in rhat.measurable_sets() {
            assert!(section_modification_c1(&r, &p.split, e).unwrap().holds());
        }
        let pe = p.split.pi.apply(r.space().ground().full()).unwrap();
        assert_eq!(section_modification_c1(&r, &p.split, pe).unwrap().tilde, pe);
    }
}
