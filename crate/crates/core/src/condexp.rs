//! Conditional expectations and the section compatibility of versions on
//! skew products.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::finspace::{mass, FinMeasure, SigmaAlg};
use crate::product::{check_function_measurable, Disintegration, SkewProduct};
use crate::rational::{zero, Rational};
use crate::set::{GroundSet, MSet};

/// A function on a ground set that is constant on the atoms of `algebra`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandVar {
    algebra: SigmaAlg,
    values: Vec<Rational>,
}

impl RandVar {
    pub fn new(algebra: SigmaAlg, values: Vec<Rational>) -> Result<Self> {
        check_function_measurable(&algebra, &values)?;
        Ok(RandVar { algebra, values })
    }

    pub fn algebra(&self) -> &SigmaAlg {
        &self.algebra
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn value(&self, point: usize) -> &Rational {
        &self.values[point]
    }

    pub fn into_values(self) -> Vec<Rational> {
        self.values
    }
}

/// Which value a version takes on atoms of measure zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VersionPolicy {
    Constant(Rational),
    /// The value of `f` at the least point of the atom.
    Inherit,
}

impl Default for VersionPolicy {
    fn default() -> Self {
        VersionPolicy::Constant(zero())
    }
}

/// Block averages of `values` over the atoms of `sub` under point weights.
pub fn cond_expect_values(
    weights: &[Rational],
    sub: &SigmaAlg,
    values: &[Rational],
    policy: &VersionPolicy,
) -> Vec<Rational> {
    let mut out = vec![zero(); values.len()];
    for &a in sub.atoms() {
        let m = mass(weights, a);
        let v = if m.is_zero() {
            match policy {
                VersionPolicy::Constant(c) => c.clone(),
                VersionPolicy::Inherit => values[a.first().unwrap()].clone(),
            }
        } else {
            let mut total = zero();
            for p in a.iter() {
                total += &weights[p] * &values[p];
            }
            total / m
        };
        for p in a.iter() {
            out[p] = v.clone();
        }
    }
    out
}

/// A version of `𝔼_sub(f)` under `m`.
pub fn cond_expect(
    f: &RandVar,
    sub: &SigmaAlg,
    m: &FinMeasure,
    policy: &VersionPolicy,
) -> Result<RandVar> {
    sub.check_coarser_than(m.algebra())?;
    check_function_measurable(m.algebra(), f.values())?;
    let values = cond_expect_values(m.weights(), sub, f.values(), policy);
    Ok(RandVar {
        algebra: sub.clone(),
        values,
    })
}

/// Points of `support` where two functions differ.
fn disagreement(ground: GroundSet, support: MSet, a: &[Rational], b: &[Rational]) -> MSet {
    let mut out = ground.empty();
    for p in support.iter() {
        if a[p] != b[p] {
            out.insert(p);
        }
    }
    out
}

fn product_fn(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    a.iter().zip(b).map(|(u, v)| u * v).collect()
}

fn indicator_fn(ground: GroundSet, e: MSet) -> Vec<Rational> {
    crate::product::indicator(ground, e)
}

/// `σ(base ∪ {c-atoms of S_y-measure zero})`.
pub fn with_null_atoms(base: &SigmaAlg, c: &SigmaAlg, s: &FinMeasure) -> SigmaAlg {
    let mut alg = base.clone();
    for &a in c.atoms() {
        if s.is_null(a) {
            alg = alg.with_set(a);
        }
    }
    alg
}

/// Intermediate objects of one successor step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuccessorData {
    pub d: MSet,
    pub f1: Vec<Rational>,
    pub f2: Vec<Rational>,
    pub f1y: Vec<Vec<Rational>>,
    pub f2y: Vec<Vec<Rational>>,
    /// `A_y = {𝔼^y_{𝔠_{yβ}}(χ_D) ≠ 0}`.
    pub a_y: Vec<MSet>,
    /// The `y` where `f_{1y}` and `f_1(·, y)` differ on a positive part of `A_y`.
    pub m_f: MSet,
    /// The `y` where the section identity fails on `D` or on `D^c`.
    pub section_exceptions: MSet,
}

/// Certificate that sections of `𝔼_{𝔠⊗𝔅}(f)` are versions of `𝔼^y_𝔠(f^y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct T1Report {
    /// `g = 𝔼_{𝔠⊗𝔅}(f)`.
    pub g: Vec<Rational>,
    /// The `y` where `g^y` fails the defining integrals of `𝔼^y_𝔠(f^y)`.
    pub exceptional_y: MSet,
    /// The `𝔅`-cover of `exceptional_y`.
    pub exceptional_cover: MSet,
    /// Per `y` outside the exceptional set: the points where `g^y` and the
    /// direct version of `𝔼^y_𝔠(f^y)` differ. All are `S_y`-null.
    pub disagreement: Vec<MSet>,
    /// Whether `(x, y) ↦ 𝔼^y_𝔠(f^y)(x)` agrees `R`-a.e. with the
    /// `𝔠⊗𝔅`-measurable `g` off the exceptional rows.
    pub measurable_off_exceptional: bool,
    pub step: Option<SuccessorData>,
}

fn check_c(r: &SkewProduct, dis: &Disintegration, c: &SigmaAlg) -> Result<()> {
    c.check_coarser_than(r.space().x_alg())?;
    for m in dis.measures() {
        c.check_coarser_than(m.algebra())?;
    }
    Ok(())
}

/// Checks the section compatibility of `𝔼_{𝔠⊗𝔅}(f)` for one `f`.
///
/// `f` is indexed by product points and must be measurable for the
/// completion of `R`. A genuine counterexample is reported as an error.
pub fn t1_check(
    r: &SkewProduct,
    dis: &Disintegration,
    c: &SigmaAlg,
    f: &[Rational],
    policy: &VersionPolicy,
) -> Result<T1Report> {
    let s = r.space();
    check_c(r, dis, c)?;
    check_function_measurable(r.measure().completion().completed(), f)?;
    let m = s.tensor(c, s.y_alg());
    let g = cond_expect_values(r.measure().weights(), &m, f, policy);

    let mut exceptional = s.yg().empty();
    let mut witness: Option<(usize, MSet, Rational)> = None;
    for y in 0..s.ny() {
        let sy = dis.s(y);
        for &atom in c.atoms() {
            let mut lhs = zero();
            let mut rhs = zero();
            for x in atom.iter() {
                let p = s.index(x, y);
                lhs += sy.weight(x) * &g[p];
                rhs += sy.weight(x) * &f[p];
            }
            if lhs != rhs {
                exceptional.insert(y);
                if witness.is_none() && !s.q().weight(y).is_zero() {
                    witness = Some((y, atom, lhs - rhs));
                }
                break;
            }
        }
    }
    if let Some((y, set, discrepancy)) = witness {
        return Err(Error::Counterexample {
            y,
            set,
            discrepancy,
        });
    }

    let mut disagree = vec![s.xg().empty(); s.ny()];
    let mut measurable = true;
    for y in 0..s.ny() {
        if exceptional.contains(y) {
            continue;
        }
        let sy = dis.s(y);
        let fy: Vec<Rational> = (0..s.nx()).map(|x| f[s.index(x, y)].clone()).collect();
        let gy: Vec<Rational> = (0..s.nx()).map(|x| g[s.index(x, y)].clone()).collect();
        let h = cond_expect_values(sy.weights(), c, &fy, policy);
        let d = disagreement(s.xg(), s.xg().full(), &gy, &h);
        if !sy.is_null(d) {
            let x = (d & sy.support()).first().unwrap();
            return Err(Error::Counterexample {
                y,
                set: d,
                discrepancy: &gy[x] - &h[x],
            });
        }
        if !s.q().weight(y).is_zero() && !d.is_empty() {
            // Disagreement at S_y-null points of a Q-positive row is R-null.
            measurable &= d.iter().all(|x| r.weight(x, y).is_zero());
        }
        disagree[y] = d;
    }
    Ok(T1Report {
        g,
        exceptional_y: exceptional,
        exceptional_cover: s.y_alg().cover(exceptional),
        disagreement: disagree,
        measurable_off_exceptional: measurable,
        step: None,
    })
}

fn r_ae(
    check: &'static str,
    r: &SkewProduct,
    lhs: &[Rational],
    rhs: &[Rational],
) -> Result<()> {
    let g = r.space().ground();
    let bad = disagreement(g, r.measure().support(), lhs, rhs);
    match bad.first() {
        None => Ok(()),
        Some(p) => Err(Error::IdentityFailure {
            check,
            set: bad,
            lhs: lhs[p].clone(),
            rhs: rhs[p].clone(),
        }),
    }
}

fn s_ae(check: &'static str, s: &FinMeasure, lhs: &[Rational], rhs: &[Rational]) -> Result<()> {
    let bad = disagreement(s.ground(), s.support(), lhs, rhs);
    match bad.first() {
        None => Ok(()),
        Some(p) => Err(Error::IdentityFailure {
            check,
            set: bad,
            lhs: lhs[p].clone(),
            rhs: rhs[p].clone(),
        }),
    }
}

/// Splits a `with_set(d)`-measurable function into the parts living on `d`
/// and on its complement, each measurable for `base`.
fn split_on(base: &SigmaAlg, d: MSet, values: &[Rational]) -> (Vec<Rational>, Vec<Rational>) {
    let mut inside = vec![zero(); values.len()];
    let mut outside = vec![zero(); values.len()];
    for &a in base.atoms() {
        let vi = (a & d).first().map(|p| values[p].clone()).unwrap_or_default();
        let vo = (a - d).first().map(|p| values[p].clone()).unwrap_or_default();
        for p in a.iter() {
            inside[p] = vi.clone();
            outside[p] = vo.clone();
        }
    }
    (inside, outside)
}

/// Materializes the successor step `𝔠_β → σ(𝔠_β ∪ {D})` and checks its
/// identities exactly.
///
/// `c` is the full sub-algebra whose null atoms enter the per-`y` chains.
#[allow(clippy::too_many_arguments)]
pub fn successor_step_check(
    r: &SkewProduct,
    dis: &Disintegration,
    c: &SigmaAlg,
    c_beta: &SigmaAlg,
    d: MSet,
    f: &[Rational],
    policy: &VersionPolicy,
) -> Result<T1Report> {
    let s = r.space();
    check_c(r, dis, c)?;
    c_beta.check_coarser_than(c)?;
    if !c.is_measurable(d) {
        return Err(Error::NotMeasurable { set: d });
    }
    if c_beta.is_measurable(d) {
        return Err(Error::Precondition {
            reason: alloc::format!("{d} is already measurable at the current stage, nothing to extend"),
        });
    }
    let mut report = t1_check(r, dis, c_beta, f, policy)?;

    let c_gamma = c_beta.with_set(d);
    let m_beta = s.tensor(c_beta, s.y_alg());
    let m_gamma = s.tensor(&c_gamma, s.y_alg());
    let dy = s.rect(d, s.yg().full());
    let w = r.measure().weights();
    let chi_dy = indicator_fn(s.ground(), dy);
    let f_dy = product_fn(f, &chi_dy);

    let e_gamma = cond_expect_values(w, &m_gamma, f, policy);
    let (f1, f2) = split_on(&m_beta, dy, &e_gamma);
    let recombined: Vec<Rational> = (0..s.ground().size())
        .map(|p| if dy.contains(p) { f1[p].clone() } else { f2[p].clone() })
        .collect();
    r_ae("e46", r, &e_gamma, &recombined)?;
    r_ae(
        "e13",
        r,
        &cond_expect_values(w, &m_gamma, &f_dy, policy),
        &product_fn(&f1, &chi_dy),
    )?;
    r_ae(
        "e9",
        r,
        &cond_expect_values(w, &m_beta, &f_dy, policy),
        &product_fn(&f1, &cond_expect_values(w, &m_beta, &chi_dy, policy)),
    )?;

    let chi_d = indicator_fn(s.xg(), d);
    let mut f1y = Vec::with_capacity(s.ny());
    let mut f2y = Vec::with_capacity(s.ny());
    let mut a_y = Vec::with_capacity(s.ny());
    let mut m_f = s.yg().empty();
    let mut section_exceptions = s.yg().empty();
    for y in 0..s.ny() {
        let sy = dis.s(y);
        let c_yb = with_null_atoms(c_beta, c, sy);
        let c_yg = c_yb.with_set(d);
        let fy: Vec<Rational> = (0..s.nx()).map(|x| f[s.index(x, y)].clone()).collect();
        let fy_d = product_fn(&fy, &chi_d);
        let e_yg = cond_expect_values(sy.weights(), &c_yg, &fy, policy);
        let (g1, g2) = split_on(&c_yb, d, &e_yg);
        let recombined: Vec<Rational> = (0..s.nx())
            .map(|x| if d.contains(x) { g1[x].clone() } else { g2[x].clone() })
            .collect();
        s_ae("e47", sy, &e_yg, &recombined)?;
        s_ae(
            "e12",
            sy,
            &cond_expect_values(sy.weights(), &c_yg, &fy_d, policy),
            &product_fn(&g1, &chi_d),
        )?;
        let e_chi = cond_expect_values(sy.weights(), &c_yb, &chi_d, policy);
        s_ae(
            "e10",
            sy,
            &cond_expect_values(sy.weights(), &c_yb, &fy_d, policy),
            &product_fn(&g1, &e_chi),
        )?;
        let mut ay = s.xg().empty();
        for x in 0..s.nx() {
            if !e_chi[x].is_zero() {
                ay.insert(x);
            }
        }
        if !sy.is_null(d - ay) {
            return Err(Error::IdentityFailure {
                check: "null outside A_y",
                set: d - ay,
                lhs: sy.mass(d - ay),
                rhs: zero(),
            });
        }
        let pos = ay & sy.support();
        if pos.iter().any(|x| g1[x] != f1[s.index(x, y)]) {
            m_f.insert(y);
        }
        let pos = sy.support();
        if pos.iter().any(|x| e_gamma[s.index(x, y)] != e_yg[x]) {
            section_exceptions.insert(y);
        }
        f1y.push(g1);
        f2y.push(g2);
        a_y.push(ay);
    }
    for (set, what) in [(m_f, "f1y against f1 on A_y"), (section_exceptions, "section identity")] {
        if let Some(y) = set.iter().find(|&y| !s.q().weight(y).is_zero()) {
            return Err(Error::IdentityFailure {
                check: what,
                set,
                lhs: s.q().weight(y).clone(),
                rhs: zero(),
            });
        }
    }
    report.step = Some(SuccessorData {
        d,
        f1,
        f2,
        f1y,
        f2y,
        a_y,
        m_f,
        section_exceptions,
    });
    Ok(report)
}

/// The stages `𝔼_{chain[i]}(f)` of a finite martingale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MartingaleReport {
    pub stages: Vec<Vec<Rational>>,
}

/// Tower property `𝔼_i 𝔼_j f = 𝔼_i f` for all `i ≤ j` along an increasing
/// chain, and stabilization at the last stage.
pub fn martingale_limit_check(
    chain: &[SigmaAlg],
    m: &FinMeasure,
    f: &[Rational],
    policy: &VersionPolicy,
) -> Result<MartingaleReport> {
    for (i, pair) in chain.windows(2).enumerate() {
        if !pair[0].is_coarser_than(&pair[1]) {
            return Err(Error::NotIncreasing { index: i + 1 });
        }
    }
    if let Some(last) = chain.last() {
        last.check_coarser_than(m.algebra())?;
    }
    check_function_measurable(m.algebra(), f)?;
    let w = m.weights();
    let stages: Vec<Vec<Rational>> = chain
        .iter()
        .map(|alg| cond_expect_values(w, alg, f, policy))
        .collect();
    for i in 0..chain.len() {
        for j in i..chain.len() {
            let tower = cond_expect_values(w, &chain[i], &stages[j], policy);
            s_ae("tower", m, &tower, &stages[i])?;
        }
    }
    if let (Some(last), Some(alg)) = (stages.last(), chain.last()) {
        let direct = cond_expect_values(w, alg, f, policy);
        s_ae("stabilization", m, last, &direct)?;
        if alg == m.algebra() {
            s_ae("limit", m, last, f)?;
        }
    }
    Ok(MartingaleReport { stages })
}

/// `∫_C 𝔼(f) dm = ∫_C f dm` for every `C` in `sub`, checked on atoms.
pub fn defining_property_holds(m: &FinMeasure, sub: &SigmaAlg, f: &[Rational], e: &[Rational]) -> bool {
    sub.atoms().iter().all(|&a| {
        let lhs: Rational = a.iter().map(|p| m.weight(p) * &e[p]).sum();
        let rhs: Rational = a.iter().map(|p| m.weight(p) * &f[p]).sum();
        lhs == rhs
    })
}

/// Points where two versions differ; must be null.
pub fn version_difference(m: &FinMeasure, a: &[Rational], b: &[Rational]) -> MSet {
    disagreement(m.ground(), m.ground().full(), a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::{disintegrate, ProductSpace};
    use crate::rational::{one, rat};

    fn uniform4() -> FinMeasure {
        FinMeasure::uniform(GroundSet::new(4).unwrap())
    }

    #[test]
    fn cond_expect_examples() {
        let m = uniform4();
        let g = m.ground();
        let sub =
            SigmaAlg::from_blocks(g, &[g.set(&[0, 1]).unwrap(), g.set(&[2, 3]).unwrap()]).unwrap();
        let f = RandVar::new(m.algebra().clone(), indicator_fn(g, g.point(0))).unwrap();
        let e = cond_expect(&f, &sub, &m, &VersionPolicy::default()).unwrap();
        assert_eq!(e.values(), &[rat(1, 2), rat(1, 2), zero(), zero()]);
        let t = cond_expect(&f, &SigmaAlg::trivial(g), &m, &VersionPolicy::default()).unwrap();
        assert!(t.values().iter().all(|v| *v == rat(1, 4)));
        let same = cond_expect(&f, m.algebra(), &m, &VersionPolicy::default()).unwrap();
        assert_eq!(same.values(), f.values());
        assert!(defining_property_holds(&m, &sub, f.values(), e.values()));
    }

    #[test]
    fn policies_agree_off_null_sets() {
        let g = GroundSet::new(3).unwrap();
        let m = FinMeasure::new(SigmaAlg::discrete(g), vec![rat(1, 2), rat(1, 2), zero()]).unwrap();
        let f = vec![rat(1, 1), rat(2, 1), rat(7, 1)];
        let a = cond_expect_values(m.weights(), m.algebra(), &f, &VersionPolicy::default());
        let b = cond_expect_values(m.weights(), m.algebra(), &f, &VersionPolicy::Inherit);
        assert_eq!(a[2], zero());
        assert_eq!(b[2], rat(7, 1));
        assert!(m.is_null(version_difference(&m, &a, &b)));
    }

    /// `X = {0,1,2}`, `S_a = (1,0,0)`, `S_b = (0,1,0)`, `Q = (1/2,1/2)`.
    fn fixture() -> (SkewProduct, Disintegration) {
        let gx = GroundSet::new(3).unwrap();
        let gy = GroundSet::new(2).unwrap();
        let p = FinMeasure::new(SigmaAlg::discrete(gx), vec![rat(1, 2), rat(1, 2), zero()]).unwrap();
        let q = FinMeasure::new(SigmaAlg::discrete(gy), vec![rat(1, 2), rat(1, 2)]).unwrap();
        let space = ProductSpace::new(p, q).unwrap();
        let m = vec![
            vec![rat(1, 2), zero()],
            vec![zero(), rat(1, 2)],
            vec![zero(), zero()],
        ];
        let r = SkewProduct::from_matrix(space, &m).unwrap();
        let dis = disintegrate(&r).unwrap();
        (r, dis)
    }

    #[test]
    fn t1_examples() {
        let (r, dis) = fixture();
        let s = r.space();
        let c = SigmaAlg::trivial(s.xg());
        let f = indicator_fn(s.ground(), s.rect(s.xg().point(0), s.yg().full()));
        let rep = t1_check(&r, &dis, &c, &f, &VersionPolicy::default()).unwrap();
        for x in 0..3 {
            assert_eq!(rep.g[s.index(x, 0)], one());
            assert_eq!(rep.g[s.index(x, 1)], zero());
        }
        assert!(rep.exceptional_y.is_empty());
        assert!(rep.measurable_off_exceptional);

        let cst = vec![rat(2, 3); 6];
        let rep = t1_check(&r, &dis, s.x_alg(), &cst, &VersionPolicy::Inherit).unwrap();
        assert!(rep.g.iter().all(|v| *v == rat(2, 3)));
        assert!(rep.exceptional_y.is_empty());
    }

    #[test]
    fn successor_examples() {
        let (r, dis) = fixture();
        let s = r.space();
        let c = s.x_alg().clone();
        let trivial = SigmaAlg::trivial(s.xg());
        let d = s.xg().point(0);
        let f: Vec<Rational> = (0..6).map(|i| rat(i as i64 + 1, 3)).collect();
        let rep = successor_step_check(&r, &dis, &c, &trivial, d, &f, &VersionPolicy::default())
            .unwrap();
        let step = rep.step.unwrap();
        assert!(step.a_y[0].contains(0));
        assert_eq!(step.f1[s.index(0, 0)], f[s.index(0, 0)]);

        let chi = indicator_fn(s.ground(), s.rect(d, s.yg().full()));
        let rep = successor_step_check(&r, &dis, &c, &trivial, d, &chi, &VersionPolicy::default())
            .unwrap();
        let step = rep.step.unwrap();
        for y in 0..2 {
            for x in step.a_y[y].iter() {
                assert_eq!(step.f1y[y][x], one());
            }
        }

        let already = SigmaAlg::generate(s.xg(), &[d]).unwrap();
        assert!(matches!(
            successor_step_check(&r, &dis, &c, &already, d, &f, &VersionPolicy::default()),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn martingale_examples() {
        let m = uniform4();
        let g = m.ground();
        let f = indicator_fn(g, g.point(0));
        let chain = vec![
            SigmaAlg::trivial(g),
            SigmaAlg::generate(g, &[g.set(&[0, 1]).unwrap()]).unwrap(),
            SigmaAlg::discrete(g),
        ];
        let rep = martingale_limit_check(&chain, &m, &f, &VersionPolicy::default()).unwrap();
        assert_eq!(rep.stages[0], vec![rat(1, 4); 4]);
        assert_eq!(rep.stages[1], vec![rat(1, 2), rat(1, 2), zero(), zero()]);
        assert_eq!(rep.stages[2], f);
        assert!(martingale_limit_check(&chain[..1], &m, &f, &VersionPolicy::default()).is_ok());
        let cst = vec![rat(5, 1); 4];
        let rep = martingale_limit_check(&chain, &m, &cst, &VersionPolicy::default()).unwrap();
        assert!(rep.stages.iter().all(|st| st == &cst));
        let backwards: Vec<_> = chain.iter().rev().cloned().collect();
        assert_eq!(
            martingale_limit_check(&backwards, &m, &f, &VersionPolicy::default()),
            Err(Error::NotIncreasing { index: 1 })
        );
    }
}
