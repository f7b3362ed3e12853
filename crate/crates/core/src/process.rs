//! Processes `{ξ_y : y ∈ Y}` on the product and their measurable versions.
//!
//! A process is stored as the joint map `Ξ(x, y) = ξ_y(x)`. A version is
//! searched for through the splitting lifting: the level sets of `Ξ` are
//! lifted to the completed product, and each section is read through its
//! section lifting.

use alloc::vec::Vec;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::prodlift::{completion_algebra, is_nil, nil_points, NilExtension, SplitLifting};
use crate::product::{Disintegration, ProductSpace, SkewProduct};
use crate::rational::Rational;
use crate::set::MSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Process {
    nx: usize,
    ny: usize,
    values: Vec<Rational>,
    raw: bool,
}

impl Process {
    /// A process whose sections are all `𝔄`-measurable.
    pub fn new(space: &ProductSpace, values: Vec<Rational>) -> Result<Self> {
        let p = Self::raw(space, values)?;
        if let Some((y, a, b)) = p.non_measurable_section(space) {
            return Err(Error::FunctionNotMeasurable {
                first: space.index(a, y),
                second: space.index(b, y),
            });
        }
        Ok(Process { raw: false, ..p })
    }

    /// A process accepted without the section check.
    pub fn raw(space: &ProductSpace, values: Vec<Rational>) -> Result<Self> {
        let n = space.ground().size();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: values.len(),
            });
        }
        Ok(Process {
            nx: space.nx(),
            ny: space.ny(),
            values,
            raw: true,
        })
    }

    /// `rows[y][x] = ξ_y(x)`.
    pub fn from_rows(space: &ProductSpace, rows: &[Vec<Rational>]) -> Result<Self> {
        let mut values = Vec::with_capacity(space.ground().size());
        for row in rows {
            values.extend(row.iter().cloned());
        }
        Self::new(space, values)
    }

    pub fn is_raw(&self) -> bool {
        self.raw
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn value(&self, x: usize, y: usize) -> &Rational {
        &self.values[y * self.nx + x]
    }

    pub fn section(&self, y: usize) -> &[Rational] {
        &self.values[y * self.nx..(y + 1) * self.nx]
    }

    /// Distinct values in increasing order.
    pub fn distinct_values(&self) -> Vec<Rational> {
        let mut v = self.values.clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn level_set(&self, space: &ProductSpace, v: &Rational) -> MSet {
        let mut out = space.ground().empty();
        for (p, w) in self.values.iter().enumerate() {
            if w == v {
                out.insert(p);
            }
        }
        out
    }

    fn sublevel_set(&self, space: &ProductSpace, v: &Rational) -> MSet {
        let mut out = space.ground().empty();
        for (p, w) in self.values.iter().enumerate() {
            if w <= v {
                out.insert(p);
            }
        }
        out
    }

    /// A row `y` and two points of one `𝔄`-atom with different values.
    pub fn non_measurable_section(&self, space: &ProductSpace) -> Option<(usize, usize, usize)> {
        for y in 0..self.ny {
            let row = self.section(y);
            for &a in space.x_alg().atoms() {
                let first = a.first().unwrap();
                if let Some(b) = a.iter().find(|&b| row[b] != row[first]) {
                    return Some((y, first, b));
                }
            }
        }
        None
    }

    fn check_shape(&self, other: &Process) -> Result<()> {
        if self.values.len() != other.values.len() || self.nx != other.nx {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(())
    }
}

/// Points where the two processes differ.
pub fn differing_set(space: &ProductSpace, a: &Process, b: &Process) -> Result<MSet> {
    a.check_shape(b)?;
    let mut out = space.ground().empty();
    for (p, (u, v)) in a.values.iter().zip(&b.values).enumerate() {
        if u != v {
            out.insert(p);
        }
    }
    Ok(out)
}

/// `S_y{ξ_y ≠ θ_y} = 0` for every `y`.
pub fn equivalent(space: &ProductSpace, a: &Process, b: &Process, dis: &Disintegration) -> Result<bool> {
    let d = differing_set(space, a, b)?;
    Ok((0..space.ny()).all(|y| dis.s(y).is_null(space.section(d, y))))
}

/// `Ξ` is constant on every atom of the completed product.
pub fn is_measurable_process(xi: &Process, r: &SkewProduct) -> bool {
    completion_algebra(r).atoms().iter().all(|&a| {
        let first = a.first().unwrap();
        a.iter().all(|p| xi.values[p] == xi.values[first])
    })
}

/// Measurability with respect to the nil extension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NilMeasurability {
    pub measurable: bool,
    /// Mass that no single value can account for, summed over the product
    /// atoms where the non-nil part of `Ξ` takes several values.
    pub obstruction: Rational,
    /// The first such atom.
    pub witness: Option<MSet>,
}

pub fn is_nil_measurable(xi: &Process, r: &SkewProduct, dis: &Disintegration) -> NilMeasurability {
    let s = r.space();
    let nil = nil_points(r, dis);
    let mut obstruction = Rational::zero();
    let mut witness = None;
    for &a in s.algebra().atoms() {
        let core = a - nil;
        let Some(first) = core.first() else { continue };
        if core.iter().all(|p| xi.values[p] == xi.values[first]) {
            continue;
        }
        let total = r.measure().mass(core);
        let best = core
            .iter()
            .map(|p| r.measure().mass(core & xi.level_set(s, &xi.values[p])))
            .max()
            .unwrap_or_else(Rational::zero);
        obstruction += total - best;
        witness.get_or_insert(a);
    }
    NilMeasurability {
        measurable: witness.is_none(),
        obstruction,
        witness,
    }
}

/// How the product is cut into pieces on which `Ξ` is bounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OmegaSplit {
    /// One piece, enough on a finite space.
    #[default]
    Single,
    /// The first half of the product atoms and the rest.
    ForcedPair,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Obstruction {
    /// A raw section that is not `𝔄`-measurable.
    Section { y: usize, first: usize, second: usize },
    /// A product atom whose non-nil part carries several values.
    Atom { atom: MSet, mass: Rational },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    HasVersion,
    NoVersion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModificationReport {
    pub verdict: Verdict,
    pub theta: Option<Process>,
    pub obstruction: Option<Obstruction>,
    pub omegas: Vec<MSet>,
    /// `N_n` per piece.
    pub exceptional: Vec<MSet>,
    /// `{Ξ ≠ Θ}`.
    pub modified: Option<MSet>,
}

fn omegas(s: &ProductSpace, split: OmegaSplit) -> Vec<MSet> {
    match split {
        OmegaSplit::Single => alloc::vec![s.ground().full()],
        OmegaSplit::ForcedPair => {
            let atoms = s.algebra().atoms();
            let half = atoms.len().div_ceil(2);
            let first = atoms[..half]
                .iter()
                .fold(s.ground().empty(), |acc, &a| acc | a);
            let mut out = alloc::vec![first];
            if !first.complement().is_empty() {
                out.push(first.complement());
            }
            out
        }
    }
}

/// Lifts a finitely-valued function level set by level set.
fn lift_function(
    s: &ProductSpace,
    ext: &NilExtension,
    split: &SplitLifting,
    f: &[Rational],
) -> Result<Vec<Rational>> {
    let mut levels: Vec<Rational> = f.to_vec();
    levels.sort();
    levels.dedup();
    let mut out: Vec<Option<Rational>> = alloc::vec![None; f.len()];
    for v in levels {
        let mut l = s.ground().empty();
        for (p, w) in f.iter().enumerate() {
            if *w == v {
                l.insert(p);
            }
        }
        for p in ext.lift(&split.pi, l)?.iter() {
            if out[p].is_some() {
                return Err(Error::ConstructionFailure {
                    what: "lifted level sets overlap",
                    set: l,
                    y: p / s.nx(),
                });
            }
            out[p] = Some(v.clone());
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(p, v)| {
            v.ok_or(Error::ConstructionFailure {
                what: "lifted level sets do not cover the product",
                set: s.ground().point(p),
                y: p / s.nx(),
            })
        })
        .collect()
}

/// Reads one section of a function through the section lifting.
fn lift_row(split: &SplitLifting, y: usize, row: &[Rational]) -> Vec<Rational> {
    let sigma = &split.sigma[y];
    let g = sigma.density().domain().ground();
    let mut out = row.to_vec();
    let mut levels = row.to_vec();
    levels.sort();
    levels.dedup();
    for v in levels {
        let mut l = g.empty();
        for (x, w) in row.iter().enumerate() {
            if *w == v {
                l.insert(x);
            }
        }
        for x in sigma.eval(l).iter() {
            out[x] = v.clone();
        }
    }
    out
}

/// Decides whether `Ξ` has an equivalent measurable version and builds one.
pub fn measurable_version(
    xi: &Process,
    r: &SkewProduct,
    dis: &Disintegration,
    split: &SplitLifting,
    ext: &NilExtension,
    pieces: OmegaSplit,
) -> Result<ModificationReport> {
    let s = r.space();
    let no_version = |obstruction| ModificationReport {
        verdict: Verdict::NoVersion,
        theta: None,
        obstruction: Some(obstruction),
        omegas: Vec::new(),
        exceptional: Vec::new(),
        modified: None,
    };
    if let Some((y, first, second)) = xi.non_measurable_section(s) {
        return Ok(no_version(Obstruction::Section { y, first, second }));
    }
    let nm = is_nil_measurable(xi, r, dis);
    if let Some(atom) = nm.witness {
        return Ok(no_version(Obstruction::Atom {
            atom,
            mass: nm.obstruction,
        }));
    }
    let omegas = omegas(s, pieces);
    let n = s.ground().size();
    let mut exceptional = Vec::new();
    let mut parts = Vec::new();
    for &omega in &omegas {
        let xi_n: Vec<Rational> = (0..n)
            .map(|p| if omega.contains(p) { xi.values[p].clone() } else { Rational::zero() })
            .collect();
        let lifted = lift_function(s, ext, split, &xi_n)?;
        let lifted_omega = ext.lift(&split.pi, omega)?;
        let mut n_n = s.yg().empty();
        for y in 0..s.ny() {
            let mut bad = s.section(lifted_omega ^ omega, y);
            for x in 0..s.nx() {
                let p = s.index(x, y);
                if lifted[p] != xi_n[p] {
                    bad.insert(x);
                }
            }
            if !dis.s(y).is_null(bad) {
                n_n.insert(y);
            }
        }
        if !s.q().is_null(s.y_alg().cover(n_n)) {
            return Err(Error::ConstructionFailure {
                what: "exceptional rows are not contained in a null set",
                set: omega,
                y: n_n.first().unwrap_or(0),
            });
        }
        let mut theta_n = Vec::with_capacity(n);
        for y in 0..s.ny() {
            if n_n.contains(y) {
                for x in 0..s.nx() {
                    let p = s.index(x, y);
                    theta_n.push(if lifted_omega.contains(p) {
                        xi.values[p].clone()
                    } else {
                        Rational::zero()
                    });
                }
            } else {
                theta_n.extend(lift_row(split, y, &lifted[y * s.nx()..(y + 1) * s.nx()]));
            }
        }
        exceptional.push(n_n);
        parts.push((lifted_omega, theta_n));
    }
    let mut values = Vec::with_capacity(n);
    for p in 0..n {
        let (_, y) = s.coords(p);
        let piece = parts
            .iter()
            .zip(&exceptional)
            .find(|((lo, _), nn)| lo.contains(p) && !nn.contains(y));
        values.push(match piece {
            Some(((_, theta_n), _)) => theta_n[p].clone(),
            None => xi.values[p].clone(),
        });
    }
    let theta = Process::new(s, values)?;
    if !is_measurable_process(&theta, r) {
        return Err(Error::ConstructionFailure {
            what: "constructed version is not measurable",
            set: s.ground().empty(),
            y: 0,
        });
    }
    let modified = differing_set(s, xi, &theta)?;
    for y in 0..s.ny() {
        if !dis.s(y).is_null(s.section(modified, y)) {
            return Err(Error::ConstructionFailure {
                what: "constructed version is not equivalent",
                set: modified,
                y,
            });
        }
    }
    check_converse(xi, &theta, r, dis)?;
    Ok(ModificationReport {
        verdict: Verdict::HasVersion,
        theta: Some(theta),
        obstruction: None,
        omegas,
        exceptional,
        modified: Some(modified),
    })
}

/// Given an equivalent version `Θ`, the set `N = {Ξ ≠ Θ}` is `S_y`-null
/// in every row and nil, and each level set and sublevel set of `Ξ`
/// differs from that of `Θ` inside `N`.
pub fn check_converse(xi: &Process, theta: &Process, r: &SkewProduct, dis: &Disintegration) -> Result<()> {
    let s = r.space();
    let n = differing_set(s, xi, theta)?;
    for y in 0..s.ny() {
        if !dis.s(y).is_null(s.section(n, y)) {
            return Err(Error::ConstructionFailure {
                what: "difference set is not null in a section",
                set: n,
                y,
            });
        }
    }
    if !is_nil(r, dis, n).nil {
        return Err(Error::ConstructionFailure {
            what: "difference set is not nil",
            set: n,
            y: 0,
        });
    }
    let mut levels = xi.distinct_values();
    levels.extend(theta.distinct_values());
    levels.sort();
    levels.dedup();
    for v in &levels {
        let pairs = [
            (xi.level_set(s, v), theta.level_set(s, v)),
            (xi.sublevel_set(s, v), theta.sublevel_set(s, v)),
        ];
        for (a, b) in pairs {
            if !(a ^ b).is_subset(n) {
                return Err(Error::ConstructionFailure {
                    what: "level sets differ outside the difference set",
                    set: a ^ b,
                    y: 0,
                });
            }
        }
    }
    Ok(())
}
