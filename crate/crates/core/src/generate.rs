//! Seeded random instances.

use alloc::vec::Vec;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::finspace::{FinMeasure, SigmaAlg};
use crate::product::{
    block_coupling, disintegrate, make_inner_regular_subalgebra, Disintegration, SkewProduct,
};
use crate::rational::{int, Rational};
use crate::set::{GroundSet, MSet, DEFAULT_CAP};

/// Knobs of the instance generator.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub nx: usize,
    pub ny: usize,
    /// Probability that a point of `X`, a block of `𝔅` or the coupling
    /// is made degenerate. Zero gives an instance without null points.
    pub null_rate: f64,
    /// Probability that two neighbouring points of `Y` share a `𝔅`-block.
    pub coarse_b_rate: f64,
    pub seed: u64,
    /// Cap on each factor space.
    pub cap: usize,
}

impl InstanceParams {
    pub fn new(nx: usize, ny: usize, seed: u64) -> Self {
        InstanceParams {
            nx,
            ny,
            null_rate: 0.3,
            coarse_b_rate: 0.3,
            seed,
            cap: DEFAULT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GroundSet::with_cap(self.nx, self.cap)?;
        GroundSet::with_cap(self.ny, self.cap)?;
        for (name, rate) in [("null rate", self.null_rate), ("coarse rate", self.coarse_b_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Precondition {
                    reason: alloc::format!("{name} {rate} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// A skew product with its disintegration, an inner-regularizing
/// sub-algebra `𝔠` of `X` and a generator list for `𝔠`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub r: SkewProduct,
    pub dis: Disintegration,
    pub c: SigmaAlg,
    pub gens: Vec<MSet>,
}

impl Instance {
    /// Assembles an instance from its parts and checks them.
    pub fn new(r: SkewProduct, c: SigmaAlg, gens: Vec<MSet>) -> Result<Self> {
        let dis = disintegrate(&r)?;
        crate::product::check_inner_regular(&r, &dis, &c)?;
        for &g in &gens {
            if !c.is_measurable(g) {
                return Err(Error::NotMeasurable { set: g });
            }
        }
        Ok(Instance { r, dis, c, gens })
    }
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, null_rate: f64) -> Vec<Rational> {
    let mut raw: Vec<i64> = (0..n)
        .map(|_| {
            if rng.gen_bool(null_rate) {
                0
            } else {
                rng.gen_range(1..=4)
            }
        })
        .collect();
    if raw.iter().all(|&w| w == 0) {
        let i = rng.gen_range(0..n);
        raw[i] = rng.gen_range(1..=4);
    }
    let total: i64 = raw.iter().sum();
    raw.into_iter()
        .map(|w| Rational::new(w.into(), total.into()))
        .collect()
}

/// Blocks of consecutive points, neighbours merged with probability `rate`.
fn random_blocks(rng: &mut ChaCha8Rng, g: GroundSet, rate: f64) -> Vec<MSet> {
    let mut blocks = Vec::new();
    let mut cur = g.point(0);
    for y in 1..g.size() {
        if rng.gen_bool(rate) {
            cur.insert(y);
        } else {
            blocks.push(cur);
            cur = g.point(y);
        }
    }
    blocks.push(cur);
    blocks
}

/// Generates an instance. Deterministic in `params`.
///
/// `𝔄` is discrete. `Q`-null points of `Y` always fill whole `𝔅`-blocks,
/// which keeps the pointwise disintegration measurable in `y`.
pub fn generate_instance(params: &InstanceParams) -> Result<Instance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let xg = GroundSet::with_cap(params.nx, params.cap)?;
    let yg = GroundSet::with_cap(params.ny, params.cap)?;
    let p = FinMeasure::new(
        SigmaAlg::discrete(xg),
        random_weights(&mut rng, params.nx, params.null_rate),
    )?;
    let blocks = random_blocks(&mut rng, yg, params.coarse_b_rate);
    let block_w = random_weights(&mut rng, blocks.len(), params.null_rate);
    let mut qw = alloc::vec![Rational::zero(); params.ny];
    for (b, w) in blocks.iter().zip(&block_w) {
        if w.is_zero() {
            continue;
        }
        let raw: Vec<i64> = b.iter().map(|_| rng.gen_range(1..=3)).collect();
        let total: i64 = raw.iter().sum();
        for (y, r) in b.iter().zip(raw) {
            qw[y] = w * Rational::new(r.into(), total.into());
        }
    }
    let b_alg = SigmaAlg::from_blocks(yg, &blocks)?;
    let q = FinMeasure::new(b_alg, qw)?;
    let mix = !rng.gen_bool(params.null_rate);
    let r = block_coupling(&p, &q, &mut rng, mix)?;
    let dis = disintegrate(&r)?;
    let c = make_inner_regular_subalgebra(&r, &dis, Some(rng.gen()));
    let gens = generator_list(&mut rng, &c);
    debug_assert!(Instance::new(r.clone(), c.clone(), gens.clone()).is_ok());
    Ok(Instance { r, dis, c, gens })
}

/// Atoms of `c` but one in random order, with a redundant union of two
/// earlier entries inserted now and then.
fn generator_list(rng: &mut ChaCha8Rng, c: &SigmaAlg) -> Vec<MSet> {
    let mut atoms: Vec<MSet> = c.atoms().to_vec();
    atoms.shuffle(rng);
    atoms.pop();
    let mut gens = Vec::with_capacity(atoms.len() + 1);
    for a in atoms {
        gens.push(a);
        if gens.len() >= 2 && rng.gen_bool(0.25) {
            let i = rng.gen_range(0..gens.len());
            let j = rng.gen_range(0..gens.len());
            gens.push(gens[i] | gens[j]);
        }
    }
    gens
}

/// Random `𝔄`-measurable bounded function with small integer values.
pub fn random_function(rng: &mut ChaCha8Rng, alg: &SigmaAlg) -> Vec<Rational> {
    let mut values = alloc::vec![Rational::zero(); alg.ground().size()];
    for &a in alg.atoms() {
        let v = int(rng.gen_range(-2..=3));
        for x in a.iter() {
            values[x] = v.clone();
        }
    }
    values
}

/// Random coarsening of `alg`.
pub fn random_subalgebra(rng: &mut ChaCha8Rng, alg: &SigmaAlg) -> SigmaAlg {
    let k = alg.num_atoms();
    let groups = rng.gen_range(1..=k);
    let mut blocks = alloc::vec![alg.ground().empty(); groups];
    for &a in alg.atoms() {
        let g = rng.gen_range(0..groups);
        blocks[g] = blocks[g] | a;
    }
    blocks.retain(|b| !b.is_empty());
    SigmaAlg::from_blocks(alg.ground(), &blocks).expect("groups of atoms partition the ground set")
}
