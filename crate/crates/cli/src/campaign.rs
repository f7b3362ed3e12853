//! Seeded instance specs and campaigns over seed ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use skewlift::generate::{generate_instance, Instance, InstanceParams};

use crate::checks::{verify_instance, Check, VerifyOptions};
use crate::report::{CampaignReport, InstanceReport};

/// What to generate for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSpec {
    pub size_x: usize,
    pub size_y: usize,
    pub null_rate: f64,
    pub coarse_b_rate: f64,
    pub seed: u64,
    /// Pads the generator list with redundant unions up to this length.
    pub gens_len: Option<usize>,
    pub cap: usize,
}

impl InstanceSpec {
    pub fn params(&self) -> InstanceParams {
        InstanceParams {
            nx: self.size_x,
            ny: self.size_y,
            null_rate: self.null_rate,
            coarse_b_rate: self.coarse_b_rate,
            seed: self.seed,
            cap: self.cap,
        }
    }

    pub fn generate(&self) -> skewlift::Result<Instance> {
        let mut inst = generate_instance(&self.params())?;
        if let Some(n) = self.gens_len {
            pad_generators(&mut inst, n, self.seed);
        }
        Ok(inst)
    }

    /// The spec used for `seed` in a campaign. Unless `fixed`, sizes cycle
    /// through `1..=size_x` and `1..=size_y`.
    pub fn for_seed(&self, seed: u64, fixed: bool) -> InstanceSpec {
        let mut out = self.clone();
        out.seed = seed;
        if !fixed {
            out.size_x = 1 + (seed as usize * 7) % self.size_x;
            out.size_y = 1 + (seed as usize * 5) % self.size_y;
        }
        out
    }

    pub fn header(&self, inst: &Instance) -> Vec<(String, String)> {
        let s = inst.r.space();
        vec![
            ("size_x".into(), self.size_x.to_string()),
            ("size_y".into(), self.size_y.to_string()),
            ("null_rate".into(), self.null_rate.to_string()),
            ("coarse_b_rate".into(), self.coarse_b_rate.to_string()),
            ("b_atoms".into(), s.y_alg().num_atoms().to_string()),
            ("c_atoms".into(), inst.c.num_atoms().to_string()),
            ("generators".into(), inst.gens.len().to_string()),
            ("r_null_points".into(), inst.r.measure().null_points().len().to_string()),
        ]
    }
}

fn pad_generators(inst: &mut Instance, n: usize, seed: u64) {
    if inst.gens.is_empty() {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
    while inst.gens.len() < n {
        let i = rng.gen_range(0..inst.gens.len());
        let j = rng.gen_range(0..inst.gens.len());
        let g = inst.gens[i] | inst.gens[j];
        inst.gens.push(g);
    }
}

/// Generates and verifies one instance.
pub fn run_one(spec: &InstanceSpec, checks: &[Check], opts: &VerifyOptions) -> skewlift::Result<InstanceReport> {
    let inst = spec.generate()?;
    Ok(InstanceReport {
        seed: Some(spec.seed),
        header: spec.header(&inst),
        outcomes: verify_instance(&inst, spec.seed, checks, opts),
    })
}

/// Runs `count` seeds starting at `base.seed` on `jobs` threads. The
/// report lists instances in seed order whatever the thread count.
pub fn run_campaign(
    base: &InstanceSpec,
    count: u64,
    fixed_sizes: bool,
    checks: &[Check],
    opts: &VerifyOptions,
    jobs: usize,
) -> skewlift::Result<CampaignReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let seeds: Vec<u64> = (base.seed..base.seed + count).collect();
    let instances = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_one(&base.for_seed(seed, fixed_sizes), checks, opts))
            .collect::<skewlift::Result<Vec<_>>>()
    })?;
    Ok(CampaignReport { instances })
}
