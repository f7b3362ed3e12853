//! Measurable versions of processes on generated instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewlift::densities::TieBreak;
use skewlift::generate::{generate_instance, InstanceParams};
use skewlift::process::{
    equivalent, is_measurable_process, is_nil_measurable, measurable_version, OmegaSplit, Process,
    Verdict,
};
use skewlift::prodlift::{nil_points, run_pipeline, NilExtension};
use skewlift::rational::int;
use skewlift::{EnvelopeRule, Rational};

fn params(seed: u64) -> InstanceParams {
    let mut p = InstanceParams::new(1 + (seed as usize * 5) % 5, 1 + (seed as usize * 3) % 4, seed);
    p.null_rate = 0.3 + (seed % 4) as f64 * 0.1;
    p.coarse_b_rate = if seed % 2 == 0 { 0.7 } else { 0.2 };
    p
}

/// A product-measurable process, then random values on the nil points.
fn nil_modified(rng: &mut ChaCha8Rng, inst: &skewlift::generate::Instance) -> (Process, Process) {
    let s = inst.r.space();
    let mut w = vec![Rational::from_integer(0.into()); s.ground().size()];
    for &a in s.algebra().atoms() {
        let v = int(rng.gen_range(-2..=3));
        for p in a.iter() {
            w[p] = v.clone();
        }
    }
    let mut xi = w.clone();
    for p in nil_points(&inst.r, &inst.dis).iter() {
        xi[p] = int(rng.gen_range(-2..=3));
    }
    (Process::new(s, w).unwrap(), Process::new(s, xi).unwrap())
}

#[test]
fn verdict_matches_nil_measurability() {
    let mut versions = 0;
    let mut refusals = 0;
    for seed in 0..200 {
        let inst = generate_instance(&params(seed)).unwrap();
        let (r, dis) = (&inst.r, &inst.dis);
        let s = r.space();
        let pipe = run_pipeline(r, dis, &inst.c, &inst.gens, EnvelopeRule::Minimal, TieBreak::Lowest, false)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let ext = NilExtension::new(r, dis);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, modified) = nil_modified(&mut rng, &inst);
        let arbitrary = Process::new(
            s,
            (0..s.ground().size()).map(|_| int(rng.gen_range(0..=1))).collect(),
        )
        .unwrap();
        for (kind, xi) in [("measurable", &w), ("nil-modified", &modified), ("arbitrary", &arbitrary)] {
            let nm = is_nil_measurable(xi, r, dis);
            if kind != "arbitrary" {
                assert!(nm.measurable, "seed {seed} {kind}");
            }
            for pieces in [OmegaSplit::Single, OmegaSplit::ForcedPair] {
                let rep = measurable_version(xi, r, dis, &pipe.split, &ext, pieces)
                    .unwrap_or_else(|e| panic!("seed {seed} {kind}: {e}"));
                assert_eq!(rep.verdict == Verdict::HasVersion, nm.measurable, "seed {seed} {kind}");
                let Some(theta) = rep.theta else {
                    refusals += 1;
                    assert!(nm.obstruction > Rational::from_integer(0.into()));
                    continue;
                };
                versions += 1;
                assert!(is_measurable_process(&theta, r), "seed {seed} {kind}");
                assert!(equivalent(s, xi, &theta, dis).unwrap(), "seed {seed} {kind}");
                let again = measurable_version(&theta, r, dis, &pipe.split, &ext, pieces).unwrap();
                let theta2 = again.theta.expect("a measurable process has a version");
                assert!(equivalent(s, &theta, &theta2, dis).unwrap(), "seed {seed} {kind}");
            }
        }
    }
    assert!(versions > 0 && refusals > 0, "{versions} versions, {refusals} refusals");
}
