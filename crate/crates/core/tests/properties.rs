//! Property tests over random finite spaces.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skewlift::condexp::{cond_expect_values, defining_property_holds, version_difference, VersionPolicy};
use skewlift::densities::{
    build_admissible, dominates, initial_density, lift_from_density, verify_density, Coverage, TieBreak,
};
use skewlift::generate::{generate_instance, random_function, random_subalgebra, InstanceParams};
use skewlift::product::{check_dis2, fubini_sweep};
use skewlift::rational::int;
use skewlift::{EnvelopeRule, FinMeasure, GroundSet, MSet, Rational, SigmaAlg};

/// Ground size, block labels and integer weights.
fn space() -> impl Strategy<Value = (SigmaAlg, FinMeasure)> {
    (1usize..=7).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..4, n),
            proptest::collection::vec(0i64..4, n),
        )
            .prop_map(move |(labels, mut raw)| {
                let g = GroundSet::new(n).unwrap();
                let mut blocks = vec![g.empty(); 4];
                for (p, &l) in labels.iter().enumerate() {
                    blocks[l].insert(p);
                }
                blocks.retain(|b| !b.is_empty());
                let alg = SigmaAlg::from_blocks(g, &blocks).unwrap();
                if raw.iter().all(|&w| w == 0) {
                    raw[0] = 1;
                }
                let total: i64 = raw.iter().sum();
                let w = raw.iter().map(|&w| Rational::new(w.into(), total.into())).collect();
                let m = FinMeasure::new(alg.clone(), w).unwrap();
                (alg, m)
            })
    })
}

fn subset_of(alg: &SigmaAlg, bits: u64) -> MSet {
    let g = alg.ground();
    g.from_bits(bits & g.full().bits()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn atoms_partition_the_ground_set((alg, _) in space()) {
        let mut seen = alg.ground().empty();
        for &a in alg.atoms() {
            prop_assert!(!a.is_empty());
            prop_assert!(!a.meets(seen));
            seen = seen | a;
        }
        prop_assert_eq!(seen, alg.ground().full());
    }

    #[test]
    fn measurable_sets_are_closed((alg, _) in space(), i in any::<u64>(), j in any::<u64>()) {
        let e = alg.set_of_mask(i & alg.full_mask());
        let f = alg.set_of_mask(j & alg.full_mask());
        prop_assert!(alg.is_measurable(e.complement()));
        prop_assert!(alg.is_measurable(e | f));
        prop_assert!(alg.is_measurable(e & f));
    }

    #[test]
    fn envelope_law((alg, m) in space(), bits in any::<u64>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_subalgebra(&mut rng, &alg);
        let a = subset_of(&alg, bits);
        for rule in [EnvelopeRule::Minimal, EnvelopeRule::Maximal] {
            let e = m.envelope_with(&sub, a, rule).unwrap();
            prop_assert!(a.is_subset(e));
            prop_assert!(sub.is_measurable(e));
            prop_assert!(m.is_envelope(&sub, a, e));
            for &b in sub.atoms() {
                if b.is_subset(e - a) {
                    prop_assert!(rule == EnvelopeRule::Maximal && m.is_null(b));
                }
            }
        }
    }

    #[test]
    fn inner_outer_sandwich((alg, m) in space(), bits in any::<u64>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_subalgebra(&mut rng, &alg);
        let a = subset_of(&alg, bits);
        let (inner, outer) = (m.inner_measure(&sub, a).unwrap(), m.outer_measure(&sub, a).unwrap());
        prop_assert!(inner <= m.mass(a) && m.mass(a) <= outer);
        if sub.is_measurable(a) {
            prop_assert_eq!(inner, outer);
        }
    }

    #[test]
    fn completion_is_idempotent((_, m) in space()) {
        let once = m.completion();
        let twice = once.measure().completion();
        prop_assert_eq!(once.completed().atoms(), twice.completed().atoms());
    }

    #[test]
    fn conditional_expectation_properties((alg, m) in space(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_subalgebra(&mut rng, &alg);
        let f = random_function(&mut rng, &alg);
        let a = cond_expect_values(m.weights(), &sub, &f, &VersionPolicy::default());
        let b = cond_expect_values(m.weights(), &sub, &f, &VersionPolicy::Inherit);
        let c = cond_expect_values(m.weights(), &sub, &f, &VersionPolicy::Constant(int(7)));
        for e in [&a, &b, &c] {
            prop_assert!(defining_property_holds(&m, &sub, &f, e));
        }
        prop_assert!(m.is_null(version_difference(&m, &a, &b)));
        prop_assert!(m.is_null(version_difference(&m, &a, &c)));
    }

    #[test]
    fn admissible_densities_and_their_liftings((alg, m) in space(), seed in any::<u64>()) {
        let tau0 = initial_density(&alg, m.weights());
        verify_density(&tau0, false, Coverage::Exhaustive).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gens: Vec<MSet> = alg.atoms().to_vec();
        gens.push(random_subalgebra(&mut rng, &alg).atom(0));
        for rule in [EnvelopeRule::Minimal, EnvelopeRule::Maximal] {
            let (tau, chain) = build_admissible(&alg, m.weights(), &gens, rule, true).unwrap();
            chain.check_coherence().unwrap();
            verify_density(&tau, false, Coverage::Exhaustive).unwrap();
            for tie in [TieBreak::Lowest, TieBreak::Highest] {
                let pi = lift_from_density(&tau, tie);
                verify_density(pi.density(), true, Coverage::Exhaustive).unwrap();
                dominates(pi.density(), &tau, Coverage::Exhaustive).unwrap();
            }
        }
    }

    #[test]
    fn generated_products_disintegrate_exactly(
        nx in 1usize..=6, ny in 1usize..=4, seed in any::<u64>(), null in 0.0f64..0.6, coarse in 0.0f64..1.0,
    ) {
        let mut p = InstanceParams::new(nx, ny, seed);
        p.null_rate = null;
        p.coarse_b_rate = coarse;
        let inst = generate_instance(&p).unwrap();
        inst.r.check_marginals().unwrap();
        check_dis2(&inst.r, &inst.dis).unwrap();
        let atoms = inst.r.space().algebra().num_atoms();
        let checked = fubini_sweep(&inst.r, &inst.dis, Coverage::auto(atoms, seed)).unwrap();
        prop_assert!(checked >= (1u64 << atoms.min(12)).min(10_000));
    }
}
