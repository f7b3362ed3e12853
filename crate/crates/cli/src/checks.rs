//! The verification checks run by `verify` and `campaign`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewlift::condexp::{martingale_limit_check, successor_step_check, t1_check, VersionPolicy};
use skewlift::densities::{
    build_admissible, limit_density_e20, verify_density, Coverage, LowerDensity, TieBreak,
};
use skewlift::generate::{random_function, random_subalgebra, Instance};
use skewlift::process::{
    equivalent, is_measurable_process, is_nil_measurable, measurable_version, OmegaSplit, Process,
    Verdict,
};
use skewlift::prodlift::{
    brute_force_splitting, check_p3, check_t2, check_t3, check_t4, completion_algebra, nil_points,
    run_pipeline, section_modification_c1, NilExtension, Pipeline,
};
use skewlift::product::{
    check_dis1, check_dis2, fubini_check, fubini_sweep, indicator,
};
use skewlift::rational::{int, zero};
use skewlift::{EnvelopeRule, MSet, Rational, SigmaAlg};

use crate::report::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Fubini,
    T1,
    L3,
    E20,
    T2,
    P3,
    T3,
    C1,
    T4,
    Process,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Fubini,
        Check::T1,
        Check::L3,
        Check::E20,
        Check::T2,
        Check::P3,
        Check::T3,
        Check::C1,
        Check::T4,
        Check::Process,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Fubini => "fubini",
            Check::T1 => "t1",
            Check::L3 => "l3",
            Check::E20 => "e20",
            Check::T2 => "t2",
            Check::P3 => "p3",
            Check::T3 => "t3",
            Check::C1 => "c1",
            Check::T4 => "t4",
            Check::Process => "process",
        }
    }

    fn needs_pipeline(self) -> bool {
        matches!(
            self,
            Check::T2 | Check::P3 | Check::T3 | Check::C1 | Check::T4 | Check::Process
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check {s:?}"))
    }
}

/// Parses a comma-separated list; `all` selects every check.
pub fn parse_checks(text: &str) -> Result<Vec<Check>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(Check::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err("no checks selected".into());
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub trace: bool,
    /// Set evaluations allowed for the brute-force splitting oracle.
    pub oracle_budget: u64,
    /// Random functions per instance in `t1`, and sub-algebras per function.
    pub functions: usize,
    pub subalgebras: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trace: false,
            oracle_budget: 2_000_000,
            functions: 5,
            subalgebras: 3,
        }
    }
}

type CheckResult = Result<(), String>;

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

/// Runs `checks` on one instance. `seed` drives the random inputs of the
/// checks themselves.
pub fn verify_instance(inst: &Instance, seed: u64, checks: &[Check], opts: &VerifyOptions) -> Vec<Outcome> {
    let pipeline = if checks.iter().any(|c| c.needs_pipeline()) {
        Some(run_pipeline(
            &inst.r,
            &inst.dis,
            &inst.c,
            &inst.gens,
            EnvelopeRule::Minimal,
            TieBreak::Lowest,
            true,
        ))
    } else {
        None
    };
    checks
        .iter()
        .map(|&check| {
            let start = Instant::now();
            let mut o = Outcome::new(check);
            let run = match (check, &pipeline) {
                (Check::Fubini, _) => fubini(inst, seed, &mut o),
                (Check::T1, _) => t1(inst, seed, opts, &mut o),
                (Check::L3, _) => l3(inst, seed, &mut o),
                (Check::E20, _) => e20(inst, seed, &mut o),
                (_, Some(Err(e))) => Err(format!("pipeline: {e}")),
                (_, Some(Ok(p))) => match check {
                    Check::T2 => t2(inst, seed, p, opts, &mut o),
                    Check::P3 => p3(inst, seed, p, opts, &mut o),
                    Check::T3 => t3(inst, seed, p, opts, &mut o),
                    Check::C1 => c1(inst, seed, p, &mut o),
                    Check::T4 => t4(inst, seed, p, &mut o),
                    _ => process(inst, seed, p, &mut o),
                },
                (_, None) => unreachable!("pipeline built for every check that needs it"),
            };
            if let Err(w) = run {
                o.fail(w);
            }
            o.millis = start.elapsed().as_millis();
            o
        })
        .collect()
}

fn rng_for(seed: u64, check: Check) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(check as u64 + 1)))
}

/// Algebra coarser than `𝔄` and every section algebra.
fn common_algebra(inst: &Instance) -> SigmaAlg {
    inst.dis
        .measures()
        .iter()
        .fold(inst.r.space().x_alg().clone(), |acc, m| acc.meet(m.algebra()))
}

fn fubini(inst: &Instance, seed: u64, o: &mut Outcome) -> CheckResult {
    let (r, dis) = (&inst.r, &inst.dis);
    let s = r.space();
    r.check_marginals().map_err(err)?;
    check_dis1(r, dis).map_err(err)?;
    check_dis2(r, dis).map_err(err)?;
    let atoms = s.algebra().num_atoms();
    let coverage = Coverage::auto(atoms, seed);
    o.set("sets", fubini_sweep(r, dis, coverage).map_err(err)?);
    o.set("exhaustive", coverage == Coverage::Exhaustive);
    let mut rng = rng_for(seed, Check::Fubini);
    let rhat = completion_algebra(r);
    let mut functions = 0;
    for _ in 0..3 {
        let f = random_function(&mut rng, s.algebra());
        let rep = fubini_check(r, dis, &f, false).map_err(err)?;
        if !rep.holds(s.q()) {
            return Err(format!("integral identity fails: {} != {}", rep.lhs, rep.rhs));
        }
        let g = random_function(&mut rng, &rhat);
        let rep = fubini_check(r, dis, &g, true).map_err(err)?;
        if !rep.holds(s.q()) {
            return Err(format!("completed integral identity fails: {} != {}", rep.lhs, rep.rhs));
        }
        functions += 2;
    }
    // Indicators of the null atoms of the completion.
    for &a in rhat.atoms() {
        if r.measure().is_null(a) {
            let rep = fubini_check(r, dis, &indicator(s.ground(), a), true).map_err(err)?;
            if !rep.holds(s.q()) {
                return Err(format!("null set {a} has non-null sections"));
            }
            functions += 1;
        }
    }
    o.set("functions", functions);
    Ok(())
}

fn t1(inst: &Instance, seed: u64, opts: &VerifyOptions, o: &mut Outcome) -> CheckResult {
    let (r, dis) = (&inst.r, &inst.dis);
    let s = r.space();
    let mut rng = rng_for(seed, Check::T1);
    let rhat = completion_algebra(r);
    let common = common_algebra(inst);
    let policy = VersionPolicy::default();
    let mut exceptional = s.yg().empty();
    let mut disagreement = 0usize;
    let mut runs = 0;
    let mut steps = 0;
    let mut funcs = Vec::new();
    for _ in 0..opts.functions {
        let f = random_function(&mut rng, &rhat);
        for _ in 0..opts.subalgebras {
            let c = random_subalgebra(&mut rng, &common);
            let rep = t1_check(r, dis, &c, &f, &policy).map_err(err)?;
            if !s.q().is_null(rep.exceptional_cover) {
                return Err(format!("exceptional rows {} are not null", rep.exceptional_y));
            }
            exceptional = exceptional | rep.exceptional_y;
            disagreement += rep.disagreement.iter().map(|d| d.len()).sum::<usize>();
            runs += 1;
        }
        funcs.push(f);
    }
    // Successor steps along the generator list.
    let mut stage = SigmaAlg::trivial(s.xg());
    let mut chain = vec![stage.clone()];
    for &d in &inst.gens {
        if stage.is_measurable(d) {
            continue;
        }
        for f in &funcs {
            let rep = successor_step_check(r, dis, &inst.c, &stage, d, f, &policy).map_err(err)?;
            if !s.q().is_null(rep.exceptional_cover) {
                return Err(format!("successor step on {d}: rows {} are not null", rep.exceptional_y));
            }
            if let Some(step) = &rep.step {
                exceptional = exceptional | step.m_f | step.section_exceptions;
            }
            steps += 1;
        }
        stage = stage.with_set(d);
        chain.push(stage.clone());
    }
    for y in 0..s.ny() {
        let m = dis.s(y);
        let g = random_function(&mut rng, m.algebra());
        martingale_limit_check(&chain, m, &g, &policy).map_err(err)?;
    }
    o.set("runs", runs);
    o.set("successor_steps", steps);
    o.set("exceptional", exceptional);
    o.set("disagreement_points", disagreement);
    Ok(())
}

fn l3(inst: &Instance, seed: u64, o: &mut Outcome) -> CheckResult {
    let mut densities = 0;
    let mut steps = 0;
    let mut sets = 0;
    for m in inst.dis.measures() {
        for rule in [EnvelopeRule::Minimal, EnvelopeRule::Maximal] {
            let (tau, chain) = build_admissible(&inst.c, m.weights(), &inst.gens, rule, true).map_err(err)?;
            chain.check_coherence().map_err(err)?;
            let rep = verify_density(&tau, false, Coverage::auto(tau.domain().num_atoms(), seed)).map_err(err)?;
            sets += rep.sets;
            steps += chain.stages.len() - 1 - chain.skipped();
            densities += 1;
        }
    }
    o.set("densities", densities);
    o.set("extension_steps", steps);
    o.set("axiom_sets", sets);
    Ok(())
}

fn e20(inst: &Instance, seed: u64, o: &mut Outcome) -> CheckResult {
    let mut chains = 0;
    let mut sets = 0;
    for m in inst.dis.measures() {
        let (tau, chain) =
            build_admissible(&inst.c, m.weights(), &inst.gens, EnvelopeRule::Minimal, false).map_err(err)?;
        let mut stages: Vec<LowerDensity> = chain.stages.iter().map(|st| st.density.clone()).collect();
        while stages.len() < 4 {
            stages.push(tau.clone());
        }
        let alg = tau.domain();
        for mask in Coverage::auto(alg.num_atoms(), seed).masks(alg.num_atoms()) {
            let b = alg.set_of_mask(mask);
            let limit = limit_density_e20(&stages, b).map_err(err)?;
            let tail = tau.apply(b).map_err(err)?;
            if limit != tail {
                return Err(format!("limit at {b} is {limit}, tail density gives {tail}"));
            }
            sets += 1;
        }
        chains += 1;
    }
    o.set("chains", chains);
    o.set("sets", sets);
    Ok(())
}

fn t2(inst: &Instance, seed: u64, p: &Pipeline, opts: &VerifyOptions, o: &mut Outcome) -> CheckResult {
    let rep = check_t2(&inst.r, &inst.c, &p.family, &p.phi, seed).map_err(err)?;
    o.set("sets", rep.sets);
    o.set("section_checks", rep.section_checks);
    o.set("exhaustive", rep.exhaustive);
    o.set("codomain_values", rep.codomain.values);
    o.set("codomain_in_c_tensor_b", rep.codomain.in_c_tensor_b);
    o.set("codomain_in_a_tensor_b", rep.codomain.in_a_tensor_b);
    let uncoupled: Vec<_> = p.family.coupling.iter().filter(|c| !c.coupled).collect();
    o.set("skipped_generators", p.family.skipped.len());
    o.set("uncoupled_rows", uncoupled.len());
    if opts.trace {
        for i in &p.family.skipped {
            o.trace.push(format!("skip generator={i}"));
        }
        for c in uncoupled {
            o.trace.push(format!("uncoupled generator={} y={}", c.generator_index, c.y));
        }
        for (i, st) in p.phi.stages.iter().enumerate() {
            o.trace.push(format!("stage={i} {st:?}"));
        }
    }
    Ok(())
}

fn p3(inst: &Instance, seed: u64, p: &Pipeline, opts: &VerifyOptions, o: &mut Outcome) -> CheckResult {
    let rep = check_p3(&inst.r, &inst.dis, &p.psi, &p.phi.phi, seed).map_err(err)?;
    o.set("sets", rep.sets);
    o.set("section_checks", rep.section_checks);
    o.set("saturation_steps", p.psi.trace.len());
    if opts.trace {
        for st in &p.psi.trace {
            o.trace.push(format!("x={} y={} before={} after={}", st.x, st.y, st.before, st.after));
        }
    }
    Ok(())
}

fn t3(inst: &Instance, seed: u64, p: &Pipeline, opts: &VerifyOptions, o: &mut Outcome) -> CheckResult {
    let rep = check_t3(&inst.r, &p.split, &p.psi, seed).map_err(err)?;
    o.set("sets", rep.sets);
    o.set("pairs", rep.pairs);
    o.set("exhaustive", rep.exhaustive);
    match brute_force_splitting(&inst.r, &inst.dis, &p.split, opts.oracle_budget).map_err(err)? {
        None => o.set("oracle", "skipped"),
        Some(or) => {
            o.set("oracle", "run");
            o.set("oracle_candidates", or.candidates);
            o.set("oracle_splitting", or.splitting);
            if !or.constructed_valid {
                return Err("oracle rejects the constructed lifting".into());
            }
            if or.splitting == 0 {
                return Err("oracle finds no splitting lifting".into());
            }
        }
    }
    if opts.trace {
        for (y, sigma) in p.split.sigma.iter().enumerate() {
            o.trace.push(format!("sigma y={y} classes={:?}", sigma.density().classes()));
        }
        o.trace.push(format!("pi classes={:?}", p.split.pi.density().classes()));
    }
    Ok(())
}

fn c1(inst: &Instance, seed: u64, p: &Pipeline, o: &mut Outcome) -> CheckResult {
    let r = &inst.r;
    let rhat = completion_algebra(r);
    let mut exceptional = r.space().yg().empty();
    let mut sets = 0;
    for mask in Coverage::auto(rhat.num_atoms(), seed).masks(rhat.num_atoms()) {
        let e = rhat.set_of_mask(mask);
        let rep = section_modification_c1(r, &p.split, e).map_err(err)?;
        if !rep.holds() {
            return Err(format!(
                "section modification of {e} fails: measurable={} exceptional rows {}",
                rep.measurable, rep.exceptional
            ));
        }
        exceptional = exceptional | rep.exceptional;
        sets += 1;
    }
    o.set("sets", sets);
    o.set("exceptional", exceptional);
    Ok(())
}

fn t4(inst: &Instance, seed: u64, p: &Pipeline, o: &mut Outcome) -> CheckResult {
    let (r, dis) = (&inst.r, &inst.dis);
    let ext = NilExtension::new(r, dis);
    if !ext.is_complete() {
        return Err("nil extension is not complete".into());
    }
    if !ext.extends_completion(&completion_algebra(r)) {
        return Err("nil extension does not contain the completion".into());
    }
    let rep = check_t4(r, dis, &ext, &p.split, seed).map_err(err)?;
    o.set("sets", rep.sets);
    o.set("decompositions", rep.decompositions);
    o.set("pairs", rep.pairs);
    o.set("nil_points", ext.nil_points);
    Ok(())
}

/// Random processes of three kinds: product-measurable, product-measurable
/// changed on nil points, and arbitrary 0/1 values.
fn sample_processes(inst: &Instance, rng: &mut ChaCha8Rng) -> Vec<(&'static str, Process)> {
    let s = inst.r.space();
    let mut w = vec![zero(); s.ground().size()];
    for &a in s.algebra().atoms() {
        let v = int(rng.gen_range(-2..=3));
        for p in a.iter() {
            w[p] = v.clone();
        }
    }
    let mut modified = w.clone();
    for p in nil_points(&inst.r, &inst.dis).iter() {
        modified[p] = int(rng.gen_range(-2..=3));
    }
    let mut arbitrary: Vec<Rational> = vec![zero(); s.ground().size()];
    for y in 0..s.ny() {
        for &a in s.x_alg().atoms() {
            let v = int(rng.gen_range(0..=1));
            for x in a.iter() {
                arbitrary[s.index(x, y)] = v.clone();
            }
        }
    }
    [("measurable", w), ("nil_modified", modified), ("arbitrary", arbitrary)]
        .into_iter()
        .map(|(k, v)| (k, Process::raw(s, v).expect("sizes match")))
        .collect()
}

fn process(inst: &Instance, seed: u64, p: &Pipeline, o: &mut Outcome) -> CheckResult {
    let (r, dis) = (&inst.r, &inst.dis);
    let s = r.space();
    let ext = NilExtension::new(r, dis);
    let mut rng = rng_for(seed, Check::Process);
    let (mut versions, mut refusals) = (0, 0);
    let mut worst = zero();
    let mut witness: Option<MSet> = None;
    for (kind, xi) in sample_processes(inst, &mut rng) {
        let nm = is_nil_measurable(&xi, r, dis);
        for pieces in [OmegaSplit::Single, OmegaSplit::ForcedPair] {
            let rep = measurable_version(&xi, r, dis, &p.split, &ext, pieces).map_err(err)?;
            if (rep.verdict == Verdict::HasVersion) != nm.measurable {
                return Err(format!("{kind}: verdict disagrees with nil measurability"));
            }
            let Some(theta) = rep.theta else {
                refusals += 1;
                if nm.obstruction > worst {
                    worst = nm.obstruction.clone();
                }
                witness = witness.or(nm.witness);
                continue;
            };
            versions += 1;
            if !is_measurable_process(&theta, r) {
                return Err(format!("{kind}: version is not measurable"));
            }
            if !equivalent(s, &xi, &theta, dis).map_err(err)? {
                return Err(format!("{kind}: version is not equivalent"));
            }
            let again = measurable_version(&theta, r, dis, &p.split, &ext, pieces).map_err(err)?;
            match again.theta {
                Some(t2) if equivalent(s, &theta, &t2, dis).map_err(err)? => {}
                _ => return Err(format!("{kind}: second pass does not reproduce the version")),
            }
        }
    }
    o.set("versions", versions);
    o.set("refusals", refusals);
    o.set("max_obstruction", worst);
    if let Some(w) = witness {
        o.set("obstruction_atom", w);
    }
    Ok(())
}
