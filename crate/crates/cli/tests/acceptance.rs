//! Acceptance run: one line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use skewlift::densities::{extend_density_l3, LowerDensity, TieBreak};
use skewlift::generate::Instance;
use skewlift::process::{is_nil_measurable, measurable_version, Obstruction, OmegaSplit, Process, Verdict};
use skewlift::prodlift::{run_pipeline, NilExtension};
use skewlift::product::{disintegrate, fubini_sweep, ProductSpace, SkewProduct};
use skewlift::densities::Coverage;
use skewlift::rational::{int, rat, zero};
use skewlift::set::DEFAULT_CAP;
use skewlift::{EnvelopeRule, Error, FinMeasure, GroundSet, SigmaAlg};
use skewlift_cli::campaign::{run_campaign, InstanceSpec};
use skewlift_cli::checks::{verify_instance, Check, VerifyOptions};
use skewlift_cli::report::Outcome;

type Verdict_ = Result<String, String>;

fn spec(seed: u64) -> InstanceSpec {
    InstanceSpec {
        size_x: 6,
        size_y: 4,
        null_rate: 0.3 + (seed % 4) as f64 * 0.1,
        coarse_b_rate: [0.0, 0.3, 0.7][(seed % 3) as usize],
        seed: 0,
        gens_len: None,
        cap: DEFAULT_CAP,
    }
    .for_seed(seed, false)
}

fn corpus(n: u64) -> Vec<(u64, Instance)> {
    (1..=n)
        .map(|seed| (seed, spec(seed).generate().expect("generated instance")))
        .collect()
}

/// Runs `checks` on every instance in parallel, in seed order.
fn run(corpus: &[(u64, Instance)], checks: &[Check]) -> Vec<(u64, Vec<Outcome>)> {
    corpus
        .par_iter()
        .map(|(seed, inst)| (*seed, verify_instance(inst, *seed, checks, &VerifyOptions::default())))
        .collect()
}

fn first_failure(results: &[(u64, Vec<Outcome>)]) -> Option<String> {
    results.iter().find_map(|(seed, outs)| {
        outs.iter()
            .find(|o| !o.passed)
            .map(|o| format!("seed {seed} {}: {}", o.check, o.witness.clone().unwrap_or_default()))
    })
}

fn total(results: &[(u64, Vec<Outcome>)], check: Check, key: &str) -> u64 {
    results
        .iter()
        .flat_map(|(_, outs)| outs.iter())
        .filter(|o| o.check == check)
        .filter_map(|o| o.get(key).and_then(|v| v.parse::<u64>().ok()))
        .sum()
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        return Err(format!("{what} took {t:?}, limit {limit:?}"));
    }
    Ok(())
}

fn criterion_1(corpus: &[(u64, Instance)]) -> Verdict_ {
    let start = Instant::now();
    let mut sets = 0;
    let mut exhaustive = 0;
    for (seed, inst) in corpus {
        let atoms = inst.r.space().algebra().num_atoms();
        let coverage = Coverage::auto(atoms, *seed);
        sets += fubini_sweep(&inst.r, &inst.dis, coverage).map_err(|e| format!("seed {seed}: {e}"))?;
        exhaustive += (coverage == Coverage::Exhaustive) as u64;
    }
    let rest = run(corpus, &[Check::Fubini]);
    if let Some(f) = first_failure(&rest) {
        return Err(f);
    }
    within(start, Duration::from_secs(60), "fubini")?;
    Ok(format!("{} instances, {sets} sets, {exhaustive} enumerated exhaustively", corpus.len()))
}

fn criterion_2(corpus: &[(u64, Instance)]) -> Verdict_ {
    let start = Instant::now();
    let res = run(corpus, &[Check::T1]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    within(start, Duration::from_secs(120), "t1")?;
    Ok(format!(
        "{} t1 runs, {} successor steps, no counterexample",
        total(&res, Check::T1, "runs"),
        total(&res, Check::T1, "successor_steps")
    ))
}

fn criterion_3(corpus: &[(u64, Instance)]) -> Verdict_ {
    let res = run(&corpus[..100], &[Check::L3]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    let g = GroundSet::new(3).unwrap();
    let ambient = SigmaAlg::discrete(g);
    let w = vec![rat(1, 2), zero(), rat(1, 2)];
    let c = SigmaAlg::from_blocks(g, &[g.set(&[0, 1]).unwrap(), g.set(&[2]).unwrap()]).unwrap();
    let delta = LowerDensity::new(c, w, vec![1, 2]).unwrap();
    match extend_density_l3(&ambient, &delta, g.point(0), g.set(&[0, 1]).unwrap(), g.full(), true) {
        Err(Error::NullSetsMissing { .. }) => {}
        other => return Err(format!("crafted instance not rejected: {other:?}")),
    }
    Ok(format!(
        "{} extension steps verified, crafted instance rejected",
        total(&res, Check::L3, "extension_steps")
    ))
}

fn criterion_4(corpus: &[(u64, Instance)]) -> Verdict_ {
    let res = run(&corpus[..100], &[Check::E20]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    Ok(format!(
        "{} chains, {} sets agree with the tail density",
        total(&res, Check::E20, "chains"),
        total(&res, Check::E20, "sets")
    ))
}

fn criterion_5(corpus: &[(u64, Instance)]) -> Verdict_ {
    let start = Instant::now();
    let res = run(&corpus[..100], &[Check::T2, Check::P3, Check::T3]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    let oracles = res
        .iter()
        .flat_map(|(_, o)| o.iter())
        .filter(|o| o.check == Check::T3 && o.get("oracle") == Some("run"))
        .count();
    if oracles < 20 {
        return Err(format!("oracle ran on only {oracles} instances"));
    }
    within(start, Duration::from_secs(600), "pipeline")?;
    Ok(format!(
        "{} splitting pairs checked, oracle confirmed {oracles} instances",
        total(&res, Check::T3, "pairs")
    ))
}

fn three_by_two() -> (SkewProduct, skewlift::product::Disintegration) {
    let m = |w: Vec<_>| FinMeasure::new(SigmaAlg::discrete(GroundSet::new(w.len()).unwrap()), w).unwrap();
    let space = ProductSpace::new(m(vec![rat(1, 2), rat(1, 2), zero()]), m(vec![rat(1, 2), rat(1, 2)])).unwrap();
    let r = SkewProduct::from_matrix(space, &[vec![rat(1, 2), zero()], vec![zero(), rat(1, 2)], vec![zero(), zero()]])
        .unwrap();
    let dis = disintegrate(&r).unwrap();
    (r, dis)
}

fn criterion_6(corpus: &[(u64, Instance)]) -> Verdict_ {
    let (r, dis) = three_by_two();
    let ext = NilExtension::new(&r, &dis);
    let mut fewest = usize::MAX;
    for e in ext.algebra.measurable_sets() {
        let n = ext.check_well_defined(e, 8).map_err(|e| e.to_string())?;
        fewest = fewest.min(n);
    }
    if fewest < 3 {
        return Err(format!("only {fewest} decompositions for some set"));
    }
    let small: Vec<_> = corpus
        .iter()
        .filter(|(_, i)| i.r.space().ground().size() <= 12)
        .cloned()
        .collect();
    let res = run(&small, &[Check::C1, Check::T4]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    Ok(format!(
        "fixture sets have at least {fewest} decompositions; c1 and t4 hold on {} small instances",
        small.len()
    ))
}

fn coarse_obstruction() -> Result<(), String> {
    let xg = GroundSet::new(2).unwrap();
    let yg = GroundSet::new(2).unwrap();
    let q = FinMeasure::new(SigmaAlg::trivial(yg), vec![rat(1, 2), rat(1, 2)]).unwrap();
    let space = ProductSpace::new(FinMeasure::uniform(xg), q).unwrap();
    let r = SkewProduct::new(space, vec![rat(1, 4); 4]).unwrap();
    let dis = disintegrate(&r).unwrap();
    let c = SigmaAlg::discrete(xg);
    let p = run_pipeline(&r, &dis, &c, c.atoms(), EnvelopeRule::Minimal, TieBreak::Lowest, true)
        .map_err(|e| e.to_string())?;
    let xi = Process::from_rows(r.space(), &[vec![int(1), int(0)], vec![int(0), int(1)]]).unwrap();
    let nm = is_nil_measurable(&xi, &r, &dis);
    let rep = measurable_version(&xi, &r, &dis, &p.split, &NilExtension::new(&r, &dis), OmegaSplit::Single)
        .map_err(|e| e.to_string())?;
    match (nm.measurable, rep.verdict, rep.obstruction) {
        (false, Verdict::NoVersion, Some(Obstruction::Atom { mass, .. })) if mass >= rat(1, 2) => Ok(()),
        other => Err(format!("coarse obstruction not rejected: {other:?}")),
    }
}

fn criterion_7(corpus: &[(u64, Instance)]) -> Verdict_ {
    let res = run(corpus, &[Check::Process]);
    if let Some(f) = first_failure(&res) {
        return Err(f);
    }
    let coarse = corpus
        .iter()
        .filter(|(_, i)| i.r.space().y_alg().num_atoms() < i.r.space().ny())
        .count();
    if coarse == 0 {
        return Err("no coarse instances in the corpus".into());
    }
    coarse_obstruction()?;
    Ok(format!(
        "{} versions, {} refusals over {} instances ({coarse} with coarse B); crafted obstruction rejected",
        total(&res, Check::Process, "versions"),
        total(&res, Check::Process, "refusals"),
        corpus.len()
    ))
}

fn criterion_8() -> Verdict_ {
    let base = InstanceSpec {
        size_x: 6,
        size_y: 4,
        null_rate: 0.3,
        coarse_b_rate: 0.3,
        seed: 1,
        gens_len: None,
        cap: DEFAULT_CAP,
    };
    let opts = VerifyOptions::default();
    let render = |jobs| {
        run_campaign(&base, 50, false, &Check::ALL, &opts, jobs)
            .map(|r| r.render(false))
            .map_err(|e| e.to_string())
    };
    let a = render(1)?;
    let b = render(1)?;
    let c = render(8)?;
    if a != b {
        return Err("two sequential runs differ".into());
    }
    if a != c {
        return Err("1 and 8 jobs differ".into());
    }
    Ok(format!("seeds 1-50 reproduce {} report bytes across runs and thread counts", a.len()))
}

fn main() -> ExitCode {
    let corpus = corpus(200);
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict_>)> = vec![
        ("fubini and disintegration", Box::new(|| criterion_1(&corpus))),
        ("section conditional expectations", Box::new(|| criterion_2(&corpus))),
        ("density extension step", Box::new(|| criterion_3(&corpus))),
        ("countable limit formula", Box::new(|| criterion_4(&corpus))),
        ("density, saturation and splitting lifting", Box::new(|| criterion_5(&corpus))),
        ("section modification and nil extension", Box::new(|| criterion_6(&corpus))),
        ("measurable versions of processes", Box::new(|| criterion_7(&corpus))),
        ("determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match f() {
            Ok(msg) => println!("criterion {} PASS {name}: {msg} ({:.1?})", i + 1, start.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {msg} ({:.1?})", i + 1, start.elapsed());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
