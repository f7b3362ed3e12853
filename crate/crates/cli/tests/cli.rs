use std::path::{Path, PathBuf};
use std::process::Command;

use skewlift_cli::app::{run, CAP_ENV, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};
use skewlift_cli::format::InstanceFile;
use skewlift_cli::report::{parse_records, Record};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_by_two.json")
}

fn cli(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("skewlift").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn records(text: &str) -> Vec<Record> {
    parse_records(text).expect("report parses")
}

fn check<'a>(recs: &'a [Record], name: &str) -> &'a Record {
    recs.iter()
        .find(|r| r.kind == "check" && r.get("check") == Some(name))
        .unwrap_or_else(|| panic!("no {name} record"))
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let args = ["gen", "--seed", "1", "--size-x", "3", "--size-y", "2"];
    let (code, a, _) = cli(&args);
    let (_, b, _) = cli(&args);
    assert_eq!(code, EXIT_PASS);
    assert_eq!(a, b);
    let file = InstanceFile::parse(&a).unwrap();
    assert_eq!(file.r.len(), 3);
    assert_eq!(file.r[0].len(), 2);
}

#[test]
fn gen_without_nulls_has_no_null_points() {
    for seed in 1..=20 {
        let s = seed.to_string();
        let (_, text, _) = cli(&["gen", "--seed", &s, "--size-x", "5", "--size-y", "4", "--null-rate", "0"]);
        let file = InstanceFile::parse(&text).unwrap();
        let zero = |w: &String| w.starts_with('0');
        assert!(!file.p.weights.iter().any(zero), "seed {seed}");
        assert!(!file.q.weights.iter().any(zero), "seed {seed}");
        assert!(!file.r.iter().flatten().any(zero), "seed {seed}");
    }
}

#[test]
fn gen_with_full_coarse_rate_has_trivial_b() {
    for seed in 1..=10 {
        let s = seed.to_string();
        let (_, text, _) = cli(&["gen", "--seed", &s, "--size-y", "2", "--coarse-b-rate", "1"]);
        let file = InstanceFile::parse(&text).unwrap();
        assert_eq!(file.q.atoms, vec![vec![0, 1]], "seed {seed}");
    }
}

#[test]
fn trivial_instance_passes_every_check() {
    let (code, text, _) = cli(&["verify", "--size-x", "1", "--size-y", "1"]);
    assert_eq!(code, EXIT_PASS, "{text}");
    let recs = records(&text);
    assert_eq!(recs.iter().filter(|r| r.kind == "check").count(), 10);
    assert!(recs.iter().filter(|r| r.kind == "check").all(|r| r.get("status") == Some("pass")));
}

#[test]
fn fixture_passes_and_logs_exceptional_sets() {
    let (code, text, _) = cli(&["verify", fixture().to_str().unwrap(), "--trace"]);
    assert_eq!(code, EXIT_PASS, "{text}");
    let recs = records(&text);
    // Q is positive on both rows, so the row sets are empty and the nil
    // set carries the null points of every section.
    assert_eq!(check(&recs, "t1").get("exceptional"), Some("{}"));
    assert_eq!(check(&recs, "t4").get("nil_points"), Some("{1,2,3,5}"));
    assert_eq!(check(&recs, "t3").get("oracle"), Some("run"));
    assert_eq!(recs.last().unwrap().get("failing_seeds"), Some(""));
}

#[test]
fn corrupted_marginals_fail_fubini_with_witness() {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut file = InstanceFile::parse(&text).unwrap();
    file.p.weights.swap(1, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, file.to_json()).unwrap();
    let (code, text, _) = cli(&["verify", path.to_str().unwrap(), "--checks", "fubini"]);
    assert_eq!(code, EXIT_FAIL);
    let recs = records(&text);
    let f = check(&recs, "fubini");
    assert_eq!(f.get("status"), Some("fail"));
    assert!(f.get("witness").unwrap().contains("marginal"), "{text}");
    assert_eq!(recs.last().unwrap().get("failing_seeds"), Some("file"));
}

#[test]
fn campaign_of_one_equals_verify() {
    let spec = ["--seed", "7", "--size-x", "4", "--size-y", "3"];
    let (c1, campaign, _) = cli(&[&["campaign", "--count", "1", "--fixed-sizes"][..], &spec].concat());
    let (c2, verify, _) = cli(&[&["verify"][..], &spec].concat());
    assert_eq!((c1, c2), (EXIT_PASS, EXIT_PASS));
    assert_eq!(campaign, verify);
}

#[test]
fn campaign_ignores_thread_count() {
    let base = ["campaign", "--count", "12", "--size-x", "5", "--size-y", "3"];
    let (_, one, _) = cli(&[&base[..], &["--jobs", "1"]].concat());
    let (_, four, _) = cli(&[&base[..], &["--jobs", "4"]].concat());
    assert_eq!(one, four);
    let total = records(&one).pop().unwrap();
    assert_eq!(total.get("instances"), Some("12"));
    assert_eq!(total.get("failed_instances"), Some("0"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"format\": 3}").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["verify", "--checks", "t9"],
        vec!["campaign", "--count", "0"],
        vec!["gen", "--null-rate", "1.5"],
        vec!["gen", "--size-x", "40"],
        vec!["verify", garbage.to_str().unwrap()],
        vec!["verify", "/nonexistent/instance.json"],
    ];
    for args in cases {
        let (code, _, err) = cli(&args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(!err.is_empty(), "{args:?}");
    }
    let (code, text, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_PASS);
    assert!(text.contains("campaign"));
}

#[test]
fn cap_is_read_from_the_environment() {
    let bin = env!("CARGO_BIN_EXE_skewlift");
    let gen = |cap: &str, size: &str| {
        Command::new(bin)
            .args(["gen", "--size-x", size])
            .env(CAP_ENV, cap)
            .output()
            .unwrap()
    };
    assert_eq!(gen("4", "5").status.code(), Some(EXIT_USAGE as i32));
    assert_eq!(gen("8", "5").status.code(), Some(EXIT_PASS as i32));
    let bad = gen("many", "3");
    assert_eq!(bad.status.code(), Some(EXIT_USAGE as i32));
    assert!(String::from_utf8_lossy(&bad.stderr).contains(CAP_ENV));
}

#[test]
fn report_command_summarizes_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    let (code, _, _) = cli(&["campaign", "--count", "3", "-o", good.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    let (code, text, _) = cli(&["report", good.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    let recs = records(&text);
    let fubini = recs.iter().find(|r| r.get("check") == Some("fubini")).unwrap();
    assert_eq!((fubini.get("pass"), fubini.get("fail")), (Some("3"), Some("0")));
    assert_eq!(recs.last().unwrap().get("checks"), Some("30"));

    let saved = std::fs::read_to_string(&good).unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, saved.replacen("status=pass", "status=fail", 1)).unwrap();
    let (code, text, _) = cli(&["report", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_FAIL);
    assert_eq!(records(&text).last().unwrap().get("failing_seeds"), Some("1"));

    std::fs::write(&bad, "not a report\n").unwrap();
    assert_eq!(cli(&["report", bad.to_str().unwrap()]).0, EXIT_USAGE);
}
