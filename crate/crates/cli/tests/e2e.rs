use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use timeblocks_cli::dam::parse_dam;
use timeblocks_cli::file::{parse_str, to_canonical};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

fn timeblocks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timeblocks")).args(args).output().unwrap()
}

fn run(name: &str, command: &str, extra: &[&str]) -> Output {
    let path = fixture(name);
    let mut args = vec!["--problem", path.to_str().unwrap(), "--command", command];
    args.extend_from_slice(extra);
    timeblocks(&args)
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("e2e");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const PROBLEMS: &[&str] = &[
    "minimal.json",
    "flat_t2.json",
    "markov_blocks.json",
    "w0_dependent.json",
    "two_scale.json",
    "dhd.json",
    "noise_joint.json",
    "noise_days.json",
    "dam_spill.json",
    "dam_min.json",
];

#[test]
fn fixture_corpus_round_trips() {
    for name in PROBLEMS {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let parsed = parse_str(&text).unwrap();
        let canonical = to_canonical(&parsed);
        let again = parse_str(&canonical).unwrap();
        assert_eq!(again, parsed, "{name}");
        assert_eq!(to_canonical(&again), canonical, "{name}");
    }
    let dam = std::fs::read_to_string(fixture("dam_params.json")).unwrap();
    let parsed = parse_dam(&dam).unwrap();
    assert_eq!(parse_dam(&to_canonical(&parsed)).unwrap(), parsed);
}

#[test]
fn generated_dam_fixture_is_current() {
    let out = run("dam_params.json", "build-dam", &[]);
    assert_eq!(out.status.code(), Some(0));
    let on_disk = std::fs::read_to_string(fixture("dam_spill.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), on_disk);
}

#[test]
fn sequential_reports_are_byte_identical() {
    let cases = [
        ("flat_t2.json", "solve-history"),
        ("flat_t2.json", "oracle"),
        ("markov_blocks.json", "solve-reduced"),
        ("w0_dependent.json", "check-reduction"),
        ("two_scale.json", "solve-2ts"),
        ("dhd.json", "solve-dhd"),
        ("noise_joint.json", "oracle"),
        ("dam_spill.json", "solve-dhd"),
        ("noise_days.json", "report"),
    ];
    for (name, command) in cases {
        let a = run(name, command, &[]);
        let b = run(name, command, &[]);
        assert!(!a.stdout.is_empty(), "{name} {command}");
        assert_eq!(a.stdout, b.stdout, "{name} {command}");
        let c = run(name, command, &["--full"]);
        assert_eq!(c.stdout, run(name, command, &["--full"]).stdout);
    }
}

#[test]
fn exit_statuses_follow_the_contract() {
    let ok = run("flat_t2.json", "solve-history", &[]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["status"], "pass");

    let bad = run("w0_dependent.json", "check-reduction", &[]);
    assert_eq!(bad.status.code(), Some(1));
    let r = report(&bad);
    assert_eq!(r["status"], "verification_failed");
    assert!(r["counterexample"].as_str().unwrap().contains("stage 2"));

    assert_eq!(run("flat_t2.json", "oracle", &["--tolerance", "-1"]).status.code(), Some(2));

    assert_eq!(run("flat_t2.json", "solve-dhd", &[]).status.code(), Some(2));
    assert_eq!(run("flat_t2.json", "solve-reduced", &[]).status.code(), Some(2));
    assert_eq!(run("flat_t2.json", "solve-history", &["--nonsense"]).status.code(), Some(2));
    assert_eq!(timeblocks(&["--problem", "/nonexistent.json", "--command", "report"]).status.code(), Some(2));

    let capacity = run("flat_t2.json", "solve-history", &["--budget", "3"]);
    assert_eq!(capacity.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&capacity.stderr).contains("capacity"));
}

fn write_variant(name: &str, from: &str, edit: impl Fn(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture(from)).unwrap()).unwrap();
    edit(&mut v);
    let path = scratch(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn invalid_files_name_the_broken_invariant() {
    let gap = write_variant("gap.json", "flat_t2.json", |v| {
        v["kernels"].as_array_mut().unwrap().pop();
    });
    let out = timeblocks(&["--problem", gap.to_str().unwrap(), "--command", "solve-history"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel coverage gap at stage 2"));

    let norm = write_variant("norm.json", "minimal.json", |v| {
        v["kernels"][0]["repr"]["white_noise"] = serde_json::json!([0.9]);
    });
    let out = timeblocks(&["--problem", norm.to_str().unwrap(), "--command", "solve-history"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0.9") && err.contains("1e-12"), "{err}");

    let schema = write_variant("schema.json", "minimal.json", |v| {
        v["criterion"]["full_table"] = serde_json::json!(["lots"]);
    });
    let out = timeblocks(&["--problem", schema.to_str().unwrap(), "--command", "report"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("criterion.full_table[0]"));
}

#[test]
fn out_flag_writes_the_report() {
    let path = scratch("report.json");
    let out = run("markov_blocks.json", "solve-reduced", &["--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read(&path).unwrap();
    assert_eq!(written, run("markov_blocks.json", "solve-reduced", &[]).stdout);
}

#[test]
fn large_tables_are_summarized_unless_full() {
    let r = report(&run("dam_spill.json", "solve-history", &[]));
    let last = r["values"].as_array().unwrap().last().unwrap();
    assert!(last.get("table").is_none());
    assert!(last["summary"]["infinite"].as_u64().unwrap() > 0);
    let r = report(&run("dam_spill.json", "solve-history", &["--full"]));
    let last = r["values"].as_array().unwrap().last().unwrap();
    assert_eq!(last["table"].as_array().unwrap().len() as u64, last["len"].as_u64().unwrap());
}

#[test]
fn seeded_oracle_samples_and_timing_is_opt_in() {
    let r = report(&run("dam_min.json", "oracle", &["--seed", "5"]));
    let cases = r["verification"][0]["cases"].as_u64().unwrap();
    assert!(cases < 4 + 24 + 144 + 864, "{cases}");
    assert_eq!(r["status"], "pass");
    assert!(r.get("wall_time_ms").is_none());
    let t = report(&run("flat_t2.json", "solve-history", &["--timing"]));
    assert!(t["wall_time_ms"].as_f64().is_some());
}

#[test]
fn threads_do_not_change_values() {
    let a = report(&run("dam_spill.json", "solve-dhd", &["--full"]));
    let b = report(&run("dam_spill.json", "solve-dhd", &["--full", "--threads", "3"]));
    for (x, y) in a["values"].as_array().unwrap().iter().zip(b["values"].as_array().unwrap()) {
        for (p, q) in x["table"].as_array().unwrap().iter().zip(y["table"].as_array().unwrap()) {
            match (p.as_f64(), q.as_f64()) {
                (Some(p), Some(q)) => assert!((p - q).abs() <= 1e-12),
                _ => assert_eq!(p, q),
            }
        }
    }
}

#[test]
fn digest_ignores_formatting() {
    let compact = write_variant("compact.json", "flat_t2.json", |_| {});
    let a = report(&run("flat_t2.json", "report", &[]));
    let b = report(&timeblocks(&["--problem", compact.to_str().unwrap(), "--command", "report"]));
    assert_eq!(a["digest"], b["digest"]);
    assert!(a["digest"].as_str().unwrap().starts_with("sha256:"));
}
