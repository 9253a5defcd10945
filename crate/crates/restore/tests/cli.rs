//! End-to-end checks of the command-line interface: exit-code contract,
//! stable trace prefixes, and JSON round-tripping of every machine-readable
//! output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use restore::belief::BeliefDump;
use restore::trace::Event;
use restore::world::SwitchOp;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn restore_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn validate_summarizes_the_example_network() {
    let out = restore_cmd(&["validate", "--network", fixture("network.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("3 feeders"), "{text}");
    assert!(text.contains("feeder cb1: 7 lines, 5 areas"), "{text}");
    assert!(text.contains("no capacity violations"), "{text}");
}

#[test]
fn validate_rejects_loops_and_garbage() {
    let out = restore_cmd(&["validate", "--network", fixture("loop.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let empty = tempfile::NamedTempFile::new().unwrap();
    let out = restore_cmd(&["validate", "--network", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = restore_cmd(&["validate", "--network", "/nonexistent/net.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_emits_the_sample_trace_with_stable_prefixes() {
    let out = restore_cmd(&[
        "run",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--config",
        fixture("config.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    let plan_lines = text.lines().filter(|l| l.starts_with("PLAN ")).count();
    assert_eq!(plan_lines, 4, "{text}");
    for prefix in ["OBS ", "HYP ", "PLAN ", "OP ", "REPLAN", "ESC ", "END "] {
        assert!(
            text.lines().any(|l| l.starts_with(prefix)),
            "missing {prefix} line in:\n{text}"
        );
    }
    assert!(text.lines().last().unwrap().starts_with("END finished"));
}

#[test]
fn run_json_round_trips() {
    let out = restore_cmd(&[
        "run",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--config",
        fixture("config.json").to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for line in stdout(&out).lines() {
        let event: Event = serde_json::from_str(line).expect("every line parses");
        let re: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&event).unwrap()).unwrap();
        let original: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(re, original, "round trip changed the event");
    }
}

#[test]
fn run_without_fault_finishes_with_no_operations() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("nofault.json");
    std::fs::write(&scenario, r#"{"faulty_lines": [], "seed": 5}"#).unwrap();
    let out = restore_cmd(&[
        "run",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        scenario.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(!text.lines().any(|l| l.starts_with("OP ")), "{text}");
    assert!(text.lines().last().unwrap().starts_with("END finished"));
}

#[test]
fn run_aborts_with_exit_two_when_fault_bound_is_too_low() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("kmax1.json");
    std::fs::write(
        &config,
        r#"{"priors": {"fault_weights": {"l3": 3.0}}, "k_max": 1}"#,
    )
    .unwrap();
    let out = restore_cmd(&[
        "run",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).lines().last().unwrap().starts_with("END aborted"));
}

#[test]
fn run_writes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("trace.txt");
    let out = restore_cmd(&[
        "run",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--config",
        fixture("config.json").to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert!(written.lines().last().unwrap().starts_with("END finished"));
}

#[test]
fn plans_ranks_the_candidate_hypothesis() {
    let out = restore_cmd(&[
        "plans",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--candidate",
        fixture("candidate.json").to_str().unwrap(),
        "--config",
        fixture("config.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ranked = parsed.as_array().unwrap();
    assert!(!ranked.is_empty() && ranked.len() < 100);
    // top plan isolates the faulty section and restores both sides
    let top_ops: Vec<SwitchOp> =
        serde_json::from_value(ranked[0]["ops"].clone()).unwrap();
    assert_eq!(
        top_ops,
        vec![
            SwitchOp::open("rsd16"),
            SwitchOp::open("rsd18"),
            SwitchOp::close("rsd53"),
            SwitchOp::close("cb1"),
        ]
    );
    // utilities are sorted descending
    let utilities: Vec<f64> = ranked
        .iter()
        .map(|p| p["utility"].as_f64().unwrap())
        .collect();
    assert!(utilities.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn belief_step_zero_has_five_normalized_candidates() {
    let out = restore_cmd(&[
        "belief",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--config",
        fixture("config.json").to_str().unwrap(),
        "--step",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let dump: BeliefDump = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(dump.candidates.len(), 5);
    let total: f64 = dump.candidates.iter().map(|c| c.probability).sum();
    assert!((total - 1.0).abs() < 1e-9);
    // sorted descending
    assert!(dump
        .candidates
        .windows(2)
        .all(|w| w[0].probability >= w[1].probability));
    // round trip
    let re: BeliefDump =
        serde_json::from_str(&serde_json::to_string(&dump).unwrap()).unwrap();
    assert_eq!(re, dump);
}

#[test]
fn belief_step_out_of_range_is_an_input_error() {
    let out = restore_cmd(&[
        "belief",
        "--network",
        fixture("network.json").to_str().unwrap(),
        "--scenario",
        fixture("scenario.json").to_str().unwrap(),
        "--step",
        "999",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
