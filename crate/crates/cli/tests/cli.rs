use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_audioleak"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SCENARIO: &str = r#"
duration = 1200.0
seed = 4
devices = ["EchoDot", "HiveView"]

[[events]]
time = 200.0
wake_word = "alexa"

[[events]]
time = 700.0
wake_word = "alexa"
"#;

#[test]
fn simulate_ingest_detect_scan_roc() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("scenario.toml"), SCENARIO).unwrap();
    ok(
        d,
        &[
            "simulate",
            "--scenario",
            "scenario.toml",
            "--pcap",
            "run.pcap",
            "--labels",
            "labels.json",
        ],
    );
    ok(
        d,
        &[
            "ingest",
            "run.pcap",
            "--local-net",
            "192.168.0.0/16",
            "--out",
            "traces.json",
        ],
    );

    let traces: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("traces.json")).unwrap()).unwrap();
    let records = traces.as_array().unwrap();
    assert_eq!(records.len(), 2);
    let keys: Vec<&str> = records[0].as_object().unwrap().keys().map(String::as_str).collect();
    assert!(keys.contains(&"packets") && keys.contains(&"span") && keys.contains(&"device"));

    ok(
        d,
        &[
            "detect-burst",
            "traces.json",
            "--labels",
            "labels.json",
            "--out",
            "bursts.json",
        ],
    );
    let labels: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("labels.json")).unwrap()).unwrap();
    let bursts: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("bursts.json")).unwrap()).unwrap();
    assert_eq!(bursts.as_array().unwrap().len(), labels.as_array().unwrap().len());

    ok(
        d,
        &[
            "stat-scan",
            "traces.json",
            "--window",
            "30",
            "--combine-iat",
            "--out",
            "p.csv",
        ],
    );
    let csv = fs::read_to_string(d.join("p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "device,t_start,t_end,p_size,p_iat,p_combined,reactive"
    );
    assert!(lines.count() > 50);

    ok(
        d,
        &[
            "roc",
            "--mode",
            "burst",
            "--in",
            "traces.json",
            "--labels",
            "labels.json",
            "--out",
            "roc.csv",
        ],
    );
    let roc = fs::read_to_string(d.join("roc.csv")).unwrap();
    assert_eq!(roc.lines().next().unwrap(), "parameter,tpr,fpr");
    assert_eq!(roc.lines().count(), 9);

    ok(
        d,
        &[
            "roc",
            "--mode",
            "stat",
            "--in",
            "traces.json",
            "--labels",
            "labels.json",
            "--out",
            "roc2.csv",
            "--steps",
            "20",
        ],
    );
    assert_eq!(fs::read_to_string(d.join("roc2.csv")).unwrap().lines().count(), 22);
}

#[test]
fn probe_sim_then_judge() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("plan.toml"),
        "words = [\"alexa\", { text = \"major\" }]\nrepetitions = 3\n",
    )
    .unwrap();
    let text = ok(
        d,
        &[
            "probe",
            "--plan",
            "plan.toml",
            "--capture",
            "sim",
            "--fleet",
            "EchoDot,NestProtect",
            "--seed",
            "8",
            "--out",
            "session.json",
        ],
    );
    assert!(text.contains("EchoDot streams audio after \"alexa\""), "{text}");
    assert!(text.contains("silent"));

    ok(
        d,
        &[
            "judge",
            "--session",
            "session.json",
            "--format",
            "json",
            "--verdicts",
            "v.json",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("v.json")).unwrap()).unwrap();
    let verdicts = v["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 4);
    let reactive: Vec<_> = verdicts
        .iter()
        .filter(|v| v["reactive"].as_bool().unwrap())
        .map(|v| (v["name"].as_str().unwrap(), v["word"].as_str().unwrap()))
        .collect();
    assert_eq!(reactive, vec![("EchoDot", "alexa")]);

    // A session file also works as ROC input.
    fs::write(d.join("none.json"), "[]").unwrap();
    ok(
        d,
        &[
            "roc",
            "--mode",
            "burst",
            "--in",
            "session.json",
            "--labels",
            "none.json",
            "--out",
            "r.csv",
        ],
    );
}

#[test]
fn fuzz_with_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "fuzz",
            "--target",
            "alexa",
            "--phonemes",
            "5,6",
            "--trials",
            "10",
            "--seed",
            "3",
            "--out",
            "f.json",
        ],
    );
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("f.json")).unwrap()).unwrap();
    assert_eq!(r["target_metaphone"], "ALKS");
    let cands = r["candidates"].as_array().unwrap();
    assert!(cands.len() > 1000);
    assert!(cands.iter().all(|c| c["trials"] == 10));
    let discovered = r["discovered"].as_array().unwrap();
    assert!(discovered.iter().any(|w| w == "alyssa"));
    let total: u64 = r["histogram"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total as usize, discovered.len());
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["fuzz", "--target", "alexz", "--out", "f.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nearest: alexa"));

    let out = run(
        d,
        &["ingest", "missing.pcap", "--local-net", "10.0.0.0/8", "--out", "t.json"],
    );
    assert!(!out.status.success());

    fs::write(d.join("bad.pcap"), b"not a pcap file at all....").unwrap();
    let out = run(
        d,
        &["ingest", "bad.pcap", "--local-net", "10.0.0.0/8", "--out", "t.json"],
    );
    assert!(!out.status.success());

    let out = run(
        d,
        &["probe", "--plan", "p.toml", "--capture", "live", "--out", "s.json"],
    );
    assert!(!out.status.success(), "live capture needs --pcap and --local-net");
}
