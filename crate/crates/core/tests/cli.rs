use std::path::Path;
use std::process::Command;

fn forge(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_svl-forge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_match_correct_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = forge(&["synth", "--count", "4", "--scans", "3", "--seed", "1", "--out", s(d)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("pack.json").exists());

    let labels: Vec<String> = (0..3).map(|i| s(&d.join(format!("labels_{i}.json"))).to_string()).collect();
    let m = d.join("m.jsonl");
    let mut args = vec!["match", "--scans"];
    args.extend(labels.iter().map(String::as_str));
    args.extend(["--out", s(&m)]);
    let out = forge(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&m).unwrap().lines().count(), 12);

    let c = d.join("c");
    let mut args = vec!["correct", "--scans"];
    args.extend(labels.iter().map(String::as_str));
    args.extend(["--matches", s(&m), "--strict", "true", "--out-dir", s(&c)]);
    let out = forge(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(c.join("corrections.json")).unwrap()).unwrap();
    assert_eq!(report["cliques_corrected"], 4);
    assert_eq!(report["collisions"], 0);
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("p.json");
    let pack = r#"{"count": 3, "radius_min": 4, "radius_max": 6, "scans": 3, "mode": "exact24", "seed": 4}"#;
    std::fs::write(
        &cfg,
        format!(r#"{{"input": {{"synthetic": {{"pack": {pack}}}}}, "predictor": {{"kind": "oracle"}}, "max_iterations": 3}}"#),
    )
    .unwrap();
    let out = forge(&["run", "--config", s(&cfg), "--out", s(&d.join("a"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("a/metrics.csv").exists());

    std::fs::write(
        &cfg,
        format!(r#"{{"input": {{"synthetic": {{"pack": {pack}}}}}, "predictor": {{"kind": "oracle"}}, "max_iterations": 1}}"#),
    )
    .unwrap();
    let out = forge(&["run", "--config", s(&cfg), "--out", s(&d.join("b"))]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&cfg, r#"{"input": {"files": {"gray": []}}, "predictor": {"kind": "grow"}, "threshold": 2}"#).unwrap();
    let out = forge(&["run", "--config", s(&cfg), "--out", s(&d.join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}
