use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crreflect"))
}

fn manifests() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crreflect-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn analyze(manifest: &Path, out: &Path, extra: &[&str]) -> (Output, String) {
    let output = bin().arg("analyze").arg(manifest).arg("--out").arg(out).args(extra).output().unwrap();
    let report = std::fs::read_to_string(out).unwrap_or_default();
    (output, report)
}

fn write_manifest(name: &str, body: &str) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn no_floats(v: &Value) -> bool {
    match v {
        Value::Number(n) => !n.is_f64(),
        Value::Array(a) => a.iter().all(no_floats),
        Value::Object(o) => o.values().all(no_floats),
        _ => true,
    }
}

fn analysis<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["analyses"].as_array().unwrap().iter().find(|a| a["name"] == name).unwrap()
}

#[test]
fn heisenberg_identity_passes_every_analysis() {
    let out = scratch("heisenberg.json");
    let (output, text) = analyze(&manifests().join("heisenberg.json"), &out, &[]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stdout));
    let report: Value = serde_json::from_str(&text).unwrap();
    assert!(no_floats(&report));
    for a in report["analyses"].as_array().unwrap() {
        assert_eq!(a["status"], "ok", "{a}");
    }
    assert_eq!(analysis(&report, "verify-cr")["result"]["pass"], true);
    assert_eq!(analysis(&report, "identities")["result"]["pass"], true);
    assert_eq!(analysis(&report, "minimality")["result"]["minimal"], true);
    let nd = &analysis(&report, "classify-manifold")["result"];
    for k in 1..=5 {
        assert_eq!(nd[format!("nd{k}")]["verdict"], "holds");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("verify-cr: all residuals vanish"));
}

#[test]
fn reports_are_byte_identical() {
    let m = manifests().join("heisenberg.json");
    let (_, a) = analyze(&m, &scratch("a.json"), &["--seed", "3"]);
    let (_, b) = analyze(&m, &scratch("b.json"), &["--seed", "3"]);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn degenerate_target_reports_its_tangent_field() {
    let out = scratch("degenerate.json");
    let (output, text) = analyze(&manifests().join("levi_degenerate.json"), &out, &[]);
    assert!(output.status.success());
    let report: Value = serde_json::from_str(&text).unwrap();
    let c = &analysis(&report, "classify-manifold")["result"];
    assert_eq!(c["nd5"]["verdict"], "fails");
    assert_eq!(c["degeneracy_field"]["text"], "(1)*d/dzp2");
    assert_eq!(c["implications_hold"], true);
}

#[test]
fn empty_analysis_list_reports_provenance() {
    let m = write_manifest("empty.json", r#"{ "source": { "m": 1, "d": 1, "rho": ["w1 - xi1 - i*z1*zeta1"] } }"#);
    let out = scratch("empty.report.json");
    let (output, text) = analyze(&m, &out, &["--order", "5"]);
    assert!(output.status.success());
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report.as_object().unwrap().len(), 1);
    assert_eq!(report["provenance"]["order"], 5);
    assert_eq!(report["provenance"]["seed"], 0);
}

#[test]
fn inconclusive_is_not_an_error_but_a_failed_analysis_is() {
    let m = write_manifest(
        "flat.json",
        r#"{ "order": 4,
             "source": { "m": 1, "d": 1, "rho": ["w1 - xi1"] },
             "analyses": [{ "name": "minimality", "kmax": 2 }] }"#,
    );
    let (output, text) = analyze(&m, &scratch("flat.report.json"), &[]);
    assert!(output.status.success());
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(analysis(&report, "minimality")["result"]["minimal"], false);

    let m = write_manifest(
        "nomap.json",
        r#"{ "order": 4,
             "source": { "m": 1, "d": 1, "rho": ["w1 - xi1 - i*z1*zeta1"] },
             "analyses": [{ "name": "verify-cr" }, { "name": "minimality" }] }"#,
    );
    let (output, text) = analyze(&m, &scratch("nomap.report.json"), &[]);
    assert_eq!(output.status.code(), Some(1));
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(analysis(&report, "verify-cr")["status"], "error");
    assert_eq!(analysis(&report, "minimality")["status"], "ok");
}

#[test]
fn non_cr_map_is_reported_with_its_failing_degree() {
    let m = write_manifest(
        "noncr.json",
        r#"{ "order": 6,
             "source": { "m": 1, "d": 1, "rho": ["w1 - xi1 - i*z1*zeta1"] },
             "map": ["z1", "w1 + z1^2"],
             "analyses": [{ "name": "verify-cr" }] }"#,
    );
    let (output, text) = analyze(&m, &scratch("noncr.report.json"), &[]);
    assert!(output.status.success());
    let report: Value = serde_json::from_str(&text).unwrap();
    let r = &analysis(&report, "verify-cr")["result"];
    assert_eq!(r["pass"], false);
    assert_eq!(r["families"]["2"]["first_failure"], 2);
}

#[test]
fn bad_manifests_exit_with_a_diagnostic() {
    let m = write_manifest("bad.json", r#"{ "order": 4, "source": { "m": 1, "d": 1, "rho": ["w1 - q1"] } }"#);
    let output = bin().arg("analyze").arg(&m).arg("--out").arg(scratch("bad.report.json")).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("q1"));
}

#[test]
fn parse_check_round_trips_and_locates_errors() {
    let ok = bin().args(["parse-check", "3/2*i*z1^2 - (1/3+2*i)*zp1*w2"]).output().unwrap();
    assert!(ok.status.success());
    let stdout = String::from_utf8_lossy(&ok.stdout);
    let printed = stdout.lines().next().unwrap();
    let again = bin().args(["parse-check", printed]).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&again.stdout), stdout);
    assert!(stdout.contains(r#"["0/1","3/2"]"#));

    let bad = bin().args(["parse-check", "z1^^2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("at 3"));
}

#[test]
fn version_lists_the_registry() {
    let out = bin().arg("version").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("crreflect "));
    for name in ["verify-cr", "classify-manifold", "minimality", "reflection", "resolution"] {
        assert!(text.contains(name));
    }
}
