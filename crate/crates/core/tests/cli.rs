use greedylab::cli::run;
use greedylab::models::make_haar;
use greedylab::seqlab::{power_sequence, PosSequence};
use greedylab::space::{make_lp, SpaceModel};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn write_space(dir: &Path, name: &str, s: &SpaceModel) -> PathBuf {
    write(dir, name, &serde_json::to_string(s).unwrap())
}

fn write_sigma(dir: &Path, name: &str, s: &PosSequence) -> PathBuf {
    write(dir, name, &serde_json::to_string(s).unwrap())
}

fn go(args: &[&str]) -> i32 {
    run(std::iter::once("greedylab").chain(args.iter().copied()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_l2_reports_unit_constants() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "l2.json", &make_lp(2.0, 4).unwrap());
    let out = d.path().join("out");
    assert_eq!(
        go(&[
            "analyze",
            "--space",
            s(&space),
            "--out",
            s(&out),
            "--caps",
            r#"{"samples": 50}"#
        ]),
        0
    );
    let doc = json(&out.join("constants.json"));
    assert_eq!(doc["schema_version"], 1);
    for c in doc["constants"].as_array().unwrap() {
        if c["name"] == "C_e" {
            continue;
        }
        let v = c["value"].as_f64().unwrap();
        assert!((v - 1.0).abs() <= 1e-9, "{} = {v}", c["name"]);
        assert!(c["anchor"].as_str().is_some());
    }
    for r in doc["witness_recheck"].as_array().unwrap() {
        assert_eq!(r["reported"], r["recomputed"]);
    }
    assert!(out.join("summary.txt").exists());
}

#[test]
fn analyze_haar_writes_one_profile_row_per_size() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "haar.json", &make_haar(3, 3.0).unwrap());
    let out = d.path().join("out");
    assert_eq!(
        go(&[
            "analyze",
            "--space",
            s(&space),
            "--out",
            s(&out),
            "--caps",
            r#"{"samples": 20}"#
        ]),
        0
    );
    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,phi_u,phi_l,phi_u_dual,phi_l_dual"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    for (k, row) in rows.iter().enumerate() {
        let cols: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols[0], (k + 1) as f64);
        assert!(cols[2] <= cols[1]);
    }
}

#[test]
fn analyze_is_reproducible_for_a_seed() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "haar.json", &make_haar(2, 1.5).unwrap());
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for o in [&a, &b] {
        assert_eq!(
            go(&[
                "analyze",
                "--space",
                s(&space),
                "--out",
                s(o),
                "--seed",
                "7",
                "--caps",
                r#"{"samples": 30}"#
            ]),
            0
        );
    }
    assert_eq!(
        std::fs::read(a.join("constants.json")).unwrap(),
        std::fs::read(b.join("constants.json")).unwrap()
    );
}

#[test]
fn malformed_input_exits_with_2() {
    let d = TempDir::new().unwrap();
    let bad = write(
        d.path(),
        "bad.json",
        "{\"kind\": \"weighted_lp\", \"dim\": ",
    );
    assert_eq!(
        go(&["analyze", "--space", s(&bad), "--out", s(d.path())]),
        2
    );
    let unknown = write(d.path(), "u.json", r#"{"kind": "nope", "dim": 3}"#);
    assert_eq!(
        go(&["analyze", "--space", s(&unknown), "--out", s(d.path())]),
        2
    );
    let space = write_space(d.path(), "l2.json", &make_lp(2.0, 3).unwrap());
    assert_eq!(
        go(&[
            "analyze",
            "--space",
            s(&space),
            "--caps",
            r#"{"sample": 3}"#,
            "--out",
            s(d.path())
        ]),
        2
    );
    assert_eq!(go(&["analyze"]), 2);
    assert_eq!(go(&["frobnicate"]), 2);
}

#[test]
fn inadmissible_sigma_exits_with_4() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "l2.json", &make_lp(2.0, 8).unwrap());
    // σ*(m) = m/σ(m) falls between m = 2 and m = 3.
    let sigma = PosSequence::new(vec![1.0, 1.1, 3.0, 3.1, 3.2, 3.3, 3.4, 3.5]).unwrap();
    let sig = write_sigma(d.path(), "sigma.json", &sigma);
    assert_eq!(
        go(&[
            "renorm",
            "--space",
            s(&space),
            "--sigma",
            s(&sig),
            "--out",
            s(d.path())
        ]),
        4
    );
    assert_eq!(
        go(&[
            "sequence",
            "--sigma",
            s(&sig),
            "--sigma-policy",
            "dini",
            "--out",
            s(d.path())
        ]),
        4
    );
    assert_eq!(
        go(&["sequence", "--sigma", s(&sig), "--out", s(d.path())]),
        0
    );
    let doc = json(&d.path().join("sequence.json"));
    assert!(doc["dini_error"].is_string());
}

#[test]
fn oversized_models_exit_with_3() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "big.json", &make_lp(2.0, 20).unwrap());
    assert_eq!(
        go(&["analyze", "--space", s(&space), "--out", s(d.path())]),
        3
    );
    let small = write_space(d.path(), "small.json", &make_lp(2.0, 6).unwrap());
    assert_eq!(
        go(&[
            "analyze",
            "--space",
            s(&small),
            "--caps",
            r#"{"enum_cap": 4}"#,
            "--out",
            s(d.path())
        ]),
        3
    );
}

#[test]
fn renormed_descriptor_round_trips() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "l2.json", &make_lp(2.0, 4).unwrap());
    let sig = write_sigma(d.path(), "sigma.json", &power_sequence(0.5, 4).unwrap());
    let out = d.path().join("r");
    assert_eq!(
        go(&[
            "renorm",
            "--space",
            s(&space),
            "--sigma",
            s(&sig),
            "--out",
            s(&out)
        ]),
        0
    );
    let rj = out.join("renormed.json");
    let text = std::fs::read_to_string(&rj).unwrap();
    let model: SpaceModel = serde_json::from_str(&text).unwrap();
    let again: SpaceModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("index,old,new,ratio"));
    let v = [0.3, -1.0, 0.25, 0.8];
    assert_eq!(model.norm(&v).unwrap(), again.norm(&v).unwrap());
    let info = json(&out.join("renorm_constants.json"));
    assert_eq!(info["anchor"], "Theorem 3.4");
    assert!(info["envelope"]["lower"].as_f64().unwrap() > 0.0);

    let out2 = d.path().join("a");
    assert_eq!(
        go(&[
            "analyze",
            "--space",
            s(&rj),
            "--out",
            s(&out2),
            "--caps",
            r#"{"samples": 20}"#
        ]),
        0
    );
    let doc = json(&out2.join("constants.json"));
    for c in doc["constants"].as_array().unwrap() {
        let name = c["name"].as_str().unwrap();
        if [
            "K_g",
            "almost_greedy",
            "quasi_greedy",
            "suppression_quasi_greedy",
            "K_u",
            "K_su",
        ]
        .contains(&name)
        {
            let v = c["value"].as_f64().unwrap();
            assert!((v - 1.0).abs() <= 1e-6, "{name} = {v}");
        }
    }
}

#[test]
fn renorm_kinds_run() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "haar.json", &make_haar(2, 3.0).unwrap());
    for kind in ["main", "almost-greedy", "lattice"] {
        let out = d.path().join(kind);
        assert_eq!(
            go(&[
                "renorm",
                "--space",
                s(&space),
                "--sigma-policy",
                "dini",
                "--kind",
                kind,
                "--out",
                s(&out)
            ]),
            0,
            "{kind}"
        );
        let _: SpaceModel =
            serde_json::from_str(&std::fs::read_to_string(out.join("renormed.json")).unwrap())
                .unwrap();
    }
    let wide = write_space(d.path(), "lp.json", &make_lp(2.0, 16).unwrap());
    let out = d.path().join("sub");
    assert_eq!(
        go(&[
            "renorm",
            "--space",
            s(&wide),
            "--kind",
            "subsymmetric",
            "--caps",
            r#"{"window": 16, "k_schedule": [1, 2]}"#,
            "--out",
            s(&out)
        ]),
        0
    );
    assert_eq!(
        go(&[
            "renorm",
            "--space",
            s(&space),
            "--sigma-policy",
            "dini",
            "--kind",
            "almost-greedy",
            "--delta",
            "5",
            "--out",
            s(&out)
        ]),
        2
    );
}

#[test]
fn verify_haar_l2_passes() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "haar.json", &make_haar(2, 2.0).unwrap());
    assert_eq!(
        go(&[
            "verify",
            "--space",
            s(&space),
            "--out",
            s(d.path()),
            "--caps",
            r#"{"samples": 20, "probes": 20}"#
        ]),
        0
    );
    let doc = json(&d.path().join("verify.json"));
    assert_eq!(doc["passed"], true);
    let checks = doc["checks"].as_array().unwrap();
    let ku = checks
        .iter()
        .find(|c| c["id"] == "K_u=1")
        .expect("lattice check present");
    assert_eq!(ku["passed"], true);
    assert!(checks
        .iter()
        .all(|c| c["anchor"].as_str().is_some_and(|a| !a.is_empty())));
}

#[test]
fn verify_reports_failures_with_exit_1() {
    let d = TempDir::new().unwrap();
    let space = write_space(d.path(), "l2.json", &make_lp(2.0, 3).unwrap());
    // A negative tolerance cannot be met by any check.
    assert_eq!(
        go(&[
            "verify",
            "--space",
            s(&space),
            "--tol",
            r#"{"norm": -1.0}"#,
            "--out",
            s(d.path())
        ]),
        1
    );
    assert_eq!(json(&d.path().join("verify.json"))["passed"], false);
    assert_eq!(
        go(&["verify", "--tol", r#"{"nrm": 1.0}"#, "--out", s(d.path())]),
        2
    );
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_greedylab");
    let d = TempDir::new().unwrap();
    let ok = Command::new(bin)
        .args(["verify", "--out"])
        .arg(d.path())
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    let bad = Command::new(bin)
        .args(["analyze", "--space", "/nonexistent.json"])
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("analyze"));
}
