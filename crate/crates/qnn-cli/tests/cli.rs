//! End-to-end CLI behavior through the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qnn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qnn"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qnn-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let out = qnn()
        .args([
            "generate",
            "--quiver",
            "fig6-left",
            "--seed",
            "1",
            "-o",
            path.to_str().unwrap(),
        ])
        .args(extra)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

#[test]
fn generate_then_validate_roundtrips() {
    let dir = tempdir("roundtrip");
    let model = generate(&dir, "model.json", &[]);
    let out = qnn().args(["validate"]).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("ok:"));
}

#[test]
fn generation_is_byte_deterministic() {
    let dir = tempdir("determinism");
    let a = generate(&dir, "a.json", &[]);
    let b = generate(&dir, "b.json", &[]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn env_seed_is_the_fallback() {
    let dir = tempdir("envseed");
    let with_flag = generate(&dir, "flag.json", &[]);
    let env_path = dir.join("env.json");
    let out = qnn()
        .args([
            "generate",
            "--quiver",
            "fig6-left",
            "-o",
            env_path.to_str().unwrap(),
        ])
        .env("QNN_SEED", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(with_flag).unwrap(),
        std::fs::read(env_path).unwrap()
    );
}

#[test]
fn wrong_dims_arity_is_a_usage_error() {
    let out = qnn()
        .args(["generate", "--quiver", "fig6-left", "--dims", "2,4,8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dimensions"));
}

#[test]
fn cyclic_model_fails_validation_naming_the_cycle() {
    let dir = tempdir("cycle");
    let path = dir.join("cyclic.json");
    std::fs::write(
        &path,
        r#"{
  "format_version": "1",
  "quiver": {"vertex_count": 3, "bias": 2, "edges": [[0, 1], [1, 0], [2, 0]]},
  "dims": [1, 1, 1],
  "activations": [{"vertex": 0, "kind": "identity"}, {"vertex": 1, "kind": "identity"}],
  "weights": [
    {"edge": 0, "rows": 1, "cols": 1, "data": [1.0]},
    {"edge": 1, "rows": 1, "cols": 1, "data": [1.0]},
    {"edge": 2, "rows": 1, "cols": 1, "data": [1.0]}
  ]
}"#,
    )
    .unwrap();
    let out = qnn().args(["validate"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("CycleDetected"), "{}", stderr(&out));
}

#[test]
fn weight_shape_mismatch_names_the_edge() {
    let dir = tempdir("badshape");
    let model = generate(&dir, "model.json", &[]);
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    // Shrink edge 3's weight matrix.
    doc["weights"][3]["rows"] = 1.into();
    doc["weights"][3]["data"] = serde_json::json!([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = qnn().args(["validate"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("edge 3"), "{}", stderr(&out));
}

#[test]
fn missing_file_is_an_io_error() {
    let out = qnn()
        .args(["validate", "/nonexistent/nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compress_reports_dims_and_output_validates() {
    let dir = tempdir("compress");
    let model = generate(&dir, "model.json", &[]);
    let compressed = dir.join("compressed.json");
    let out = qnn()
        .args(["compress", "-i"])
        .arg(&model)
        .args(["-o"])
        .arg(&compressed)
        .args(["--algorithm", "qr"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stderr(&out);
    assert!(summary.contains("[2, 4, 8, 2, 1]"), "{summary}");
    assert!(summary.contains("[2, 3, 6, 2, 1]"), "{summary}");

    let out = qnn().args(["validate"]).arg(&compressed).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    // The compressed model computes the same function.
    let x = "0.1,0.2";
    let y1 = stdout(
        &qnn()
            .args(["eval", "-i"])
            .arg(&model)
            .args(["--x", x])
            .output()
            .unwrap(),
    );
    let y2 = stdout(
        &qnn()
            .args(["eval", "-i"])
            .arg(&compressed)
            .args(["--x", x])
            .output()
            .unwrap(),
    );
    let v1: serde_json::Value = serde_json::from_str(&y1).unwrap();
    let v2: serde_json::Value = serde_json::from_str(&y2).unwrap();
    let a = v1["output"].as_array().unwrap();
    let b = v2["output"].as_array().unwrap();
    for (p, q) in a.iter().zip(b) {
        assert!((p.as_f64().unwrap() - q.as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn lossy_compression_reports_deviation() {
    let dir = tempdir("lossy");
    let model = generate(&dir, "model.json", &["--activation", "squashing"]);
    let out = qnn()
        .args(["compress", "-i"])
        .arg(&model)
        .args(["--algorithm", "rank", "--sv-threshold", "2.0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("deviation"), "{}", stderr(&out));
}

#[test]
fn eval_accepts_a_json_vector_file() {
    let dir = tempdir("evalfile");
    let model = generate(&dir, "model.json", &[]);
    let xfile = dir.join("x.json");
    std::fs::write(&xfile, "[3.0, 4.0]").unwrap();
    let out = qnn()
        .args(["eval", "-i"])
        .arg(&model)
        .args(["--x", xfile.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["output"].as_array().unwrap().len(), 2);
}

#[test]
fn custom_quiver_file_generates() {
    let dir = tempdir("customquiver");
    let qfile = dir.join("quiver.json");
    // a -> b -> c with bias -> b.
    std::fs::write(
        &qfile,
        r#"{"vertex_count": 4, "bias": 3, "edges": [[0, 1], [1, 2], [3, 1]]}"#,
    )
    .unwrap();
    let model = dir.join("model.json");
    let out = qnn()
        .args([
            "generate",
            "--quiver",
            qfile.to_str().unwrap(),
            "--dims",
            "2,5,2",
            "--seed",
            "3",
            "-o",
            model.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let out = qnn().args(["validate"]).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn verify_json_reports_are_stable_modulo_timestamp() {
    let run = || {
        let out = qnn()
            .args([
                "verify", "--check", "lossless", "--trials", "2", "--seed", "5", "--json",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let mut v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        v.as_object_mut().unwrap().remove("timestamp_unix");
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn unknown_check_name_is_a_usage_error() {
    let out = qnn().args(["verify", "--check", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
