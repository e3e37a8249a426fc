use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localcorr"))
        .args(args)
        .current_dir(dir)
        .env_remove("LOCALCORR_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON error in {text}"));
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn write_recipe(dir: &Path, name: &str, recipe: Value) {
    std::fs::write(dir.join(name), recipe.to_string()).unwrap();
}

fn small_recipe(generator: Value) -> Value {
    json!({
        "n_assets": 3, "atm_vols": [0.2, 0.25, 0.3], "skews": [0.1],
        "maturities": [0.25, 0.5, 1.0, 1.5],
        "correlation": {"kind": "flat", "rho": 0.5},
        "generator": generator, "samples": 32768
    })
}

#[test]
fn single_asset_synth_copies_the_constituent_surface() {
    let dir = tempfile::tempdir().unwrap();
    write_recipe(
        dir.path(),
        "r.json",
        json!({
            "n_assets": 1, "atm_vols": [0.22], "skews": [0.1],
            "correlation": {"kind": "identity"},
            "generator": {"kind": "copula-consistent"}
        }),
    );
    ok(
        dir.path(),
        &["--input", "r.json", "--output-dir", "out", "synth"],
    );
    let snap = read_json(dir.path().join("out/snapshot.json"));
    assert_eq!(snap["index"]["vols"], snap["assets"][0]["vols"]);
    assert_eq!(snap["index"]["spot"], snap["assets"][0]["spot"]);
    let manifest = read_json(dir.path().join("out/manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["outputs"], json!(["snapshot.json"]));
    assert_eq!(manifest["input_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn decode_separates_consistent_and_steepened_markets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_recipe(
        d,
        "plain.json",
        small_recipe(json!({"kind": "copula-consistent"})),
    );
    write_recipe(
        d,
        "steep.json",
        small_recipe(json!({"kind": "steepened", "bump": 0.03})),
    );
    ok(
        d,
        &["--input", "plain.json", "--output-dir", "plain", "synth"],
    );
    ok(
        d,
        &["--input", "steep.json", "--output-dir", "steep", "synth"],
    );
    for (name, consistent) in [("plain", true), ("steep", false)] {
        ok(
            d,
            &[
                "--input",
                &format!("{name}/snapshot.json"),
                "--output-dir",
                &format!("{name}/dec"),
                "decode",
                "--maturity",
                "1",
                "--center",
                "flat:0.5",
                "--samples",
                "32768",
                "--strikes",
                "0.8,0.9,1.0,1.1,1.2",
            ],
        );
        let report = read_json(d.join(format!("{name}/dec/decode.json")));
        assert_eq!(report["consistent"], consistent, "{name}: {report}");
        let csv = std::fs::read_to_string(d.join(format!("{name}/dec/decode.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 6);
    }
}

#[test]
fn failures_report_json_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = cli(d, &["price", "--payoff", "digital", "--maturity", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "usage");

    let out = cli(d, &["--input", "missing.json", "decode", "--maturity", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "io");

    std::fs::write(d.join("bad.json"), r#"{"as_of": "2009-07-31", "extra": 1}"#).unwrap();
    let out = cli(d, &["--input", "bad.json", "calibrate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "schema");

    write_recipe(
        d,
        "neg.json",
        json!({
            "n_assets": 3, "atm_vols": [0.2],
            "correlation": {"kind": "flat", "rho": -0.3},
            "generator": {"kind": "copula-consistent"}
        }),
    );
    let out = cli(d, &["--input", "neg.json", "synth"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err["kind"], "invalid_input");
    assert!(err["message"].as_str().unwrap().contains("dispersion"));

    let out = cli(d, &["--threads", "0", "dump-table", "--assets", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dump_table_writes_every_state() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "--output-dir",
            "t",
            "dump-table",
            "--assets",
            "4",
            "--states",
            "11",
            "--center",
            "flat:0.3",
        ],
    );
    let meta = read_json(dir.path().join("t/table.json"));
    assert_eq!(meta["states"], 11);
    assert_eq!(meta["assets"], 4);
    assert!(meta["min_eigenvalue"].as_f64().unwrap() > -1e-12);
    let csv = std::fs::read_to_string(dir.path().join("t/table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    let out = cli(dir.path(), &["dump-table"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn price_and_diagnose_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_recipe(
        d,
        "r.json",
        small_recipe(json!({"kind": "copula-consistent"})),
    );
    ok(d, &["--input", "r.json", "--output-dir", ".", "synth"]);
    let price = |out: &str, threads: &str| {
        ok(
            d,
            &[
                "--input",
                "snapshot.json",
                "--output-dir",
                out,
                "--seed",
                "3",
                "--threads",
                threads,
                "--log",
                "json",
                "price",
                "--payoff",
                "index-call",
                "--maturity",
                "1",
                "--strikes",
                "0.9,1.0,1.1",
                "--paths",
                "4000",
                "--steps-per-year",
                "25",
            ],
        );
        std::fs::read(d.join(out).join("price.json")).unwrap()
    };
    let a = price("a", "1");
    let b = price("b", "3");
    assert_eq!(a, b);
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 3);
    let ma = read_json(d.join("a/manifest.json"));
    let mb = read_json(d.join("b/manifest.json"));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["input_digest"], mb["input_digest"]);
    assert_eq!(ma["seed"], 3);

    ok(
        d,
        &[
            "--input",
            "snapshot.json",
            "--output-dir",
            "diag",
            "diagnose",
            "--maturity",
            "1",
            "--paths",
            "4000",
            "--steps-per-year",
            "25",
        ],
    );
    let diag = read_json(d.join("diag/diagnose.json"));
    assert_eq!(diag["rows"].as_array().unwrap().len(), 6);

    ok(
        d,
        &[
            "--input",
            "snapshot.json",
            "--output-dir",
            "cal",
            "calibrate",
            "--horizon",
            "1",
        ],
    );
    assert!(
        read_json(d.join("cal/manifest.json"))["outputs"]
            .as_array()
            .unwrap()
            .len()
            > 1
    );
}
