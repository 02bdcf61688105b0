use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn replens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_replens"))
        .args(args)
        .env_remove("REPLENS_TOL")
        .output()
        .expect("binary runs")
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&raw).expect("schema compiles")
}

fn assert_valid(schema_name: &str, doc: &[u8]) -> Value {
    let value: Value = serde_json::from_slice(doc).expect("valid JSON");
    let compiled = schema(schema_name);
    if let Err(errors) = compiled.validate(&value) {
        let msgs: Vec<String> = errors.map(|e| e.to_string()).collect();
        panic!("{schema_name}: {msgs:?}");
    }
    value
}

fn rows(csv_bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(csv_bytes);
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let data = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, data)
}

#[test]
fn stationary_datum_rows_equal_phi() {
    let out = replens(&[
        "evaluate", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=1,m=0",
        "--t", "0.1:2:0.1", "--x", "-4:4:0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (header, data) = rows(&out.stdout);
    assert_eq!(header, ["t", "x", "u"]);
    assert_eq!(data.len(), 20 * 81);
    for r in &data {
        let phi = (-r[1] * r[1] / 2.0).exp() / (2.0 * PI).sqrt();
        assert!((r[2] - phi).abs() <= 1e-9);
    }
}

#[test]
fn csv_reparses_into_the_requested_grid() {
    let out = replens(&[
        "evaluate", "--fitness", "inverted", "--sigma", "0.5", "--datum",
        "mixture:0.4*gaussian:a=2,m=-1;0.6*gaussian:a=3,m=0.5", "--t", "0:0.3:0.05", "--x", "-2:2:0.25",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, data) = rows(&out.stdout);
    let ts: Vec<f64> = (0..=6).map(|i| i as f64 * 0.05).collect();
    let xs: Vec<f64> = (0..=16).map(|i| -2.0 + i as f64 * 0.25).collect();
    assert_eq!(data.len(), ts.len() * xs.len());
    for (k, r) in data.iter().enumerate() {
        assert_eq!(r[0], ts[k / xs.len()]);
        assert_eq!(r[1], xs[k % xs.len()]);
        assert!(r[2] >= 0.0);
    }
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('"'));
    assert!(!text.contains('\r'));
}

#[test]
fn whole_range_past_extinction_exits_2() {
    let out = replens(&[
        "evaluate", "--fitness", "inverted", "--sigma", "1", "--datum", "gaussian:a=1,m=0",
        "--t", "0.5:1:0.1", "--x", "-1:1:0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn partial_extinction_writes_zero_rows_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let out = replens(&[
        "evaluate", "--fitness", "inverted", "--sigma", "1", "--datum", "gaussian:a=1,m=0",
        "--t", "0.3:0.5:0.1", "--x", "-1:1:1", "-o", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, data) = rows(&std::fs::read(&path).unwrap());
    for r in &data {
        if r[0] >= PI / 8.0 {
            assert_eq!(r[2], 0.0);
        } else {
            assert!(r[2] > 0.0);
        }
    }
    let side = std::fs::read(dir.path().join("u.csv.status.json")).unwrap();
    let v = assert_valid("status.schema.json", &side);
    assert_eq!(v["status"], "extinct");
    assert_eq!(v["extinction_time"].as_f64().unwrap(), PI / 8.0);
}

#[test]
fn invalid_inputs_exit_3() {
    let base = ["evaluate", "--fitness", "harmonic", "--sigma", "1", "--t", "0:1:0.5", "--x", "0:1:0.5", "--datum"];
    for lit in ["gaussian:a=x,m=0", "gaussian:a=-1,m=0", "mixture:0.5*gaussian:a=1,m=0", "table:/no/such.csv", "blob"] {
        let mut args = base.to_vec();
        args.push(lit);
        assert_eq!(replens(&args).status.code(), Some(3), "{lit}");
    }
    let bad_sigma = replens(&[
        "evaluate", "--fitness", "harmonic", "--sigma", "-1", "--datum", "gaussian:a=1,m=0", "--t", "0:1:1", "--x", "0:1:1",
    ]);
    assert_eq!(bad_sigma.status.code(), Some(3));
    let bad_range = replens(&[
        "evaluate", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t", "1:0:1", "--x", "0:1:1",
    ]);
    assert_eq!(bad_range.status.code(), Some(3));
    let bad_tol = Command::new(env!("CARGO_BIN_EXE_replens"))
        .args(["evaluate", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t", "0:1:1", "--x", "0:1:1"])
        .env("REPLENS_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad_tol.status.code(), Some(3));
}

#[test]
fn tabulated_literal_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tent.csv");
    std::fs::write(&path, "x,u\n-1,0\n0,1\n1,0\n").unwrap();
    let lit = format!("table:{}", path.display());
    let out = replens(&["meanfitness", "--fitness", "inverted", "--sigma", "1", "--datum", &lit, "--t", "0:0.7:0.1", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = assert_valid("meanfitness.schema.json", &out.stdout);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!((rows[0]["second_moment"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-12);
    for r in rows {
        assert_eq!(r["fbar"], r["second_moment"]);
    }
}

#[test]
fn meanfitness_columns() {
    let out = replens(&["meanfitness", "--fitness", "harmonic", "--sigma", "2", "--datum", "gaussian:a=1,m=1", "--t", "0:10:0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, data) = rows(&out.stdout);
    assert_eq!(header, ["t", "fbar", "second_moment"]);
    for r in &data {
        assert_eq!(r[1], -r[2]);
    }
    assert!((data.last().unwrap()[2] - 2.0).abs() < 1e-12);
}

#[test]
fn json_reports_match_their_schemas() {
    let ev = replens(&[
        "evaluate", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=3,m=2", "--t", "0:1:0.5", "--x", "-1:1:1", "--format", "json",
    ]);
    let v = assert_valid("evaluate.schema.json", &ev.stdout);
    assert_eq!(v.as_array().unwrap().len(), 9);

    let ex = replens(&[
        "extinct", "--sigma", "1", "--sigma", "0.5", "--datum", "gaussian:a=2,m=0", "--datum", "gaussian:a=1,m=0",
        "--datum", "mixture:0.5*gaussian:a=1,m=0;0.5*gaussian:a=4,m=1",
    ]);
    assert_eq!(ex.status.code(), Some(0));
    let v = assert_valid("extinct.schema.json", &ex.stdout);
    assert_eq!(v[0]["sigma"].as_f64(), Some(1.0));
    let first = &v[0]["rows"][0];
    assert_eq!(first["extinction_time"].as_f64().unwrap(), PI / 8.0);

    let cv = replens(&["converge", "--sigma", "1", "--datum", "gaussian:a=3,m=2"]);
    assert_eq!(cv.status.code(), Some(0));
    let v = assert_valid("converge.schema.json", &cv.stdout);
    assert_eq!(v["times"].as_array().unwrap().len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let snaps = dir.path().join("snaps.csv");
    let or = replens(&[
        "oracle", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=2,m=1", "--t-end", "0.2",
        "--dt", "1e-3", "--nx", "401", "--snapshots", "0.05:0.15:0.05", "--snapshots-csv", snaps.to_str().unwrap(),
    ]);
    assert_eq!(or.status.code(), Some(0), "{}", String::from_utf8_lossy(&or.stderr));
    let v = assert_valid("oracle.schema.json", &or.stdout);
    assert_eq!(v["report"]["times"].as_array().unwrap().len(), 5);
    assert!(v["report"]["max_linf"].as_f64().unwrap() < 1e-3);
    let (header, data) = rows(&std::fs::read(&snaps).unwrap());
    assert_eq!(header, ["t", "x", "u"]);
    assert_eq!(data.len(), 5 * 401);
}

#[test]
fn oracle_failures_map_to_exit_codes() {
    let past = replens(&[
        "oracle", "--fitness", "inverted", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t-end", "0.5",
    ]);
    assert_eq!(past.status.code(), Some(3));
    let coarse = replens(&[
        "oracle", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t-end", "0.5", "--dt", "0.5",
    ]);
    assert_eq!(coarse.status.code(), Some(3));
    // A 1-wide box loses mass through the Dirichlet walls.
    let leaky = replens(&[
        "oracle", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t-end", "1",
        "--half-width", "1", "--nx", "201", "--dt", "1e-3",
    ]);
    assert_eq!(leaky.status.code(), Some(4), "{}", String::from_utf8_lossy(&leaky.stderr));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = |p: &str| {
        vec![
            "evaluate".to_string(), "--fitness".into(), "inverted".into(), "--sigma".into(), "1".into(),
            "--datum".into(), "mixture:0.3*gaussian:a=1,m=-1;0.7*gaussian:a=4,m=2".into(),
            "--t".into(), "0.1:0.6:0.05".into(), "--x".into(), "-3:3:0.05".into(), "-o".into(), p.to_string(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let argv = args(p.to_str().unwrap());
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_eq!(replens(&argv).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.csv.status.json")).unwrap(),
        std::fs::read(dir.path().join("b.csv.status.json")).unwrap()
    );

    let run = || replens(&["extinct", "--sigma", "1", "--sigma", "2", "--datum", "gaussian:a=1,m=0", "--datum", "gaussian:a=3,m=1"]).stdout;
    assert_eq!(run(), run());
}

#[test]
fn tolerance_from_environment() {
    let run = |tol: &str| {
        Command::new(env!("CARGO_BIN_EXE_replens"))
            .args(["evaluate", "--fitness", "harmonic", "--sigma", "1", "--datum", "gaussian:a=2,m=0", "--t", "0.5:0.5:1", "--x", "0:0:1"])
            .env("REPLENS_TOL", tol)
            .output()
            .unwrap()
    };
    assert_eq!(run("1e-6").status.code(), Some(0));
    assert_eq!(run("2").status.code(), Some(3));
    assert_eq!(run("-1e-6").status.code(), Some(3));
}

#[test]
fn quiet_suppresses_sidecar_on_stderr() {
    let args = [
        "evaluate", "--fitness", "inverted", "--sigma", "1", "--datum", "gaussian:a=1,m=0", "--t", "0.3:0.5:0.1", "--x", "0:0:1",
    ];
    let loud = replens(&args);
    assert!(String::from_utf8_lossy(&loud.stderr).contains("\"status\":\"extinct\""));
    let mut quiet_args = vec!["--quiet"];
    quiet_args.extend(args);
    assert!(replens(&quiet_args).stderr.is_empty());
}
