use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quacc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quacc"))
        .args(args)
        .env_remove("QUACC_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&raw).expect("schema compiles")
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, setting: &str, n: usize, seed: u64) -> String {
    let csv = dir.join(format!("{setting}.csv"));
    let out = quacc(&[
        "simulate",
        "--setting",
        setting,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    stdout_json(&out);
    csv.to_str().unwrap().to_string()
}

#[test]
fn test_command_reports_each_tau() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "S1", 400, 3);
    let out = quacc(&[
        "test", "--y", "Y", "--x", "X", "--z", "Z1,Z2", "--seed", "7", &csv,
    ]);
    let report = stdout_json(&out);
    assert_valid(&schema("test_report.schema.json"), &report);
    let rows = report["results"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let taus: Vec<f64> = rows.iter().map(|r| r["tau"].as_f64().unwrap()).collect();
    assert_eq!(taus, vec![0.1, 0.5, 0.9]);
    assert_eq!(report["null"]["kind"], "independence");
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "S2", 300, 5);
    let args = [
        "test", "--y", "Y", "--x", "X", "--z", "Z1", "--tau", "0.2,0.8", "--seed", "11", &csv,
    ];
    let a = quacc(&args);
    let b = quacc(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = quacc(&[
        "test", "--y", "Y", "--x", "X", "--z", "Z1", "--tau", "0.2,0.8", "--seed", "12", &csv,
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "S1", 200, 1);

    let missing = quacc(&["test", "--y", "Y", "--x", "hematocrit", "--seed", "1", &csv]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("hematocrit"));

    for bad in [
        vec!["--tau", "1.0"],
        vec!["--alpha", "0.6"],
        vec!["--folds", "1"],
        vec!["--tau", "0.9:0.1:0.1"],
    ] {
        let mut args = vec!["test", "--y", "Y", "--x", "X", "--seed", "1"];
        args.extend(bad.iter().copied());
        args.push(&csv);
        assert_eq!(quacc(&args).status.code(), Some(2), "{bad:?}");
    }
    assert_eq!(
        quacc(&["test", "--y", "Y", "--x", "X", &csv]).status.code(),
        Some(2)
    );

    let absent = dir.path().join("absent.csv");
    let out = quacc(&[
        "test",
        "--y",
        "Y",
        "--x",
        "X",
        "--seed",
        "1",
        absent.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let tiny = dir.path().join("tiny.csv");
    let rows: String = (0..20)
        .map(|i| format!("{},{}\n", i, (i * 7) % 20))
        .collect();
    std::fs::write(&tiny, format!("a,b\n{rows}")).unwrap();
    let out = quacc(&[
        "test",
        "--y",
        "a",
        "--x",
        "b",
        "--tau",
        "0.1",
        "--seed",
        "1",
        tiny.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let threads = Command::new(env!("CARGO_BIN_EXE_quacc"))
        .args(["test", "--y", "Y", "--x", "X", "--seed", "1", &csv])
        .env("QUACC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn semicolon_files_with_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("semi.csv");
    let mut body = String::from("u;v\n");
    for i in 0..300 {
        let u = ((i * 37) % 101) as f64 / 10.0;
        let v = if i % 17 == 0 {
            String::new()
        } else {
            format!("{}", ((i * 53) % 97) as f64 / 10.0)
        };
        body.push_str(&format!("{u};{v}\n"));
    }
    std::fs::write(&path, body).unwrap();
    let out = quacc(&[
        "test",
        "--y",
        "u",
        "--x",
        "v",
        "--tau",
        "0.5",
        "--seed",
        "2",
        "--delimiter",
        ";",
        path.to_str().unwrap(),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["results"][0]["n_effective"], 282);
}

#[test]
fn graph_vote_on_full_samples_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "graph", 600, 4);
    let out_dir = dir.path().join("out");
    let out = quacc(&[
        "graph",
        &csv,
        "--vars",
        "Z,U,Y,X",
        "--tau",
        "0.5",
        "--seed",
        "9",
        "--replicates",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let summary = stdout_json(&out);
    let entry = &summary["outputs"][0];
    assert_eq!(entry["label"], "tau0.5");
    let single = read_json(&out_dir.join("skeleton_tau0.5.json"));
    let vote = read_json(&out_dir.join("skeleton_tau0.5_vote.json"));
    let validator = schema("skeleton.schema.json");
    assert_valid(&validator, &single);
    assert_valid(&validator, &vote);
    assert_eq!(single["edges"], vote["edges"]);
    let dot = std::fs::read_to_string(out_dir.join("skeleton_tau0.5.dot")).unwrap();
    assert!(dot.starts_with("graph skeleton {"));
    assert_eq!(
        dot.matches(" -- ").count(),
        single["edges"].as_array().unwrap().len()
    );
}

#[test]
fn graph_with_pcorr_backend_and_subsamples() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "graph", 800, 6);
    let out_dir = dir.path().join("pc");
    let out = quacc(&[
        "graph",
        &csv,
        "--backend",
        "pcorr",
        "--seed",
        "1",
        "--replicates",
        "5",
        "--subsample",
        "500",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["outputs"].as_array().unwrap().len(), 1);
    assert_eq!(summary["outputs"][0]["vote"]["subsample"], 500);
    let reps = read_json(&out_dir.join("skeleton_pcorr_replicates.json"));
    assert_eq!(reps.as_array().unwrap().len(), 5);
    assert_eq!(reps[0]["vertices"].as_array().unwrap().len(), 10);

    let too_many = quacc(&[
        "graph",
        &csv,
        "--seed",
        "1",
        "--subsample",
        "900",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(too_many.status.code(), Some(2));
}

#[test]
fn pairwise_matrices_cover_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "S3", 400, 8);
    let out_dir = dir.path().join("pw");
    let out = quacc(&[
        "pairwise",
        &csv,
        "--tau",
        "0.5",
        "--seed",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["pairs"], 6);
    assert_eq!(summary["files"].as_array().unwrap().len(), 4);
    for mode in ["marginal", "maximal"] {
        let text = std::fs::read_to_string(out_dir.join(format!("{mode}_tau0.5_rho.csv"))).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0], vec!["variable", "Y", "X", "Z1", "Z2"]);
        for i in 1..5 {
            for j in 1..5 {
                if i == j {
                    assert_eq!(rows[i][j], "NA");
                } else {
                    assert_eq!(rows[i][j], rows[j][i]);
                    let v: f64 = rows[i][j].parse().unwrap();
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}

#[test]
fn simulate_sidecars_validate() {
    let dir = tempfile::tempdir().unwrap();
    let validator = schema("simulate_sidecar.schema.json");
    for setting in ["S1", "S2", "S3", "graph"] {
        let csv = simulate(dir.path(), setting, 100, 2);
        let side = read_json(&Path::new(&csv).with_extension("json"));
        assert_valid(&validator, &side);
        assert_eq!(side["spec"]["seed"], 2);
        if setting == "graph" {
            assert_eq!(side["truth"]["edges"].as_array().unwrap().len(), 9);
        } else {
            assert!(side["truth"].is_null());
        }
        let header = std::fs::read_to_string(&csv)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(
            header.split(',').count(),
            if setting == "graph" { 10 } else { 4 }
        );
    }
    let bad = quacc(&[
        "simulate",
        "--setting",
        "S4",
        "--n",
        "10",
        "--seed",
        "1",
        "--out",
        "x.csv",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_reject_expands_tau_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("reject.csv");
    let out = quacc(&[
        "--threads",
        "1",
        "bench",
        "reject",
        "--setting",
        "S1",
        "--n",
        "200",
        "--taus",
        "0.1:0.9:0.4",
        "--thetas",
        "1,8",
        "--replicates",
        "3",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "setting,n,tau,theta,replicates,rejection_rate");
    assert_eq!(lines.len(), 1 + 3 * 2);
}

#[test]
fn bench_graph_rows_per_backend() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.json");
    let out = quacc(&[
        "bench",
        "graph",
        "--n",
        "400",
        "--replicates",
        "2",
        "--tau",
        "0.5",
        "--backend",
        "quacc,pcorr",
        "--max-order",
        "1",
        "--seed",
        "2",
        "--records",
        records.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.contains("pcorr"));
    let recs = read_json(&records);
    assert_eq!(recs.as_array().unwrap().len(), 4);
}

#[test]
fn jitter_and_qq_transform_are_rank_preserving() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ties.csv");
    let rows: String = (0..200).map(|i| format!("{},{}\n", i % 7, (i * 13) % 200)).collect();
    std::fs::write(&path, format!("a,b\n{rows}")).unwrap();
    let base = ["test", "--y", "a", "--x", "b", "--tau", "0.5", "--seed", "4"];
    let run = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        args.push(path.to_str().unwrap());
        stdout_json(&quacc(&args))
    };
    let plain = run(&[]);
    let qq = run(&["--qq-transform"]);
    assert_eq!(plain["results"][0]["rho_hat"], qq["results"][0]["rho_hat"]);
    let jittered = run(&["--jitter", "a", "--qq-transform"]);
    assert_eq!(jittered, run(&["--jitter", "a", "--qq-transform"]));

    let bad = quacc(&["test", "--y", "a", "--x", "b", "--seed", "4", "--jitter", "c", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
}
