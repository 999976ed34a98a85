use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chebchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn parse_table(text: &str) -> Vec<(String, String, String, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn covariance_table_matches_golden() {
    let o = run(&["covariance-table", "--n-max", "8", "--nu", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("m,n,method,value\n"));
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/covariance_table_k8_nu0.csv")).unwrap();
    let got = parse_table(&text);
    let want = parse_table(&golden);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!((&g.0, &g.1, &g.2), (&w.0, &w.1, &w.2));
        assert!((g.3 - w.3).abs() < 1e-7, "{g:?} vs {w:?}");
    }
}

#[test]
fn json_output_is_structured() {
    let o = run(&["covariance-table", "--n-max", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["rows"][1]["method"], "time_domain");

    let o = run(&["scenario", "fixed-point", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scenario"], "fixed-point");
    assert_eq!(v["config"]["n"], 64);
    assert!(v["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["scenario", "periodic"]).status.code(), Some(0));
    let failing = run(&["scenario", "basin-decay"]);
    assert_eq!(failing.status.code(), Some(1));
    assert!(stderr(&failing).contains("check failed"));
    assert!(stdout(&failing).contains("basin-decay,check,t^-1/2_fit_max_deviation,passed,false"));
    assert_eq!(run(&["scenario", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["covariance-table", "--bogus"]).status.code(), Some(2));
    let bad = run(&["scenario", "growth", "--param", "bogus=1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("bogus"));
    let numerical = run(&["scenario", "covariance-table", "--param", "k=116"]);
    assert_eq!(numerical.status.code(), Some(3), "{}", stderr(&numerical));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "format = \"csv\"\n[covariance-table]\nn_max = 4\n[scenario.fixed-point]\nn = 10\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(parse_table(&stdout(&run(&["covariance-table", "--config", c]))).len(), 10);
    assert_eq!(parse_table(&stdout(&run(&["covariance-table", "--config", c, "--n-max", "2"]))).len(), 3);
    let out = stdout(&run(&["scenario", "fixed-point", "--config", c]));
    assert!(out.contains("fixed-point,config,n,,10\n"));

    std::fs::write(&cfg, "[covariance-table]\nwidth = 4\n").unwrap();
    let o = run(&["covariance-table", "--config", c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"));
}

#[test]
fn out_file_and_describe() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.csv");
    let o = run(&["kernel-table", "--n-max", "2", "--s-max", "1", "--ds", "0.5", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.starts_with("n,s,value\n1,0.0,"));

    let d = run(&["scenario", "covariance-table", "--describe"]);
    assert_eq!(d.status.code(), Some(0));
    assert!(stdout(&d).contains("neighbour"));
}

#[test]
fn seeded_commands_are_reproducible() {
    let args = ["simulate", "--n", "16", "--dt", "1", "--t-final", "4", "--trajectories", "50", "--seed", "3"];
    let a = stdout(&run(&args));
    assert_eq!(a, stdout(&run(&args)));
    assert!(a.contains("simulate,config,seed,,3\n"));
    let mut other = args;
    other[10] = "4";
    assert_ne!(a, stdout(&run(&other)));

    let s = run(&["sample", "--n", "4", "--count", "3", "--threads", "1"]);
    assert_eq!(s.status.code(), Some(0));
    let text = stdout(&s);
    assert!(text.contains("sample,config,seed,,2026\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("sample,draws,")).count(), 12);
}

#[test]
fn simulate_options() {
    let o = run(&["simulate", "--n", "8", "--dt", "0.5", "--t-final", "1", "--trajectories", "4", "--initial", "impulse:2", "--unforced", "--integrator", "euler"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("simulate,ensemble,0,mean_energy,0.5\n"));
    assert_eq!(run(&["simulate", "--initial", "sideways"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--dt", "0"]).status.code(), Some(2));
}
