use std::path::Path;
use std::process::{Command, Output};

use iltlab_cli::{parse_config, parse_config_with_seed};

fn iltlab(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{command}.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_iltlab"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn mass_writes_one_positive_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = iltlab(dir.path(), "mass", r#"{"command":"mass","d":4,"u":[1,0,0,0],"seed":1}"#, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("# tool: iltlab\n# version: "));
    assert!(out.contains("# config_sha256: ") && out.contains("# seed: 1\n"));
    let rows = data_lines(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], "d,u_norm,mass,rel_err,mass_two_variable,rel_diff");
    assert!(out.contains("rel_diff\r\n"));
    let mass: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((mass - 0.01654797138011426614).abs() < 1e-12);
}

#[test]
fn same_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"pairing","d":4,"u_list":[[0.5,0,0,0]],"eval_times":[1.0],
        "payoff":{"kind":"gaussian_bump","center":[],"width":0.8},"budget":{"outer":200,"inner":10},"seed":7}"#;
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let o = iltlab(dir.path(), "pairing", cfg, &["--out", p.to_str().unwrap(), "--format", "json"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let v: serde_json::Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(v["meta"]["seed"], 7);
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
    let o = iltlab(dir.path(), "pairing", cfg, &["--seed", "8", "--format", "json"]);
    assert_ne!(o.stdout, x);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command":"schilder","set":{"kind":"halfspace","d":1,"coord":0,"a":1.0},"t_grid":[2,3,4],"samples":3000,"seed":3}"#;
    let path = dir.path().join("s.json");
    std::fs::write(&path, cfg).unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_iltlab"))
            .args(["schilder", "--config", path.to_str().unwrap()])
            .env("ILTLAB_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("3"));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(code(&run("zero")), 1);
}

#[test]
fn ldp_slope_has_five_rows_and_a_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = iltlab(dir.path(), "ldp-slope", r#"{"command":"ldp-slope","d":4,"u_list":[[1,0,0,0]],"t_grid":[4,8,12,16,20]}"#, &[]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(data_lines(&out).len(), 6);
    let limit: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("# fit_limit: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((limit - 0.5).abs() < 0.01);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // 1: schema violations, with the field path on stderr
    let o = iltlab(d, "mass", r#"{"command":"mass","d":4,"u":[1,0,0,0],"bogus":true}"#, &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = iltlab(d, "mass", r#"{"command":"ldp-slope","d":4,"u_list":[[1,0,0,0]]}"#, &[]);
    assert_eq!(code(&o), 1);
    // 2: domain errors
    let o = iltlab(d, "mass", r#"{"command":"mass","d":4,"u":[0,0,0,0]}"#, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("u != 0"));
    let o = iltlab(d, "chaos-norm", r#"{"command":"chaos-norm","d":4,"u":[1,0,0,0],"s":0.5,"t":0.2,"gamma":-2.5}"#, &[]);
    assert_eq!(code(&o), 2);
    // 3: warnings under --strict only
    let low = r#"{"command":"pairing","d":2,"u_list":[[1,0]],"eval_times":[1.0],"payoff":{"kind":"constant","value":1},
        "budget":{"outer":20,"inner":1},"seed":1}"#;
    assert_eq!(code(&iltlab(d, "pairing", low, &[])), 0);
    assert_eq!(code(&iltlab(d, "pairing", low, &["--strict"])), 3);
    // 4: infeasible programs
    let inf = r#"{"command":"rate-min","d":1,"targets":[[1.0]],"times":[0.2,0.6],
        "boxes":[{"t":0.2,"lo":[-0.05],"hi":[0.05]},{"t":0.6,"lo":[-0.05],"hi":[0.05]}]}"#;
    let o = iltlab(d, "rate-min", inf, &[]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t = 0.2"));
    // 5: selfcheck with an injected fault
    let o = iltlab(d, "selfcheck", r#"{"command":"selfcheck","fault":"wick-off-by-one"}"#, &[]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wick identity element"));
}

#[test]
fn selfcheck_faults_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = iltlab(dir.path(), "selfcheck", r#"{"command":"selfcheck","fault":"heat-kernel-2pi"}"#, &[]);
    assert_eq!(code(&o), 5);
    let rows = data_lines(&stdout(&o)).len();
    assert_eq!(rows, 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mass dual-route identity"));
}

#[test]
fn quick_selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = iltlab(dir.path(), "selfcheck", r#"{"command":"selfcheck","tier":"quick"}"#, &[]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains(",fail,"));
}

#[test]
fn rate_min_emits_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = iltlab(
        dir.path(),
        "rate-min",
        r#"{"command":"rate-min","d":2,"targets":[[0.6,0.8]],"boxes":[{"t":1.0,"lo":[0,0],"hi":[0,0]}],"n_extra_knots":3}"#,
        &["--format", "json"],
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["meta"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-4);
    assert_eq!(v["meta"]["columns"], serde_json::json!(["time", "x_1", "x_2"]));
}

#[test]
fn configs_round_trip() {
    let docs = [
        r#"{"command":"mass","d":4,"u":[1,0,0,0],"seed":1}"#,
        r#"{"command":"mass","d":4,"u":[1,0,0,0],"quad":{"method":"dirichlet_mc","nodes_or_samples":1000,"target_rel_err":0.01,"seed":2},"seed":3}"#,
        r#"{"command":"ldp-slope","d":4,"u_list":[[1,0,0,0],[0,1,0,0]],"output":{"path":"x.csv","format":"csv"}}"#,
        r#"{"command":"pairing","d":4,"u_list":[[1,0,0,0]],"eval_times":[0.5,1],"route":"both","seed":5,
            "payoff":{"kind":"combination","terms":[[0.5,{"kind":"indicator_box","lo":[-1,-1,-1,-1],"hi":[1,1,1,1]}]]}}"#,
        r#"{"command":"eta","d":4,"u":[1,0,0,0],"weight":{"family":"abs_power","p":0.5},"correlated":{"r":0.6,"s":[0.2,0.6]},"seed":9}"#,
        r#"{"command":"chaos-norm","d":4,"u":[1,0,0,0],"gamma":-1.5}"#,
        r#"{"command":"rate-min","d":1,"targets":[[1]],"boxes":[{"t":0.5,"lo":[-1],"hi":[1]}]}"#,
        r#"{"command":"asymptotic-scan","d":4,"weight":{"family":"one"}}"#,
        r#"{"command":"schilder","set":{"kind":"box","time":1,"lo":[-1],"hi":[1]},"seed":4}"#,
        r#"{"command":"selfcheck","tier":"full"}"#,
    ];
    for doc in docs {
        let cfg = parse_config(doc).unwrap();
        assert_eq!(parse_config(&cfg.emit()).unwrap(), cfg, "{doc}");
    }
    assert_eq!(parse_config_with_seed(docs[0], Some(11)).unwrap().seed, Some(11));
}
