use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hosl_cli::harness::{aggregate, read_records, AggregateRow, ResultRecord};
use serde_json::Value;

fn hosl(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hosl"))
        .current_dir(cwd)
        .env_remove("HOSL_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_sbm(cwd: &Path, out: &str, seed: &str) {
    ok(&hosl(
        cwd,
        &[
            "dataset",
            "gen-sbm",
            "--n",
            "120",
            "--classes",
            "2",
            "--p-in",
            "0.1",
            "--p-out",
            "0.01",
            "--noise-p",
            "0.9",
            "--seed",
            seed,
            "--out",
            out,
        ],
    ));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_sbm_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    gen_sbm(dir.path(), "a", "1");
    gen_sbm(dir.path(), "b", "1");
    gen_sbm(dir.path(), "c", "2");
    for f in ["edges.txt", "features.csv", "labels.txt", "meta.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        fs::read(dir.path().join("a/edges.txt")).unwrap(),
        fs::read(dir.path().join("c/edges.txt")).unwrap()
    );
}

#[test]
fn missing_labels_file_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.edges"), "0 1\n1 2\n").unwrap();
    let out = hosl(
        dir.path(),
        &[
            "dataset", "load", "--edges", "g.edges", "--labels", "nope.y",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.y"));
}

#[test]
fn load_reports_metadata_and_default_output_dir_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("g.edges"), "0 1\n1 2\n2 0\n3 4\n").unwrap();
    fs::write(p.join("g.x"), "1,0\n1,0\n0,1\n0,1\n1,1\n").unwrap();
    fs::write(p.join("g.y"), "0\n0\n1\n1\n2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hosl"))
        .current_dir(p)
        .env("HOSL_OUTPUT_DIR", p.join("envout"))
        .args([
            "dataset",
            "load",
            "--edges",
            "g.edges",
            "--features",
            "g.x",
            "--labels",
            "g.y",
        ])
        .output()
        .unwrap();
    let stdout = ok(&out);
    assert!(
        stdout.contains("nodes 5  edges 4  features 2  classes 3"),
        "{stdout}"
    );
    let meta = json(&p.join("envout/dataset/meta.json"));
    assert_eq!(meta["nodes"], 5);

    ok(&hosl(
        p,
        &[
            "dataset", "load", "--edges", "g.edges", "--labels", "g.y", "--lcc", "--out", "lcc",
        ],
    ));
    assert_eq!(json(&p.join("lcc/meta.json"))["nodes"], 3);
}

#[test]
fn random_attack_spends_the_floor_of_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    gen_sbm(p, "g", "5");
    let edges = json(&p.join("g/meta.json"))["edges"].as_u64().unwrap() as usize;
    ok(&hosl(
        p,
        &[
            "attack", "--graph", "g", "--kind", "random", "--rate", "0.2", "--seed", "3", "--out",
            "p",
        ],
    ));
    let pert = json(&p.join("p/perturbation.json"));
    let spent = pert["added"].as_array().unwrap().len() + pert["removed"].as_array().unwrap().len();
    assert_eq!(spent, (0.2 * edges as f64).floor() as usize);
    let added = fs::read_to_string(p.join("p/added.txt")).unwrap();
    assert_eq!(
        added.lines().count(),
        pert["added"].as_array().unwrap().len()
    );
}

#[test]
fn heterophily_attack_on_unlabelled_graph_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("g.edges"), "0 1\n1 2\n").unwrap();
    ok(&hosl(
        p,
        &["dataset", "load", "--edges", "g.edges", "--out", "bare"],
    ));
    let out = hosl(
        p,
        &[
            "attack",
            "--graph",
            "bare",
            "--kind",
            "heterophily",
            "--rate",
            "0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = hosl(p, &["attack", "--graph", "bare", "--kind", "random"]);
    assert_eq!(out.status.code(), Some(2), "rate is required");
}

#[test]
fn analyze_triangle_reproduces_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("t.edges"), "0 1\n1 2\n2 0\n").unwrap();
    ok(&hosl(
        p,
        &["dataset", "load", "--edges", "t.edges", "--out", "tri"],
    ));
    let table = ok(&hosl(p, &["analyze", "--graph", "tri", "--json", "r.json"]));
    assert!(table.contains("trace gap closed form"));
    let r = json(&p.join("r.json"));
    assert!((r["trace_gap"]["closed_form"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((r["trace_gap"]["direct"].as_f64().unwrap() - 1.5).abs() < 1e-8);
    assert!((r["spectrum"]["max_eigenvalue"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(r["smoothness"].is_null());
}

#[test]
fn heterophily_attack_raises_smoothness() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    gen_sbm(p, "g", "2");
    ok(&hosl(
        p,
        &[
            "attack",
            "--graph",
            "g",
            "--kind",
            "heterophily",
            "--rate",
            "0.25",
            "--seed",
            "2",
            "--out",
            "p",
        ],
    ));
    ok(&hosl(
        p,
        &[
            "analyze",
            "--graph",
            "g",
            "--no-spectrum",
            "--json",
            "clean.json",
        ],
    ));
    ok(&hosl(
        p,
        &[
            "analyze",
            "--graph",
            "p",
            "--no-spectrum",
            "--json",
            "poisoned.json",
        ],
    ));
    let clean = json(&p.join("clean.json"))["smoothness"]["global"]
        .as_f64()
        .unwrap();
    let poisoned = json(&p.join("poisoned.json"))["smoothness"]["global"]
        .as_f64()
        .unwrap();
    assert!(poisoned > clean, "{poisoned} <= {clean}");
}

#[test]
fn train_and_defend_write_checkpoints_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    gen_sbm(p, "g", "3");
    ok(&hosl(
        p,
        &[
            "train-gcn",
            "--graph",
            "g",
            "--epochs",
            "30",
            "--out",
            "t",
            "--checkpoint-format",
            "csv",
        ],
    ));
    assert!(
        json(&p.join("t/result.json"))["test_accuracy"]
            .as_f64()
            .unwrap()
            > 0.5
    );
    assert!(fs::read_to_string(p.join("t/params.csv"))
        .unwrap()
        .starts_with("matrix,row,col,value"));

    ok(&hosl(
        p,
        &[
            "defend",
            "--graph",
            "g",
            "--outer-iters",
            "5",
            "--eta",
            "1,0.5",
            "--trace-loss",
            "--out",
            "d",
        ],
    ));
    let result = json(&p.join("d/result.json"));
    assert_eq!(result["feasible"], true);
    assert_eq!(result["learner"]["eta"].as_array().unwrap().len(), 2);
    let trace = json(&p.join("d/loss_trace.json"));
    assert_eq!(trace.as_array().unwrap().len(), 5);
    assert_eq!(trace[0]["loss"]["fidelity"].as_array().unwrap().len(), 2);
    assert_eq!(&fs::read(p.join("d/params.bin")).unwrap()[..8], b"HOSLGCN1");

    ok(&hosl(
        p,
        &[
            "train-gcn",
            "--graph",
            "g",
            "--structure",
            "d/learned",
            "--epochs",
            "10",
            "--out",
            "t2",
        ],
    ));
}

const CONFIG: &str = r#"
schema_version = 1
seeds = [0, 1]
methods = ["gcn", "hosl"]
save_structures = true

[dataset]
sbm = { n = 60, classes = 2, p_in = 0.15, p_out = 0.02, noise_p = 0.9 }

[attack]
kind = "heterophily"
rates = [0.0, 0.25]

[train]
epochs = 40

[learner]
lambda = 1.0
beta = 0.1
outer_iters = 10
"#;

fn run_config(p: &Path, text: &str, out: &str) -> Output {
    fs::write(p.join("exp.toml"), text).unwrap();
    hosl(
        p,
        &["run", "exp.toml", "--threads", "2", "--output-dir", out],
    )
}

fn strip_times(mut records: Vec<ResultRecord>) -> Vec<ResultRecord> {
    for r in &mut records {
        r.attack_seconds = 0.0;
        r.train_seconds = 0.0;
        r.wall_time = 0.0;
    }
    records
}

#[test]
fn run_writes_consistent_tables_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let stdout = ok(&run_config(p, CONFIG, "a"));
    assert!(stdout.contains("hosl"));
    ok(&run_config(p, CONFIG, "b"));

    let records = read_records(&p.join("a/records.csv")).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2);
    assert!(records
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.test_accuracy)));
    assert_eq!(
        strip_times(records.clone()),
        strip_times(read_records(&p.join("b/records.csv")).unwrap())
    );

    // aggregates are re-derivable from the per-seed rows
    let written: Vec<AggregateRow> =
        serde_json::from_str(&fs::read_to_string(p.join("a/aggregate.json")).unwrap()).unwrap();
    assert_eq!(written, aggregate(&records));
    assert_eq!(written.len(), 4);

    let curves = fs::read_to_string(p.join("a/curves.csv")).unwrap();
    assert!(curves.starts_with("dataset,attack,method,x,metric,mean,std,runs"));
    assert_eq!(
        curves.lines().filter(|l| l.contains(",accuracy,")).count(),
        4
    );
    assert_eq!(json(&p.join("a/failures.json")), Value::Array(vec![]));
    assert!(p
        .join("a/loss_traces/sbm_heterophily_r0.25_seed1.json")
        .exists());
    assert!(p
        .join("a/structures/sbm_heterophily_r0.25_seed1/meta.json")
        .exists());
}

#[test]
fn run_rejects_an_empty_seed_list_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        &CONFIG.replace("seeds = [0, 1]", "seeds = []"),
        "o",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn per_seed_failures_are_recorded_and_reflected_in_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG
        .replace(
            "kind = \"heterophily\"",
            "kind = \"targeted_heterophily\"\ntargets = [0, 500]",
        )
        .replace("rates = [0.0, 0.25]", "budgets = [1]");
    let out = run_config(dir.path(), &text, "o");
    assert_eq!(out.status.code(), Some(1));
    let failures = json(&dir.path().join("o/failures.json"));
    assert_eq!(failures.as_array().unwrap().len(), 2);
    assert_eq!(failures[0]["stage"], "attack");
}
