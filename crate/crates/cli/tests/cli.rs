use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 4
rounds = 2
num_clients = 4
clients_per_round = 3
batch_size = 4
local_epochs = 1
lr = 0.2
alpha = 1.0
init_scale = 0.3

[model]
kind = "mlp"
hidden = [8]

[dataset]
kind = "blobs"
num_classes = 3
per_class = 30
test_per_class = 6
dim = 4
spread = 0.1
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neurontrace"));
    c.env_remove("NEURONTRACE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A trained tiny run under `dir/run`.
fn trained(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "tiny.toml", TINY);
    let out = dir.join("run");
    let o = run(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn train_writes_a_run_and_guards_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    assert!(out.join("manifest.toml").is_file());
    for r in ["round_0000", "round_0001", "round_0002"] {
        assert!(out.join(r).join("global.ckpt").is_file(), "{r}");
    }
    let first = std::fs::read(out.join("round_0002/global.ckpt")).unwrap();
    let cfg = dir.path().join("tiny.toml");
    let o = run(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = run(&["train", "--config", s(&cfg), "--out", s(&out), "--force"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("round_0002/global.ckpt")).unwrap(), first);
}

#[test]
fn missing_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("rounds = 2\n", ""));
    let o = run(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rounds"), "{}", stderr(&o));
}

#[test]
fn trace_selectors_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = trained(dir.path());
    let reports = dir.path().join("reports");

    let o = run(&["trace", "--run", s(&run_dir), "--round", "2", "--inputs", "0", "--out", s(&reports)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> =
        std::fs::read_dir(&reports).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, vec!["input_00000.json", "summary.json"]);

    let o = run(&["trace", "--run", s(&run_dir), "--round", "2", "--inputs", "label=7"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(&["trace", "--run", s(&run_dir), "--round", "9", "--inputs", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains('9'));
    let o = run(&["trace", "--run", s(&run_dir), "--round", "2", "--inputs", "1", "--t", "1e9"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));

    let o = run(&["trace", "--run", s(&run_dir), "--round", "1", "--inputs", "label=2", "--detail"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let default_dir = run_dir.join("reports/round_0001");
    assert_eq!(std::fs::read_dir(&default_dir).unwrap().count(), 6 + 1);
    let o = run(&["trace", "--run", s(&run_dir), "--round", "1", "--inputs", "all-correct"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn heatmap_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = trained(dir.path());
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    assert_eq!(code(&run(&["trace", "--run", s(&run_dir), "--round", "2", "--inputs", "3", "--out", s(&r1)])), 0);
    assert_eq!(code(&run(&["trace", "--run", s(&run_dir), "--round", "1", "--inputs", "3", "--out", s(&r2)])), 0);

    let csv = dir.path().join("h.csv");
    let o = run(&["report", "heatmap", "--reports", &format!("{}/*.json", s(&r1)), "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("label,client_"), "{text}");
    assert_eq!(lines.len(), 2);
    let sum: f64 = lines[1].split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() <= 1e-9);

    let o = run(&["report", "heatmap", "--reports", &format!("{}/r*/input_*.json", s(dir.path())), "--out", s(&csv)]);
    assert_eq!(code(&o), 2, "mixed rounds: {}", stderr(&o));
    let o = run(&["report", "heatmap", "--reports", &format!("{}/nothing/*.json", s(dir.path())), "--out", s(&csv)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn experiments_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["experiment", "nonsense", "--config", "x.toml", "--out", "y"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cross-silo"), "{}", stderr(&o));

    let forgetting = tiny(&[("rounds", "4")], "[partition]\nkind = \"clusters\"\nclusters = [[0], [1, 2]]\n[experiment]\nexclude_after = 2\n");
    let cfg = write_config(dir.path(), "f.toml", &forgetting);
    let out = dir.path().join("fout");
    let o = run(&["experiment", "forgetting", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["accuracy_overall.csv", "accuracy_excluded.csv", "forgetting.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = run(&["experiment", "forgetting", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3);

    let overlapping = tiny(&[("clients_per_round", "4")], "[partition]\nkind = \"label_groups\"\ngroups = [[0, 1], [1], [2], [0]]\n");
    let cfg = write_config(dir.path(), "c.toml", &overlapping);
    let o = run(&["experiment", "cross-silo", "--config", s(&cfg), "--out", s(&dir.path().join("cout"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

/// The tiny config with top-level `overrides` and extra tables appended.
fn tiny(overrides: &[(&str, &str)], tables: &str) -> String {
    let mut text: String = TINY
        .lines()
        .map(|l| {
            let key = l.split('=').next().unwrap().trim();
            match overrides.iter().find(|(k, _)| *k == key) {
                Some((k, v)) => format!("{k} = {v}\n"),
                None => format!("{l}\n"),
            }
        })
        .collect();
    text.push_str(tables);
    text
}

#[test]
fn thread_cap_is_validated() {
    let o = bin().env("NEURONTRACE_THREADS", "zero").args(["report", "heatmap", "--reports", "x", "--out", "y"]).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("NEURONTRACE_THREADS"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let o = bin()
        .env("NEURONTRACE_THREADS", "1")
        .args(["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
