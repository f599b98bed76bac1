use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[data]
rule = "static-only"
train = 32
validation = 16
test = 16

[search]
nodes = 1
embed_dim = 4

[train]
epochs = 1
batch_size = 16
finetune_steps = 1
"#;

fn mmnas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmnas")).args(args).output().unwrap()
}

fn setup() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("runs");
    let (c, o) = (config.display().to_string(), out.display().to_string());
    (dir, c, o)
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(mmnas(&["--help"]).status.code(), Some(0));
    assert_eq!(mmnas(&["--version"]).status.code(), Some(0));
    assert!(text(&mmnas(&["run", "--help"])).contains("--no-penalty"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mmnas(&[]).status.code(), Some(1));
    assert_eq!(mmnas(&["fly"]).status.code(), Some(1));
    assert_eq!(mmnas(&["run", "--task", "nonsense"]).status.code(), Some(1));
    assert_eq!(mmnas(&["run", "--discretizer", "argmax"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let (dir, config, out) = setup();
    let missing = mmnas(&["prune", "--config", &config, "--out", &out]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing).contains("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nlr_weights = -1.0\n").unwrap();
    assert_eq!(mmnas(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mmnas(&["run", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn run_then_guard_then_force() {
    let (_dir, config, out) = setup();
    let first = mmnas(&["run", "--config", &config, "--out", &out, "--seed", "4"]);
    assert_eq!(first.status.code(), Some(0), "{}", text(&first));
    assert!(text(&first).contains("auroc"));

    let again = mmnas(&["run", "--config", &config, "--out", &out, "--seed", "4"]);
    assert_eq!(again.status.code(), Some(2));
    assert!(text(&again).contains("--force"));
    let forced = mmnas(&["run", "--config", &config, "--out", &out, "--seed", "4", "--force"]);
    assert_eq!(forced.status.code(), Some(0));

    let report = mmnas(&["report", &out]);
    assert_eq!(report.status.code(), Some(0));
    assert!(text(&report).contains("discretizer prune"));
    assert!(Path::new(&out).join("report.json").exists());
    assert!(Path::new(&out).join("trajectory.csv").exists());
}

#[test]
fn no_penalty_writes_a_separate_run() {
    let (_dir, config, out) = setup();
    for extra in [None, Some("--no-penalty")] {
        let mut args = vec!["train", "--config", &config, "--out", &out];
        args.extend(extra);
        assert_eq!(mmnas(&args).status.code(), Some(0));
    }
    let runs = std::fs::read_dir(&out).unwrap().count();
    assert_eq!(runs, 2);
}

#[test]
fn report_on_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmnas(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out).contains("no runs found"));
}

#[test]
fn gen_data_writes_dataset() {
    let (_dir, config, out) = setup();
    let result = mmnas(&["gen-data", "--config", &config, "--out", &out, "--task", "late-combo"]);
    assert_eq!(result.status.code(), Some(0));
    let data = mmnas_core::data::load_dataset(&Path::new(&out).join("dataset.ndjson")).unwrap();
    assert_eq!(data.len(), 64);
    assert_eq!(mmnas(&["gen-data", "--config", &config, "--out", &out]).status.code(), Some(2));
}
