use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stackrl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stackrl"));
    cmd.env_remove("STACKRL_OUT_DIR");
    cmd
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../reference")
}

/// Temp directory holding a copy of the reference model and a short config.
fn workspace(episodes: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(reference().join("ref.model"), dir.path().join("ref.model")).unwrap();
    let cfg = fs::read_to_string(reference().join("ref.cfg"))
        .unwrap()
        .replace("episodes = 2000", &format!("episodes = {episodes}"));
    fs::write(dir.path().join("ref.cfg"), cfg).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn only_run_dir(parent: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(parent).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn run_writes_the_configured_csv_and_provenance() {
    let ws = workspace(30);
    let out = ws.path().join("out");
    let o = stackrl()
        .args(["run", "--config"])
        .arg(ws.path().join("ref.cfg"))
        .args(["--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = fs::read_to_string(ws.path().join("ref_regret.csv")).unwrap();
    assert!(csv.starts_with("k,leader_inc,leader_cum,follower_inc,follower_cum,a1,wall_ms\n"));
    assert_eq!(csv.lines().count(), 31);

    let run_dir = only_run_dir(&out);
    assert!(run_dir.file_name().unwrap().to_str().unwrap().starts_with("run-"));
    assert_eq!(fs::read_to_string(run_dir.join("regret.csv")).unwrap(), csv);
    assert!(run_dir.join("build_info.txt").exists());
    assert!(run_dir.join("model.txt").exists());
    let effective = fs::read_to_string(run_dir.join("effective_config.cfg")).unwrap();
    assert!(effective.contains("seed = 7"));
}

#[test]
fn overrides_beat_the_config_file() {
    let ws = workspace(10);
    let out = ws.path().join("out");
    let o = stackrl()
        .args(["run", "--config"])
        .arg(ws.path().join("ref.cfg"))
        .args(["--set", "learner.c1=0.5", "--set", "run.seed=3", "--seed", "99", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let effective = fs::read_to_string(only_run_dir(&out).join("effective_config.cfg")).unwrap();
    assert!(effective.contains("c1 = 0.5"), "{effective}");
    assert!(effective.contains("seed = 99"), "{effective}");
    assert!(effective.contains("episodes = 10"));
}

#[test]
fn same_seed_same_csv() {
    let ws = workspace(60);
    let run = |name: &str| {
        let o = stackrl()
            .args(["run", "--config"])
            .arg(ws.path().join("ref.cfg"))
            .arg("--set")
            .arg(format!("run.output={name}"))
            .arg("--out")
            .arg(ws.path().join("out"))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(ws.path().join(name)).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn out_dir_defaults_to_the_environment_variable() {
    let ws = workspace(5);
    let out = ws.path().join("from_env");
    let o = stackrl()
        .env("STACKRL_OUT_DIR", &out)
        .args(["run", "--config"])
        .arg(ws.path().join("ref.cfg"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(only_run_dir(&out).join("regret.csv").exists());
}

#[test]
fn report_summarizes_a_trace() {
    let golden = reference().join("golden/ref_seed7.csv");
    let baseline = reference().join("golden/uniform_seed7.csv");
    let o = stackrl().arg("report").arg(&golden).arg("--baseline").arg(&baseline).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("episodes 2000"));
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("leader_sublinearity_ratio") <= 0.5);
    assert!(value("follower_sublinearity_ratio") <= 0.5);
    assert!(value("leader_growth_ratio") >= 3.0);
}

#[test]
fn report_on_a_missing_file_exits_3() {
    let o = stackrl().args(["report", "missing.csv"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error class=unreadable_csv "), "{err}");
}

#[test]
fn unknown_verb_exits_2() {
    let o = stackrl().arg("train").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error class=unknown_verb "));
}

#[test]
fn bad_configs_exit_3() {
    let ws = tempfile::tempdir().unwrap();
    let o = stackrl()
        .args(["run", "--config"])
        .arg(ws.path().join("nope.cfg"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error class=unreadable_config "));

    let cfg = ws.path().join("bad.cfg");
    fs::write(&cfg, "[learner]\nepisodes = many\n").unwrap();
    let o = stackrl().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error class=parse "));

    fs::write(&cfg, "[run]\ncadence = 0\n").unwrap();
    let o = stackrl().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn validate_passes_on_a_fresh_checkout() {
    let o = stackrl().arg("validate").output().unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn fixture_reports_both_discrepancies() {
    let o = stackrl().arg("fixture").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("greedy_discrepancy 9.99\n"));
    assert!(text.contains("bound 0.03\n"));
    let o = stackrl().args(["fixture", "--eps", "0"]).output().unwrap();
    let text = stdout(&o);
    assert!(text.contains("greedy_discrepancy 0\n"));
    assert!(text.contains("softmax_discrepancy 0\n"));
}

#[test]
fn sweep_writes_aggregate_and_summary() {
    let ws = workspace(20);
    let cfg = ws.path().join("ref.cfg");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[sweep]\nalpha_f = 1, inf\nc1 = 0.03, -1\n");
    fs::write(&cfg, text).unwrap();
    let out = ws.path().join("out");
    let o = stackrl()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--set")
        .arg("run.output=sweep_all.csv")
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("cells 4\n"));
    // negative c1 cells fail without stopping the sweep
    assert!(stdout(&o).contains("failed_cells 2\n"));

    let run_dir = only_run_dir(&out);
    let all = fs::read_to_string(run_dir.join("sweep.csv")).unwrap();
    assert!(all.starts_with("cell,alpha_f,c1,run_seed,k,"));
    assert_eq!(all.lines().count(), 1 + 2 * 20);
    assert_eq!(fs::read_to_string(ws.path().join("sweep_all.csv")).unwrap(), all);
    let summary = fs::read_to_string(run_dir.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(fs::read_to_string(run_dir.join("effective_config.cfg")).unwrap().contains("[sweep]"));
}
