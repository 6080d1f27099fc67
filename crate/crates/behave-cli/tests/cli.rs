use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "seed = 1\n[sim]\nepochs = 20\nwarmup_epochs = 20\n";

fn behave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_behave"))
        .current_dir(dir)
        .args(["--out", "out"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

/// The single run directory under `out/`.
fn run_dir(dir: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir.join("out")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn manifest(run: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|row| row.unwrap().iter().map(str::to_string).collect()).collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_outputs_and_repeats_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", SMALL);
    let first = behave(tmp.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let run = run_dir(tmp.path());
    assert!(run.file_name().unwrap().to_str().unwrap().ends_with("-s1"));
    assert_eq!(csv_rows(&run.join("metrics.csv")).len(), 20);
    let m = manifest(&run);
    assert_eq!(m["seed"], 1);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(run.join("edrl_policy.params").exists());

    let snapshot = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "timings.csv")
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let before = snapshot(&run);
    let again = behave(tmp.path(), &["--config", &cfg, "--quiet", "simulate"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stdout(&again).is_empty());
    assert_eq!(before, snapshot(&run));
}

#[test]
fn seed_flag_overrides_config_and_keeps_scenario_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[sim]\nepochs = 2\nwarmup_epochs = 0\n");
    for seed in ["5", "6"] {
        let o = behave(tmp.path(), &["--config", &cfg, "--seed", seed, "--allocator", "greedy", "--quiet", "simulate"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let mut names: Vec<String> = fs::read_dir(tmp.path().join("out")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names.len(), 2);
    assert!(names[0].ends_with("-s5") && names[1].ends_with("-s6"));
    assert_eq!(names[0][..16], names[1][..16]);
    let m = manifest(&tmp.path().join("out").join(&names[0]));
    assert_eq!(m["allocator"], "greedy");
    assert_eq!(m["seed"], 5);
}

#[test]
fn sweep_and_repeat_make_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", "repeat = 2\nallocator = \"greedy\"\n[sim]\nepochs = 2\nwarmup_epochs = 0\n[sweep]\nservers = [2, 4, 8]\n");
    let o = behave(tmp.path(), &["--config", &cfg, "--quiet", "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    for s in [2, 4, 8] {
        for r in 0..2 {
            assert!(run.join(format!("servers{s}/rep{r}/metrics.csv")).exists());
        }
    }
    assert_eq!(manifest(&run)["outputs"].as_array().unwrap().len(), 6);
}

#[test]
fn oversized_oracle_is_refused_with_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[servers]\ncount = 20\n");
    let o = behave(tmp.path(), &["--config", &cfg, "--allocator", "oracle", "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exceeds the cap"), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    assert!(fs::read_to_string(run.join("FAILED")).unwrap().contains("exceeds the cap"));
    assert_eq!(manifest(&run)["status"], "failed");
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = config(tmp.path(), "u.toml", "seed = 1\nbogus = 2\n");
    let o = behave(tmp.path(), &["--config", &unknown, "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    let negative = config(tmp.path(), "n.toml", "[devices]\ncount = 0\n");
    let o = behave(tmp.path(), &["--config", &negative, "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("devices.count"));

    let o = behave(tmp.path(), &["--allocator", "nope", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = behave(tmp.path(), &["--config", "missing.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn compare_ranks_allocators_on_one_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", SMALL);
    let o = behave(tmp.path(), &["--config", &cfg, "compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    let rows = csv_rows(&run.join("comparison.csv"));
    assert_eq!(rows.len(), 4);
    let gain = |name: &str| -> f64 { rows.iter().find(|r| r[0] == name).unwrap()[1].parse().unwrap() };
    assert!(gain("edrl") >= gain("greedy") && gain("greedy") >= gain("random"));
    let ranking = fs::read_to_string(run.join("ranking.txt")).unwrap();
    assert!(ranking.contains("edrl/oracle gain ratio"));
    assert!(ranking.contains("identical arrival traces: true"));
    let ratio = manifest(&run)["outputs"]["edrl_oracle_ratio"].as_f64().unwrap();
    assert!((ratio - gain("edrl") / gain("oracle")).abs() < 1e-12);
    for k in ["edrl", "greedy", "random", "oracle"] {
        assert!(run.join(k).join("metrics.csv").exists());
    }
}

#[test]
fn compare_skips_oracle_beyond_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[servers]\ncount = 20\n[sim]\nepochs = 2\nwarmup_epochs = 0\n");
    let o = behave(tmp.path(), &["--config", &cfg, "--quiet", "compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    assert_eq!(csv_rows(&run.join("comparison.csv")).len(), 3);
    assert!(fs::read_to_string(run.join("ranking.txt")).unwrap().contains("oracle skipped"));
}

const FAST_DETECT: &str = "seed = 3\n[detection]\nruns = 1\n[detection.sr]\ntrain_records = 300\ntest_records = 200\n\
[detection.tr]\ntrain_days = 40\ntest_days = 20\ngan_epochs = 2\n";

#[test]
fn detect_sr_only_trains_the_ocnn() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", FAST_DETECT);
    let o = behave(tmp.path(), &["--config", &cfg, "--quiet", "detect", "--granularity", "sr"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    let rows = csv_rows(&run.join("detection.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "sr-ocnn");
    assert!(run.join("params/ocnn-sr-health_monitoring.params").exists());
    assert!(!run.join("params/ganed-tr.params").exists());
}

#[test]
fn detect_both_fills_every_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.toml", FAST_DETECT);
    let o = behave(tmp.path(), &["--config", &cfg, "--quiet", "detect"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = run_dir(tmp.path());
    let rows = csv_rows(&run.join("detection.csv"));
    let models: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(models, ["sr-ocnn", "tr-ganed-ocnn"]);
    for r in &rows {
        let f1: f64 = r[4].parse().unwrap();
        let train: f64 = r[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&f1) && train > 0.0, "{r:?}");
    }
    assert!(run.join("params/ganed-tr.params").exists() && run.join("params/ocnn-tr.params").exists());
    assert_eq!(csv_rows(&run.join("detection_runs.csv")).len(), 2);
}

fn brdi_run(history: &str, cfg: &str, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("h.csv"), history).unwrap();
    let c = config(tmp.path(), "c.toml", cfg);
    let mut args = vec!["--config", c.as_str(), "brdi", "h.csv"];
    args.extend(extra);
    (behave(tmp.path(), &args), tmp)
}

#[test]
fn brdi_all_ones_history() {
    let (o, tmp) = brdi_run("device_id,granularity,time,score\n0,sr,1,1\n0,sr,2,1\n1,tr,0,1\n1,sr,5,1\n", "", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&run_dir(tmp.path()).join("brdi.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1..].iter().all(|v| v == "1")));
    assert!(stdout(&o).contains("device_id,gamma_sr,gamma_tr,gamma"));
}

#[test]
fn brdi_empty_history_warns_and_uses_prior() {
    let (o, _tmp) = brdi_run("device_id,granularity,time,score\n", "", &["--devices", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    assert!(stdout(&o).contains("0,1,1,1") && stdout(&o).contains("1,1,1,1"));
}

#[test]
fn brdi_worked_history() {
    let (o, _tmp) = brdi_run("device_id,granularity,time,score\n0,sr,1,0\n0,sr,2,1\n", "[brdi]\nalpha = 0.6931471805599453\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let gamma_sr: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((gamma_sr - 2.0 / 3.0).abs() < 1e-12, "{line}");
}

#[test]
fn brdi_names_malformed_rows() {
    let (o, tmp) = brdi_run("device_id,granularity,time,score\n0,sr,1,1\n0,sr,2,abc\n", "", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(run_dir(tmp.path()).join("FAILED").exists());
}
