use std::path::Path;
use std::process::{Command, Output};

use combustion1d::config::parse_config;
use combustion1d::trajectory::{index_path, Trajectory};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_combustion1d"));
    c.env_remove("COMBUSTION1D_OUT");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("no JSON summary in {text:?}: {e}"))
}

fn report(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const SMALL_HOT: &str = r#"
[fluid]
mu = 10.0
kappa = 20.0

[initial]
scenario = "hot-spot"
theta_radius = 3.0

[mesh]
half_length = 16.0
n = 64

[time]
final_time = 20.0
snapshot_every = 0.25
"#;

const EQUILIBRIUM: &str = r#"
[initial]
scenario = "equilibrium"

[mesh]
half_length = 8.0
n = 32

[time]
final_time = 1.0
snapshot_every = 0.1
"#;

#[test]
fn run_on_equilibrium_passes_and_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.bin", "trajectory.bin.idx", "report.json", "timeseries.csv", "config.toml"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let r = report(&out_dir.join("report.json"));
    for v in r["verdicts"].as_array().unwrap() {
        assert_ne!(v["verdict"], "fail", "{v}");
    }
    let echo = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    let t = Trajectory::read(&out_dir.join("trajectory.bin")).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), t.config);
    let csv = std::fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + t.snapshots.len());
}

#[test]
fn verify_reproduces_the_run_report_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", SMALL_HOT);
    let run_dir = dir.path().join("run");
    let st = bin()
        .args(["run", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let verify_dir = dir.path().join("verify");
    let st = bin()
        .args(["verify", "--quiet"])
        .arg(run_dir.join("trajectory.bin"))
        .arg("--out")
        .arg(&verify_dir)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let a = report(&run_dir.join("report.json"));
    let b = report(&verify_dir.join("report.json"));
    assert_eq!(a["verdicts"], b["verdicts"]);
    assert_eq!(a, b);
}

#[test]
fn verify_flags_a_corrupted_reactant_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", SMALL_HOT);
    let run_dir = dir.path().join("run");
    bin()
        .args(["run", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap();
    let path = run_dir.join("trajectory.bin");
    let mut t = Trajectory::read(&path).unwrap();
    t.snapshots[3].z[10] = 1.5;
    t.write(&path).unwrap();
    assert!(index_path(&path).exists());
    let out = bin().args(["verify", "--quiet"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "verdict_failure");
    let names: Vec<&str> = summary["failures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"z_bounds"), "{names:?}");
}

#[test]
fn invalid_config_exits_two_and_names_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[fluid]\nq = -1.0\nmu = 0.0\n[initial]\nscenario = \"hot-spot\"\nz_amplitude = 1.5\n",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "config_error");
    let keys: Vec<&str> = summary["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["key"].as_str().unwrap())
        .collect();
    assert!(keys.contains(&"fluid.q"), "{keys:?}");
    assert!(keys.contains(&"fluid.mu"), "{keys:?}");
    assert!(keys.iter().any(|k| k.contains("z_amplitude")), "{keys:?}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[fluid]\nviscosity = 1.0\n");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["status"], "config_error");
}

#[test]
fn exhausted_retries_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "abort.toml",
        r#"
[initial]
scenario = "cold-bump"
u_amplitude = -0.5

[mesh]
half_length = 16.0
n = 64

[time]
final_time = 2.0

[step]
theta_floor = 0.99
max_halvings = 3
"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "solver_abort");
    assert!(summary["message"].as_str().unwrap().contains("rejected 3 times"));
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let target = dir.path().join("from_env");
    let st = bin()
        .env("COMBUSTION1D_OUT", &target)
        .args(["run", "--quiet", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(target.join("report.json").exists());
}

#[test]
fn snapshot_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", EQUILIBRIUM);
    let o = dir.path().join("o");
    bin()
        .args(["run", "--quiet", "--snapshot-every", "0.5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&o)
        .status()
        .unwrap();
    let t = Trajectory::read(&o.join("trajectory.bin")).unwrap();
    assert_eq!(t.times(), vec![0.0, 0.5, 1.0]);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", SMALL_HOT);
    let mut reports = vec![];
    for w in ["1", "3"] {
        let o = dir.path().join(format!("w{w}"));
        let st = bin()
            .args(["run", "--quiet", "--workers", w, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&o)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        reports.push(std::fs::read(o.join("report.json")).unwrap());
        assert_eq!(
            std::fs::read(o.join("trajectory.bin")).unwrap(),
            std::fs::read(dir.path().join("w1/trajectory.bin")).unwrap()
        );
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn convergence_ladder_reports_first_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cold.toml",
        "[initial]\nscenario = \"cold-bump\"\n[mesh]\nhalf_length = 16.0\nn = 64\n[time]\nfinal_time = 1.0\nsnapshot_every = 0.5\n",
    );
    let o = dir.path().join("o");
    let st = bin()
        .args(["convergence", "--quiet", "--ladder", "64,128,256", "--refine", "4", "--workers", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&o)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let table = report(&o.join("convergence.json"));
    assert!(table["order"].as_f64().unwrap() >= 0.9, "{table}");
    assert_eq!(table["rungs"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_runs_the_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", SMALL_HOT);
    let o = dir.path().join("o");
    let st = bin()
        .args(["sweep", "--quiet", "--set", "fluid.q=0.5,1", "--set", "fluid.big_k=1,2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&o)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let rows = report(&o.join("sweep.json"));
    assert_eq!(rows.as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("fluid.q,fluid.big_k,status,failed"));
}

#[test]
fn sweep_with_an_invalid_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", SMALL_HOT);
    let out = bin()
        .args(["sweep", "--set", "fluid.q=1,-2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenarios_lists_every_builtin() {
    let out = bin().arg("scenarios").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["equilibrium", "cold-bump", "hot-spot", "shear-free-compression"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&p).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
