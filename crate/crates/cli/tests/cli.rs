use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asl_cli::ExperimentConfig;
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5
theta0 = 1

[network]
agents = 4
links = [[1, 2], [2, 3], [3, 4], [4, 1], [1, 3]]
rule = "averaging"

[model]
family = "laplace"
table = [[0.0, 0.3, 0.6], [0.0, 0.0, 0.4], [0.0, 0.5, 0.0], [0.0, 0.2, 0.2]]

[strategy]
kind = "asl"
delta = 0.1

[run]
horizon = 300
changes = [[101, 2]]

[montecarlo]
reps = 40
deltas = [0.2, 0.1]

[exponents]
monte_carlo = true
gaussian_samples = 2000

[steady_state]
sweep = { min = 0.01, max = 1.0, points = 5 }
sweep_horizon = 500
ellipse_deltas = [0.1]
ellipse_reps = 20

[transient]
deltas = [0.1, 0.05]
epsilons = [0.5]
bound_steps = 20

[environment]
q_hyp = 0.01
q_mat = 0.01
q_fun = 0.01
horizon = 400
sojourns = 200
"#;

fn asl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_into(command: &[&str], config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = command.to_vec();
    args.extend(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    args.extend(extra);
    asl(&args)
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

const COMMANDS: [&[&str]; 7] = [
    &["simulate"],
    &["steady-state"],
    &["exponents"],
    &["transient"],
    &["nonstationary"],
    &["sweep", "--axis", "delta"],
    &["sweep", "--axis", "rule"],
];

#[test]
fn every_command_writes_headed_csv_with_sidecars() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let hash = ExperimentConfig::from_toml(SMALL).unwrap().hash().unwrap();
    for (i, command) in COMMANDS.iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let res = run_into(command, &cfg, &out, &[]);
        assert!(res.status.success(), "{command:?}: {}", String::from_utf8_lossy(&res.stderr));
        let files = csv_files(&out);
        assert!(!files.is_empty(), "{command:?} wrote no CSV");
        for file in files {
            let text = fs::read_to_string(&file).unwrap();
            let first = text.lines().next().unwrap();
            assert_eq!(first, format!("# asl {} config_hash={hash} seed=5", env!("CARGO_PKG_VERSION")));
            let sidecar: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(file.with_extension("json")).unwrap()).unwrap();
            assert_eq!(sidecar["config_hash"], hash);
            assert_eq!(sidecar["rows"].as_u64().unwrap() as usize, text.lines().count() - 2);
        }
        let summary = String::from_utf8(res.stdout).unwrap();
        assert!(Path::new(summary.trim()).exists());
    }
}

#[test]
fn reruns_reproduce_csv_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    for command in [&["simulate"][..], &["nonstationary"], &["sweep", "--axis", "delta"]] {
        let a = tmp.path().join(format!("a_{}", command[0]));
        let b = tmp.path().join(format!("b_{}", command[0]));
        assert!(run_into(command, &cfg, &a, &["--workers", "1"]).status.success());
        assert!(run_into(command, &cfg, &b, &["--workers", "2"]).status.success());
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
        }
    }
}

#[test]
fn shipped_configs_round_trip_and_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        cfg.resolve().unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn written_config_reproduces_the_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    assert!(run_into(&["transient"], &cfg, &out, &["--seed", "9", "--delta", "0.05"]).status.success());
    let text = fs::read_to_string(out.join("config.toml")).unwrap();
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let saved = ExperimentConfig::from_toml(&body).unwrap();
    assert_eq!(saved.seed, 9);
    assert_eq!(saved.strategy.delta, 0.05);
    assert!(text.starts_with(&format!(
        "# asl {} config_hash={} seed=9",
        env!("CARGO_PKG_VERSION"),
        saved.hash().unwrap()
    )));
}

#[test]
fn zero_horizon_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", &SMALL.replace("horizon = 300", "horizon = 0"));
    let res = run_into(&["simulate"], &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("horizon"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let bad_toml = write_config(tmp.path(), "bad.toml", "seed = \n");
    assert_eq!(run_into(&["simulate"], &bad_toml, &out, &[]).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{SMALL}\nbogus = 1\n"));
    assert_eq!(run_into(&["simulate"], &unknown, &out, &[]).status.code(), Some(2));
    let no_env = write_config(tmp.path(), "noenv.toml", SMALL.split("[environment]").next().unwrap());
    assert_eq!(run_into(&["nonstationary"], &no_env, &out, &[]).status.code(), Some(2));
    let good = write_config(tmp.path(), "small.toml", SMALL);
    assert_eq!(run_into(&["simulate"], &good, &out, &["--delta", "1.5"]).status.code(), Some(2));
    assert_eq!(asl(&["simulate"]).status.code(), Some(2));

    let missing = tmp.path().join("missing.toml");
    assert_eq!(run_into(&["simulate"], &missing, &out, &[]).status.code(), Some(4));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(run_into(&["simulate"], &good, &blocker.join("sub"), &[]).status.code(), Some(4));

    // astronomically separated locations push the exponent root out of its bracket
    let overflow = write_config(
        tmp.path(),
        "overflow.toml",
        "[network]\nagents = 2\nlinks = [[1, 2]]\n[model]\ntable = [[0.0, 1e300], [0.0, 0.0]]\n",
    );
    let res = run_into(&["exponents"], &overflow, &out, &[]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn sweep_reuses_cached_descriptors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    let hits = |_: ()| {
        assert!(run_into(&["sweep", "--axis", "rule"], &cfg, &out, &[]).status.success());
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
        v["summary"]["cache"].as_array().unwrap().iter().map(|c| c["hit"].as_bool().unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(hits(()), vec![false, false]);
    let first = fs::read(out.join("sweep_rule.csv")).unwrap();
    assert_eq!(hits(()), vec![true, true]);
    assert_eq!(first, fs::read(out.join("sweep_rule.csv")).unwrap());
    // a different truth is a different cache entry
    assert!(run_into(&["sweep", "--axis", "delta"], &cfg, &out, &["--seed", "6"]).status.success());
    let moved = write_config(tmp.path(), "moved.toml", &SMALL.replace("theta0 = 1", "theta0 = 2"));
    assert!(run_into(&["sweep", "--axis", "rule"], &moved, &out, &[]).status.success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert!(v["summary"]["cache"].as_array().unwrap().iter().all(|c| c["hit"] == false));
}

#[test]
fn scripted_change_is_reported_as_a_recovery() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    assert!(run_into(&["simulate"], &cfg, &out, &[]).status.success());
    let text = fs::read_to_string(out.join("recovery.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("asl,101,1,2,"), "{}", rows[0]);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    // header line, column row, 301 steps x 4 agents x 3 hypotheses
    assert_eq!(traj.lines().count(), 2 + 301 * 12);
}
