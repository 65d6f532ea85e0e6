use std::path::Path;
use std::process::{Command, Output};

fn safe_bai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safe-bai")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn drop_last_column(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

#[test]
fn validate_constants_accepts_reference_values_and_rejects_c4_perturbation() {
    let ok = safe_bai(&["validate-constants"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("all constraints hold"));

    let bad = safe_bai(&["validate-constants", "--set", "c_4=0.3"]);
    assert_eq!(bad.status.code(), Some(1));
    let text = stdout(&bad);
    let line = text.lines().find(|l| l.contains("1 - 2c3 - 4c4")).unwrap();
    assert!(line.starts_with("FAIL"), "{line}");

    let unknown = safe_bai(&["validate-constants", "--set", "c_9=1"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn generated_instance_feeds_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("i1.json");
    let p = path.to_str().unwrap();
    assert!(safe_bai(&["gen-instance", "--kind", "prop1-i1", "--alpha", "0.1", "--out", p]).status.success());
    let grid = safe_bai(&["lower-bound", "--instance", p, "--delta", "0.05", "--grid", "10000"]);
    let fw = safe_bai(&["lower-bound", "--instance", p, "--delta", "0.05"]);
    let value = |o: &Output| -> f64 {
        stdout(o).lines().find_map(|l| l.strip_prefix("lower_bound=")).unwrap().parse().unwrap()
    };
    let (g, f) = (value(&grid), value(&fw));
    assert!((g - f).abs() <= 1e-3 * g, "grid {g} vs frank-wolfe {f}");

    let multi = dir.path().join("multi.json");
    let m = multi.to_str().unwrap();
    assert!(safe_bai(&["gen-instance", "--kind", "random", "--m", "2", "--out", m]).status.success());
    assert_eq!(safe_bai(&["lower-bound", "--instance", m]).status.code(), Some(2));
}

#[test]
fn run_writes_deterministic_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("bai.json");
    let i = inst.to_str().unwrap();
    assert!(safe_bai(&["gen-instance", "--kind", "bai", "--theta", "0.9,0.5,0.1", "--out", i]).status.success());
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        let mut args = vec!["run", "--instance", i, "--algo", "beside-elim,baseline", "--eps", "0.2", "--delta", "0.1"];
        args.extend_from_slice(&["--trials", "3", "--seed", "5", "--out", o]);
        args.extend_from_slice(extra);
        let status = safe_bai(&args);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read_to_string(&out).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &["--sequential"]);
    assert_eq!(
        a.lines().next().unwrap(),
        "algorithm,sweep_param,sweep_value,trial,seed,returned_arm,total_pulls,pulls_safety,pulls_optimality,is_eps_good,is_eps_safe,wall_ms"
    );
    assert_eq!(a.lines().count(), 7);
    assert_eq!(drop_last_column(&a), drop_last_column(&b));
    assert!(Path::new(&dir.path().join("a.summary.csv")).exists());
}

#[test]
fn sweep_requires_a_sweep_block_and_runs_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    let out = dir.path().join("sweep.csv");
    let spec = serde_json::json!({
        "instance": {"generator": "mab-hard", "n_arms": 4},
        "algorithms": ["beside-elim"],
        "eps": 0.5, "delta": 0.1, "n_trials": 2, "base_seed": 1,
        "sweep": {"param": "n_arms", "values": [3, 4]},
        "output_path": out,
    });
    std::fs::write(&cfg, spec.to_string()).unwrap();
    let o = safe_bai(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().starts_with("beside-elim,n_arms,3"));

    let mut plain = spec.clone();
    plain.as_object_mut().unwrap().remove("sweep");
    std::fs::write(&cfg, plain.to_string()).unwrap();
    assert_eq!(safe_bai(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}
