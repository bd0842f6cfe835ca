use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qadapt_cli::report::{read_csv, read_json, strip_header};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qadapt"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_config(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn table_subcommand_reproduces_base_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["table", "dimension-matching", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("report.csv")).unwrap();
    let got: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r.config.rsplit("cfg=").next().unwrap().to_string(), r.value.clone()))
        .collect();
    let want = [
        ("C1", "256"),
        ("C1+C2", "22"),
        ("C1+C2+C3", "11"),
        ("C1+C3", "12"),
        ("C2", "23"),
        ("C2+C3", "11"),
        ("C3", "12"),
    ];
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!((g.0.as_str(), g.1.as_str()), w);
    }
    assert!(rows.iter().all(|r| r.provenance == qadapt_cli::Provenance::Counted));
}

#[test]
fn verify_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("verify").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("report.csv")).unwrap();
    let status: Vec<&str> = rows
        .iter()
        .filter(|r| r.metric.ends_with(".status"))
        .map(|r| r.value.as_str())
        .collect();
    assert_eq!(status, ["pass"; 4]);
}

#[test]
fn impossible_tolerance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.json",
        r#"{"mode": "verify", "verify": {"suites": ["quantum"], "trials": 3}}"#,
    );
    let out = run_config(&cfg, &dir.path().join("r"), &["--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = read_csv(&dir.path().join("r/report.csv")).unwrap();
    assert!(rows.iter().any(|r| r.metric == "quantum.status" && r.value == "fail"));
}

#[test]
fn parse_error_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"mode\": \"train\",\n  \"stepz\": 3\n}\n");
    let out = run_config(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("stepz"), "{err}");

    let cfg = write(dir.path(), "trunc.json", "{\"mode\": ");
    assert_eq!(run_config(&cfg, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn empty_seed_list_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"mode": "train", "seeds": []}"#);
    let out = run_config(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`seeds`"));
}

#[test]
fn sweep_subcommand_rejects_other_modes() {
    let out = bin().arg("sweep").arg(configs().join("table4.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"mode": "sweep", "train": {"steps": 30},
            "grid": {"orders": [[1], [1, 2], [2, 3]], "gamma": [0, 1]}, "seeds": [4, 1]}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_config(&cfg, &a, &["--threads", "1"]).status.success());
    assert!(run_config(&cfg, &b, &["--threads", "4"]).status.success());
    for name in ["report.csv", "report.json"] {
        let x = fs::read_to_string(a.join(name)).unwrap();
        let y = fs::read_to_string(b.join(name)).unwrap();
        assert_eq!(strip_header(&x), strip_header(&y), "{name}");
    }
    assert_eq!(read_csv(&a.join("report.csv")).unwrap(), read_json(&a.join("report.json")).unwrap());
}

#[test]
fn orthogonality_grid_has_twelve_rows_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(configs().join("ortho_ablation.json")).unwrap();
    let cfg = write(dir.path(), "o.json", &src.replace("\"steps\": 100", "\"steps\": 5"));
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.seed == Some(7) && r.metric == "final_loss"));
    let mut echoes: Vec<&str> = rows.iter().map(|r| r.config.as_str()).collect();
    echoes.dedup();
    assert_eq!(echoes.len(), 12);
}

#[test]
fn rank_and_stack_grid_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("sweep")
        .arg(configs().join("rank_adapters.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows = read_csv(&dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 18);
    for single in rows.iter().filter(|r| r.config.contains(";m=1;")) {
        let stacked_echo = single.config.replace(";m=1;", ";m=4;");
        let stacked = rows.iter().find(|r| r.config == stacked_echo).unwrap();
        let (a, b): (usize, usize) = (single.value.parse().unwrap(), stacked.value.parse().unwrap());
        assert_eq!(b, 4 * a);
    }
}

#[test]
fn train_exports_adapter_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"mode": "train", "adapter": {"d": 8, "orders": [1, 2], "r": 2},
            "train": {"steps": 10, "log_every": 5}, "seeds": [2], "export": "binary"}"#,
    );
    let out = run_config(&cfg, dir.path(), &[]);
    assert!(out.status.success());
    let f = fs::File::open(dir.path().join("adapter-seed2-weight.qiad")).unwrap();
    let (header, m) = qadapt::export::read_binary(f).unwrap();
    assert_eq!((header.d, header.num_blocks, header.orders.clone()), (8, 2, vec![1, 2]));
    assert!(qadapt::ortho::orthogonality_error(&m).unwrap() < 1e-12);
    let rows = read_csv(&dir.path().join("report.csv")).unwrap();
    let metrics: Vec<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
    assert_eq!(
        metrics,
        [
            "status",
            "base_dim",
            "param_count",
            "num_params",
            "loss@0",
            "loss@5",
            "loss@10",
            "initial_loss",
            "final_loss",
            "loss_ratio"
        ]
    );
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        qadapt_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
