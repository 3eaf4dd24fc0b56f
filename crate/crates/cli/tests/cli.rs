use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddlab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddlab"));
    cmd.env_remove("DDLAB_SEED");
    cmd
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The resolved config is the first JSON object printed.
fn echoed(o: &Output) -> serde_json::Value {
    let text = stdout(o);
    let end = text.find("\n}").expect("config echo") + 2;
    serde_json::from_str(&text[..end]).unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn tiny_fig1(out: &Path) -> Command {
    let mut cmd = ddlab();
    cmd.arg("linreg-sweep")
        .arg("-c")
        .arg(preset("fig1.json"))
        .args([
            "--set",
            "n_grid=[4,30]",
            "--set",
            "num_seeds=2",
            "--set",
            "n_test=200",
        ])
        .arg("-o")
        .arg(out);
    cmd
}

#[test]
fn override_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny_fig1(dir.path())
        .args(["--set", "sigma=0.2"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = echoed(&o);
    assert_eq!(cfg["sigma"], 0.2);
    assert_eq!(cfg["dim"], 30);
    assert_eq!(cfg["out_dir"], dir.path().display().to_string());
    for f in ["config.json", "curve.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = tiny_fig1(&first).output().unwrap();
    assert!(o.status.success());
    let mut cfg = echoed(&o);
    let second = dir.path().join("b");
    cfg["out_dir"] = second.display().to_string().into();
    let cfg_path = dir.path().join("echo.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let o = ddlab()
        .arg("linreg-sweep")
        .arg("-c")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("curve.csv")).unwrap(),
        fs::read(second.join("curve.csv")).unwrap()
    );
}

#[test]
fn unknown_key_is_a_config_error() {
    let o = ddlab()
        .arg("linreg-sweep")
        .arg("-c")
        .arg(preset("fig1.json"))
        .args(["--set", "sgima=0.2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim(), "error: unknown key 'sgima'");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"sgima": 0.2}"#).unwrap();
    let o = ddlab()
        .arg("linreg-sweep")
        .arg("-c")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim(), "error: unknown key 'sgima'");
}

#[test]
fn other_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "-c".into(),
            dir.path().join("missing.json").display().to_string(),
        ],
        vec!["--set".into(), "num_seeds=\"many\"".into()],
        vec!["--set".into(), "sigma=-1".into()],
        vec!["--set".into(), "experiment=\"mlp-width\"".into()],
    ];
    for args in cases {
        let o = ddlab().arg("linreg-sweep").args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}

#[test]
fn env_seed_overrides_config_but_not_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny_fig1(dir.path())
        .env("DDLAB_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(echoed(&o)["seed"], 77);
    let o = tiny_fig1(dir.path())
        .env("DDLAB_SEED", "77")
        .args(["--set", "seed=5"])
        .output()
        .unwrap();
    assert_eq!(echoed(&o)["seed"], 5);
}

#[test]
fn one_width_one_seed_one_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddlab()
        .arg("mlp-sweep")
        .args([
            "--set",
            "widths=[1]",
            "--set",
            "num_seeds=1",
            "--set",
            "epochs=1",
        ])
        .args([
            "--set",
            "n_train=50",
            "--set",
            "n_test=50",
            "--set",
            "dim=4",
        ])
        .arg("-o")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("curve.csv")), 2);
    assert_eq!(data_rows(&dir.path().join("traces.csv")), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["failed_cells"], 0);
}

#[test]
fn failed_cell_exits_1_after_finishing() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddlab()
        .arg("mlp-sweep")
        .args([
            "--set",
            "widths=[2]",
            "--set",
            "num_seeds=1",
            "--set",
            "epochs=20",
        ])
        .args([
            "--set",
            "n_train=50",
            "--set",
            "n_test=50",
            "--set",
            "dim=4",
        ])
        .args([
            "--set",
            "loss=\"mse\"",
            "--set",
            "optimizer=\"sgd\"",
            "--set",
            "learning_rate=1e6",
        ])
        .args(["--set", "variants=[\"standard\"]"])
        .arg("-o")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("failed cell"));
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.contains(",failed"), "{curve}");
}

#[test]
fn property_suites_pass() {
    let o = ddlab()
        .args(["gradcheck", "--draws", "30"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("gradcheck PASS"), "{}", stdout(&o));
    assert!(stdout(&o).contains("max relative deviation"));
    let o = ddlab().arg("lift-check").output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("lift-check PASS"), "{}", stdout(&o));
}

#[test]
fn idx_inspect_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("images");
    let mut bytes = vec![0, 0, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4];
    bytes.extend(std::iter::repeat(7u8).take(24));
    fs::write(&path, bytes).unwrap();
    let o = ddlab().arg("idx-inspect").arg(&path).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "magic: 0x00000803\ncount: 2\ndims: 3x4\n");

    fs::write(&path, [0u8, 0, 0x08, 0x03, 0, 0, 0, 9]).unwrap();
    let o = ddlab().arg("idx-inspect").arg(&path).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "));
}
