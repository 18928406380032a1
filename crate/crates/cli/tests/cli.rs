use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = r#"
[problem]
name = "noflow"
level = 1

[fom]
t_end = 0.05

[pressure]
rank = 4

[sweep]
levels = [1]
nu = [0.01]
mu = [0.1]
ranks = [2, "all"]
"#;

fn podns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podns")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let o = podns(&["report", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no runs found"), "{}", stderr(&o));
}

#[test]
fn missing_upstream_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("run");
    let o = podns(&["pod", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing upstream artifact"), "{}", stderr(&o));
}

#[test]
fn stage_selection_errors() {
    assert!(stderr(&podns(&[])).contains("no stage"));
    let o = podns(&["fom", "--stage", "pod"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("conflicts"));
    assert!(stderr(&podns(&["--stage", "plot"])).contains("unknown stage"));
}

#[test]
fn stages_in_order_then_stale_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    for stage in ["fom", "pod", "rom"] {
        let o = podns(&[stage, "--config", &cfg, "--out", out_s]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for stage in ["pressure", "errors", "report"] {
        let o = podns(&["--stage", stage, "--config", &cfg, "--out", out_s]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for f in [
        "snapshots.podns",
        "basis_v.podns",
        "basis_p.podns",
        "rom.podns",
        "rom.csv",
        "pressure_se_r4.podns",
        "pressure_sm_r4.csv",
        "eigenvalues_v.csv",
        "eigenvalues_p.csv",
        "errors.csv",
        "convergence.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let snap = fs::read(out.join("snapshots.podns")).unwrap();
    assert_eq!(&snap[..6], b"PODNS1");
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 4, "{errors}");
    assert!(errors.lines().any(|l| l.contains(",rom,se,4,")));
    let eig = fs::read_to_string(out.join("eigenvalues_v.csv")).unwrap();
    // 10 derivative snapshots and the mean
    assert_eq!(eig.lines().count(), 12, "{eig}");

    let finer = write_config(dir.path(), &SHORT.replace("level = 1", "level = 2"));
    let o = podns(&["pod", "--config", &finer, "--out", out_s]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fingerprint mismatch"), "{}", stderr(&o));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("sweep{k}"));
        let o = podns(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let run = out.join("noflow_L1_nu1e-2_mu1e-1");
        outputs.push([
            fs::read(out.join("convergence.csv")).unwrap(),
            fs::read(run.join("errors.csv")).unwrap(),
            fs::read(run.join("eigenvalues_p.csv")).unwrap(),
            fs::read(run.join("snapshots.podns")).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);
    let conv = String::from_utf8(outputs[0][0].clone()).unwrap();
    // fom row plus SE and SM at ranks 2 and all
    assert_eq!(conv.lines().count(), 6, "{conv}");
}
