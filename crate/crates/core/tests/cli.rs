use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nekmini"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name)
}

fn files(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out
}

fn run(config_name: &str, out: &Path) {
    let status = exe()
        .args(["run", "--steps", "100", "--label", config_name])
        .arg("--config")
        .arg(config(config_name))
        .arg("--output")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn same_binary_different_configs_give_disjoint_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, c) = (tmp.path().join("r"), tmp.path().join("c"));
    run("render.xml", &r);
    run("checkpoint.xml", &c);
    let artifacts = |d: &Path| -> BTreeSet<PathBuf> { files(d).into_iter().filter(|p| p.extension().is_some_and(|e| e != "csv")).collect() };
    let (ra, ca) = (artifacts(&r), artifacts(&c));
    assert_eq!(ra.len(), 4);
    assert_eq!(ca.len(), 2);
    assert!(ra.iter().all(|p| p.starts_with("render") && p.extension().unwrap() == "ppm"));
    assert!(ca.iter().all(|p| p.starts_with("checkpoints") && p.extension().unwrap() == "vtk"));
    assert!(ra.is_disjoint(&ca));
}

#[test]
fn validate_config_accepts_catalyst_documents() {
    let out = exe().arg("validate-config").arg(config("catalyst_compat.xml")).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0: render every 100 steps"), "{text}");
    assert_eq!(text.matches("warning:").count(), 2, "{text}");
}

#[test]
fn validate_config_fails_on_bad_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.xml");
    std::fs::write(&p, r#"<sensei><analysis type="hologram"/></sensei>"#).unwrap();
    let out = exe().arg("validate-config").arg(&p).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown analysis kind"));
}

#[test]
fn report_subcommand_summarizes_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("a");
    run("checkpoint.xml", &d);
    std::fs::remove_file(d.join("summary.csv")).unwrap();
    let out = exe().arg("report").arg(&d).output().unwrap();
    assert!(out.status.success());
    assert!(d.join("summary.csv").is_file() && d.join("chart.svg").is_file());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("baseline by subtraction"), "{text}");
}

#[test]
fn endpoint_reads_its_address_from_the_environment() {
    let out = exe()
        .args(["endpoint", "--producers", "1"])
        .env("NEKMINI_ENDPOINT", "not-an-address")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not-an-address"));
}
