use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn twoway(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoway"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env_remove("TWOWAY_OUT")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(String::from)
        .collect()
}

#[test]
fn capacity_report_embeds_hash() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[channel]\nkind = \"bsc\"\np = 0.1\n";
    let cfg = write(dir.path(), "c.toml", text);
    let out = dir.path().join("out");
    let o = twoway(&["capacity"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(out.join("capacity.csv")).unwrap();
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    assert!(body.starts_with(&format!("# twoway capacity config_sha256={hash} seed=0\n")));
    let c: f64 = csv_rows(&out.join("capacity.csv"))[0].split(',').next().unwrap().parse().unwrap();
    assert!((c - 0.531004).abs() < 1e-6);
}

#[test]
fn converse_sweep_holds_on_hundred_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 5\n[source]\nkind = \"doubly_symmetric\"\ncrossover = 0.1\n\
         [channel]\nkind = \"bsc\"\np = 0.2\n[converse]\ncodes = 100\nrounds = [2]\n",
    );
    let out = dir.path().join("out");
    let o = twoway(&["converse-sweep"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("converse_sweep.csv"));
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("true")));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[channel]\nkind = \"bsc\"\np = \n");
    let o = twoway(&["capacity"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let cfg = write(dir.path(), "d.toml", "[channel]\nkind = \"bsc\"\np = 0.1\ncolor = 1\n");
    let o = twoway(&["capacity"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("color"));
}

#[test]
fn stochastic_verbs_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[source]\nkind = \"doubly_symmetric\"\ncrossover = 0.2\n[kaspi]\nd1 = 0.1\nd2 = 0.1\n");
    let o = twoway(&["kaspi-point"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn mismatched_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "experiment = \"rd\"\n[channel]\nkind = \"bsc\"\np = 0.1\n");
    let o = twoway(&["capacity"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_target_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 1\n[source]\nkind = \"doubly_symmetric\"\ncrossover = 0.2\n\
         [distortion]\nkind = \"matrix\"\nmatrix = [[0.1, 1.0], [1.0, 0.1]]\n[kaspi]\nd1 = 0.05\nd2 = 0.5\n",
    );
    let o = twoway(&["kaspi-point"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 9\n[source]\nkind = \"doubly_symmetric\"\ncrossover = 0.2\n\
         [kaspi]\nq = 2\nrestarts = 2\ntargets = [[0.1, 0.1], [0.2, 0.05]]\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(twoway(&["kaspi-sweep"], &cfg, &a).status.success());
    assert!(twoway(&["kaspi-sweep"], &cfg, &b).status.success());
    let read = |d: &Path| std::fs::read(d.join("kaspi_sweep.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let o = twoway(&["kaspi-sweep", "--seed", "10"], &cfg, &dir.path().join("c"));
    assert!(o.status.success());
    let c = std::fs::read_to_string(dir.path().join("c/kaspi_sweep.csv")).unwrap();
    assert!(c.lines().next().unwrap().ends_with("seed=10"));
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[rd]\np = [0.5, 0.5]\ntargets = [0.1]\n");
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_twoway"))
        .args(["rd", "--config"])
        .arg(&cfg)
        .env("TWOWAY_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let rows = csv_rows(&out.join("rd.csv"));
    let r: f64 = rows[0].split(',').nth(1).unwrap().parse().unwrap();
    assert!((r - 0.531004).abs() < 1e-6);
}

#[test]
fn transform_demo_round_trips_code_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = "seed = 2\n[source]\nkind = \"doubly_symmetric\"\ncrossover = 0.2\n[channel]\nkind = \"bsc\"\np = 0.1\n";
    let cfg = write(dir.path(), "a.toml", &format!("{base}[transform]\nn = 1\nhorizon = 3\nlifts = [2]\n"));
    let first = dir.path().join("first");
    assert!(twoway(&["transform-demo"], &cfg, &first).status.success());
    std::fs::copy(first.join("staggered_H2.json"), dir.path().join("code.json")).unwrap();
    let cfg = write(dir.path(), "b.toml", &format!("{base}[transform]\ncode_file = \"code.json\"\nlifts = [1]\n"));
    let second = dir.path().join("second");
    let o = twoway(&["transform-demo"], &cfg, &second);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&second.join("transform.csv"));
    assert!(rows[0].split(',').nth(2) == Some("true"));

    let cfg = write(dir.path(), "c.toml", &format!("{base}[converse]\ncode_file = \"code.json\"\n"));
    let o = twoway(&["converse-sweep"], &cfg, &dir.path().join("third"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
