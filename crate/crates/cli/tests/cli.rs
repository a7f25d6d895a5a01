use std::process::{Command, Output};

fn qwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwalk"))
        .args(args)
        .env_remove("QWALK_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn verify_passes_for_every_walk() {
    for args in [
        vec!["verify", "--walk", "weyl+"],
        vec!["verify", "--walk", "weyl-"],
        vec!["verify", "--walk", "z+"],
        vec!["verify", "--walk", "z-"],
        vec!["verify", "--walk", "dirac+", "--mass", "0.3"],
        vec!["verify", "--walk", "dirac-", "--mass", "0.1"],
    ] {
        let o = qwalk(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn verify_perturbed_names_condition() {
    let o = qwalk(&["verify", "--walk", "weyl+", "--perturb", "0.01"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("verification failed: unitarity"), "{err}");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], false);
    assert!(v["failing_condition"].as_str().unwrap().contains("completeness"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qwalk(&["verify", "--walk", "dirac+", "--mass", "1.5"]).status.code(), Some(2));
    assert_eq!(qwalk(&["verify", "--walk", "spinless"]).status.code(), Some(2));
    assert_eq!(qwalk(&["dispersion", "--grid", "1"]).status.code(), Some(2));
    assert_eq!(qwalk(&["frobnicate"]).status.code(), Some(2));
    let o = qwalk(&["evolve", "--n", "8", "--sigma-k", "0.7", "--k0", "2.5,0,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lattice too small"));
}

#[test]
fn dispersion_grid_contract() {
    let o = qwalk(&["dispersion", "--walk", "weyl+", "--grid", "8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("kx,ky,kz,omega,nx,ny,nz,vx,vy,vz\n"));
    let (_, rows) = csv_rows(&text);
    assert_eq!(rows.len(), 512);
    assert_eq!(f(&rows[0][3]), 0.0);
    for r in &rows {
        let k = [f(&r[0]), f(&r[1]), f(&r[2])];
        assert!(qwalk_core::cayley::in_brillouin(k));
    }
}

#[test]
fn dispersion_grid_32_has_32_cubed_rows() {
    let o = qwalk(&["dispersion", "--grid", "32", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 32 * 32 * 32 + 1);
}

#[test]
fn evolve_reference_and_determinism() {
    let args = ["evolve", "--n", "32", "--sigma-k", "0.05", "--steps", "32", "--reference", "--seed", "7"];
    let a = qwalk(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = qwalk(&args);
    assert_eq!(a.stdout, b.stdout);
    let (header, rows) = csv_rows(&stdout(&a));
    assert_eq!(header.last().unwrap(), "fitted_exponent");
    assert_eq!(rows.len(), 33);
    assert!(f(rows.last().unwrap().last().unwrap()).is_finite());
    for r in &rows {
        assert!((f(&r[1]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn evolve_zero_steps() {
    let o = qwalk(&["evolve", "--n", "16", "--sigma-k", "0.2", "--steps", "0", "--reference"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    let i = header.iter().position(|h| h == "discrepancy").unwrap();
    assert_eq!(f(&rows[0][i]), 0.0);
}

#[test]
fn evolve_snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("final.bin");
    let out = dir.path().join("traj.csv");
    let o = qwalk(&[
        "evolve",
        "--walk",
        "dirac-",
        "--mass",
        "0.2",
        "--n",
        "16",
        "--sigma-k",
        "0.2",
        "--steps",
        "3",
        "--snapshot",
        snap.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let field = qwalk_core::evolve::read_snapshot(std::fs::File::open(&snap).unwrap()).unwrap();
    assert_eq!(field.dim(), 4);
    assert!((field.norm() - 1.0).abs() < 1e-6);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 5);
}

#[test]
fn orbit_rotation_closes() {
    let o = qwalk(&["orbit", "--family", "rotation", "--axis", "0,0,1", "--k0", "0.3,0.1,0.2", "--samples", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("param,kx,ky,kz,omega,domain_flag\n"));
    let (_, rows) = csv_rows(&text);
    let (a, b) = (&rows[0], rows.last().unwrap());
    for i in 1..4 {
        assert!((f(&a[i]) - f(&b[i])).abs() < 1e-6);
    }
    assert!(rows.iter().all(|r| r[5] == "1"));
}

#[test]
fn orbit_boost_leaves_domain() {
    let o = qwalk(&[
        "orbit",
        "--family",
        "boost",
        "--axis",
        "1,0,0",
        "--k0",
        "0.8,0.2,0.1",
        "--max-rapidity",
        "6",
        "--samples",
        "64",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv_rows(&stdout(&o));
    let flags: Vec<&str> = rows.iter().map(|r| r[5].as_str()).collect();
    assert_eq!(flags[0], "1");
    assert_eq!(*flags.last().unwrap(), "0");
    let first_out = flags.iter().position(|&x| x == "0").unwrap();
    assert!(flags[first_out..].iter().all(|&x| x == "0"));
}

#[test]
fn maxwell_ladder_decreases() {
    let o = qwalk(&["maxwell", "--radius", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(
        header,
        ["sigma_f", "k_norm", "dynamic_residual", "transversality_residual", "commutator_diag", "commutator_offdiag"]
    );
    assert_eq!(rows.len(), 3);
    assert!(f(&rows[0][2]) > f(&rows[1][2]) && f(&rows[1][2]) > f(&rows[2][2]));
    assert!(rows.iter().all(|r| f(&r[3]) == 0.0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"walk": "z-", "grid": 4, "format": "json"}"#).unwrap();
    let o = qwalk(&["dispersion", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 64);
    let o = qwalk(&["dispersion", "--config", cfg.to_str().unwrap(), "--grid", "3", "--format", "csv"]);
    assert_eq!(stdout(&o).lines().count(), 28);
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(qwalk(&["dispersion", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn threads_flag_and_env() {
    let o = Command::new(env!("CARGO_BIN_EXE_qwalk"))
        .args(["dispersion", "--grid", "4"])
        .env("QWALK_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let p = qwalk(&["dispersion", "--grid", "4", "--threads", "1"]);
    assert_eq!(o.stdout, p.stdout);
}
