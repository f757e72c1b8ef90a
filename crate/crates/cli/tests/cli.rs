use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stablelike");

const CAUCHY: &str = r#"
[model]
dim = 1
alpha = { kind = "constant", params = { value = 1.0 } }
kappa = { kind = "constant", params = { value = 0.3183098861837907 } }

[model.bounds]
alpha_lo = 1.0
alpha_hi = 1.0
kappa_lo = 0.3183098861837907
kappa_hi = 0.3183098861837907
beta0 = 1.0
c_alpha = 0.0
c_kappa = 0.0

[grid]
h = 0.25
x_core = 3.0
x_max = 20.0
stretch = 1.3
steps = 8
t_max = 1.0

[sim]
t = 0.5
n_paths = 2000
h_step = 0.0625
exit_paths = 500
levy_paths = 500
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn files_with(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn missing_alpha_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = CAUCHY.replace("alpha = { kind = \"constant\", params = { value = 1.0 } }\n", "");
    let cfg = write(tmp.path(), "bad.toml", &bad);
    let out = tmp.path().join("out");
    let o = run(&["build", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.alpha"));
}

#[test]
fn unknown_grid_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &CAUCHY.replace("steps = 8", "steps = 8\nspacing = 2"));
    let o = run(&["build", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn build_then_verify_and_hash_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    let cfg = write(tmp.path(), "c.toml", CAUCHY);
    let b = run(&["build", "--config", cfg.to_str().unwrap(), "--out", o]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    assert!(String::from_utf8_lossy(&b.stdout).contains("converged"));
    let csv = files_with(&out, "kernel-");
    assert_eq!(csv.len(), 2);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(&csv[1]).unwrap()).unwrap();
    assert!(csv[0].to_string_lossy().contains(&side["config_hash"].as_str().unwrap()[..12]));

    // same kernel, verified with a subset of checks
    let light = format!("{CAUCHY}\n[verify]\nchecks = [\"chapman_kolmogorov\", \"pde\", \"lower\"]\nrefine = false\n");
    let cfg_light = write(tmp.path(), "light.toml", &light);
    let side_path = csv[1].to_str().unwrap();
    let v = run(&["verify", "--config", cfg_light.to_str().unwrap(), "--out", o, "--kernel", side_path]);
    assert_eq!(v.status.code(), Some(4), "changed config must not match the sidecar");

    let b2 = run(&["build", "--config", cfg_light.to_str().unwrap(), "--out", o]);
    assert_eq!(b2.status.code(), Some(0));
    let v2 = run(&["verify", "--config", cfg_light.to_str().unwrap(), "--out", o]);
    let text = String::from_utf8_lossy(&v2.stdout);
    assert_eq!(v2.status.code(), Some(0), "{text}");
    assert!(text.contains("chapman_kolmogorov") && text.contains("pass"));
    assert_eq!(files_with(&out, "verify-").len(), 1);
}

#[test]
fn empty_check_list_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();
    let cfg = write(tmp.path(), "c.json", &format!("{CAUCHY}\n[verify]\nchecks = []\n"));
    // the same content as TOML under a .json name is not JSON
    assert_eq!(run(&["build", "--config", cfg.to_str().unwrap(), "--out", o]).status.code(), Some(2));
    let cfg = write(tmp.path(), "c.toml", &format!("{CAUCHY}\n[verify]\nchecks = []\n"));
    assert_eq!(run(&["build", "--config", cfg.to_str().unwrap(), "--out", o]).status.code(), Some(0));
    let v = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", o]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn json_config_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let root: serde_json::Value = toml::from_str(CAUCHY).unwrap();
    let cfg = write(tmp.path(), "c.json", &root.to_string());
    let o = run(&["rho-check", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    // constant index: every sweep is admissible and the Beta identity holds
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("beta_half_half"), "{text}");
    assert_eq!(o.status.code(), Some(0), "{text}");
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", CAUCHY);
    let mut csvs = vec![];
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--seed",
            "7",
        ]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
        assert!(String::from_utf8_lossy(&o.stdout).contains("closed_form"));
        csvs.push(fs::read(&files_with(&out, "paths-")[0]).unwrap());
        let sim = &files_with(&out, "sim-")[0];
        let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim).unwrap()).unwrap();
        assert_eq!(rep["kde"].as_array().unwrap().len(), 21);
        assert_eq!(rep["exit"].as_array().unwrap().len(), 3);
    }
    assert_eq!(csvs[0], csvs[1]);
}
