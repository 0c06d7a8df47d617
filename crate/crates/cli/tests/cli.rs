use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polyergo"))
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("run.ini");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--quiet")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

const POWER2: &str = "[potential]\nfamily = power_tail\np = 2\n";

#[test]
fn validate_passes_for_power_tail() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[potential]\nfamily = power_tail\np = 1.5\n");
    let o = run(&["validate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("out/validate.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == "true"));
}

#[test]
fn validate_fails_for_linear_profile() {
    let dir = TempDir::new().unwrap();
    let table: String = (1..=100).map(|i| format!("{i},{i}\n")).collect();
    fs::write(dir.path().join("lin.csv"), table).unwrap();
    let cfg = write_config(
        &dir,
        "[potential]\nfamily = tabulated\ntable = lin.csv\np1 = 3\np2 = 1\n[validate]\ngrid = lin:1:100:100\n",
    );
    let o = run(&["validate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let rows = read_csv(&dir.path().join("out/validate.csv"));
    let upper = rows.iter().find(|r| r[0] == "growth_upper").unwrap();
    assert_eq!(upper[1], "false");
    assert_eq!(upper[2], "100");
}

#[test]
fn missing_and_corrupted_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = run(&["validate"], &dir.path().join("nope.ini"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(&dir, "[potential\nfamily = power_tail\n");
    assert_eq!(run(&["verify-all"], &cfg, dir.path()).status.code(), Some(2));
    let cfg = write_config(&dir, &format!("{POWER2}colour = blue\n"));
    assert_eq!(run(&["validate"], &cfg, dir.path()).status.code(), Some(2));
    let o = bin().arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vq_reports_q0_and_statuses() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{POWER2}[vq]\nq_max = 2\nxi = 1, 2, 5, 10\n"));
    let out = dir.path().join("out");
    assert_eq!(run(&["vq"], &cfg, &out).status.code(), Some(0));
    let summary = read_csv(&out.join("vq_summary.csv"));
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|r| r[1] == "Converged" && r[2] == "2.5"));
    let q1 = read_csv(&out.join("vq_q1.csv"));
    // v^1(5) = 24/3
    let v: f64 = q1[2][1].parse().unwrap();
    assert!((v - 8.0).abs() < 1e-9);
    assert!(out.join("vq.gp").exists() && out.join("vq_q2.dat").exists());
}

#[test]
fn vq_divergent_levels_keep_status_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[potential]\nfamily = power_tail\np = 1.2\n");
    let out = dir.path().join("out");
    let o = run(&["vq", "--q-max", "3", "--xi", "1, 3, 30"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let summary = read_csv(&out.join("vq_summary.csv"));
    let status: Vec<&str> = summary.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(status, ["Converged", "Divergent", "Divergent"]);
    let q3 = read_csv(&out.join("vq_q3.csv"));
    assert_eq!(q3.len(), 3);
    assert!(q3.iter().all(|r| r[1].is_empty() && r[3] == "Divergent"));
}

#[test]
fn q_max_zero_and_bad_grid_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, POWER2);
    assert_eq!(run(&["vq", "--q-max", "0"], &cfg, dir.path()).status.code(), Some(2));
    assert_eq!(run(&["vq", "--xi", "3, 2"], &cfg, dir.path()).status.code(), Some(2));
    assert_eq!(run(&["vq", "--xi", "0.5, 2"], &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn hitting_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[run]\nseed = 5\n[potential]\nfamily = power_tail\np = 1.5\n\
         [hitting]\ny0 = 2\nq_max = 1\nn_paths = 4000\ndt = 1e-3\nt_max = 1000\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["hitting"], &cfg, &out).status.code(), Some(0));
    let rows = read_csv(&out.join("hitting.csv"));
    assert_eq!(rows.len(), 1);
    let quad: f64 = rows[0][9].parse().unwrap();
    assert!((quad - 1.5).abs() < 1e-8);
    assert_eq!(rows[0][12], "true");
}

#[test]
fn fully_censored_hitting_is_unusable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        &format!("{POWER2}[hitting]\ny0 = 50\nn_paths = 100\ndt = 1e-2\nt_max = 0.1\n"),
    );
    assert_eq!(run(&["hitting"], &cfg, dir.path()).status.code(), Some(3));
}

#[test]
fn moments_flag_non_convergent_target() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[potential]\nfamily = power_tail\np = 1.5\n\
         [moments]\nstarts = 2\ntimes = 0, 0.5\nm = 2\nn_paths = 200\ndt = 1e-2\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["moments"], &cfg, &out).status.code(), Some(0));
    let rows = read_csv(&out.join("moments.csv"));
    assert!(rows.iter().all(|r| r[5] == "false"));
    let text = fs::read_to_string(out.join("moments.txt")).unwrap();
    assert!(text.contains("non-convergent target"));
}

#[test]
fn moments_bound_on_full_process() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[potential]\nfamily = power_tail\np = 2\nd = 2\n\
         perturbation_amplitude = 0.3\nperturbation_mode = 3\nperturbation_cutoff = 2\n\
         [moments]\nprocess = full\nstarts = 1, 3, 10\ntimes = 0, 1\nm = 1\nn_paths = 200\ndt = 1e-2\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["moments"], &cfg, &out).status.code(), Some(0));
    let bound = read_csv(&out.join("moments_bound.csv"));
    assert_eq!(bound.len(), 1);
    assert_eq!(bound[0][3], "true");
}

#[test]
fn tvdecay_needs_a_time_span() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{POWER2}[tvdecay]\ny0 = 3\ntimes = 0\n"));
    assert_eq!(run(&["tvdecay"], &cfg, dir.path()).status.code(), Some(2));
    let cfg = write_config(&dir, &format!("{POWER2}[tvdecay]\ny0 = 3\ntimes = 0, 1, 2\n"));
    assert_eq!(run(&["tvdecay"], &cfg, dir.path()).status.code(), Some(2));
    let o = run(&["hitting"], &write_config(&dir, POWER2), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tvdecay_below_floor_is_unusable() {
    let dir = TempDir::new().unwrap();
    // too few paths: every point past burn-in sits near the noise floor
    let cfg = write_config(
        &dir,
        &format!(
            "{POWER2}[tvdecay]\ny0 = 1.05\ntimes = log:5:100:5\nn_paths = 1000\ndt = 1e-2\nbins = 64\nstationary_control = false\n"
        ),
    );
    assert_eq!(run(&["tvdecay"], &cfg, dir.path()).status.code(), Some(3));
}

#[test]
fn verify_all_with_divergent_levels_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[potential]\nfamily = power_tail\np = 1.2\n[vq]\nq_max = 2\nxi = 1, 10, 100\n");
    let out = dir.path().join("out");
    assert_eq!(run(&["verify-all"], &cfg, &out).status.code(), Some(0));
    let matrix = read_csv(&out.join("verify_all.csv"));
    let vq = matrix.iter().find(|r| r[0] == "vq").unwrap();
    assert_eq!(vq[1], "0");
    assert!(vq[3].contains("q=2 Divergent"));
    assert!(matrix.iter().any(|r| r[2] == "skipped"));
}

#[test]
fn threads_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        &format!("{POWER2}[run]\nseed = 3\n[hitting]\ny0 = 2, 5, 20\nn_paths = 100\ndt = 1e-2\nt_max = 500\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = bin()
        .env("POLYERGO_THREADS", "3")
        .args(["hitting", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap();
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let o2 = run(&["hitting", "--threads", "1"], &cfg, &b);
    assert_eq!(o.status.code(), o2.status.code());
    assert_eq!(
        fs::read(a.join("hitting.csv")).unwrap(),
        fs::read(b.join("hitting.csv")).unwrap()
    );
    let o = run(&["hitting", "--threads", "0"], &cfg, &b);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_changes_monte_carlo_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{POWER2}[hitting]\ny0 = 2\nn_paths = 100\ndt = 1e-2\nt_max = 500\n"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["hitting", "--seed", "1"], &cfg, &a);
    run(&["hitting", "--seed", "2"], &cfg, &b);
    assert_ne!(
        fs::read(a.join("hitting.csv")).unwrap(),
        fs::read(b.join("hitting.csv")).unwrap()
    );
}

#[test]
fn summary_goes_to_stdout_unless_quiet() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, POWER2);
    let o = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: pass"));
    let o = run(&["validate"], &cfg, dir.path());
    assert!(o.stdout.is_empty());
}
