use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const MINIMAL: &str = r#"
seed = 3
scales = [64]

[model]
kind = "compound-sum"
m = 1
marks = "rademacher"

[plan]
n_outer = 40
n_inner = 8
n_samples = 4000

[target]
n_cov = 2000

[distances]
metrics = ["dK", "dH1"]
n_starts = 100
n_gauss = 5000
n_screen = 2000

[bounds]
metrics = ["d3", "d2", "dH1", "dconvex"]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvpoincare"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn bounds_only_config_writes_csvs_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["bounds"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["target_s64.csv", "gammas_s64.csv", "bounds_s64.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let bounds = fs::read_to_string(out.join("bounds_s64.csv")).unwrap();
    assert!(bounds.starts_with("bound,metric,total,total_upper,vacuous,dominant\n"));
    // Closed-form compound-sum bound: (1/4) s^{-1/2}.
    assert!(bounds.lines().any(|l| l.starts_with("first_order_d3,d3,0.03125,")), "{bounds}");
    let gammas = fs::read_to_string(out.join("gammas_s64.csv")).unwrap();
    assert!(gammas.lines().any(|l| l.starts_with("gamma1,0.0,")), "{gammas}");
}

#[test]
fn runs_are_byte_identical_and_independent_of_workers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let dirs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("out{i}"))).collect();
    for (d, w) in dirs.iter().zip(["1", "1", "2"]) {
        let o = bin()
            .args(["--workers", w, "distances", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(d)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = csv_files(&dirs[0]);
    assert!(a.iter().any(|f| f.0 == "distances_s64.csv"));
    assert_eq!(a, csv_files(&dirs[1]));
    assert_eq!(a, csv_files(&dirs[2]));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["simulate"], &cfg, &a).status.success());
    assert!(bin().args(["simulate", "--seed", "99", "--config"]).arg(&cfg).arg("--out").arg(&b).output().unwrap().status.success());
    assert_ne!(fs::read(a.join("samples_s64.csv")).unwrap(), fs::read(b.join("samples_s64.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        MINIMAL.replace("seed = 3", "seed = 3\ncolour = \"blue\""),
        MINIMAL.replace("n_inner = 8", "n_inner = 8\nn_middle = 4"),
        MINIMAL.replace("\"dH1\", \"dconvex\"]", "\"dH0\"]"),
        MINIMAL.replace("scales = [64]", "scales = []"),
        MINIMAL.replace("kind = \"compound-sum\"", "kind = \"lattice\""),
        "scales = [10]\n[model]\nkind = \"pair-count\"\nd = 2\nr = 0.1\n[target]\nsigma = \"analytic\"\n".to_string(),
        "scales = [10]\n[model]\nkind = \"compound-sum\"\nm = 2\nmarks = \"uniform\"\n[distances]\nmetrics = [\"dK\"]\n"
            .to_string(),
    ];
    for text in &cases {
        let cfg = write_config(tmp.path(), text);
        let o = run(&["gammas"], &cfg, &out);
        assert_eq!(o.status.code(), Some(2), "config:\n{text}\nstderr: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["gammas"], &tmp.path().join("missing.toml"), &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reproduces_recorded_values() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    assert!(run(&["distances"], &cfg, &out).status.success());
    for metric in ["dK", "dH1"] {
        let w = out.join(format!("witness_s64_{metric}.toml"));
        let o = bin().arg("replay").arg("--witness").arg(&w).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8(o.stdout).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[1], row[2], "{text}");
    }
}

#[test]
fn replay_on_fresh_samples_is_within_binomial_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let fresh = tmp.path().join("fresh");
    assert!(run(&["distances"], &cfg, &out).status.success());
    assert!(bin().args(["simulate", "--seed", "1234", "--config"]).arg(&cfg).arg("--out").arg(&fresh).output().unwrap().status.success());
    let o = bin()
        .arg("replay")
        .arg("--witness")
        .arg(out.join("witness_s64_dH1.toml"))
        .arg("--samples")
        .arg(fresh.join("samples_s64.csv"))
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    let n = row[2];
    // Both values are |p_hat - p| with p_hat from n draws.
    let se = (2.0 * 0.25 / n).sqrt();
    assert!((row[0] - row[1]).abs() <= 3.0 * se, "{text}");
}

#[test]
fn replay_rejects_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    assert!(run(&["distances"], &cfg, &out).status.success());
    let w = out.join("witness_s64_dH1.toml");

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "f0\n").unwrap();
    let o = bin().arg("replay").arg("--witness").arg(&w).arg("--samples").arg(&empty).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let garbage = tmp.path().join("garbage.toml");
    fs::write(&garbage, "metric = 3\n").unwrap();
    assert_eq!(bin().arg("replay").arg("--witness").arg(&garbage).output().unwrap().status.code(), Some(2));

    // A tampered record no longer reproduces.
    let text = fs::read_to_string(&w).unwrap();
    let tampered: String = text
        .lines()
        .map(|l| if l.starts_with("value = ") { "value = 0.5".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&w, tampered).unwrap();
    assert_eq!(bin().arg("replay").arg("--witness").arg(&w).output().unwrap().status.code(), Some(1));
}

#[test]
fn rates_over_three_scales() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("scales = [64]", "scales = [16, 64, 256]"));
    let out = tmp.path().join("out");
    let o = run(&["rates"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.starts_with("quantity,slope,intercept,ci_low,ci_high,n_points\n"));
    let row = rates.lines().find(|l| l.starts_with("distance_dK,")).expect("dK rate row");
    let slope: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(slope < 0.0, "{rates}");
}

#[test]
fn stein_checks_pass_at_the_null_model() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
scales = [100]
[model]
kind = "wiener-ito"
d = 1
kernels = ["const", "cos1"]
[plan]
n_samples = 5000
[distances]
n_starts = 100
n_gauss = 5000
n_screen = 2000
[stein]
n_inner = 1000
lhs_points = 50
n_inverse = 20000
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let o = run(&["stein-checks"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let checks = fs::read_to_string(out.join("stein_s100.csv")).unwrap();
    assert!(checks.starts_with("check,lhs,rhs,margin,se,pass\n"));
    for name in ["smoothing_H1", "smoothing_convex", "affine_invariance_H1", "second_moment_H1", "inverse_distance_m2"] {
        assert!(checks.lines().any(|l| l.starts_with(name) && l.ends_with(",true")), "{name}: {checks}");
    }
}

#[test]
fn estimated_target_for_models_without_closed_form() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
scales = [30]
[model]
kind = "isolated-count"
theta = 1.0
[plan]
n_outer = 20
n_inner = 4
[target]
n_cov = 500
[bounds]
metrics = ["d3", "dconvex"]
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let o = run(&["bounds"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let target = fs::read_to_string(out.join("target_s30.csv")).unwrap();
    assert!(target.lines().nth(1).unwrap().ends_with(",estimated"));
    let bounds = fs::read_to_string(out.join("bounds_s30.csv")).unwrap();
    assert!(bounds.contains("general_d3,d3,"));
    assert!(bounds.contains("# dconvex: skipped"), "{bounds}");
}
