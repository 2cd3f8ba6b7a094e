use std::fs;
use std::process::Command as Process;

use bnmf_cli::io::parse_matrix;
use bnmf_cli::run::{execute, load_config, run_experiment, Command, RunConfig};
use bnmf_cli::{generate_synthetic, load_matrix, save_matrix, CliError, NoiseKind, SyntheticSpec};
use bnmf_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_moments(spec: &SyntheticSpec) -> (f64, f64, f64) {
    let d = generate_synthetic(spec).unwrap();
    let e: Vec<f64> = d.y.as_slice().iter().zip(d.m.as_slice()).map(|(y, m)| y - m).collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var, (var / n).sqrt())
}

#[test]
fn matrix_csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = DenseMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() * 1e3 - 500.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/m.csv");
    save_matrix(&path, &m).unwrap();
    let back = load_matrix(&path).unwrap();
    assert_eq!(back.shape(), (7, 3));
    assert!(m.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn malformed_matrix_reports_the_line() {
    let e = parse_matrix("2,2\n1,2\n3,x\n", "m.csv").unwrap_err();
    assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
    assert!(parse_matrix("2,2\n1,2\n", "m.csv").is_err());
    assert!(parse_matrix("1,1\nNaN\n", "m.csv").is_err());
}

#[test]
fn gaussian_noise_has_the_stated_moments() {
    let spec = SyntheticSpec { sigma2: 0.04, seed: 3, ..SyntheticSpec::default() };
    let (mean, var, se) = noise_moments(&spec);
    assert!(mean.abs() < 4.0 * se, "mean {mean}");
    assert!((var / 0.04 - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn uniform_noise_has_the_stated_moments() {
    // U[-c, c] with σ² = c²/2 has variance c²/3
    let spec = SyntheticSpec { sigma2: 0.04, seed: 4, noise: NoiseKind::Uniform, ..SyntheticSpec::default() };
    let (mean, var, se) = noise_moments(&spec);
    assert!(mean.abs() < 4.0 * se);
    assert!((var / (2.0 * 0.04 / 3.0) - 1.0).abs() < 0.05, "variance {var}");
    let d = generate_synthetic(&spec).unwrap();
    let c = (2.0f64 * 0.04).sqrt();
    assert!(d.y.as_slice().iter().zip(d.m.as_slice()).all(|(y, m)| (y - m).abs() <= c));
}

#[test]
fn synthetic_truth_is_padded_and_bounded() {
    let spec = SyntheticSpec { m1: 9, m2: 7, r_true: 2, k: 4, seed: 5, ..SyntheticSpec::default() };
    let d = generate_synthetic(&spec).unwrap();
    assert_eq!(d.truth.k(), 4);
    assert!(d.truth.u().column(3).iter().all(|&x| x == 0.0));
    assert!(d.truth.u().as_slice().iter().all(|&x| (0.0..3.0).contains(&x)));
    assert_eq!(d.m, d.truth.reconstruct());
    assert_eq!(generate_synthetic(&spec).unwrap().y, d.y);
}

#[test]
fn minimal_config_runs_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    fs::write(&cfg_path, r#"{"command": "map", "spec": {"m1": 12, "m2": 10, "K": 3}, "map": {"max_outer": 50}}"#).unwrap();
    let out = run_experiment(&cfg_path, Some(&dir.path().join("out"))).unwrap();
    for f in ["config.json", "M_hat.csv", "U.csv", "V.csv", "trace.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.spec.m1, 12);
    assert_eq!(echoed.prior, "exponential");
}

#[test]
fn unknown_prior_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { command: Command::Map, prior: "laplace".into(), out: dir.path().join("o"), ..RunConfig::default() };
    let e = execute(&cfg).unwrap_err();
    assert!(matches!(&e, CliError::Usage { field, .. } if field == "prior"), "{e}");
    assert_eq!(e.exit_code(), 2);
    assert!(!dir.path().join("o/config.json").exists());

    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"priorr": "exponential"}"#).unwrap();
    assert!(matches!(load_config(&path), Err(CliError::Usage { field, .. }) if field == "priorr"));
}

#[test]
fn binary_reports_errors_with_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_bnmf"))
        .args(["map", "--prior", "laplace", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior"));

    let out = Process::new(env!("CARGO_BIN_EXE_bnmf")).args(["run", "/nonexistent/exp.json"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_generate_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let status = Process::new(env!("CARGO_BIN_EXE_bnmf"))
        .args(["generate", "--m1", "6", "--m2", "5", "--rank", "1", "--K", "2", "--seed", "7", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(load_matrix(&dir.path().join("Y.csv")).unwrap().shape(), (6, 5));
    assert_eq!(load_matrix(&dir.path().join("U.csv")).unwrap().shape(), (6, 2));
}

#[test]
fn bound_command_writes_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        command: Command::Bound,
        spec: SyntheticSpec { m1: 20, m2: 20, r_true: 1, k: 2, ..SyntheticSpec::default() },
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    execute(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bound.json")).unwrap()).unwrap();
    let t = &v["theorem"];
    let total = t["total"].as_f64().unwrap();
    let parts: f64 = ["approx_error", "complexity_term", "u_tail_term", "v_tail_term", "beta_term", "residual_terms"]
        .iter()
        .map(|k| t[k].as_f64().unwrap())
        .sum();
    assert!((total - parts).abs() <= 1e-12 * total.abs().max(1.0));
    assert_eq!(t["approx_error"].as_f64().unwrap(), 0.0);
    assert!(v["corollary"].as_f64().unwrap().is_finite());
}

#[test]
fn inverse_gamma_bound_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        command: Command::Bound,
        hyperprior: "inv-gamma:a=1,b=1".into(),
        spec: SyntheticSpec { m1: 5, m2: 5, r_true: 1, k: 2, ..SyntheticSpec::default() },
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let e = execute(&cfg).unwrap_err();
    assert_ne!(e.exit_code(), 0);
}

fn strip_timings(v: &mut serde_json::Value) {
    for r in v["records"].as_array_mut().unwrap() {
        r.as_object_mut().unwrap().remove("wall_time_s");
    }
}

#[test]
fn sweep_is_reproducible_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        command: Command::Sweep,
        spec: SyntheticSpec { m1: 15, m2: 12, k: 3, seed: 8, ..SyntheticSpec::default() },
        b_grid: vec![1.0, 1e3, 1e9],
        ..RunConfig::default()
    };
    cfg.map.max_outer = 100;
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        cfg.out = dir.path().join(name);
        execute(&cfg).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg.out.join("report.json")).unwrap()).unwrap();
        strip_timings(&mut v);
        assert_eq!(v["records"].as_array().unwrap().len(), 3);
        reports.push((v, fs::read(cfg.out.join("report.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    let rec = &reports[0].0["records"][0];
    for key in ["b", "mse", "gamma", "effective_rank"] {
        assert!(!rec[key].is_null(), "{key}");
    }
}

#[test]
fn noiseless_fit_needs_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        command: Command::Map,
        spec: SyntheticSpec { m1: 8, m2: 8, r_true: 1, k: 2, sigma2: 0.0, ..SyntheticSpec::default() },
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    assert!(matches!(execute(&cfg), Err(CliError::Usage { field, .. }) if field == "sigma2"));
    cfg.lambda = Some(1e4);
    execute(&cfg).unwrap();
}
