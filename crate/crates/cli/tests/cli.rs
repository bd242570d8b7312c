use std::path::Path;
use std::process::{Command, Output};

use nlmesel::model::ThetaParams;
use nlmesel_cli::commands::{BicReport, Selection};

const CONFIG: &str = r#"{
  "seed": 4,
  "sapg": { "n_iter": 200, "n_sa": 5 },
  "pso": { "particles": 3, "iterations": 2, "sapg_iter": 60, "pilot_iter": 60 },
  "is": { "m_is": 200, "burn_in": 20, "moment_sweeps": 40 },
  "grid": { "n_beta": 5, "n_gamma": 5, "n_iter": 60 }
}"#;

fn nlmesel(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmesel"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) {
    let o = nlmesel(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    (dir, cfg)
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn simulate_writes_one_row_per_observation_and_is_reproducible() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--config", &cfg, "--seed", "2"], &a);
    ok(&["simulate", "--config", &cfg, "--seed", "2"], &b);
    assert_eq!(csv_rows(&a.join("data.csv")), 50 * 7);
    assert_eq!(csv_rows(&a.join("covariates.csv")), 50);
    for f in ["data.csv", "covariates.csv", "truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&["simulate", "--config", &cfg, "--seed", "3"], &c);
    assert_ne!(std::fs::read(a.join("data.csv")).unwrap(), std::fs::read(c.join("data.csv")).unwrap());
}

#[test]
fn invalid_input_is_reported_as_json() {
    let (dir, _) = setup();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "sim": { "n": 0 } }"#).unwrap();
    let o = nlmesel(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_input");

    let o = nlmesel(&["fit"], &dir.path().join("out"));
    assert!(!o.status.success(), "fit without a seed must fail");
}

#[test]
fn fit_writes_trace_and_round_trippable_theta() {
    let (dir, cfg) = setup();
    let out = dir.path().join("fit");
    ok(&["fit", "--config", &cfg, "--lambda-beta", "5", "--lambda-gamma", "1"], &out);
    assert_eq!(csv_rows(&out.join("trace.csv")), 200);
    let text = std::fs::read_to_string(out.join("theta_hat.json")).unwrap();
    let theta: ThetaParams = serde_json::from_str(&text).unwrap();
    let again: ThetaParams = serde_json::from_str(&serde_json::to_string(&theta).unwrap()).unwrap();
    let bits = |t: &ThetaParams| -> Vec<u64> {
        t.beta
            .iter()
            .chain(&t.gamma)
            .chain(&t.delta)
            .chain([&t.sigma])
            .map(|v| v.to_bits())
            .collect()
    };
    assert_eq!(bits(&theta), bits(&again));

    let big = dir.path().join("big");
    ok(&["fit", "--config", &cfg, "--lambda-beta", "1e6", "--lambda-gamma", "1e6"], &big);
    let report: BicReport = serde_json::from_str(&std::fs::read_to_string(big.join("bic.json")).unwrap()).unwrap();
    assert_eq!(report.beta_support, 0);
    assert_eq!(report.gamma_support, 0);
}

#[test]
fn grid_and_swarm_record_every_evaluation() {
    let (dir, cfg) = setup();
    let grid = dir.path().join("grid");
    ok(&["select", "--mode", "grid", "--config", &cfg], &grid);
    assert_eq!(csv_rows(&grid.join("grid.csv")), 25);

    let pso = dir.path().join("pso");
    ok(&["select", "--config", &cfg], &pso);
    assert_eq!(csv_rows(&pso.join("history.csv")), 3 * 2);
    let sel: Selection = serde_json::from_str(&std::fs::read_to_string(pso.join("selection.json")).unwrap()).unwrap();
    assert!(sel.warm_restart);
    assert_eq!(sel.evaluations, 6);

    let cold = dir.path().join("cold");
    ok(&["select", "--no-warm-restart", "--config", &cfg], &cold);
    let sel: Selection = serde_json::from_str(&std::fs::read_to_string(cold.join("selection.json")).unwrap()).unwrap();
    assert!(!sel.warm_restart);
}

#[test]
fn eval_bic_scores_a_saved_fit() {
    let (dir, cfg) = setup();
    let data = dir.path().join("sim");
    ok(&["simulate", "--config", &cfg], &data);
    let d = data.join("data.csv");
    let c = data.join("covariates.csv");
    let src = ["--data", d.to_str().unwrap(), "--covariates", c.to_str().unwrap(), "--config", &cfg];
    let fit = dir.path().join("fit");
    ok(&[&["fit", "--lambda-beta", "5"], &src[..]].concat(), &fit);
    let theta = fit.join("theta_refit.json");
    let eval = dir.path().join("eval");
    ok(&[&["eval-bic", "--theta", theta.to_str().unwrap()], &src[..]].concat(), &eval);
    let report: BicReport = serde_json::from_str(&std::fs::read_to_string(eval.join("bic.json")).unwrap()).unwrap();
    assert!(report.bic.is_finite());
    assert!((report.bic - (-2.0 * report.loglik + 50f64.ln() * report.support_size as f64)).abs() < 1e-9);
}
