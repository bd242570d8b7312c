//! The four subcommands. Each one reads its inputs, runs, and leaves its
//! results as files under the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use nlmesel::model::{Dataset, PenaltyWeights, ThetaParams};
use nlmesel::pk::noncompartmental_guess;
use nlmesel::pso::{grid_search, lambda_max_pilot, log_grid, pso_select, EvalRecord, FittedModel, SapgBic};
use nlmesel::sapg::{initial_theta, Lambda};
use nlmesel::sim::GroundTruth;
use nlmesel::stats::{derive_seed, iqr, median};
use nlmesel::{bic, loglik_is, simulate_dataset, SimScenario, SupportMask, TwoCompartment};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{csv_writer, fmt_f64, read_dataset, read_json, write_dataset, write_json, write_trace};

/// Where the data for `fit`, `select` and `eval-bic` comes from.
#[derive(Debug, Clone, Default)]
pub struct DataSource {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Pso,
    Grid,
}

/// Summary written next to every fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub lambda: Lambda,
    pub loglik: f64,
    pub mc_se: f64,
    pub m_is: usize,
    pub bic: f64,
    pub support_size: usize,
    pub beta_support: usize,
    pub gamma_support: usize,
    /// `(latent, covariate)` pairs, 0-based.
    pub selected_effects: Vec<(usize, usize)>,
    /// `(row, col)` entries of the correlation factor, 0-based.
    pub selected_correlations: Vec<(usize, usize)>,
}

impl BicReport {
    fn new(lambda: Lambda, support: &SupportMask, ll: &nlmesel::LogLikEstimate, bic: f64, l: usize) -> Self {
        let pairs = nlmesel::model::lower_pairs(l).collect::<Vec<_>>();
        Self {
            lambda,
            loglik: ll.value,
            mc_se: ll.mc_se,
            m_is: ll.m_is,
            bic,
            support_size: support.size(),
            beta_support: support.beta_support(),
            gamma_support: support.gamma_support(),
            selected_effects: support.selected_effects(),
            selected_correlations: pairs
                .into_iter()
                .zip(&support.gamma)
                .filter(|(_, s)| **s)
                .map(|(p, _)| p)
                .collect(),
        }
    }

    fn from_model(m: &FittedModel) -> Self {
        Self::new(m.lambda, &m.support, &m.loglik, m.bic, m.theta_hat.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: SelectMode,
    pub warm_restart: bool,
    pub lambda_max: Lambda,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub report: Option<BicReport>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Loads the data files, or simulates from the configured scenario.
pub fn load_dataset(cfg: &RunConfig, src: &DataSource) -> Result<(Dataset, Option<GroundTruth>)> {
    let (mut ds, truth) = match &src.data {
        Some(path) => (read_dataset(path, src.covariates.as_deref(), 4)?, None),
        None => {
            if src.covariates.is_some() {
                bail!("--covariates needs --data");
            }
            let sim = simulate_dataset(&cfg.sim)?;
            (sim.dataset, Some(sim.truth))
        }
    };
    if cfg.standardize_covariates {
        ds.standardize_covariates();
    }
    Ok((ds, truth))
}

pub fn starting_theta(cfg: &RunConfig, ds: &Dataset) -> Result<ThetaParams> {
    let guess = match &cfg.init.mu {
        Some(mu) => Some(mu.clone()),
        None => noncompartmental_guess(ds),
    };
    let mut theta = initial_theta(ds, guess.as_deref(), cfg.init.delta0)?;
    if let Some(s) = cfg.init.sigma0 {
        theta.sigma = s;
    }
    Ok(theta)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = simulate_dataset(&cfg.sim)?;
    ensure_dir(out)?;
    write_dataset(out, &sim.dataset)?;
    write_json(&out.join("truth.json"), &sim.truth)?;
    println!(
        "{}",
        serde_json::json!({
            "subjects": sim.dataset.dims.n,
            "observations": sim.dataset.dims.total_obs(),
            "covariates": sim.dataset.dims.k,
        })
    );
    Ok(())
}

pub fn fit(cfg: &RunConfig, src: &DataSource, out: &Path) -> Result<()> {
    let seed = cfg.require_seed()?;
    let (ds, _) = load_dataset(cfg, src)?;
    let theta0 = starting_theta(cfg, &ds)?;
    let weights = PenaltyWeights::uniform(&ds.dims);
    let obj = SapgBic {
        dataset: &ds,
        model: &TwoCompartment,
        weights: &weights,
        sapg: &cfg.sapg,
        is: &cfg.is,
        theta0: &theta0,
        refit_iter: cfg.pso.refit_iter,
    };
    let (run, model) = obj.fit_detailed(cfg.lambda, None, cfg.sapg.n_iter, 0, seed)?;
    ensure_dir(out)?;
    write_json(&out.join("theta_hat.json"), &model.theta_hat)?;
    write_json(&out.join("theta_refit.json"), &model.theta_refit)?;
    write_trace(&out.join("trace.csv"), &run.trace)?;
    write_json(&out.join("bic.json"), &BicReport::from_model(&model))?;
    info!("fit: BIC {:.4}, support {}", model.bic, model.support.size());
    Ok(())
}

pub fn eval_bic(cfg: &RunConfig, src: &DataSource, theta_path: &Path, out: &Path) -> Result<()> {
    let seed = cfg.require_seed()?;
    let (ds, _) = load_dataset(cfg, src)?;
    let theta: ThetaParams = read_json(theta_path)?;
    theta.check_dims(&ds.dims)?;
    let ll = loglik_is(&theta, &ds, &TwoCompartment, &cfg.is, None, seed)?;
    let support = SupportMask::from_theta(&theta);
    let value = bic(ll.value, &ds, &support);
    ensure_dir(out)?;
    write_json(&out.join("bic.json"), &BicReport::new(Lambda::zero(), &support, &ll, value, theta.l))?;
    Ok(())
}

/// Outcome of one selection on one dataset.
pub struct SelectOutcome {
    pub selection: Selection,
    pub model: Option<FittedModel>,
    pub seconds: f64,
}

/// Runs one selection and writes its files into `out`.
pub fn select_once(
    cfg: &RunConfig,
    ds: &Dataset,
    mode: SelectMode,
    seed: u64,
    out: &Path,
) -> Result<SelectOutcome> {
    ensure_dir(out)?;
    let theta0 = starting_theta(cfg, ds)?;
    let weights = PenaltyWeights::uniform(&ds.dims);
    let obj = SapgBic {
        dataset: ds,
        model: &TwoCompartment,
        weights: &weights,
        sapg: &cfg.sapg,
        is: &cfg.is,
        theta0: &theta0,
        refit_iter: cfg.pso.refit_iter,
    };
    let start = Instant::now();
    let (lambda_max, table, model) = match mode {
        SelectMode::Pso => {
            let mut w = csv_writer(&out.join("history.csv"))?;
            w.write_record(["iteration", "particle", "lambda_beta", "lambda_gamma", "bic", "error"])?;
            let mut io_err = None;
            let res = pso_select(&obj, &cfg.pso, seed, |r| {
                if io_err.is_none() {
                    if let Err(e) = write_record(&mut w, r).and_then(|_| Ok(w.flush()?)) {
                        io_err = Some(e);
                    }
                }
            })?;
            if let Some(e) = io_err {
                return Err(e.context("writing history.csv"));
            }
            (res.lambda_max, res.history, res.model)
        }
        SelectMode::Grid => {
            let (points, lambda_max) = match &cfg.grid.points {
                Some(p) => (p.clone(), cfg.pso.lambda_max.unwrap_or_default()),
                None => {
                    let hi = match cfg.pso.lambda_max {
                        Some(l) => l,
                        None => lambda_max_pilot(&obj, cfg.pso.pilot_iter, derive_seed(seed, &[9]))?,
                    };
                    let lo = Lambda::new(hi.beta * cfg.grid.lo_fraction, hi.gamma * cfg.grid.lo_fraction);
                    (log_grid(lo, hi, cfg.grid.n_beta, cfg.grid.n_gamma)?, hi)
                }
            };
            let n_iter = cfg.grid.n_iter.unwrap_or(cfg.sapg.n_iter);
            let res = grid_search(&obj, &points, n_iter, seed)?;
            let mut w = csv_writer(&out.join("grid.csv"))?;
            w.write_record(["iteration", "particle", "lambda_beta", "lambda_gamma", "bic", "error"])?;
            for r in &res.table {
                write_record(&mut w, r)?;
            }
            w.flush()?;
            (lambda_max, res.table, res.model)
        }
    };
    let seconds = start.elapsed().as_secs_f64();

    let selection = Selection {
        mode,
        warm_restart: mode == SelectMode::Pso && cfg.pso.warm_restart,
        lambda_max,
        evaluations: table.len(),
        failed_evaluations: table.iter().filter(|r| r.error.is_some()).count(),
        report: model.as_ref().map(BicReport::from_model),
    };
    write_json(&out.join("selection.json"), &selection)?;
    if let Some(m) = &model {
        write_json(&out.join("theta_hat.json"), &m.theta_hat)?;
        write_json(&out.join("theta_refit.json"), &m.theta_refit)?;
    }
    write_json(
        &out.join("timing.json"),
        &serde_json::json!({ "wall_seconds": seconds, "evaluations": table.len() }),
    )?;
    Ok(SelectOutcome {
        selection,
        model,
        seconds,
    })
}

fn write_record(w: &mut csv::Writer<std::fs::File>, r: &EvalRecord) -> Result<()> {
    w.write_record([
        r.iteration.to_string(),
        r.particle.to_string(),
        fmt_f64(r.lambda.beta),
        fmt_f64(r.lambda.gamma),
        fmt_f64(r.bic),
        r.error.clone().unwrap_or_default(),
    ])?;
    Ok(())
}

/// `select`: one dataset, or `replicates` simulated ones in `rep_XXX`
/// subdirectories plus a `replicates.csv` summary.
pub fn select(cfg: &RunConfig, src: &DataSource, mode: SelectMode, out: &Path) -> Result<()> {
    let seed = cfg.require_seed()?;
    ensure_dir(out)?;
    if cfg.replicates == 1 {
        let (ds, _) = load_dataset(cfg, src)?;
        select_once(cfg, &ds, mode, seed, out)?;
        return Ok(());
    }
    if src.data.is_some() {
        bail!("replicates > 1 needs simulated data (drop --data)");
    }
    let mut w = csv_writer(&out.join("replicates.csv"))?;
    w.write_record(["replicate", "data_seed", "lambda_beta", "lambda_gamma", "bic", "support_size"])?;
    let mut bics = Vec::new();
    let mut times = Vec::new();
    for r in 0..cfg.replicates {
        let scenario = SimScenario {
            seed: derive_seed(cfg.sim.seed, &[r as u64]),
            ..cfg.sim.clone()
        };
        let rep_cfg = RunConfig {
            sim: scenario.clone(),
            ..cfg.clone()
        };
        let (ds, truth) = load_dataset(&rep_cfg, &DataSource::default())?;
        let dir = out.join(format!("rep_{:03}", r + 1));
        let outcome = select_once(&rep_cfg, &ds, mode, derive_seed(seed, &[r as u64]), &dir)?;
        if let Some(t) = truth {
            write_json(&dir.join("truth.json"), &t)?;
        }
        let (lb, lg, b, size) = match &outcome.model {
            Some(m) => (m.lambda.beta, m.lambda.gamma, m.bic, m.support.size().to_string()),
            None => (f64::NAN, f64::NAN, f64::INFINITY, String::new()),
        };
        w.write_record([
            (r + 1).to_string(),
            scenario.seed.to_string(),
            fmt_f64(lb),
            fmt_f64(lg),
            fmt_f64(b),
            size,
        ])?;
        w.flush()?;
        bics.push(b);
        times.push(outcome.seconds);
    }
    let summary = |v: &[f64]| {
        let (q1, q3) = iqr(v);
        serde_json::json!({ "median": median(v), "q1": q1, "q3": q3 })
    };
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "replicates": cfg.replicates, "bic": summary(&bics) }),
    )?;
    write_json(
        &out.join("timing.json"),
        &serde_json::json!({ "replicates": cfg.replicates, "wall_seconds": summary(&times) }),
    )?;
    Ok(())
}
