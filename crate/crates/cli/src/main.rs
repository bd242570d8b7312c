use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use nlmesel::sapg::StepMode;
use nlmesel_cli::commands::{self, DataSource, SelectMode};
use nlmesel_cli::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "nlmesel", version, about = "Penalized covariate and correlation selection for nonlinear mixed-effects models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Observation CSV (id,time,dv,amt_bolus,rate,t_inf).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Covariate CSV keyed by id.
    #[arg(long, global = true)]
    covariates: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = "NLME_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_parser = parse_step_mode)]
    step_mode: Option<StepMode>,
    /// SAPG iterations per run.
    #[arg(long, global = true)]
    n_iter: Option<usize>,
    #[arg(long, global = true)]
    lambda_beta: Option<f64>,
    #[arg(long, global = true)]
    lambda_gamma: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset from the configured scenario.
    Simulate,
    /// Fit at one penalty, refit on the support, report BIC.
    Fit,
    /// Calibrate the penalty by BIC.
    Select {
        #[arg(long, value_enum, default_value = "pso")]
        mode: SelectMode,
        /// Start every particle evaluation cold.
        #[arg(long)]
        no_warm_restart: bool,
    },
    /// BIC of a given parameter vector.
    EvalBic {
        #[arg(long)]
        theta: PathBuf,
    },
}

fn parse_step_mode(s: &str) -> std::result::Result<StepMode, String> {
    s.parse().map_err(|e: nlmesel::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
        if matches!(cli.command, Command::Simulate) {
            cfg.sim.seed = s;
        }
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(m) = cli.step_mode {
        cfg.sapg.step_mode = m;
    }
    if let Some(n) = cli.n_iter {
        cfg.sapg.n_iter = n;
    }
    if let Some(b) = cli.lambda_beta {
        cfg.lambda.beta = b;
    }
    if let Some(g) = cli.lambda_gamma {
        cfg.lambda.gamma = g;
    }
    if let Command::Select { no_warm_restart: true, .. } = cli.command {
        cfg.pso.warm_restart = false;
    }
    cfg.validate()?;
    cfg.sim.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    let src = DataSource {
        data: cli.data.clone(),
        covariates: cli.covariates.clone(),
    };
    let out = &cli.out_dir;
    match &cli.command {
        Command::Simulate => commands::simulate(&cfg, out),
        Command::Fit => commands::fit(&cfg, &src, out),
        Command::Select { mode, .. } => commands::select(&cfg, &src, *mode, out),
        Command::EvalBic { theta } => commands::eval_bic(&cfg, &src, theta, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<nlmesel::Error>()
                .map(|e| e.kind())
                .or_else(|| e.downcast_ref::<std::io::Error>().map(|_| "io"))
                .unwrap_or("error");
            let body = serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
