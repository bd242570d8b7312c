//! Calibration of `lambda = (lambda_beta, lambda_gamma)` by BIC: particle
//! swarm with warm restarts, and the grid-search baseline.
//!
//! The swarm is generic over a [`BicObjective`], so the same driver runs the
//! full SAPG + refit + importance-sampling pipeline ([`SapgBic`]) or any
//! cheap surrogate.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{bic, loglik_is, refit_support, IsConfig, LogLikEstimate, SupportMask};
use crate::model::{Dataset, PenaltyWeights, ThetaParams};
use crate::pk::StructuralModel;
use crate::sapg::{
    sapg_run, surrogate_with_gradient, Lambda, SapgConfig, SapgOutput, SapgRun, WarmStart,
};
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    /// Number of particles.
    pub particles: usize,
    /// Number of swarm iterations.
    pub iterations: usize,
    pub c1: f64,
    pub c2: f64,
    /// Inertia at the first iteration (deterministic part).
    pub omega_start: f64,
    /// Inertia floor reached at the last iteration.
    pub omega_end: f64,
    /// Upper corner of the search box; computed by a pilot run when unset.
    pub lambda_max: Option<Lambda>,
    /// SAPG iterations per evaluation.
    pub sapg_iter: usize,
    /// Extra SAPG iterations for the first swarm iteration (default
    /// `2 * sapg_iter`).
    pub first_iter_extra: Option<usize>,
    /// SAPG iterations of the unpenalized refit (default: same as the
    /// evaluation run).
    pub refit_iter: Option<usize>,
    pub warm_restart: bool,
    /// Starting positions; a log-uniform Latin hypercube when unset.
    pub init_positions: Option<Vec<Lambda>>,
    /// SAPG iterations of the pilot run that sets `lambda_max`.
    pub pilot_iter: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 25,
            iterations: 10,
            c1: 2.0,
            c2: 2.0,
            omega_start: 0.9,
            omega_end: 0.4,
            lambda_max: None,
            sapg_iter: 4000,
            first_iter_extra: None,
            refit_iter: None,
            warm_restart: true,
            init_positions: None,
            pilot_iter: 1000,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 1 || self.iterations < 1 {
            return Err(Error::invalid("need at least one particle and one iteration"));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::invalid("acceleration constants must be nonnegative"));
        }
        if let Some(lm) = self.lambda_max {
            if !(lm.beta > 0.0 && lm.gamma > 0.0) || !lm.beta.is_finite() || !lm.gamma.is_finite() {
                return Err(Error::invalid("lambda_max must be positive and finite"));
            }
        }
        if let Some(p) = &self.init_positions {
            if p.len() != self.particles {
                return Err(Error::invalid(format!(
                    "{} initial positions for {} particles",
                    p.len(),
                    self.particles
                )));
            }
            for l in p {
                l.validate()?;
            }
        }
        if self.sapg_iter == 0 {
            return Err(Error::invalid("sapg_iter must be positive"));
        }
        Ok(())
    }

    /// SAPG iterations used at swarm iteration `l` (1-based).
    pub fn iterations_at(&self, l: usize) -> usize {
        if l == 1 {
            self.sapg_iter + self.first_iter_extra.unwrap_or(2 * self.sapg_iter)
        } else {
            self.sapg_iter
        }
    }
}

/// `(w0 - wN) (N - l) / N + wN * 4 U (1 - U)`.
pub fn inertia_weight(l: usize, n_iter: usize, u: f64, omega_start: f64, omega_end: f64) -> f64 {
    let n = n_iter.max(1) as f64;
    (omega_start - omega_end) * (n - l as f64) / n + omega_end * 4.0 * u * (1.0 - u)
}

/// One swarm member.
#[derive(Debug, Clone)]
pub struct Particle<S> {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub best_position: [f64; 2],
    pub best_bic: f64,
    pub state: Option<S>,
    rng: ChaCha8Rng,
}

impl<S> Particle<S> {
    pub fn new(position: [f64; 2], seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        Self {
            position,
            velocity: [0.0; 2],
            best_position: position,
            best_bic: f64::INFINITY,
            state: None,
            rng,
        }
    }

    /// Draws `(R1, R2)` from the particle's own stream.
    pub fn draw_coefficients(&mut self) -> ([f64; 2], [f64; 2]) {
        let r1 = [self.rng.random(), self.rng.random()];
        let r2 = [self.rng.random(), self.rng.random()];
        (r1, r2)
    }
}

/// `nu <- omega nu + c1 R1 o (lambda_P - lambda) + c2 R2 o (lambda_G - lambda)`,
/// clamped to `[-nu_max, nu_max]`; then `lambda <- lambda + nu`, clamped to
/// `[0, lambda_max]`. `nu_max = lambda_max / 5`.
#[allow(clippy::too_many_arguments)]
pub fn velocity_position_update(
    position: &mut [f64; 2],
    velocity: &mut [f64; 2],
    personal_best: [f64; 2],
    global_best: [f64; 2],
    omega: f64,
    r1: [f64; 2],
    r2: [f64; 2],
    c1: f64,
    c2: f64,
    lambda_max: [f64; 2],
) {
    for d in 0..2 {
        let nu_max = lambda_max[d] / 5.0;
        let v = omega * velocity[d]
            + c1 * r1[d] * (personal_best[d] - position[d])
            + c2 * r2[d] * (global_best[d] - position[d]);
        velocity[d] = v.clamp(-nu_max, nu_max);
        position[d] = (position[d] + velocity[d]).clamp(0.0, lambda_max[d]);
    }
}

/// SA steps of one SAPG run at swarm iteration `l` with warm restart:
/// `delta_star ((N_SAPG / Freq)(l - 1) + n)^-zeta`, `n` indexing MCMC
/// updates.
pub fn warm_restart_delta_schedule(l: usize, n_sapg: usize, config: &SapgConfig) -> Vec<f64> {
    let per_run = config.updates_per_run(n_sapg);
    let offset = per_run * l.saturating_sub(1);
    (1..=per_run)
        .map(|n| crate::sapg::sa_step(offset + n, config))
        .collect()
}

/// Position in the SA schedule at which each swarm iteration starts.
pub fn warm_restart_offsets(pso: &PsoConfig, sapg: &SapgConfig) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(pso.iterations);
    let mut acc = 0;
    for l in 1..=pso.iterations {
        offsets.push(acc);
        acc += sapg.updates_per_run(pso.iterations_at(l));
    }
    offsets
}

/// What an evaluation needs to know about its place in the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalContext {
    /// Swarm iteration (1-based); 0 for grid points.
    pub iteration: usize,
    pub particle: usize,
    /// SA schedule offset for warm-started runs.
    pub sa_offset: usize,
    pub n_iter: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Evaluated<S, M> {
    pub bic: f64,
    /// Warm-start payload for this particle's next run.
    pub state: S,
    pub model: M,
}

/// BIC as a function of `lambda`.
pub trait BicObjective: Sync {
    type State: Clone + Send + Sync;
    type Model: Clone + Send;

    fn evaluate(
        &self,
        lambda: Lambda,
        ctx: &EvalContext,
        warm: Option<&Self::State>,
    ) -> Result<Evaluated<Self::State, Self::Model>>;

    /// MCMC updates consumed by a run of `n_iter` iterations.
    fn sa_updates(&self, n_iter: usize) -> usize {
        let _ = n_iter;
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub particle: usize,
    pub lambda: Lambda,
    pub bic: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SwarmResult<M> {
    pub lambda: Lambda,
    pub bic: f64,
    /// Model at the global best (none if every evaluation failed).
    pub model: Option<M>,
    pub lambda_max: Lambda,
    pub history: Vec<EvalRecord>,
}

/// Log-uniform Latin hypercube on `[1e-3 lambda_max, lambda_max]` per axis.
pub fn latin_hypercube(m: usize, lambda_max: Lambda, rng: &mut impl Rng) -> Vec<Lambda> {
    let axis = |hi: f64, rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let lo = hi * 1e-3;
        let mut strata: Vec<usize> = (0..m).collect();
        strata.shuffle(rng);
        strata
            .into_iter()
            .map(|s| {
                let u = (s as f64 + rng.random::<f64>()) / m as f64;
                lo * (hi / lo).powf(u)
            })
            .collect()
    };
    let b = axis(lambda_max.beta, rng);
    let g = axis(lambda_max.gamma, rng);
    b.into_iter().zip(g).map(|(b, g)| Lambda::new(b, g)).collect()
}

/// Particle swarm minimization of `objective` over `[0, lambda_max]^2`.
/// `progress` sees every evaluation as it is merged.
pub fn run_swarm<O: BicObjective>(
    objective: &O,
    config: &PsoConfig,
    lambda_max: Lambda,
    seed: u64,
    mut progress: impl FnMut(&EvalRecord),
) -> Result<SwarmResult<O::Model>> {
    config.validate()?;
    let lmax = [lambda_max.beta, lambda_max.gamma];
    if !(lmax[0] > 0.0 && lmax[1] > 0.0) {
        return Err(Error::invalid("lambda_max must be positive"));
    }
    let mut swarm_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    let init = match &config.init_positions {
        Some(p) => p.clone(),
        None => latin_hypercube(config.particles, lambda_max, &mut swarm_rng),
    };
    let particle_seed = derive_seed(seed, &[1]);
    let mut particles: Vec<Particle<O::State>> = init
        .iter()
        .enumerate()
        .map(|(m, l)| {
            let pos = [l.beta.clamp(0.0, lmax[0]), l.gamma.clamp(0.0, lmax[1])];
            Particle::new(pos, particle_seed, m)
        })
        .collect();

    let mut history = Vec::with_capacity(config.particles * config.iterations);
    let mut best_model: Option<O::Model> = None;
    let mut global = (f64::INFINITY, particles[0].position);
    let mut sa_offset = 0;

    for l in 1..=config.iterations {
        let n_iter = config.iterations_at(l);
        let offset = if config.warm_restart { sa_offset } else { 0 };
        let results: Vec<Result<Evaluated<O::State, O::Model>>> = particles
            .par_iter()
            .enumerate()
            .map(|(m, p)| {
                let ctx = EvalContext {
                    iteration: l,
                    particle: m,
                    sa_offset: offset,
                    n_iter,
                    seed: derive_seed(seed, &[2, l as u64, m as u64]),
                };
                let warm = if config.warm_restart { p.state.as_ref() } else { None };
                objective.evaluate(Lambda::new(p.position[0], p.position[1]), &ctx, warm)
            })
            .collect();
        sa_offset += objective.sa_updates(n_iter);

        for (m, (p, res)) in particles.iter_mut().zip(results).enumerate() {
            let lambda = Lambda::new(p.position[0], p.position[1]);
            let (value, error) = match res {
                Ok(ev) => {
                    let value = if ev.bic.is_nan() { f64::INFINITY } else { ev.bic };
                    if value < global.0 {
                        best_model = Some(ev.model);
                    }
                    p.state = Some(ev.state);
                    (value, None)
                }
                Err(e) => {
                    warn!("iteration {l}, particle {m}: evaluation failed: {e}");
                    (f64::INFINITY, Some(e.to_string()))
                }
            };
            if value < p.best_bic {
                p.best_bic = value;
                p.best_position = p.position;
            }
            if value < global.0 {
                global = (value, p.position);
            }
            let record = EvalRecord {
                iteration: l,
                particle: m,
                lambda,
                bic: value,
                error,
            };
            progress(&record);
            history.push(record);
        }
        info!(
            "swarm iteration {l}: best BIC {:.4} at ({:.6e}, {:.6e})",
            global.0, global.1[0], global.1[1]
        );

        if l < config.iterations {
            let u: f64 = swarm_rng.random();
            let omega = inertia_weight(l, config.iterations, u, config.omega_start, config.omega_end);
            for p in particles.iter_mut() {
                let (r1, r2) = p.draw_coefficients();
                let pb = p.best_position;
                velocity_position_update(
                    &mut p.position,
                    &mut p.velocity,
                    pb,
                    global.1,
                    omega,
                    r1,
                    r2,
                    config.c1,
                    config.c2,
                    lmax,
                );
            }
        }
    }

    Ok(SwarmResult {
        lambda: Lambda::new(global.1[0], global.1[1]),
        bic: global.0,
        model: best_model,
        lambda_max,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct GridResult<M> {
    pub lambda: Lambda,
    pub bic: f64,
    pub model: Option<M>,
    /// One record per grid point, in grid order.
    pub table: Vec<EvalRecord>,
}

/// Independent cold-started evaluations at every grid point. Failed points
/// are recorded with infinite BIC and excluded from the argmin.
pub fn run_grid<O: BicObjective>(
    objective: &O,
    grid: &[Lambda],
    n_iter: usize,
    seed: u64,
) -> Result<GridResult<O::Model>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    for l in grid {
        l.validate()?;
    }
    let results: Vec<Result<Evaluated<O::State, O::Model>>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let ctx = EvalContext {
                iteration: 0,
                particle: i,
                sa_offset: 0,
                n_iter,
                seed: derive_seed(seed, &[3, i as u64]),
            };
            objective.evaluate(lambda, &ctx, None)
        })
        .collect();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, O::Model)> = None;
    for (i, (lambda, res)) in grid.iter().zip(results).enumerate() {
        let (value, error) = match res {
            Ok(ev) => {
                let value = if ev.bic.is_nan() { f64::INFINITY } else { ev.bic };
                if value.is_finite() && best.as_ref().is_none_or(|b| value < b.1) {
                    best = Some((i, value, ev.model));
                }
                (value, None)
            }
            Err(e) => {
                warn!("grid point {i} ({lambda:?}) failed: {e}");
                (f64::INFINITY, Some(e.to_string()))
            }
        };
        table.push(EvalRecord {
            iteration: 0,
            particle: i,
            lambda: *lambda,
            bic: value,
            error,
        });
    }
    match best {
        Some((i, value, model)) => Ok(GridResult {
            lambda: grid[i],
            bic: value,
            model: Some(model),
            table,
        }),
        None => Ok(GridResult {
            lambda: grid[0],
            bic: f64::INFINITY,
            model: None,
            table,
        }),
    }
}

/// `n_beta x n_gamma` grid, log-spaced on `[lo, hi]` per axis.
pub fn log_grid(lo: Lambda, hi: Lambda, n_beta: usize, n_gamma: usize) -> Result<Vec<Lambda>> {
    if n_beta == 0 || n_gamma == 0 || !(lo.beta > 0.0 && lo.gamma > 0.0) {
        return Err(Error::invalid("grid needs positive bounds and at least one point per axis"));
    }
    let axis = |a: f64, b: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![b];
        }
        (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
            .collect()
    };
    let bs = axis(lo.beta, hi.beta, n_beta);
    let gs = axis(lo.gamma, hi.gamma, n_gamma);
    Ok(bs
        .iter()
        .flat_map(|&b| gs.iter().map(move |&g| Lambda::new(b, g)))
        .collect())
}

/// Result of one full evaluation at a given `lambda`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    pub lambda: Lambda,
    /// Penalized estimate.
    pub theta_hat: ThetaParams,
    /// Unpenalized refit on the support of `theta_hat`.
    pub theta_refit: ThetaParams,
    pub support: SupportMask,
    pub loglik: LogLikEstimate,
    pub bic: f64,
}

/// SAPG at `lambda`, unpenalized refit on the selected support,
/// importance-sampling log-likelihood of the refit, BIC.
pub struct SapgBic<'a> {
    pub dataset: &'a Dataset,
    pub model: &'a dyn StructuralModel,
    pub weights: &'a PenaltyWeights,
    pub sapg: &'a SapgConfig,
    pub is: &'a IsConfig,
    pub theta0: &'a ThetaParams,
    /// Refit iterations; the evaluation's own length when unset.
    pub refit_iter: Option<usize>,
}

impl SapgBic<'_> {
    /// Evaluates one `lambda` from `init` (cold start when `None`).
    pub fn fit(
        &self,
        lambda: Lambda,
        init: Option<WarmStart>,
        n_iter: usize,
        sa_offset: usize,
        seed: u64,
    ) -> Result<(WarmStart, FittedModel)> {
        let (fit, model) = self.fit_detailed(lambda, init, n_iter, sa_offset, seed)?;
        Ok((fit.warm_start(), model))
    }

    /// As [`SapgBic::fit`], returning the whole penalized run.
    pub fn fit_detailed(
        &self,
        lambda: Lambda,
        init: Option<WarmStart>,
        n_iter: usize,
        sa_offset: usize,
        seed: u64,
    ) -> Result<(SapgOutput, FittedModel)> {
        let mut run = SapgRun::new(self.dataset, self.model, lambda, self.weights, self.sapg);
        run.n_iter = Some(n_iter);
        run.sa_offset = sa_offset;
        let init = init.unwrap_or_else(|| WarmStart::cold(self.theta0.clone()));
        let fit = sapg_run(&run, init, derive_seed(seed, &[0]))?;
        let refit = refit_support(
            fit.warm_start(),
            self.dataset,
            self.model,
            self.sapg,
            Some(self.refit_iter.unwrap_or(n_iter)),
            derive_seed(seed, &[1]),
        )?;
        let support = SupportMask::from_theta(&fit.theta);
        let loglik = loglik_is(
            &refit.theta,
            self.dataset,
            self.model,
            self.is,
            Some(&refit.chain),
            derive_seed(seed, &[2]),
        )?;
        let value = bic(loglik.value, self.dataset, &support);
        let model = FittedModel {
            lambda,
            theta_hat: fit.theta.clone(),
            theta_refit: refit.theta,
            support,
            loglik,
            bic: value,
        };
        Ok((fit, model))
    }
}

impl BicObjective for SapgBic<'_> {
    type State = WarmStart;
    type Model = FittedModel;

    fn evaluate(
        &self,
        lambda: Lambda,
        ctx: &EvalContext,
        warm: Option<&WarmStart>,
    ) -> Result<Evaluated<WarmStart, FittedModel>> {
        let (state, model) = self.fit(lambda, warm.cloned(), ctx.n_iter, ctx.sa_offset, ctx.seed)?;
        Ok(Evaluated {
            bic: model.bic,
            state,
            model,
        })
    }

    fn sa_updates(&self, n_iter: usize) -> usize {
        self.sapg.updates_per_run(n_iter)
    }
}

/// Smallest `lambda` (per axis, times 1.2) at which zero satisfies the
/// optimality condition of every penalized coordinate. Each axis is
/// measured at the end of a short run with that axis overwhelmingly
/// penalized and the other left free, since the threshold for one block
/// grows when the other is allowed to fit.
pub fn lambda_max_pilot(objective: &SapgBic<'_>, n_iter: usize, seed: u64) -> Result<Lambda> {
    let ratio_max = |g: &[f64], w: &[f64]| -> f64 {
        g.iter()
            .zip(w)
            .filter(|(_, w)| **w > 0.0 && w.is_finite())
            .map(|(g, w)| g.abs() / w)
            .fold(0.0, f64::max)
    };
    let scale = |v: f64| if v > 0.0 { 1.2 * v } else { 1.0 };
    let pilot = |lambda: Lambda, stream: u64| -> Result<crate::sapg::Gradient> {
        let mut run = SapgRun::new(objective.dataset, objective.model, lambda, objective.weights, objective.sapg);
        run.n_iter = Some(n_iter);
        let fit = sapg_run(&run, WarmStart::cold(objective.theta0.clone()), derive_seed(seed, &[stream]))?;
        Ok(surrogate_with_gradient(&fit.theta, &fit.s_sa, objective.dataset)?.1)
    };
    let g_beta = pilot(Lambda::new(1e6, 0.0), 0)?;
    let g_gamma = pilot(Lambda::new(0.0, 1e6), 1)?;
    Ok(Lambda::new(
        scale(ratio_max(&g_beta.beta, &objective.weights.beta)),
        scale(ratio_max(&g_gamma.gamma, &objective.weights.gamma)),
    ))
}

/// Particle-swarm calibration of `lambda` on the full pipeline.
pub fn pso_select(
    objective: &SapgBic<'_>,
    config: &PsoConfig,
    seed: u64,
    progress: impl FnMut(&EvalRecord),
) -> Result<SwarmResult<FittedModel>> {
    config.validate()?;
    let lambda_max = match config.lambda_max {
        Some(l) => l,
        None => {
            let l = lambda_max_pilot(objective, config.pilot_iter, derive_seed(seed, &[9]))?;
            info!("pilot lambda_max = ({:.6e}, {:.6e})", l.beta, l.gamma);
            l
        }
    };
    run_swarm(objective, config, lambda_max, seed, progress)
}

/// Grid search on the full pipeline; every point starts from `theta0`.
pub fn grid_search(
    objective: &SapgBic<'_>,
    grid: &[Lambda],
    n_iter: usize,
    seed: u64,
) -> Result<GridResult<FittedModel>> {
    run_grid(objective, grid, n_iter, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_examples() {
        assert!((inertia_weight(0, 10, 0.5, 0.9, 0.4) - 0.9).abs() < 1e-15);
        assert!((inertia_weight(10, 10, 0.5, 0.9, 0.4) - 0.4).abs() < 1e-15);
        assert!((inertia_weight(5, 10, 0.0, 0.9, 0.4) - 0.25).abs() < 1e-15);
        assert!((inertia_weight(5, 10, 1.0, 0.9, 0.4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn velocity_update_cases() {
        let lmax = [10.0, 10.0];
        let mut pos = [3.0, 4.0];
        let mut vel = [0.0, 0.0];
        velocity_position_update(&mut pos, &mut vel, [3.0, 4.0], [3.0, 4.0], 0.7, [0.5; 2], [0.5; 2], 2.0, 2.0, lmax);
        assert_eq!(pos, [3.0, 4.0]);
        assert_eq!(vel, [0.0, 0.0]);

        let mut vel = [1.0, -1.0];
        velocity_position_update(&mut pos, &mut vel, [9.0, 9.0], [9.0, 9.0], 0.5, [0.0; 2], [0.0; 2], 2.0, 2.0, lmax);
        assert_eq!(vel, [0.5, -0.5]);
        assert_eq!(pos, [3.5, 3.5]);

        let mut vel = [0.0, 0.0];
        velocity_position_update(&mut pos, &mut vel, [10.0, 0.0], [10.0, 0.0], 0.5, [1.0; 2], [1.0; 2], 2.0, 2.0, lmax);
        assert_eq!(vel, [2.0, -2.0]);

        let mut pos = [0.5, 9.5];
        let mut vel = [-2.0, 2.0];
        let here = pos;
        velocity_position_update(&mut pos, &mut vel, here, here, 1.0, [0.0; 2], [0.0; 2], 2.0, 2.0, lmax);
        assert_eq!(pos, [0.0, 10.0]);
    }

    #[test]
    fn delta_schedule_continuity() {
        let cfg = SapgConfig::default();
        let d2 = warm_restart_delta_schedule(2, 4000, &cfg);
        assert_eq!(d2.len(), 200);
        assert!((d2[0] - 201f64.powf(-0.75)).abs() < 1e-15);
        assert!((d2[0] - 0.0188).abs() < 1e-4);
        let d1 = warm_restart_delta_schedule(1, 4000, &cfg);
        assert_eq!(d1[0], 1.0);
        assert!(d1[199] > d2[0]);
        let all: Vec<f64> = (1..=5).flat_map(|l| warm_restart_delta_schedule(l, 4000, &cfg)).collect();
        assert!(all.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn offsets_account_for_first_iteration_extra() {
        let pso = PsoConfig {
            iterations: 3,
            sapg_iter: 400,
            ..Default::default()
        };
        let sapg = SapgConfig::default();
        assert_eq!(warm_restart_offsets(&pso, &sapg), vec![0, 60, 80]);
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lm = Lambda::new(100.0, 1.0);
        let pts = latin_hypercube(10, lm, &mut rng);
        let mut strata: Vec<usize> = pts
            .iter()
            .map(|p| ((p.beta / 0.1).log10() / 3.0 * 10.0).floor() as usize)
            .collect();
        strata.sort();
        assert_eq!(strata, (0..10).collect::<Vec<_>>());
        assert!(pts.iter().all(|p| p.gamma >= 1e-3 && p.gamma <= 1.0));
    }

    #[test]
    fn log_grid_shape() {
        let g = log_grid(Lambda::new(1.0, 1.0), Lambda::new(100.0, 10.0), 3, 2).unwrap();
        assert_eq!(g.len(), 6);
        assert!((g[2].beta - 10.0).abs() < 1e-12);
        assert_eq!(g[5], Lambda::new(100.0, 10.0));
    }
}
