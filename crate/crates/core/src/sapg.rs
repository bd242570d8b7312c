//! Stochastic approximation proximal gradient (SAPG) for the weighted-L1
//! penalized likelihood at a fixed `lambda`.
//!
//! Each iteration:
//! 1. every `freq` iterations, `M_n` MCMC sweeps under the current theta and
//!    a stochastic-approximation update `S_sa += delta_n (mean S - S_sa)`;
//! 2. Fisher-identity gradient of the complete-data log-likelihood evaluated
//!    at `S_sa`;
//! 3. per-coordinate step sizes (common, per-component, or AdaGrad);
//! 4. soft-thresholding of `beta` and the strict lower triangle of `Gamma`,
//!    plain ascent on `Delta` and `sigma` followed by projection onto
//!    `[eps_pos, inf)`.

use log::error;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::SupportMask;
use crate::mcmc::{mh_sweep, ChainState, SuffStats};
use crate::model::{
    design_mean_into, design_transpose_acc, gamma_matrix, lower_pairs, Dataset, PenaltyWeights,
    PopulationCache, ThetaParams,
};
use crate::pk::StructuralModel;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// One decreasing sequence shared by every coordinate.
    Css,
    /// The common sequence scaled per parameter block.
    Mss,
    /// Per-coordinate AdaGrad steps.
    Ass,
}

impl std::str::FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "css" => Ok(StepMode::Css),
            "mss" => Ok(StepMode::Mss),
            "ass" => Ok(StepMode::Ass),
            other => Err(Error::invalid(format!("unknown step mode {other:?}"))),
        }
    }
}

/// Multipliers of the base step per parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockScale {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
}

impl Default for BlockScale {
    fn default() -> Self {
        Self {
            beta: 1.5,
            gamma: 1.0,
            delta: 1.0,
            sigma: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SapgConfig {
    /// Initial stochastic-approximation step.
    pub delta_star: f64,
    /// Decay exponent of the SA steps.
    pub zeta: f64,
    /// Number of MCMC updates with constant SA step.
    pub n_sa: usize,
    /// Total SAPG iterations.
    pub n_iter: usize,
    /// MCMC update every `freq` iterations.
    pub freq: usize,
    /// MCMC sweeps per update (`M_n`).
    pub mcmc_sweeps: usize,
    /// Base gradient step.
    pub gamma0: f64,
    /// AdaGrad stabilizer.
    pub cst: f64,
    pub step_mode: StepMode,
    /// Constant-step phase length of the common sequence.
    pub n_alpha: usize,
    /// Decay exponent of the common sequence.
    pub alpha: f64,
    pub mss_scale: BlockScale,
    /// Projection floor for `Delta` entries and `sigma`.
    pub eps_pos: f64,
    /// Lower bound on the burn-in sweeps used to initialize `S_sa`.
    pub min_burn_in: usize,
    /// Proposal scales adapt during the first `adapt_updates` MCMC updates
    /// (counted along the warm-restart schedule).
    pub adapt_updates: usize,
    /// Keep a theta snapshot every this many iterations (0 = never).
    pub snapshot_every: usize,
}

impl Default for SapgConfig {
    fn default() -> Self {
        Self {
            delta_star: 1.0,
            zeta: 0.75,
            n_sa: 0,
            n_iter: 4000,
            freq: 20,
            mcmc_sweeps: 5,
            gamma0: 0.2,
            cst: 1e-8,
            step_mode: StepMode::Ass,
            n_alpha: 0,
            alpha: 0.5,
            mss_scale: BlockScale::default(),
            eps_pos: 1e-6,
            min_burn_in: 100,
            adapt_updates: 50,
            snapshot_every: 0,
        }
    }
}

impl SapgConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_star", self.delta_star),
            ("gamma0", self.gamma0),
            ("cst", self.cst),
            ("eps_pos", self.eps_pos),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.delta_star > 1.0 {
            return Err(Error::invalid("delta_star must not exceed 1"));
        }
        if !(self.zeta > 0.5 && self.zeta <= 1.0) {
            return Err(Error::invalid(format!("zeta must lie in (0.5, 1], got {}", self.zeta)));
        }
        if self.freq == 0 || self.mcmc_sweeps == 0 {
            return Err(Error::invalid("freq and mcmc_sweeps must be at least 1"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid("alpha must be nonnegative"));
        }
        Ok(())
    }

    /// MCMC updates performed by a run of `n_iter` iterations.
    pub fn updates_per_run(&self, n_iter: usize) -> usize {
        n_iter.div_ceil(self.freq)
    }

    /// Whether iteration `n` (1-based) performs an MCMC update. Updates
    /// happen at `n = 1, 1 + freq, 1 + 2 freq, ...`.
    pub fn is_update_iteration(&self, n: usize) -> bool {
        (n - 1) % self.freq == 0
    }
}

/// Regularization strengths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lambda {
    pub beta: f64,
    pub gamma: f64,
}

impl Lambda {
    pub fn new(beta: f64, gamma: f64) -> Self {
        Self { beta, gamma }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.gamma >= 0.0) || !self.beta.is_finite() || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// SA step for the MCMC update with (1-based) index `idx` along the
/// schedule: `delta_star` while `idx <= n_sa`, then
/// `delta_star (idx - n_sa)^-zeta`.
pub fn sa_step(idx: usize, config: &SapgConfig) -> f64 {
    let idx = idx.max(1);
    if idx <= config.n_sa {
        config.delta_star
    } else {
        config.delta_star * ((idx - config.n_sa) as f64).powf(-config.zeta)
    }
}

/// `S_sa <- S_sa + delta (mc_mean - S_sa)` for every subject.
pub fn sa_update(s_sa: &mut [SuffStats], mc_means: &[SuffStats], delta: f64) {
    for (s, m) in s_sa.iter_mut().zip(mc_means) {
        s.relax_towards(m, delta);
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v.abs() <= t {
        0.0
    } else if v > t {
        v - t
    } else {
        v + t
    }
}

/// Gradient of the SA complete-data log-likelihood, one block per
/// parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub beta: Vec<f64>,
    /// Strict lower triangle of `Gamma`, same order as `ThetaParams::gamma`.
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: f64,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + self.gamma.len() + self.delta.len() + 1);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.delta);
        v.push(self.sigma);
        v
    }
}

/// Sum over subjects of `log p(Y_i, S_sa_i; theta)` with all constants, and
/// its gradient.
pub fn surrogate_with_gradient(
    theta: &ThetaParams,
    s_sa: &[SuffStats],
    dataset: &Dataset,
) -> Result<(f64, Gradient)> {
    theta.check_dims(&dataset.dims)?;
    if s_sa.len() != dataset.subjects.len() {
        return Err(Error::invalid("S_sa does not match the dataset"));
    }
    let cache = PopulationCache::new(theta)?;
    let l = theta.l;
    let n = dataset.subjects.len() as f64;
    let mut g_beta = vec![0.0; theta.beta.len()];
    let mut sigma_sum = DMatrix::<f64>::zeros(l, l);
    let mut s3_total = 0.0;
    let mut mean = vec![0.0; l];
    let mut resid = vec![0.0; l];
    let mut weighted = vec![0.0; l];
    for (subject, s) in dataset.subjects.iter().zip(s_sa) {
        design_mean_into(&subject.covariates, &theta.beta, &mut mean);
        for r in 0..l {
            resid[r] = s.s1[r] - mean[r];
        }
        for r in 0..l {
            weighted[r] = (0..l).map(|c| cache.omega_inv[(r, c)] * resid[c]).sum();
        }
        design_transpose_acc(&subject.covariates, &weighted, &mut g_beta);
        for r in 0..l {
            for c in 0..l {
                sigma_sum[(r, c)] += s.s2[r * l + c] - s.s1[r] * mean[c] - mean[r] * s.s1[c]
                    + mean[r] * mean[c];
            }
        }
        s3_total += s.s3;
    }
    let total_obs = dataset.dims.total_obs() as f64;
    let sigma = theta.sigma;
    let trace = (&sigma_sum * &cache.omega_inv).trace();
    let objective = -total_obs * (sigma.ln() + 0.5 * LN_2PI) - s3_total / (2.0 * sigma * sigma)
        - 0.5 * n * (l as f64 * LN_2PI + cache.log_det_omega)
        - 0.5 * trace;

    // Gamma and Delta blocks: with P = (Gamma Gamma^T)^-1 and
    // A = Delta^-1 Sigma Delta^-1,
    //   d/dGamma = P A P Gamma,  d/dDelta_k = -N / d_k + (Delta^-1 P A)_kk.
    let gam = gamma_matrix(&theta.gamma, l);
    let gam_inv = gam
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::domain("Gamma is singular"))?;
    let p = gam_inv.transpose() * &gam_inv;
    let mut a = sigma_sum;
    for r in 0..l {
        for c in 0..l {
            a[(r, c)] /= theta.delta[r] * theta.delta[c];
        }
    }
    let pa = &p * &a;
    let m = &pa * &p * &gam;
    let g_gamma = lower_pairs(l).map(|(r, c)| m[(r, c)]).collect();
    let g_delta = (0..l)
        .map(|k| (-n + pa[(k, k)]) / theta.delta[k])
        .collect();
    let g_sigma = -total_obs / sigma + s3_total / sigma.powi(3);
    Ok((
        objective,
        Gradient {
            beta: g_beta,
            gamma: g_gamma,
            delta: g_delta,
            sigma: g_sigma,
        },
    ))
}

/// Fisher-identity gradient at `S_sa`.
pub fn gradients(theta: &ThetaParams, s_sa: &[SuffStats], dataset: &Dataset) -> Result<Gradient> {
    surrogate_with_gradient(theta, s_sa, dataset).map(|(_, g)| g)
}

/// `sum_i log p(Y_i, S_sa_i; theta)` (no penalty).
pub fn sa_objective(theta: &ThetaParams, s_sa: &[SuffStats], dataset: &Dataset) -> Result<f64> {
    surrogate_with_gradient(theta, s_sa, dataset).map(|(v, _)| v)
}

/// `lambda_beta |W_beta o beta|_1 + lambda_gamma |W_gamma o Gamma_-|_1`.
pub fn penalty(theta: &ThetaParams, lambda: Lambda, weights: &PenaltyWeights) -> f64 {
    let weighted = |vals: &[f64], w: &[f64]| -> f64 {
        vals.iter()
            .zip(w)
            .filter(|(v, _)| **v != 0.0)
            .map(|(v, w)| v.abs() * w)
            .sum()
    };
    let pb = if lambda.beta == 0.0 { 0.0 } else { lambda.beta * weighted(&theta.beta, &weights.beta) };
    let pg = if lambda.gamma == 0.0 { 0.0 } else { lambda.gamma * weighted(&theta.gamma, &weights.gamma) };
    pb + pg
}

/// Block sizes of the flattened parameter `(beta, gamma, delta, sigma)`.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n_beta: usize,
    pub n_gamma: usize,
    pub n_delta: usize,
}

impl Layout {
    pub fn of(theta: &ThetaParams) -> Self {
        Self {
            n_beta: theta.beta.len(),
            n_gamma: theta.gamma.len(),
            n_delta: theta.delta.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_beta + self.n_gamma + self.n_delta + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn block_scale(&self, idx: usize, scale: &BlockScale) -> f64 {
        if idx < self.n_beta {
            scale.beta
        } else if idx < self.n_beta + self.n_gamma {
            scale.gamma
        } else if idx < self.n_beta + self.n_gamma + self.n_delta {
            scale.delta
        } else {
            scale.sigma
        }
    }
}

/// Per-coordinate steps `Lambda_n` for iteration `n` (1-based). `h` holds
/// the running sums of squared gradients and is updated before use.
pub fn step_sizes(
    mode: StepMode,
    n: usize,
    grad: &[f64],
    h: &mut [f64],
    layout: &Layout,
    config: &SapgConfig,
) -> Vec<f64> {
    for (hd, g) in h.iter_mut().zip(grad) {
        *hd += g * g;
    }
    let common = if n <= config.n_alpha {
        config.gamma0
    } else {
        config.gamma0 * ((n - config.n_alpha) as f64).powf(-config.alpha)
    };
    match mode {
        StepMode::Css => vec![common; grad.len()],
        StepMode::Mss => (0..grad.len())
            .map(|d| common * layout.block_scale(d, &config.mss_scale))
            .collect(),
        StepMode::Ass => h.iter().map(|hd| config.gamma0 / (hd + config.cst).sqrt()).collect(),
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// SA surrogate log-likelihood minus the penalty, at the iterate that
    /// entered the iteration.
    pub objective: f64,
    /// SA step in effect.
    pub delta_sa: f64,
    /// Intercepts, one per latent parameter.
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: f64,
    pub nnz_beta: usize,
    pub nnz_gamma: usize,
}

/// Starting point of a run. Missing `s_sa` triggers a burn-in; a missing
/// chain is started at the prior mean.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub theta: ThetaParams,
    pub s_sa: Option<Vec<SuffStats>>,
    pub chain: Option<ChainState>,
}

impl WarmStart {
    pub fn cold(theta: ThetaParams) -> Self {
        Self {
            theta,
            s_sa: None,
            chain: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SapgOutput {
    pub theta: ThetaParams,
    pub s_sa: Vec<SuffStats>,
    pub chain: ChainState,
    pub trace: Vec<TraceRecord>,
    pub snapshots: Vec<(usize, ThetaParams)>,
    /// AdaGrad accumulators at the end of the run.
    pub h: Vec<f64>,
}

impl SapgOutput {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            theta: self.theta.clone(),
            s_sa: Some(self.s_sa.clone()),
            chain: Some(self.chain.clone()),
        }
    }
}

/// One SAPG problem at fixed `lambda`.
#[derive(Clone, Copy)]
pub struct SapgRun<'a> {
    pub dataset: &'a Dataset,
    pub model: &'a dyn StructuralModel,
    pub lambda: Lambda,
    pub weights: &'a PenaltyWeights,
    pub config: &'a SapgConfig,
    /// Number of iterations (overrides `config.n_iter` when set).
    pub n_iter: Option<usize>,
    /// MCMC updates already consumed along the SA schedule (warm restarts).
    pub sa_offset: usize,
    /// Coordinates outside the mask are held at exactly 0.
    pub mask: Option<&'a SupportMask>,
}

impl<'a> SapgRun<'a> {
    pub fn new(
        dataset: &'a Dataset,
        model: &'a dyn StructuralModel,
        lambda: Lambda,
        weights: &'a PenaltyWeights,
        config: &'a SapgConfig,
    ) -> Self {
        Self {
            dataset,
            model,
            lambda,
            weights,
            config,
            n_iter: None,
            sa_offset: 0,
            mask: None,
        }
    }
}

/// Runs SAPG from `init`. All randomness comes from `seed`.
pub fn sapg_run(run: &SapgRun<'_>, init: WarmStart, seed: u64) -> Result<SapgOutput> {
    let SapgRun {
        dataset,
        model,
        lambda,
        weights,
        config,
        sa_offset,
        mask,
        ..
    } = *run;
    config.validate()?;
    lambda.validate()?;
    weights.validate(&dataset.dims)?;
    let mut theta = init.theta;
    theta.validate()?;
    theta.check_dims(&dataset.dims)?;
    if model.n_latent() != theta.l {
        return Err(Error::invalid(format!(
            "structural model expects {} latent parameters, theta has {}",
            model.n_latent(),
            theta.l
        )));
    }
    let n_iter = run.n_iter.unwrap_or(config.n_iter);
    let layout = Layout::of(&theta);
    let frozen = frozen_flags(mask, &layout)?;
    for (idx, f) in frozen.iter().enumerate() {
        if *f {
            set_flat(&mut theta, &layout, idx, 0.0);
        }
    }

    let mut chain = match init.chain {
        Some(mut c) => {
            c.reseed(seed);
            c
        }
        None => ChainState::new(&theta, dataset, seed)?,
    };
    let mut s_sa = match init.s_sa {
        Some(s) => {
            if s.len() != dataset.subjects.len() || s.iter().any(|x| x.dim() != theta.l) {
                return Err(Error::invalid("warm-start S_sa does not match the dataset"));
            }
            s
        }
        None => {
            let burn = (config.freq * config.mcmc_sweeps).max(config.min_burn_in);
            mh_sweep(&mut chain, &theta, dataset, model, burn, true)?
        }
    };

    let adapt_until = config.n_sa.max(config.adapt_updates);
    let mut h = vec![0.0; layout.len()];
    let mut trace = Vec::with_capacity(n_iter);
    let mut snapshots = Vec::new();
    let mut updates = 0usize;
    let mut delta_sa = 0.0;

    for n in 1..=n_iter {
        if config.is_update_iteration(n) {
            updates += 1;
            let idx = sa_offset + updates;
            let mc = mh_sweep(
                &mut chain,
                &theta,
                dataset,
                model,
                config.mcmc_sweeps,
                idx <= adapt_until,
            )?;
            delta_sa = sa_step(idx, config);
            sa_update(&mut s_sa, &mc, delta_sa);
        }

        let (objective, grad) = surrogate_with_gradient(&theta, &s_sa, dataset)
            .map_err(|e| numerical(n, &trace, e.to_string()))?;
        trace.push(TraceRecord {
            iteration: n,
            objective: objective - penalty(&theta, lambda, weights),
            delta_sa,
            mu: (0..theta.l).map(|ell| theta.intercept(ell)).collect(),
            delta: theta.delta.clone(),
            sigma: theta.sigma,
            nnz_beta: count_penalized_nonzero(&theta),
            nnz_gamma: theta.gamma.iter().filter(|g| **g != 0.0).count(),
        });

        let mut flat_grad = grad.flatten();
        for (g, f) in flat_grad.iter_mut().zip(&frozen) {
            if *f {
                *g = 0.0;
            }
        }
        if flat_grad.iter().any(|g| !g.is_finite()) {
            return Err(numerical(n, &trace, "non-finite gradient".into()));
        }
        let steps = step_sizes(config.step_mode, n, &flat_grad, &mut h, &layout, config);
        proximal_update(
            &mut theta, &flat_grad, &steps, &frozen, lambda, weights, &layout, config.eps_pos,
        );
        if theta.validate().is_err() {
            return Err(numerical(n, &trace, format!("invalid iterate {theta:?}")));
        }
        if config.snapshot_every > 0 && n % config.snapshot_every == 0 {
            snapshots.push((n, theta.clone()));
        }
    }

    Ok(SapgOutput {
        theta,
        s_sa,
        chain,
        trace,
        snapshots,
        h,
    })
}

fn numerical(iteration: usize, trace: &[TraceRecord], message: String) -> Error {
    let tail = &trace[trace.len().saturating_sub(5)..];
    error!("SAPG aborted at iteration {iteration}: {message}; last trace records: {tail:?}");
    Error::Numerical { iteration, message }
}

fn count_penalized_nonzero(theta: &ThetaParams) -> usize {
    theta
        .beta
        .iter()
        .enumerate()
        .filter(|(i, b)| i % (theta.k + 1) != 0 && **b != 0.0)
        .count()
}

fn frozen_flags(mask: Option<&SupportMask>, layout: &Layout) -> Result<Vec<bool>> {
    let mut frozen = vec![false; layout.len()];
    if let Some(mask) = mask {
        if mask.beta.len() != layout.n_beta || mask.gamma.len() != layout.n_gamma {
            return Err(Error::invalid("support mask does not match theta"));
        }
        for (i, keep) in mask.beta.iter().enumerate() {
            frozen[i] = !keep;
        }
        for (i, keep) in mask.gamma.iter().enumerate() {
            frozen[layout.n_beta + i] = !keep;
        }
    }
    Ok(frozen)
}

fn set_flat(theta: &mut ThetaParams, layout: &Layout, idx: usize, value: f64) {
    if idx < layout.n_beta {
        theta.beta[idx] = value;
    } else if idx < layout.n_beta + layout.n_gamma {
        theta.gamma[idx - layout.n_beta] = value;
    }
}

#[allow(clippy::too_many_arguments)]
fn proximal_update(
    theta: &mut ThetaParams,
    grad: &[f64],
    steps: &[f64],
    frozen: &[bool],
    lambda: Lambda,
    weights: &PenaltyWeights,
    layout: &Layout,
    eps_pos: f64,
) {
    let nb = layout.n_beta;
    let ng = layout.n_gamma;
    for i in 0..nb {
        if frozen[i] {
            continue;
        }
        let moved = theta.beta[i] + steps[i] * grad[i];
        theta.beta[i] = prox(moved, steps[i], lambda.beta, weights.beta[i]);
    }
    for i in 0..ng {
        let d = nb + i;
        if frozen[d] {
            continue;
        }
        let moved = theta.gamma[i] + steps[d] * grad[d];
        theta.gamma[i] = prox(moved, steps[d], lambda.gamma, weights.gamma[i]);
    }
    for i in 0..layout.n_delta {
        let d = nb + ng + i;
        theta.delta[i] = (theta.delta[i] + steps[d] * grad[d]).max(eps_pos);
    }
    let d = nb + ng + layout.n_delta;
    theta.sigma = (theta.sigma + steps[d] * grad[d]).max(eps_pos);
}

fn prox(v: f64, step: f64, lambda: f64, weight: f64) -> f64 {
    if weight.is_infinite() {
        0.0
    } else if lambda == 0.0 || weight == 0.0 {
        v
    } else {
        soft_threshold(v, step * lambda * weight)
    }
}

/// Neutral starting point: intercepts from `mu` (or 0), no covariate
/// effects, `Delta = delta0 I`, `Gamma = I`, `sigma` a quarter of the
/// sample standard deviation of all observations. The full sample SD
/// mixes between-subject spread into the residual and starts far too high.
pub fn initial_theta(dataset: &Dataset, mu: Option<&[f64]>, delta0: f64) -> Result<ThetaParams> {
    let l = dataset.dims.l;
    let zeros = vec![0.0; l];
    let obs: Vec<f64> = dataset
        .subjects
        .iter()
        .flat_map(|s| s.observations.iter().copied())
        .collect();
    let sd = if obs.len() > 1 {
        crate::stats::variance(&obs).sqrt()
    } else {
        1.0
    };
    let sigma = if sd > 0.0 && sd.is_finite() { 0.25 * sd } else { 1.0 };
    ThetaParams::initial(l, dataset.dims.k, mu.unwrap_or(&zeros), delta0, sigma)
}
