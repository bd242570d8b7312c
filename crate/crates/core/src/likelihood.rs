//! Marginal log-likelihood by importance sampling, BIC, and the
//! unpenalized refit on a fixed support.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{run_subject_chain, ChainState};
use crate::model::{
    design_mean_into, latent_log_density, residual_log_density, Dataset, ModelDims,
    PenaltyWeights, PopulationCache, SubjectRecord, ThetaParams,
};
use crate::pk::StructuralModel;
use crate::sapg::{sapg_run, Lambda, SapgConfig, SapgOutput, SapgRun, WarmStart};
use crate::stats::{derive_seed, log_sum_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which penalized coordinates are free. Intercepts are always free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMask {
    pub beta: Vec<bool>,
    pub gamma: Vec<bool>,
    k: usize,
}

impl SupportMask {
    /// Nonzero pattern of `theta`.
    pub fn from_theta(theta: &ThetaParams) -> Self {
        let k = theta.k;
        let beta = theta
            .beta
            .iter()
            .enumerate()
            .map(|(i, b)| i % (k + 1) == 0 || *b != 0.0)
            .collect();
        let gamma = theta.gamma.iter().map(|g| *g != 0.0).collect();
        Self { beta, gamma, k }
    }

    pub fn full(dims: &ModelDims) -> Self {
        Self {
            beta: vec![true; dims.n_beta()],
            gamma: vec![true; dims.n_gamma()],
            k: dims.k,
        }
    }

    /// Only intercepts free.
    pub fn empty(dims: &ModelDims) -> Self {
        Self {
            beta: (0..dims.n_beta()).map(|i| dims.is_intercept(i)).collect(),
            gamma: vec![false; dims.n_gamma()],
            k: dims.k,
        }
    }

    /// Selected covariate effects, intercepts excluded.
    pub fn beta_support(&self) -> usize {
        self.beta
            .iter()
            .enumerate()
            .filter(|(i, b)| i % (self.k + 1) != 0 && **b)
            .count()
    }

    pub fn gamma_support(&self) -> usize {
        self.gamma.iter().filter(|g| **g).count()
    }

    pub fn size(&self) -> usize {
        self.beta_support() + self.gamma_support()
    }

    /// `(latent, covariate)` pairs of the selected effects.
    pub fn selected_effects(&self) -> Vec<(usize, usize)> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(i, b)| i % (self.k + 1) != 0 && **b)
            .map(|(i, _)| (i / (self.k + 1), i % (self.k + 1) - 1))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    pub value: f64,
    pub mc_se: f64,
    pub m_is: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsConfig {
    /// Importance samples per subject.
    pub m_is: usize,
    /// Adaptive MH sweeps discarded before collecting moments.
    pub burn_in: usize,
    /// MH sweeps used for the proposal moments.
    pub moment_sweeps: usize,
    /// Proposal covariance multiplier.
    pub inflation: f64,
    /// Ridge added to the proposal covariance.
    pub floor: f64,
    /// Proposal covariance used when the moment estimate is not positive
    /// definite.
    pub fallback_var: f64,
}

impl Default for IsConfig {
    fn default() -> Self {
        Self {
            m_is: 5000,
            burn_in: 200,
            moment_sweeps: 500,
            inflation: 1.5,
            floor: 1e-8,
            fallback_var: 1e-2,
        }
    }
}

impl IsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_is < 100 {
            return Err(Error::invalid(format!("need at least 100 importance samples, got {}", self.m_is)));
        }
        if self.moment_sweeps < 2 {
            return Err(Error::invalid("need at least 2 moment sweeps"));
        }
        if !(self.inflation > 0.0 && self.floor >= 0.0 && self.fallback_var > 0.0) {
            return Err(Error::invalid("proposal scaling parameters must be positive"));
        }
        Ok(())
    }
}

/// Importance-sampling estimate of `log p(Y; theta)`. Each subject uses a
/// Gaussian proposal on `eta` fitted to conditional MH draws. `start`
/// optionally supplies chains to start the MH runs from.
pub fn loglik_is(
    theta: &ThetaParams,
    dataset: &Dataset,
    model: &dyn StructuralModel,
    config: &IsConfig,
    start: Option<&ChainState>,
    seed: u64,
) -> Result<LogLikEstimate> {
    config.validate()?;
    theta.validate()?;
    theta.check_dims(&dataset.dims)?;
    let cache = PopulationCache::new(theta)?;
    let mut chains = match start {
        Some(c) if c.chains.len() == dataset.subjects.len() => c.clone(),
        Some(_) => return Err(Error::invalid("chain state does not match dataset")),
        None => ChainState::new(theta, dataset, derive_seed(seed, &[0]))?,
    };
    chains.reseed(derive_seed(seed, &[0]));

    let per_subject: Vec<(f64, f64)> = chains
        .chains
        .par_iter_mut()
        .zip(dataset.subjects.par_iter())
        .enumerate()
        .map(|(i, (chain, subject))| {
            let mut mean = vec![0.0; theta.l];
            design_mean_into(&subject.covariates, &theta.beta, &mut mean);
            let (m, c) = conditional_moments(chain, subject, &mean, &cache, theta.sigma, model, config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
            rng.set_stream(i as u64);
            subject_is(subject, &mean, &cache, theta.sigma, model, &m, c, config, &mut rng)
        })
        .collect::<Result<_>>()?;

    let value = per_subject.iter().map(|(v, _)| v).sum();
    let mc_se = per_subject.iter().map(|(_, s)| s * s).sum::<f64>().sqrt();
    Ok(LogLikEstimate {
        value,
        mc_se,
        m_is: config.m_is,
    })
}

fn conditional_moments(
    chain: &mut crate::mcmc::SubjectChain,
    subject: &SubjectRecord,
    mean: &[f64],
    cache: &PopulationCache,
    sigma: f64,
    model: &dyn StructuralModel,
    config: &IsConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l = mean.len();
    if config.burn_in > 0 {
        run_subject_chain(chain, subject, mean, cache, sigma, model, config.burn_in, true, |_, _| {})?;
    }
    let mut sum = DVector::<f64>::zeros(l);
    let mut outer = DMatrix::<f64>::zeros(l, l);
    run_subject_chain(
        chain,
        subject,
        mean,
        cache,
        sigma,
        model,
        config.moment_sweeps,
        false,
        |eta, _| {
            let v = DVector::from_column_slice(eta);
            sum += &v;
            outer += &v * v.transpose();
        },
    )?;
    let m = config.moment_sweeps as f64;
    let mu = sum / m;
    let cov = (outer - &mu * mu.transpose() * m) / (m - 1.0);
    Ok((mu, cov))
}

/// `(log mean w, delta-method se)` for one subject.
#[allow(clippy::too_many_arguments)]
fn subject_is(
    subject: &SubjectRecord,
    mean: &[f64],
    cache: &PopulationCache,
    sigma: f64,
    model: &dyn StructuralModel,
    prop_mean: &DVector<f64>,
    prop_cov: DMatrix<f64>,
    config: &IsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let l = mean.len();
    let mut cov = prop_cov * config.inflation;
    for d in 0..l {
        cov[(d, d)] += config.floor;
    }
    let chol = match cov.clone().cholesky() {
        Some(c) if cov.iter().all(|v| v.is_finite()) => c,
        _ => {
            warn!(
                "subject {}: degenerate importance proposal, using {}*I",
                subject.id, config.fallback_var
            );
            DMatrix::<f64>::identity(l, l)
                .scale(config.fallback_var)
                .cholesky()
                .ok_or_else(|| Error::domain("fallback proposal not positive definite"))?
        }
    };
    let lower = chol.l();
    let log_det_q: f64 = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let n_obs = subject.times.len();
    let mut z = vec![0.0; l];
    let mut eta = vec![0.0; l];
    let mut pred = vec![0.0; n_obs];
    let mut log_w = Vec::with_capacity(config.m_is);
    for _ in 0..config.m_is {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let mut q_quad = 0.0;
        for r in 0..l {
            let mut acc = prop_mean[r];
            for c in 0..=r {
                acc += lower[(r, c)] * z[c];
            }
            eta[r] = acc;
            q_quad += z[r] * z[r];
        }
        let log_q = -0.5 * (l as f64 * LN_2PI + log_det_q + q_quad);
        let lw = match crate::model::residual_ss(subject, &eta, model, &mut pred) {
            Ok(ssr) => {
                residual_log_density(ssr, n_obs, sigma) + latent_log_density(cache, &eta, mean) - log_q
            }
            Err(_) => f64::NEG_INFINITY,
        };
        log_w.push(lw);
    }
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::Model {
            subject: subject.id.clone(),
            time: subject.times[0],
            message: "all importance weights vanished".into(),
        });
    }
    let m = config.m_is as f64;
    let estimate = lse - m.ln();
    // Weights relative to their mean: w / mean(w) has mean 1.
    let rel: Vec<f64> = log_w.iter().map(|lw| (lw - estimate).exp()).collect();
    let var = rel.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / (m - 1.0);
    Ok((estimate, (var / m).sqrt()))
}

/// `-2 loglik + log(N) * (|supp beta| + |supp Gamma|)`, intercepts excluded
/// from the count.
pub fn bic(loglik: f64, dataset: &Dataset, support: &SupportMask) -> f64 {
    -2.0 * loglik + (dataset.dims.n as f64).ln() * support.size() as f64
}

/// Unpenalized re-estimation on the support of `init.theta`. Coordinates
/// outside the support stay exactly 0.
pub fn refit_support(
    init: WarmStart,
    dataset: &Dataset,
    model: &dyn StructuralModel,
    config: &SapgConfig,
    n_iter: Option<usize>,
    seed: u64,
) -> Result<SapgOutput> {
    let mask = SupportMask::from_theta(&init.theta);
    let weights = PenaltyWeights::uniform(&dataset.dims);
    let mut run = SapgRun::new(dataset, model, Lambda::zero(), &weights, config);
    run.mask = Some(&mask);
    run.n_iter = n_iter;
    sapg_run(&run, init, seed)
}
