//! Componentwise random-walk Metropolis–Hastings on `eta_i = log Z_i`,
//! targeting `p(eta_i | Y_i; theta)`, and reduction of the draws to the
//! complete-data sufficient statistics.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{design_mean, design_mean_into, Dataset, PopulationCache, SubjectRecord, ThetaParams};
use crate::pk::StructuralModel;

/// Target per-coordinate acceptance rate of the adaptive proposal.
pub const TARGET_ACCEPTANCE: f64 = 0.4;
/// Log-scale adaptation gain.
pub const ADAPT_KAPPA: f64 = 0.05;

/// Complete-data sufficient statistics of one subject: `S1 = eta`,
/// `S2 = eta eta^T` (row-major `L x L`) and `S3` the residual sum of squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: f64,
}

impl SuffStats {
    pub fn zeros(l: usize) -> Self {
        Self {
            s1: vec![0.0; l],
            s2: vec![0.0; l * l],
            s3: 0.0,
        }
    }

    pub fn from_sample(eta: &[f64], ssr: f64) -> Self {
        let mut s = Self::zeros(eta.len());
        s.accumulate(eta, ssr);
        s
    }

    pub fn dim(&self) -> usize {
        self.s1.len()
    }

    fn accumulate(&mut self, eta: &[f64], ssr: f64) {
        let l = eta.len();
        for r in 0..l {
            self.s1[r] += eta[r];
            for c in 0..l {
                self.s2[r * l + c] += eta[r] * eta[c];
            }
        }
        self.s3 += ssr;
    }

    fn scale(&mut self, factor: f64) {
        self.s1.iter_mut().for_each(|v| *v *= factor);
        self.s2.iter_mut().for_each(|v| *v *= factor);
        self.s3 *= factor;
    }

    /// `self += step * (target - self)`.
    pub fn relax_towards(&mut self, target: &SuffStats, step: f64) {
        for (a, b) in self.s1.iter_mut().zip(&target.s1) {
            *a += step * (b - *a);
        }
        for (a, b) in self.s2.iter_mut().zip(&target.s2) {
            *a += step * (b - *a);
        }
        self.s3 += step * (target.s3 - self.s3);
    }
}

/// `S(Z_i)` for a single latent draw `eta = log Z_i`.
pub fn suffstats_from_sample(
    eta: &[f64],
    subject: &SubjectRecord,
    model: &dyn StructuralModel,
) -> Result<SuffStats> {
    let mut pred = vec![0.0; subject.times.len()];
    let ssr = crate::model::residual_ss(subject, eta, model, &mut pred)?;
    Ok(SuffStats::from_sample(eta, ssr))
}

/// Chain of one subject.
#[derive(Debug, Clone)]
pub struct SubjectChain {
    pub eta: Vec<f64>,
    pub proposal_sd: Vec<f64>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
    /// Proposals rejected because the structural model failed.
    pub failures: u64,
    rng: ChaCha8Rng,
    /// Residual sum of squares at `eta` (independent of theta).
    ssr: Option<f64>,
}

impl SubjectChain {
    pub fn acceptance_rate(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub fn reset_counts(&mut self) {
        self.accepted.iter_mut().for_each(|v| *v = 0);
        self.proposed.iter_mut().for_each(|v| *v = 0);
        self.failures = 0;
    }
}

/// Per-subject chains; each subject owns its RNG stream so results do not
/// depend on the order in which subjects are processed.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub chains: Vec<SubjectChain>,
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    rng
}

impl ChainState {
    /// Chains started at the prior mean `X_i beta` with proposal standard
    /// deviations `0.5 sqrt(diag Omega)`.
    pub fn new(theta: &ThetaParams, dataset: &Dataset, seed: u64) -> Result<Self> {
        theta.check_dims(&dataset.dims)?;
        let omega = theta.omega()?;
        let sd: Vec<f64> = (0..theta.l).map(|i| 0.5 * omega[(i, i)].sqrt()).collect();
        let chains = dataset
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(SubjectChain {
                    eta: design_mean(&s.covariates, &theta.beta, theta.l)?,
                    proposal_sd: sd.clone(),
                    accepted: vec![0; theta.l],
                    proposed: vec![0; theta.l],
                    failures: 0,
                    rng: subject_rng(seed, i),
                    ssr: None,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { chains })
    }

    /// Restarts every RNG stream from `seed`, keeping positions and
    /// proposal scales.
    pub fn reseed(&mut self, seed: u64) {
        for (i, c) in self.chains.iter_mut().enumerate() {
            c.rng = subject_rng(seed, i);
        }
    }

    pub fn acceptance_rates(&self) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.acceptance_rate()).collect()
    }

    pub fn reset_counts(&mut self) {
        self.chains.iter_mut().for_each(SubjectChain::reset_counts);
    }
}

/// Runs `n_sweeps` sweeps of one subject's chain, calling `visit(eta, ssr)`
/// after every sweep.
pub(crate) fn run_subject_chain(
    chain: &mut SubjectChain,
    subject: &SubjectRecord,
    mean: &[f64],
    cache: &PopulationCache,
    sigma: f64,
    model: &dyn StructuralModel,
    n_sweeps: usize,
    adapt: bool,
    mut visit: impl FnMut(&[f64], f64),
) -> Result<()> {
    let l = chain.eta.len();
    let mut z = vec![0.0; l];
    let mut pred = vec![0.0; subject.times.len()];
    let ssr_at = |eta: &[f64], z: &mut [f64], pred: &mut [f64]| -> Result<f64> {
        for (zi, e) in z.iter_mut().zip(eta) {
            *zi = e.exp();
        }
        model.predict_many(&subject.times, z, &subject.dosing, pred)?;
        let mut ss = 0.0;
        for (y, p) in subject.observations.iter().zip(pred.iter()) {
            ss += (y - p) * (y - p);
        }
        if ss.is_finite() {
            Ok(ss)
        } else {
            Err(Error::domain("non-finite prediction"))
        }
    };

    let mut ssr = match chain.ssr {
        Some(v) => v,
        None => ssr_at(&chain.eta, &mut z, &mut pred).map_err(|e| Error::Model {
            subject: subject.id.clone(),
            time: subject.times[0],
            message: format!("initial latent vector is not admissible: {e}"),
        })?,
    };
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut prior = cache.quad_form(&chain.eta, mean);

    for _ in 0..n_sweeps {
        for ell in 0..l {
            let old = chain.eta[ell];
            let step: f64 = chain.rng.sample(StandardNormal);
            chain.eta[ell] = old + chain.proposal_sd[ell] * step;
            chain.proposed[ell] += 1;
            let new_prior = cache.quad_form(&chain.eta, mean);
            let accepted = match ssr_at(&chain.eta, &mut z, &mut pred) {
                Ok(new_ssr) => {
                    let log_ratio = -(new_ssr - ssr) * inv_two_var - 0.5 * (new_prior - prior);
                    let u: f64 = chain.rng.random();
                    if log_ratio >= 0.0 || u.ln() < log_ratio {
                        ssr = new_ssr;
                        prior = new_prior;
                        true
                    } else {
                        false
                    }
                }
                Err(e) => {
                    chain.failures += 1;
                    if chain.failures == 1 {
                        warn!("subject {}: proposal rejected, structural model failed: {e}", subject.id);
                    } else {
                        debug!("subject {}: proposal rejected: {e}", subject.id);
                    }
                    false
                }
            };
            if accepted {
                chain.accepted[ell] += 1;
            } else {
                chain.eta[ell] = old;
            }
            if adapt {
                let indicator = if accepted { 1.0 } else { 0.0 };
                chain.proposal_sd[ell] *= (ADAPT_KAPPA * (indicator - TARGET_ACCEPTANCE)).exp();
            }
        }
        visit(&chain.eta, ssr);
    }
    chain.ssr = Some(ssr);
    Ok(())
}

/// `M_n` sweeps of every subject's chain under `theta`. Returns the Monte
/// Carlo means `(1/M_n) sum_m S(Z_m)` per subject. Chains continue from
/// their current state.
pub fn mh_sweep(
    state: &mut ChainState,
    theta: &ThetaParams,
    dataset: &Dataset,
    model: &dyn StructuralModel,
    m_n: usize,
    adapt: bool,
) -> Result<Vec<SuffStats>> {
    if m_n == 0 {
        return Err(Error::invalid("need at least one MCMC sweep per update"));
    }
    if state.chains.len() != dataset.subjects.len() {
        return Err(Error::invalid("chain state does not match dataset"));
    }
    theta.check_dims(&dataset.dims)?;
    let cache = PopulationCache::new(theta)?;
    let l = theta.l;
    state
        .chains
        .par_iter_mut()
        .zip(dataset.subjects.par_iter())
        .map(|(chain, subject)| {
            let mut mean = vec![0.0; l];
            design_mean_into(&subject.covariates, &theta.beta, &mut mean);
            let mut acc = SuffStats::zeros(l);
            run_subject_chain(
                chain,
                subject,
                &mean,
                &cache,
                theta.sigma,
                model,
                m_n,
                adapt,
                |eta, ssr| acc.accumulate(eta, ssr),
            )?;
            acc.scale(1.0 / m_n as f64);
            Ok(acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pk::DosingRegimen;

    /// `f(t, Z) = log Z_1 * t`.
    struct LinearInLog;

    impl StructuralModel for LinearInLog {
        fn n_latent(&self) -> usize {
            1
        }
        fn predict(&self, t: f64, z: &[f64], _: &DosingRegimen) -> Result<f64> {
            Ok(z[0].ln() * t)
        }
    }

    fn tiny_dataset() -> Dataset {
        let subjects = (0..3)
            .map(|i| SubjectRecord {
                id: format!("s{i}"),
                times: vec![1.0, 2.0],
                observations: vec![0.5 + i as f64, 1.0],
                covariates: vec![i as f64 - 1.0],
                dosing: DosingRegimen::default(),
            })
            .collect();
        Dataset::new(subjects, 1).unwrap()
    }

    #[test]
    fn single_sweep_gives_rank_one_second_moment() {
        let ds = tiny_dataset();
        let theta = ThetaParams::initial(1, 1, &[0.3], 0.5, 1.0).unwrap();
        let mut st = ChainState::new(&theta, &ds, 3).unwrap();
        let stats = mh_sweep(&mut st, &theta, &ds, &LinearInLog, 1, false).unwrap();
        for s in &stats {
            assert_eq!(s.s2[0], s.s1[0] * s.s1[0]);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let ds = tiny_dataset();
        let theta = ThetaParams::initial(1, 1, &[0.3], 0.5, 1.0).unwrap();
        let run = || {
            let mut st = ChainState::new(&theta, &ds, 11).unwrap();
            mh_sweep(&mut st, &theta, &ds, &LinearInLog, 7, true).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn suffstats_examples() {
        let s = SuffStats::from_sample(&[2.0], 0.0);
        assert_eq!((s.s1[0], s.s2[0]), (2.0, 4.0));
        let subj = SubjectRecord {
            id: "a".into(),
            times: vec![1.0, 2.0],
            observations: vec![2.0, 4.0],
            covariates: vec![],
            dosing: DosingRegimen::default(),
        };
        let st = suffstats_from_sample(&[2.0], &subj, &LinearInLog).unwrap();
        assert_eq!(st.s3, 0.0);
    }

    #[test]
    fn relax_towards_is_convex_combination() {
        let mut a = SuffStats::zeros(1);
        let b = SuffStats::from_sample(&[2.0], 4.0);
        a.relax_towards(&b, 0.5);
        assert_eq!((a.s1[0], a.s2[0], a.s3), (1.0, 2.0, 2.0));
        let before = a.clone();
        a.relax_towards(&before, 0.3);
        assert_eq!(a, before);
        a.relax_towards(&b, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_sweeps_rejected() {
        let ds = tiny_dataset();
        let theta = ThetaParams::initial(1, 1, &[0.3], 0.5, 1.0).unwrap();
        let mut st = ChainState::new(&theta, &ds, 3).unwrap();
        assert!(mh_sweep(&mut st, &theta, &ds, &LinearInLog, 0, false).is_err());
    }
}
