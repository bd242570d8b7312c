//! Synthetic two-compartment datasets with known sparse covariate effects
//! and a known random-effect covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decompose_omega, symmetrize, Dataset, SubjectRecord, ThetaParams};
use crate::pk::{DosingRegimen, StructuralModel, TwoCompartment};
use crate::stats::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum CovariateStructure {
    Independent,
    /// `Sigma_jk = rho^|j - k|`.
    Toeplitz { rho: f64 },
}

/// `beta` entry for covariate `covariate` on latent `latent` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub latent: usize,
    pub covariate: usize,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub n: usize,
    pub k: usize,
    pub covariates: CovariateStructure,
    /// Intercepts of `log Z`, order `(Vc, Vp, Q, Cl)`.
    pub mu: Vec<f64>,
    pub effects: Vec<Effect>,
    /// Row-major covariance of `log Z`.
    pub omega: Vec<Vec<f64>>,
    pub sigma: f64,
    pub times: Vec<f64>,
    pub dosing: DosingRegimen,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n: 50,
            k: 10,
            covariates: CovariateStructure::Independent,
            mu: vec![1.82, 2.26, 3.10, 1.67],
            effects: vec![
                Effect { latent: 0, covariate: 1, size: 0.4 },
                Effect { latent: 1, covariate: 1, size: 0.4 },
                Effect { latent: 3, covariate: 3, size: 0.4 },
            ],
            omega: vec![
                vec![0.16, 0.0, 0.0, 0.12],
                vec![0.0, 0.3025, 0.0, 0.0],
                vec![0.0, 0.0, 0.49, 0.0],
                vec![0.12, 0.0, 0.0, 0.13],
            ],
            sigma: 5.0,
            times: vec![0.1, 1.0 / 3.0, 0.75, 1.0, 2.0, 4.0, 8.0],
            dosing: DosingRegimen::bolus(1000.0),
            seed: 1,
        }
    }
}

impl SimScenario {
    pub fn l(&self) -> usize {
        self.mu.len()
    }

    pub fn omega_matrix(&self) -> Result<DMatrix<f64>> {
        let l = self.l();
        if self.omega.len() != l || self.omega.iter().any(|r| r.len() != l) {
            return Err(Error::invalid("omega must be L x L"));
        }
        Ok(DMatrix::from_fn(l, l, |r, c| self.omega[r][c]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("need at least one subject"));
        }
        if self.l() != 4 {
            return Err(Error::invalid("the two-compartment model needs 4 intercepts"));
        }
        let omega = self.omega_matrix()?;
        if (&omega - omega.transpose()).abs().max() > 1e-12 {
            return Err(Error::invalid("omega must be symmetric"));
        }
        if SymmetricEigen::new(omega).eigenvalues.iter().any(|e| *e < -1e-12) {
            return Err(Error::invalid("omega must be positive semidefinite"));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| w[1] <= w[0]) || self.times[0] < 0.0 {
            return Err(Error::invalid("times must be nonnegative and strictly increasing"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be nonnegative"));
        }
        if let CovariateStructure::Toeplitz { rho } = self.covariates {
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::invalid("Toeplitz rho must lie in (-1, 1)"));
            }
        }
        for e in &self.effects {
            if e.latent >= self.l() || e.covariate >= self.k {
                return Err(Error::invalid(format!("effect out of range: {e:?}")));
            }
        }
        self.dosing.validate()
    }

    /// True `beta` in the solver's layout.
    pub fn beta(&self) -> Vec<f64> {
        let k = self.k;
        let mut beta = vec![0.0; (k + 1) * self.l()];
        for (ell, m) in self.mu.iter().enumerate() {
            beta[ell * (k + 1)] = *m;
        }
        for e in &self.effects {
            beta[e.latent * (k + 1) + 1 + e.covariate] += e.size;
        }
        beta
    }
}

/// What generated a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Modified-Cholesky form; absent when omega is singular.
    pub theta: Option<ThetaParams>,
    /// Nonzero covariate effects `(latent, covariate)`.
    pub effects: Vec<(usize, usize)>,
    /// Nonzero strict-lower entries of `Gamma`, `(row, col)`.
    pub gamma_support: Vec<(usize, usize)>,
    /// Simulated `log Z_i`, one row per subject.
    pub latent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

/// `B` with `B B^T = sigma` for a positive semidefinite `sigma`.
fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(sigma.clone()));
    let mut v = eig.eigenvectors;
    for (j, e) in eig.eigenvalues.iter().enumerate() {
        let s = e.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

pub fn covariate_covariance(k: usize, structure: CovariateStructure) -> DMatrix<f64> {
    match structure {
        CovariateStructure::Independent => DMatrix::identity(k, k),
        CovariateStructure::Toeplitz { rho } => {
            DMatrix::from_fn(k, k, |r, c| rho.powi((r as i64 - c as i64).unsigned_abs() as i32))
        }
    }
}

fn draw_gaussian(factor: &DMatrix<f64>, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let d = factor.ncols();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..d).map(|c| factor[(r, c)] * z[c]).sum();
    }
}

/// `n` rows iid `N(0, Sigma)`.
pub fn simulate_covariates(n: usize, k: usize, structure: CovariateStructure, seed: u64) -> Vec<Vec<f64>> {
    if k == 0 {
        return vec![Vec::new(); n];
    }
    let factor = psd_factor(&covariate_covariance(k, structure));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut row = vec![0.0; k];
            draw_gaussian(&factor, &mut rng, &mut row);
            row
        })
        .collect()
}

/// Draws covariates, `log Z_i ~ N(X_i beta, Omega)` and observations
/// `Y_ij = f(t_j, Z_i) + N(0, sigma^2)`.
pub fn simulate_dataset(scenario: &SimScenario) -> Result<SimulatedData> {
    scenario.validate()?;
    let l = scenario.l();
    let k = scenario.k;
    let covs = simulate_covariates(scenario.n, k, scenario.covariates, derive_seed(scenario.seed, &[0]));
    let omega = scenario.omega_matrix()?;
    let factor = psd_factor(&omega);
    let beta = scenario.beta();
    let model = TwoCompartment;
    let mut latent_rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, &[1]));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, &[2]));

    let mut subjects = Vec::with_capacity(scenario.n);
    let mut latent = Vec::with_capacity(scenario.n);
    for (i, x) in covs.into_iter().enumerate() {
        let mut eta = vec![0.0; l];
        draw_gaussian(&factor, &mut latent_rng, &mut eta);
        for (ell, e) in eta.iter_mut().enumerate() {
            let row = &beta[ell * (k + 1)..(ell + 1) * (k + 1)];
            *e += row[0] + row[1..].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
        }
        let z: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let mut pred = vec![0.0; scenario.times.len()];
        model.predict_many(&scenario.times, &z, &scenario.dosing, &mut pred)?;
        let observations = pred
            .iter()
            .map(|p| {
                let noise: f64 = StandardNormal.sample(&mut noise_rng);
                p + scenario.sigma * noise
            })
            .collect();
        subjects.push(SubjectRecord {
            id: format!("{}", i + 1),
            times: scenario.times.clone(),
            observations,
            covariates: x,
            dosing: scenario.dosing,
        });
        latent.push(eta);
    }

    let theta = decompose_omega(&omega).ok().map(|(delta, gamma)| ThetaParams {
        l,
        k,
        beta: beta.clone(),
        delta,
        gamma,
        sigma: scenario.sigma,
    });
    let gamma_support = match &theta {
        Some(t) => crate::model::lower_pairs(l)
            .zip(&t.gamma)
            .filter(|(_, g)| g.abs() > 1e-12)
            .map(|(p, _)| p)
            .collect(),
        None => Vec::new(),
    };
    let mut effects: Vec<(usize, usize)> = scenario
        .effects
        .iter()
        .filter(|e| e.size != 0.0)
        .map(|e| (e.latent, e.covariate))
        .collect();
    effects.sort_unstable();
    effects.dedup();

    Ok(SimulatedData {
        dataset: Dataset::new(subjects, l)?,
        truth: GroundTruth {
            beta,
            omega: scenario.omega.clone(),
            sigma: scenario.sigma,
            theta,
            effects,
            gamma_support,
            latent,
        },
    })
}
