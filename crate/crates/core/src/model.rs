//! Data model, modified-Cholesky covariance parametrization and the
//! complete-data log-likelihood.
//!
//! Individual parameters follow `log Z_i ~ N(X_i beta, Omega)` with
//! `Omega = Delta Gamma Gamma^T Delta`, `Delta` diagonal positive and
//! `Gamma` unit lower triangular. Index conventions:
//!
//! * `beta` is latent-major: `(mu_1, beta_1,1..K, mu_2, beta_2,1..K, ...)`.
//! * `gamma` stores the strict lower triangle of `Gamma` row by row:
//!   `(G_10, G_20, G_21, G_30, ...)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pk::{DosingRegimen, StructuralModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of strictly-lower-triangular entries of an `l x l` matrix.
pub fn n_lower(l: usize) -> usize {
    l * l.saturating_sub(1) / 2
}

/// Position of `(row, col)`, `row > col`, in the row-major strict lower triangle.
pub fn lower_index(row: usize, col: usize) -> usize {
    debug_assert!(row > col);
    row * (row - 1) / 2 + col
}

/// `(row, col)` pairs of the strict lower triangle in storage order.
pub fn lower_pairs(l: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..l).flat_map(|r| (0..r).map(move |c| (r, c)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Latent parameters per subject.
    pub l: usize,
    /// Candidate covariates.
    pub k: usize,
    /// Subjects.
    pub n: usize,
    /// Observations per subject.
    pub j: Vec<usize>,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::invalid("need at least one latent parameter"));
        }
        if self.n == 0 || self.j.len() != self.n {
            return Err(Error::invalid("need at least one subject"));
        }
        if self.j.iter().any(|&j| j == 0) {
            return Err(Error::invalid("every subject needs at least one observation"));
        }
        Ok(())
    }

    /// Length of `beta`: `(K + 1) L`.
    pub fn n_beta(&self) -> usize {
        (self.k + 1) * self.l
    }

    pub fn n_gamma(&self) -> usize {
        n_lower(self.l)
    }

    pub fn total_obs(&self) -> usize {
        self.j.iter().sum()
    }

    /// Whether `beta[idx]` is an (unpenalized) intercept.
    pub fn is_intercept(&self, idx: usize) -> bool {
        idx % (self.k + 1) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub times: Vec<f64>,
    pub observations: Vec<f64>,
    pub covariates: Vec<f64>,
    pub dosing: DosingRegimen,
}

impl SubjectRecord {
    pub fn validate(&self, k: usize) -> Result<()> {
        let ctx = |msg: &str| Error::invalid(format!("subject {}: {msg}", self.id));
        if self.times.is_empty() {
            return Err(ctx("no observations"));
        }
        if self.times.len() != self.observations.len() {
            return Err(ctx("times and observations differ in length"));
        }
        if self.covariates.len() != k {
            return Err(ctx(&format!(
                "expected {k} covariates, got {}",
                self.covariates.len()
            )));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(ctx("times must be finite and nonnegative"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ctx("times must be strictly increasing"));
        }
        if self.observations.iter().chain(&self.covariates).any(|v| !v.is_finite()) {
            return Err(ctx("non-finite observation or covariate"));
        }
        self.dosing.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dims: ModelDims,
    pub subjects: Vec<SubjectRecord>,
    /// Per-covariate `(mean, sd)` that was removed, if standardized.
    pub covariate_standardization: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn new(subjects: Vec<SubjectRecord>, l: usize) -> Result<Self> {
        let k = subjects.first().map_or(0, |s| s.covariates.len());
        for s in &subjects {
            s.validate(k)?;
        }
        let dims = ModelDims {
            l,
            k,
            n: subjects.len(),
            j: subjects.iter().map(|s| s.times.len()).collect(),
        };
        dims.validate()?;
        Ok(Self {
            dims,
            subjects,
            covariate_standardization: None,
        })
    }

    /// Centers and scales every covariate to empirical mean 0 and sd 1.
    /// Constant covariates are only centered.
    pub fn standardize_covariates(&mut self) {
        let n = self.subjects.len() as f64;
        let mut params = Vec::with_capacity(self.dims.k);
        for c in 0..self.dims.k {
            let mean = self.subjects.iter().map(|s| s.covariates[c]).sum::<f64>() / n;
            let var = self
                .subjects
                .iter()
                .map(|s| (s.covariates[c] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for s in &mut self.subjects {
                s.covariates[c] = (s.covariates[c] - mean) / sd;
            }
            params.push((mean, sd));
        }
        self.covariate_standardization = Some(params);
    }
}

/// Full parameter vector in modified-Cholesky form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub l: usize,
    pub k: usize,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma: f64,
}

impl ThetaParams {
    /// Intercepts `mu`, zero covariate effects, `Delta = delta0 I`,
    /// `Gamma = I`.
    pub fn initial(l: usize, k: usize, mu: &[f64], delta0: f64, sigma: f64) -> Result<Self> {
        if mu.len() != l {
            return Err(Error::invalid(format!(
                "expected {l} intercepts, got {}",
                mu.len()
            )));
        }
        let mut beta = vec![0.0; (k + 1) * l];
        for (ell, &m) in mu.iter().enumerate() {
            beta[ell * (k + 1)] = m;
        }
        let theta = Self {
            l,
            k,
            beta,
            delta: vec![delta0; l],
            gamma: vec![0.0; n_lower(l)],
            sigma,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != (self.k + 1) * self.l
            || self.delta.len() != self.l
            || self.gamma.len() != n_lower(self.l)
        {
            return Err(Error::invalid("parameter vector has inconsistent dimensions"));
        }
        if self
            .beta
            .iter()
            .chain(&self.gamma)
            .chain(&self.delta)
            .any(|v| !v.is_finite())
            || !self.sigma.is_finite()
        {
            return Err(Error::domain("non-finite parameter"));
        }
        if self.delta.iter().any(|&d| d <= 0.0) {
            return Err(Error::domain("Delta entries must be positive"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::domain("sigma must be positive"));
        }
        Ok(())
    }

    pub fn check_dims(&self, dims: &ModelDims) -> Result<()> {
        if self.l != dims.l || self.k != dims.k {
            return Err(Error::invalid(format!(
                "theta has (L, K) = ({}, {}), data has ({}, {})",
                self.l, self.k, dims.l, dims.k
            )));
        }
        Ok(())
    }

    pub fn intercept(&self, ell: usize) -> f64 {
        self.beta[ell * (self.k + 1)]
    }

    /// Coefficient of covariate `cov` (0-based) on latent `ell`.
    pub fn effect(&self, ell: usize, cov: usize) -> f64 {
        self.beta[ell * (self.k + 1) + 1 + cov]
    }

    pub fn omega(&self) -> Result<DMatrix<f64>> {
        assemble_omega(&self.delta, &self.gamma)
    }

    /// `Gamma_{row, col}` for `row > col`.
    pub fn gamma_entry(&self, row: usize, col: usize) -> f64 {
        self.gamma[lower_index(row, col)]
    }
}

/// Penalty weights of the weighted L1 norm. Intercepts always carry weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl PenaltyWeights {
    /// Unit weights on every penalized coordinate.
    pub fn uniform(dims: &ModelDims) -> Self {
        let beta = (0..dims.n_beta())
            .map(|i| if dims.is_intercept(i) { 0.0 } else { 1.0 })
            .collect();
        Self {
            beta,
            gamma: vec![1.0; dims.n_gamma()],
        }
    }

    /// Adaptive-lasso weights `|estimate|^-alpha` from a pilot estimate.
    /// Zero pilot coordinates get an infinite weight and stay excluded.
    pub fn adaptive(pilot: &ThetaParams, alpha: f64) -> Self {
        let w = |v: f64| {
            if v == 0.0 {
                f64::INFINITY
            } else {
                v.abs().powf(-alpha)
            }
        };
        let k = pilot.k;
        let beta = pilot
            .beta
            .iter()
            .enumerate()
            .map(|(i, &b)| if i % (k + 1) == 0 { 0.0 } else { w(b) })
            .collect();
        Self {
            beta,
            gamma: pilot.gamma.iter().map(|&g| w(g)).collect(),
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        if self.beta.len() != dims.n_beta() || self.gamma.len() != dims.n_gamma() {
            return Err(Error::invalid("penalty weights have wrong dimensions"));
        }
        if self.beta.iter().chain(&self.gamma).any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::invalid("penalty weights must be nonnegative"));
        }
        if (0..dims.n_beta()).any(|i| dims.is_intercept(i) && self.beta[i] != 0.0) {
            return Err(Error::invalid("intercepts must not be penalized"));
        }
        Ok(())
    }
}

/// Dense `L x (K+1)L` design matrix. The solver never builds it; see
/// [`design_mean`] and [`design_transpose`].
pub fn build_design_matrix(x: &[f64], l: usize) -> Result<DMatrix<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite covariate"));
    }
    let k = x.len();
    let mut m = DMatrix::zeros(l, (k + 1) * l);
    for ell in 0..l {
        let off = ell * (k + 1);
        m[(ell, off)] = 1.0;
        for (c, &v) in x.iter().enumerate() {
            m[(ell, off + 1 + c)] = v;
        }
    }
    Ok(m)
}

/// `X_i beta` written into `out` (length L).
pub fn design_mean_into(x: &[f64], beta: &[f64], out: &mut [f64]) {
    let stride = x.len() + 1;
    for (ell, o) in out.iter_mut().enumerate() {
        let row = &beta[ell * stride..(ell + 1) * stride];
        *o = row[0] + row[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    }
}

pub fn design_mean(x: &[f64], beta: &[f64], l: usize) -> Result<Vec<f64>> {
    if beta.len() != (x.len() + 1) * l {
        return Err(Error::invalid(format!(
            "beta has length {}, expected {}",
            beta.len(),
            (x.len() + 1) * l
        )));
    }
    let mut out = vec![0.0; l];
    design_mean_into(x, beta, &mut out);
    Ok(out)
}

/// `out += X_i^T v`.
pub fn design_transpose_acc(x: &[f64], v: &[f64], out: &mut [f64]) {
    let stride = x.len() + 1;
    for (ell, &vl) in v.iter().enumerate() {
        let row = &mut out[ell * stride..(ell + 1) * stride];
        row[0] += vl;
        for (r, &xv) in row[1..].iter_mut().zip(x) {
            *r += vl * xv;
        }
    }
}

pub fn design_transpose(x: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; (x.len() + 1) * v.len()];
    design_transpose_acc(x, v, &mut out);
    out
}

/// Unit lower triangular `Gamma` from its strict lower entries.
pub fn gamma_matrix(gamma: &[f64], l: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(l, l);
    for (idx, (r, c)) in lower_pairs(l).enumerate() {
        g[(r, c)] = gamma[idx];
    }
    g
}

/// `Omega = Delta Gamma Gamma^T Delta`.
pub fn assemble_omega(delta: &[f64], gamma: &[f64]) -> Result<DMatrix<f64>> {
    let l = delta.len();
    if gamma.len() != n_lower(l) {
        return Err(Error::invalid(format!(
            "gamma must have {} entries for L = {l}",
            n_lower(l)
        )));
    }
    if delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::domain(format!("Delta entries must be positive: {delta:?}")));
    }
    let mut dg = gamma_matrix(gamma, l);
    for r in 0..l {
        for c in 0..=r {
            dg[(r, c)] *= delta[r];
        }
    }
    let omega = &dg * dg.transpose();
    Ok(symmetrize(omega))
}

/// Inverse of [`assemble_omega`]: the Cholesky factor `C = Delta Gamma`
/// gives `Delta = diag(C)` and `Gamma = Delta^-1 C`.
pub fn decompose_omega(omega: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = omega.nrows();
    if l == 0 || omega.ncols() != l {
        return Err(Error::Decomposition("Omega must be a nonempty square matrix".into()));
    }
    let asym = (omega - omega.transpose()).abs().max();
    if !(asym <= 1e-12 * omega.abs().max().max(1.0)) {
        return Err(Error::Decomposition("Omega is not symmetric".into()));
    }
    let chol = omega
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Decomposition("Omega is not positive definite".into()))?;
    let c = chol.l();
    let delta: Vec<f64> = (0..l).map(|i| c[(i, i)]).collect();
    let gamma = lower_pairs(l).map(|(r, col)| c[(r, col)] / delta[r]).collect();
    Ok((delta, gamma))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Quantities of `theta` reused for every subject: `Omega^-1`, `log|Omega|`.
#[derive(Debug, Clone)]
pub struct PopulationCache {
    pub omega: DMatrix<f64>,
    pub omega_inv: DMatrix<f64>,
    pub log_det_omega: f64,
}

impl PopulationCache {
    pub fn new(theta: &ThetaParams) -> Result<Self> {
        theta.validate()?;
        let omega = theta.omega()?;
        let log_det_omega = 2.0 * theta.delta.iter().map(|d| d.ln()).sum::<f64>();
        let omega_inv = omega
            .clone()
            .cholesky()
            .map(|c| symmetrize(c.inverse()))
            .ok_or_else(|| Error::domain("Omega is numerically singular"))?;
        Ok(Self {
            omega,
            omega_inv,
            log_det_omega,
        })
    }

    /// `(a - m)^T Omega^-1 (a - m)`.
    pub fn quad_form(&self, a: &[f64], m: &[f64]) -> f64 {
        let l = a.len();
        let mut acc = 0.0;
        for r in 0..l {
            let dr = a[r] - m[r];
            let mut row = 0.0;
            for c in 0..l {
                row += self.omega_inv[(r, c)] * (a[c] - m[c]);
            }
            acc += dr * row;
        }
        acc
    }
}

/// `log N(eta; mean, Omega)` including the normalizing constant.
pub fn latent_log_density(cache: &PopulationCache, eta: &[f64], mean: &[f64]) -> f64 {
    -0.5 * (eta.len() as f64 * LN_2PI + cache.log_det_omega + cache.quad_form(eta, mean))
}

/// `log N(y; pred, sigma^2 I)` given the residual sum of squares.
pub fn residual_log_density(ssr: f64, n_obs: usize, sigma: f64) -> f64 {
    -(n_obs as f64) * (sigma.ln() + 0.5 * LN_2PI) - ssr / (2.0 * sigma * sigma)
}

/// Residual sum of squares `sum_j (Y_ij - f(t_ij, exp(eta)))^2`.
pub fn residual_ss(
    subject: &SubjectRecord,
    eta: &[f64],
    model: &dyn StructuralModel,
    pred: &mut [f64],
) -> Result<f64> {
    let z: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    model
        .predict_many(&subject.times, &z, &subject.dosing, pred)
        .map_err(|e| Error::Model {
            subject: subject.id.clone(),
            time: subject.times[0],
            message: e.to_string(),
        })?;
    let mut ss = 0.0;
    for (j, (&y, &p)) in subject.observations.iter().zip(pred.iter()).enumerate() {
        if !p.is_finite() {
            return Err(Error::Model {
                subject: subject.id.clone(),
                time: subject.times[j],
                message: format!("non-finite prediction {p}"),
            });
        }
        ss += (y - p).powi(2);
    }
    Ok(ss)
}

/// Exact joint log-density `log p(Y_i, eta_i; theta)` with `eta_i = log Z_i`:
///
/// ```text
/// -J log sigma - S3 / (2 sigma^2) - 1/2 log|Omega| - 1/2 tr(Sigma_i Omega^-1)
///   - (J + L)/2 log(2 pi)
/// ```
pub fn complete_loglik(
    theta: &ThetaParams,
    eta: &[f64],
    subject: &SubjectRecord,
    model: &dyn StructuralModel,
) -> Result<f64> {
    theta.validate()?;
    if eta.len() != theta.l || eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("latent vector must be finite with length L"));
    }
    if subject.covariates.len() != theta.k {
        return Err(Error::invalid("covariate length does not match theta"));
    }
    let cache = PopulationCache::new(theta)?;
    let mean = design_mean(&subject.covariates, &theta.beta, theta.l)?;
    let mut pred = vec![0.0; subject.times.len()];
    let ssr = residual_ss(subject, eta, model, &mut pred)?;
    Ok(residual_log_density(ssr, subject.times.len(), theta.sigma)
        + latent_log_density(&cache, eta, &mean))
}

/// Same value as [`complete_loglik`], computed from sufficient statistics
/// `(S1, S2, S3)` only (exponential-family form).
pub fn complete_loglik_from_stats(
    cache: &PopulationCache,
    sigma: f64,
    mean: &[f64],
    s1: &[f64],
    s2: &[f64],
    s3: f64,
    n_obs: usize,
) -> f64 {
    let l = mean.len();
    // tr(Sigma_i Omega^-1), Sigma_i = S2 - S1 m^T - m S1^T + m m^T
    let mut tr = 0.0;
    for r in 0..l {
        for c in 0..l {
            let sig = s2[r * l + c] - s1[r] * mean[c] - mean[r] * s1[c] + mean[r] * mean[c];
            tr += sig * cache.omega_inv[(c, r)];
        }
    }
    residual_log_density(s3, n_obs, sigma) - 0.5 * (l as f64 * LN_2PI + cache.log_det_omega + tr)
}
