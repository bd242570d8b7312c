//! Reference computations shared by the oracle tests and the acceptance run.

use nalgebra::{DMatrix, SymmetricEigen};
use nlmesel::model::{Dataset, SubjectRecord, ThetaParams};
use nlmesel::{DosingRegimen, PkParams, StructuralModel, SuffStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gauss-Hermite nodes (weight function exp(-x^2)) by Golub-Welsch. The
/// weights come from the Christoffel sum `1 / sum_k p_k(x)^2` over the
/// orthonormal polynomials rather than from eigenvector components, which
/// lose relative precision at the outer nodes where adaptive quadrature
/// multiplies them by exp(x^2).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let mut x: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let w = x
        .iter()
        .map(|&xi| {
            let mut prev = 0.0;
            let mut cur = std::f64::consts::PI.powf(-0.25);
            let mut sum = cur * cur;
            for k in 1..n {
                let next = (2.0 / k as f64).sqrt() * xi * cur - ((k - 1) as f64 / k as f64).sqrt() * prev;
                prev = cur;
                cur = next;
                sum += cur * cur;
            }
            1.0 / sum
        })
        .collect();
    (x, w)
}

pub fn theta1(mu: f64, omega: f64, sigma: f64) -> ThetaParams {
    ThetaParams::initial(1, 0, &[mu], omega, sigma).unwrap()
}

/// `n` subjects of a one-latent model observed at four fixed times.
pub fn simulate_one_latent(model: &dyn StructuralModel, theta: &ThetaParams, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = Normal::new(theta.beta[0], theta.delta[0]).unwrap();
    let noise = Normal::new(0.0, theta.sigma).unwrap();
    let times = vec![0.5, 1.0, 3.0, 6.0];
    let subjects = (0..n)
        .map(|i| {
            let z = [eta.sample(&mut rng).exp()];
            let obs = times
                .iter()
                .map(|&t| model.predict(t, &z, &DosingRegimen::bolus(1.0)).unwrap() + noise.sample(&mut rng))
                .collect();
            SubjectRecord {
                id: format!("s{i}"),
                times: times.clone(),
                observations: obs,
                covariates: vec![],
                dosing: DosingRegimen::bolus(1.0),
            }
        })
        .collect();
    Dataset::new(subjects, 1).unwrap()
}

/// Adaptive 64-node quadrature of each subject's marginal likelihood,
/// centred at the mode of the integrand with its curvature as scale.
pub fn quadrature_loglik(model: &dyn StructuralModel, theta: &ThetaParams, ds: &Dataset) -> f64 {
    let (x, w) = gauss_hermite(64);
    let (mu, omega, sigma) = (theta.beta[0], theta.delta[0], theta.sigma);
    ds.subjects
        .iter()
        .map(|s| {
            let log_g = |eta: f64| -> f64 {
                let z = [eta.exp()];
                let ll: f64 = s
                    .times
                    .iter()
                    .zip(&s.observations)
                    .map(|(&t, &y)| {
                        let r = y - model.predict(t, &z, &s.dosing).unwrap();
                        -0.5 * (LN_2PI + 2.0 * sigma.ln() + r * r / (sigma * sigma))
                    })
                    .sum();
                ll - 0.5 * (LN_2PI + 2.0 * omega.ln() + (eta - mu).powi(2) / (omega * omega))
            };
            // golden-section search for the mode on a wide bracket
            let (mut a, mut b) = (mu - 8.0 * omega, mu + 8.0 * omega);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - phi * (b - a);
                let d = a + phi * (b - a);
                if log_g(c) > log_g(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let m = 0.5 * (a + b);
            let h = 1e-4;
            let curv = -(log_g(m + h) - 2.0 * log_g(m) + log_g(m - h)) / (h * h);
            let scale = (2.0 / curv).sqrt();
            let terms: Vec<f64> = x
                .iter()
                .zip(&w)
                .map(|(&xi, &wi)| wi.ln() + xi * xi + log_g(m + scale * xi))
                .collect();
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            scale.ln() + max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
        })
        .sum()
}

/// Exact marginal log-likelihood when observations are `eta + noise`.
pub fn linear_gaussian_loglik(theta: &ThetaParams, ds: &Dataset) -> f64 {
    let (mu, w2, s2) = (theta.beta[0], theta.delta[0].powi(2), theta.sigma.powi(2));
    ds.subjects
        .iter()
        .map(|s| {
            let j = s.observations.len() as f64;
            let r: Vec<f64> = s.observations.iter().map(|y| y - mu).collect();
            let sum: f64 = r.iter().sum();
            let ss: f64 = r.iter().map(|v| v * v).sum();
            // (s2 I + w2 11')^-1 = (I - w2/(s2 + j w2) 11') / s2
            let quad = (ss - w2 / (s2 + j * w2) * sum * sum) / s2;
            let logdet = (j - 1.0) * s2.ln() + (s2 + j * w2).ln();
            -0.5 * (j * LN_2PI + logdet + quad)
        })
        .sum()
}

pub const LMM_N: usize = 200;
pub const LMM_J: usize = 5;

/// Balanced one-way random-effects data: `y_ij = eta_i + e_ij`.
pub fn lmm_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = Normal::new(1.0, 0.7).unwrap();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let subjects = (0..LMM_N)
        .map(|i| {
            let eta = re.sample(&mut rng);
            SubjectRecord {
                id: format!("{i}"),
                times: (1..=LMM_J).map(|t| t as f64).collect(),
                observations: (0..LMM_J).map(|_| eta + noise.sample(&mut rng)).collect(),
                covariates: vec![],
                dosing: DosingRegimen::bolus(0.0),
            }
        })
        .collect();
    Dataset::new(subjects, 1).unwrap()
}

/// Balanced one-way ANOVA maximum likelihood: `(mu, omega^2, sigma^2)`.
pub fn lmm_closed_form(ds: &Dataset) -> (f64, f64, f64) {
    let (n, j) = (ds.subjects.len(), LMM_J);
    let means: Vec<f64> = ds
        .subjects
        .iter()
        .map(|s| s.observations.iter().sum::<f64>() / j as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n as f64;
    let ssw: f64 = ds
        .subjects
        .iter()
        .zip(&means)
        .map(|(s, m)| s.observations.iter().map(|y| (y - m).powi(2)).sum::<f64>())
        .sum();
    let sigma2 = ssw / (n * (j - 1)) as f64;
    let between = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / n as f64;
    (grand, between - sigma2 / j as f64, sigma2)
}

/// PK parameters scattered around the default population values.
pub fn random_pk_params(rng: &mut ChaCha8Rng) -> PkParams {
    let mu = [1.82, 2.26, 3.10, 1.67];
    let z: Vec<f64> = mu.iter().map(|m| (m + rng.random_range(-1.0..1.0f64)).exp()).collect();
    PkParams::from_latent(&z).unwrap()
}

/// A random `(theta, S^sa)` point with 3 latents and 2 covariates. The
/// second moments are built as `s1 s1' + A A'` so they are valid.
pub fn random_gradient_problem(rng: &mut ChaCha8Rng) -> (ThetaParams, Vec<SuffStats>, Dataset) {
    const L: usize = 3;
    const K: usize = 2;
    let n = 6;
    let subjects: Vec<SubjectRecord> = (0..n)
        .map(|i| SubjectRecord {
            id: format!("{i}"),
            times: (1..=1 + i % 3).map(|t| t as f64).collect(),
            observations: vec![0.0; 1 + i % 3],
            covariates: (0..K).map(|_| rng.random_range(-1.5..1.5)).collect(),
            dosing: DosingRegimen::bolus(1.0),
        })
        .collect();
    let dataset = Dataset::new(subjects, L).unwrap();
    let mut theta = ThetaParams::initial(L, K, &[0.0; L], 1.0, 1.0).unwrap();
    for b in theta.beta.iter_mut() {
        *b = rng.random_range(-1.0..1.0);
    }
    for g in theta.gamma.iter_mut() {
        *g = rng.random_range(-0.8..0.8);
    }
    for d in theta.delta.iter_mut() {
        *d = rng.random_range(0.3..1.5);
    }
    theta.sigma = rng.random_range(0.5..2.0);
    let s_sa = (0..n)
        .map(|i| {
            let s1: Vec<f64> = (0..L).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..L * L).map(|_| rng.random_range(-0.5..0.5)).collect();
            let mut s2 = vec![0.0; L * L];
            for r in 0..L {
                for c in 0..L {
                    s2[r * L + c] = s1[r] * s1[c] + (0..L).map(|m| a[r * L + m] * a[c * L + m]).sum::<f64>();
                }
            }
            SuffStats {
                s1,
                s2,
                s3: rng.random_range(0.5..3.0) * (1 + i % 3) as f64,
            }
        })
        .collect();
    (theta, s_sa, dataset)
}

/// Largest relative error between an analytic gradient block and its
/// finite-difference counterpart; near-zero entries are compared against
/// 1% of the block's scale.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(scale * 1e-2))
        .fold(0.0, f64::max)
}
