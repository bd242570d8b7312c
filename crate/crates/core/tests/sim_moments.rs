use nlmesel::sim::{simulate_covariates, CovariateStructure};
use nlmesel::{simulate_dataset, SimScenario};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

#[test]
fn latent_moments_match_scenario() {
    let scenario = SimScenario {
        n: 10_000,
        effects: vec![],
        seed: 42,
        ..Default::default()
    };
    let sim = simulate_dataset(&scenario).unwrap();
    let n = scenario.n as f64;
    let col = |c: usize| -> Vec<f64> { sim.truth.latent.iter().map(|z| z[c]).collect() };
    let (vc, cl) = (col(0), col(3));

    // mean of log Vc: SE = sqrt(0.16 / n)
    let se = (0.16 / n).sqrt();
    assert!((mean(&vc) - 1.82).abs() < 3.0 * se, "mean {}", mean(&vc));

    // Var of the sample covariance of a bivariate normal: (s_ab^2 + s_aa s_bb) / n
    let se = ((0.12f64.powi(2) + 0.16 * 0.13) / n).sqrt();
    let c = cov(&vc, &cl);
    assert!((c - 0.12).abs() < 3.0 * se, "cov {c}");

    for (c, mu) in scenario.mu.iter().enumerate() {
        let v = scenario.omega[c][c];
        assert!((mean(&col(c)) - mu).abs() < 3.0 * (v / n).sqrt(), "latent {c}");
        let se = (2.0 * v * v / n).sqrt();
        assert!((cov(&col(c), &col(c)) - v).abs() < 3.0 * se, "variance of latent {c}");
    }
}

#[test]
fn covariate_effects_shift_latent_means() {
    let scenario = SimScenario {
        n: 10_000,
        seed: 7,
        ..Default::default()
    };
    let sim = simulate_dataset(&scenario).unwrap();
    // regress log Vc on x2: slope should be 0.4
    let x: Vec<f64> = sim.dataset.subjects.iter().map(|s| s.covariates[1]).collect();
    let y: Vec<f64> = sim.truth.latent.iter().map(|z| z[0]).collect();
    let slope = cov(&x, &y) / cov(&x, &x);
    let se = (0.16 / (scenario.n as f64 * cov(&x, &x))).sqrt();
    assert!((slope - 0.4).abs() < 3.0 * se, "slope {slope}");
    assert_eq!(sim.truth.effects, vec![(0, 1), (1, 1), (3, 3)]);
    assert_eq!(sim.truth.gamma_support, vec![(3, 0)]);
}

#[test]
fn toeplitz_covariates_have_target_correlation() {
    let x = simulate_covariates(100_000, 3, CovariateStructure::Toeplitz { rho: 0.8 }, 3);
    let col = |c: usize| -> Vec<f64> { x.iter().map(|r| r[c]).collect() };
    let target = [[1.0, 0.8, 0.64], [0.8, 1.0, 0.8], [0.64, 0.8, 1.0]];
    for a in 0..3 {
        for b in 0..3 {
            let r = cov(&col(a), &col(b)) / (cov(&col(a), &col(a)) * cov(&col(b), &col(b))).sqrt();
            assert!((r - target[a][b]).abs() < 0.01, "corr({a},{b}) = {r}");
        }
    }
}

#[test]
fn simulation_is_reproducible() {
    let s = SimScenario::default();
    let a = simulate_dataset(&s).unwrap();
    let b = simulate_dataset(&s).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let c = simulate_dataset(&SimScenario { seed: 2, ..s }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}
