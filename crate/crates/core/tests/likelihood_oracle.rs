mod common;

use common::oracles::{gauss_hermite, linear_gaussian_loglik, quadrature_loglik, simulate_one_latent as simulate, theta1};
use common::{LogLinear, ScaledDecay};
use nlmesel::model::ThetaParams;
use nlmesel::{bic, loglik_is, IsConfig, SupportMask};

#[test]
fn gauss_hermite_rule_integrates_moments() {
    let (x, w) = gauss_hermite(64);
    let pi = std::f64::consts::PI;
    let m0: f64 = w.iter().sum();
    let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
    assert!((m0 - pi.sqrt()).abs() < 1e-12);
    assert!((m2 - pi.sqrt() / 2.0).abs() < 1e-12);
    assert!((m4 - 0.75 * pi.sqrt()).abs() < 1e-11);
}

#[test]
fn importance_sampling_matches_quadrature_on_nonlinear_model() {
    let truth = theta1(10f64.ln(), 0.3, 0.5);
    for seed in 0..3 {
        let ds = simulate(&ScaledDecay, &truth, 20, 100 + seed);
        // evaluate away from the generating values too
        for theta in [truth.clone(), theta1(2.1, 0.45, 0.7)] {
            let gh = quadrature_loglik(&ScaledDecay, &theta, &ds);
            let is = loglik_is(&theta, &ds, &ScaledDecay, &IsConfig::default(), None, seed).unwrap();
            let tol = (3.0 * is.mc_se).max(0.05);
            assert!(
                (is.value - gh).abs() <= tol,
                "seed {seed}: IS {} (se {}) vs quadrature {gh}",
                is.value,
                is.mc_se
            );
        }
    }
}

#[test]
fn quadrature_and_importance_sampling_match_closed_form_on_linear_model() {
    let theta = theta1(1.0, 0.7, 0.5);
    let ds = simulate(&LogLinear, &theta, 30, 7);
    let exact = linear_gaussian_loglik(&theta, &ds);
    let gh = quadrature_loglik(&LogLinear, &theta, &ds);
    assert!((gh - exact).abs() < 1e-8, "quadrature {gh} vs exact {exact}");
    let is = loglik_is(&theta, &ds, &LogLinear, &IsConfig::default(), None, 1).unwrap();
    assert!((is.value - exact).abs() <= (3.0 * is.mc_se).max(0.05), "IS {} vs exact {exact}", is.value);
}

#[test]
fn estimate_is_insensitive_to_proposal_inflation() {
    let theta = theta1(10f64.ln(), 0.3, 0.5);
    let ds = simulate(&ScaledDecay, &theta, 20, 11);
    let gh = quadrature_loglik(&ScaledDecay, &theta, &ds);
    for inflation in [1.0, 1.25, 1.5, 2.0] {
        let cfg = IsConfig {
            inflation,
            ..Default::default()
        };
        let is = loglik_is(&theta, &ds, &ScaledDecay, &cfg, None, 5).unwrap();
        assert!(
            (is.value - gh).abs() <= (3.0 * is.mc_se).max(0.05),
            "inflation {inflation}: IS {} vs {gh}",
            is.value
        );
    }
}

#[test]
fn monte_carlo_error_shrinks_like_inverse_root_m() {
    let theta = theta1(2.1, 0.45, 0.7);
    let ds = simulate(&ScaledDecay, &theta1(10f64.ln(), 0.3, 0.5), 20, 3);
    let se = |m| {
        let cfg = IsConfig {
            m_is: m,
            ..Default::default()
        };
        loglik_is(&theta, &ds, &ScaledDecay, &cfg, None, 9).unwrap().mc_se
    };
    let ratio = se(1000) / se(16000);
    assert!((3.0..5.0).contains(&ratio), "se ratio {ratio}, expected about 4");
}

#[test]
fn bic_matches_definition() {
    let theta = theta1(1.0, 0.7, 0.5);
    let ds = simulate(&LogLinear, &theta, 30, 7);
    let support = SupportMask::from_theta(&theta);
    assert_eq!(support.size(), 0);
    assert_eq!(bic(-100.0, &ds, &support), 200.0);
    let mut full = ThetaParams::initial(1, 2, &[1.0], 1.0, 1.0).unwrap();
    full.beta[1] = 0.5;
    full.beta[2] = -0.1;
    let support = SupportMask::from_theta(&full);
    assert_eq!(support.size(), 2);
    assert_eq!(bic(-100.0, &ds, &support), 200.0 + 2.0 * 30f64.ln());
}

