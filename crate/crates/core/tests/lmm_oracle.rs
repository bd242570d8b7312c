mod common;

use common::oracles::{lmm_closed_form, lmm_dataset};
use common::LogLinear;
use nlmesel::sapg::{initial_theta, SapgRun};
use nlmesel::{sapg_run, Lambda, PenaltyWeights, SapgConfig, StepMode, WarmStart};

#[test]
fn unpenalized_sapg_recovers_closed_form_ml() {
    let config = SapgConfig {
        n_iter: 20_000,
        step_mode: StepMode::Ass,
        ..Default::default()
    };
    for seed in 0..5u64 {
        let ds = lmm_dataset(100 + seed);
        let (mu, omega2, sigma2) = lmm_closed_form(&ds);
        let weights = PenaltyWeights::uniform(&ds.dims);
        let run = SapgRun::new(&ds, &LogLinear, Lambda::zero(), &weights, &config);
        let theta0 = initial_theta(&ds, None, 0.3).unwrap();
        let out = sapg_run(&run, WarmStart::cold(theta0), seed).unwrap();
        let est = (out.theta.beta[0], out.theta.delta[0].powi(2), out.theta.sigma.powi(2));
        for (name, e, t) in [("mu", est.0, mu), ("omega2", est.1, omega2), ("sigma2", est.2, sigma2)] {
            let rel = (e - t).abs() / t.abs();
            eprintln!("seed {seed} {name}: sapg {e:.5}, closed form {t:.5}, rel {rel:.4}");
            assert!(rel < 0.02, "seed {seed}: {name} {e} vs {t}");
        }
    }
}
