#![allow(dead_code)]

pub mod oracles;

use nlmesel::{DosingRegimen, Result, StructuralModel};

/// `f(t, Z) = log Z_1`: observations are `eta_i + noise`, a one-way
/// random-effects model.
pub struct LogLinear;

impl StructuralModel for LogLinear {
    fn n_latent(&self) -> usize {
        1
    }

    fn predict(&self, _t: f64, z: &[f64], _: &DosingRegimen) -> Result<f64> {
        Ok(z[0].ln())
    }
}

/// `f(t, Z) = Z_1 exp(-t / 4)`, nonlinear in `eta = log Z_1`.
pub struct ScaledDecay;

impl StructuralModel for ScaledDecay {
    fn n_latent(&self) -> usize {
        1
    }

    fn predict(&self, t: f64, z: &[f64], _: &DosingRegimen) -> Result<f64> {
        Ok(z[0] * (-t / 4.0).exp())
    }
}

/// Default PK scenario with `seed` and the data-driven starting point.
pub fn pk_problem(seed: u64) -> (nlmesel::sim::SimulatedData, nlmesel::ThetaParams) {
    let sim = nlmesel::simulate_dataset(&nlmesel::SimScenario {
        seed,
        ..Default::default()
    })
    .unwrap();
    let mu = nlmesel::pk::noncompartmental_guess(&sim.dataset).unwrap();
    let theta0 = nlmesel::sapg::initial_theta(&sim.dataset, Some(&mu), 1.0).unwrap();
    (sim, theta0)
}
