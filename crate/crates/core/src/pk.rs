//! Structural models. The built-in one is the linear two-compartment
//! pharmacokinetic model with a bolus at t = 0 and an optional zero-order
//! infusion over `[0, T_I]`. Times are in hours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One bolus plus one constant-rate infusion, both starting at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DosingRegimen {
    /// Bolus amount (mg).
    pub bolus: f64,
    /// Infusion rate (mg/h).
    pub infusion_rate: f64,
    /// Infusion duration (h); 0 means no infusion.
    pub infusion_duration: f64,
}

impl DosingRegimen {
    pub fn bolus(amount: f64) -> Self {
        Self {
            bolus: amount,
            infusion_rate: 0.0,
            infusion_duration: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.bolus, self.infusion_rate, self.infusion_duration];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "dosing quantities must be finite and nonnegative: {self:?}"
            )));
        }
        if (self.infusion_rate > 0.0) != (self.infusion_duration > 0.0) {
            return Err(Error::invalid(format!(
                "infusion rate and duration must both be positive or both zero: {self:?}"
            )));
        }
        Ok(())
    }

    fn has_infusion(&self) -> bool {
        self.infusion_rate > 0.0 && self.infusion_duration > 0.0
    }
}

/// Individual two-compartment parameters on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkParams {
    /// Central volume (L).
    pub vc: f64,
    /// Peripheral volume (L).
    pub vp: f64,
    /// Inter-compartment clearance (L/h).
    pub q: f64,
    /// Elimination clearance (L/h).
    pub cl: f64,
}

impl PkParams {
    /// Reads `(Vc, Vp, Q, Cl)` from a latent vector on the natural scale.
    pub fn from_latent(z: &[f64]) -> Result<Self> {
        if z.len() != 4 {
            return Err(Error::invalid(format!(
                "two-compartment model needs 4 latent parameters, got {}",
                z.len()
            )));
        }
        let p = Self {
            vc: z[0],
            vp: z[1],
            q: z[2],
            cl: z[3],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.vc, self.vp, self.q, self.cl];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite PK parameters: {self:?}")));
        }
        if self.vc <= 0.0 || self.vp <= 0.0 || self.q < 0.0 || self.cl < 0.0 {
            return Err(Error::domain(format!(
                "PK parameters out of range (volumes > 0, clearances >= 0): {self:?}"
            )));
        }
        Ok(())
    }
}

/// Maps an observation time and an individual parameter vector on the
/// natural scale (`Z = exp(eta)`) to a predicted observation.
///
/// Implementations must be deterministic.
pub trait StructuralModel: Send + Sync {
    /// Number of latent parameters the model expects.
    fn n_latent(&self) -> usize;

    fn predict(&self, t: f64, z: &[f64], dosing: &DosingRegimen) -> Result<f64>;

    /// Predictions at several times. Override when per-subject work can be
    /// shared across time points.
    fn predict_many(
        &self,
        times: &[f64],
        z: &[f64],
        dosing: &DosingRegimen,
        out: &mut [f64],
    ) -> Result<()> {
        for (o, &t) in out.iter_mut().zip(times) {
            *o = self.predict(t, z, dosing)?;
        }
        Ok(())
    }
}

/// Two-compartment model observed through the central concentration
/// `A_c(t) / Vc`. Latent order is `(Vc, Vp, Q, Cl)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoCompartment;

impl StructuralModel for TwoCompartment {
    fn n_latent(&self) -> usize {
        4
    }

    fn predict(&self, t: f64, z: &[f64], dosing: &DosingRegimen) -> Result<f64> {
        pk2_concentration(t, &PkParams::from_latent(z)?, dosing)
    }

    fn predict_many(
        &self,
        times: &[f64],
        z: &[f64],
        dosing: &DosingRegimen,
        out: &mut [f64],
    ) -> Result<()> {
        let p = PkParams::from_latent(z)?;
        let sys = Pk2System::new(&p, dosing);
        for (o, &t) in out.iter_mut().zip(times) {
            *o = sys.amounts(t).0 / p.vc;
        }
        Ok(())
    }
}

/// Drug amounts `(A_c, A_p)` at time `t`, from the exact solution of the
/// linear system.
pub fn pk2_amounts(t: f64, p: &PkParams, dosing: &DosingRegimen) -> Result<(f64, f64)> {
    p.validate()?;
    dosing.validate()?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(Pk2System::new(p, dosing).amounts(t))
}

pub fn pk2_concentration(t: f64, p: &PkParams, dosing: &DosingRegimen) -> Result<f64> {
    Ok(pk2_amounts(t, p, dosing)?.0 / p.vc)
}

/// Crude log-scale starting values for `(Vc, Vp, Q, Cl)` from the data
/// alone. Per subject, `Vc` is the dose over the concentration
/// back-extrapolated to t = 0 from the first two samples and `Cl` is the
/// dose over the trapezoidal AUC with a log-linear tail. The peripheral
/// pair reuses the central values. Medians across subjects; subjects with
/// unusable profiles are skipped.
pub fn noncompartmental_guess(dataset: &crate::model::Dataset) -> Option<Vec<f64>> {
    let mut vc = Vec::new();
    let mut cl = Vec::new();
    for s in &dataset.subjects {
        let dose = s.dosing.bolus + s.dosing.infusion_rate * s.dosing.infusion_duration;
        let pts: Vec<(f64, f64)> = s
            .times
            .iter()
            .zip(&s.observations)
            .filter(|(t, c)| **t > 0.0 && **c > 0.0)
            .map(|(t, c)| (*t, *c))
            .collect();
        if dose <= 0.0 || pts.len() < 2 {
            continue;
        }
        let (t0, c0) = pts[0];
        let (t1, c1) = pts[1];
        let k0 = ((c0 / c1).ln() / (t1 - t0)).max(0.0);
        vc.push(dose / (c0 * (k0 * t0).exp()));
        let mut auc = 0.5 * (c0 + c0 * (k0 * t0).exp()) * t0;
        for w in pts.windows(2) {
            auc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        let (ta, ca) = pts[pts.len() - 2];
        let (tb, cb) = pts[pts.len() - 1];
        let kz = (ca / cb).ln() / (tb - ta);
        if kz > 0.0 && kz.is_finite() {
            auc += cb / kz;
        }
        cl.push(dose / auc);
    }
    if vc.is_empty() {
        return None;
    }
    let v = crate::stats::median(&vc).ln();
    let c = crate::stats::median(&cl).ln();
    [v, v, c, c].iter().all(|x| x.is_finite()).then(|| vec![v, v, c, c])
}

/// Classical fixed-step RK4 for the same system. The grid is split at the
/// end of the infusion so the forcing discontinuity falls on a node.
pub fn rk4_reference(
    t: f64,
    p: &PkParams,
    dosing: &DosingRegimen,
    step: f64,
) -> Result<(f64, f64)> {
    p.validate()?;
    dosing.validate()?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("time must be finite and >= 0, got {t}")));
    }
    let k12 = p.q / p.vc;
    let k21 = p.q / p.vp;
    let k10 = p.cl / p.vc;
    let rhs = |x: [f64; 2], rate: f64| -> [f64; 2] {
        [
            rate + k21 * x[1] - (k12 + k10) * x[0],
            k12 * x[0] - k21 * x[1],
        ]
    };
    let integrate = |mut x: [f64; 2], span: f64, rate: f64| -> [f64; 2] {
        if span <= 0.0 {
            return x;
        }
        let n = (span / step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            let k1 = rhs(x, rate);
            let k2 = rhs([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], rate);
            let k3 = rhs([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], rate);
            let k4 = rhs([x[0] + h * k3[0], x[1] + h * k3[1]], rate);
            x[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            x[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        x
    };
    let x0 = [dosing.bolus, 0.0];
    let x = if dosing.has_infusion() {
        let t_inf = t.min(dosing.infusion_duration);
        let x1 = integrate(x0, t_inf, dosing.infusion_rate);
        integrate(x1, t - t_inf, 0.0)
    } else {
        integrate(x0, t, 0.0)
    };
    Ok((x[0], x[1]))
}

/// `expm1(x) / x`, continuous at 0.
fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `M_k(x) = int_0^1 u^k e^{x u} du` for k = 1 and k = 3.
fn moment_integrals(x: f64) -> (f64, f64) {
    if x.abs() <= 1.0 {
        // sum_n x^n / (n! (n + k + 1))
        let (mut m1, mut m3) = (0.0, 0.0);
        let mut term = 1.0;
        for n in 0..30 {
            let nf = n as f64;
            m1 += term / (nf + 2.0);
            m3 += term / (nf + 4.0);
            term *= x / (nf + 1.0);
        }
        (m1, m3)
    } else {
        let ex = x.exp();
        let m0 = phi1(x);
        let m1 = (ex - m0) / x;
        let m2 = (ex - 2.0 * m1) / x;
        let m3 = (ex - 3.0 * m2) / x;
        (m1, m3)
    }
}

/// Precomputed eigen-structure of one subject's two-compartment system.
#[derive(Debug, Clone, Copy)]
struct Pk2System {
    k10: f64,
    k12: f64,
    k21: f64,
    /// Eigenvalues, `lambda1 >= lambda2`; unused when `q == 0`.
    lambda1: f64,
    lambda2: f64,
    dosing: DosingRegimen,
    decoupled: bool,
}

impl Pk2System {
    fn new(p: &PkParams, dosing: &DosingRegimen) -> Self {
        let k12 = p.q / p.vc;
        let k21 = p.q / p.vp;
        let k10 = p.cl / p.vc;
        let decoupled = p.q == 0.0;
        let (mut lambda1, mut lambda2) = (0.0, 0.0);
        if !decoupled {
            let sum = k10 + k12 + k21;
            let gap = ((k10 + k12 - k21).powi(2) + 4.0 * k12 * k21).sqrt();
            lambda2 = -0.5 * (sum + gap);
            // product of the eigenvalues is k10 * k21
            lambda1 = k10 * k21 / lambda2;
        }
        Self {
            k10,
            k12,
            k21,
            lambda1,
            lambda2,
            dosing: *dosing,
            decoupled,
        }
    }

    /// `exp(A t) x`, Putzer form around the slower eigenvalue.
    fn propagate(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        if self.decoupled {
            return [x[0] * (-self.k10 * t).exp(), x[1]];
        }
        let gap = self.lambda1 - self.lambda2;
        let e1 = (self.lambda1 * t).exp();
        let r2 = e1 * t * phi1(-gap * t);
        let b = self.shifted(x, self.lambda1);
        [e1 * x[0] + r2 * b[0], e1 * x[1] + r2 * b[1]]
    }

    /// `int_0^t exp(A s) ds * (rate, 0)`.
    fn forced(&self, rate: f64, t: f64) -> [f64; 2] {
        if self.decoupled {
            return [rate * t * phi1(-self.k10 * t), 0.0];
        }
        let (l1, l2) = (self.lambda1, self.lambda2);
        let gap = l1 - l2;
        let i1 = t * phi1(l1 * t);
        let i2 = if gap * t > 1e-4 {
            (t * phi1(l1 * t) - t * phi1(l2 * t)) / gap
        } else {
            // divided difference of t*phi1(lambda t) by Taylor expansion at the midpoint
            let mid = 0.5 * (l1 + l2);
            let (m1, m3) = moment_integrals(mid * t);
            t * t * m1 + t.powi(4) * m3 * gap * gap / 24.0
        };
        let b = self.shifted([rate, 0.0], l1);
        [i1 * rate + i2 * b[0], i2 * b[1]]
    }

    /// `(A - shift I) x`.
    fn shifted(&self, x: [f64; 2], shift: f64) -> [f64; 2] {
        [
            -(self.k10 + self.k12 + shift) * x[0] + self.k21 * x[1],
            self.k12 * x[0] - (self.k21 + shift) * x[1],
        ]
    }

    fn amounts(&self, t: f64) -> (f64, f64) {
        let x0 = [self.dosing.bolus, 0.0];
        if !self.dosing.has_infusion() {
            let x = self.propagate(x0, t);
            return (x[0], x[1]);
        }
        let t_inf = t.min(self.dosing.infusion_duration);
        let free = self.propagate(x0, t_inf);
        let forced = self.forced(self.dosing.infusion_rate, t_inf);
        let at_inf = [free[0] + forced[0], free[1] + forced[1]];
        let x = if t > t_inf {
            self.propagate(at_inf, t - t_inf)
        } else {
            at_inf
        };
        (x[0], x[1])
    }
}
