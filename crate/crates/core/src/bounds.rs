//! Finite-step sampling-error and mixing-time bounds.
//!
//! A constants ledger collects the contraction rate, local error constants,
//! and local orders of a one-step integrator for a contractive diffusion.
//! From the ledger the module derives the certified step-size threshold, the
//! global error constant, a Wasserstein error bound of the form
//! exp(-beta k h) W2(0) + C h^{p2 - 1/2}, and mixing-time counts, together
//! with the specialization of all constants to the unadjusted Langevin
//! chain on an L-smooth, m-strongly-convex potential.

use crate::error::{Error, Result};
use crate::potentials::PotentialModel;

/// Constants describing one integrator on one contractive diffusion.
///
/// beta is the contraction rate, kappa_a the conditioning of the contraction
/// metric, h0 the integrator's own step threshold, and (c1, d1), (c2, d2)
/// the coefficient pairs of the local weak and strong error with orders p1
/// and p2. usq is the moment bound 4 E|x0|^2 + 6 E_target |x|^2. The
/// derived fields h1 (certified step threshold) and c (global error
/// constant) are filled by `finalize`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsLedger {
    pub beta: f64,
    pub kappa_a: f64,
    pub c0: f64,
    pub c1: f64,
    pub d1: f64,
    pub c2: f64,
    pub d2: f64,
    pub p1: f64,
    pub p2: f64,
    pub h0: f64,
    pub usq: f64,
    pub h1: f64,
    pub c: f64,
}

impl ConstantsLedger {
    /// Checks every field except the derived pair (h1, c).
    pub fn validate_base(&self) -> Result<()> {
        let nonneg = [
            ("c0", self.c0),
            ("c1", self.c1),
            ("d1", self.d1),
            ("c2", self.c2),
            ("d2", self.d2),
            ("usq", self.usq),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "ledger entry {name} must be finite and nonnegative"
                )));
            }
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument("ledger needs beta > 0".into()));
        }
        if !(self.kappa_a >= 1.0) || !self.kappa_a.is_finite() {
            return Err(Error::InvalidArgument("ledger needs kappa_a >= 1".into()));
        }
        if !(self.h0 > 0.0) || !self.h0.is_finite() {
            return Err(Error::InvalidArgument("ledger needs h0 > 0".into()));
        }
        if !(self.p2 > 0.5) {
            return Err(Error::InvalidArgument("ledger needs p2 > 1/2".into()));
        }
        if !(self.p1 >= self.p2 + 0.5) {
            return Err(Error::InvalidArgument(
                "ledger needs weak order p1 >= p2 + 1/2".into(),
            ));
        }
        Ok(())
    }

    /// Checks all fields, including that (h1, c) agree with the base fields.
    pub fn validate(&self) -> Result<()> {
        self.validate_base()?;
        if !(self.h1 > 0.0) || self.h1 > self.h0.min(0.25 / self.beta) {
            return Err(Error::InvalidArgument(
                "ledger h1 must lie in (0, min(h0, 1/(4 beta))]".into(),
            ));
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return Err(Error::InvalidArgument(
                "ledger global constant must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Fills the derived fields from the base fields.
    pub fn finalize(mut self) -> Result<Self> {
        self.h1 = h1_threshold(&self)?;
        self.c = global_constant(&self)?;
        Ok(self)
    }

    /// Moment scale U = sqrt(usq).
    pub fn u(&self) -> f64 {
        self.usq.sqrt()
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Certified step threshold:
/// min of h0, 1/(4 beta), and two local-constant terms that are infinite
/// when the corresponding D coefficient vanishes. Reads only base fields.
pub fn h1_threshold(ledger: &ConstantsLedger) -> Result<f64> {
    ledger.validate_base()?;
    let expo = 1.0 / (ledger.p2 - 0.5);
    let mut h1 = ledger.h0.min(0.25 / ledger.beta);
    if ledger.d2 > 0.0 {
        let t = ledger.beta.sqrt() / (4.0 * SQRT2 * ledger.kappa_a * ledger.d2);
        h1 = h1.min(t.powf(expo));
    }
    let dsum = ledger.d1 + ledger.c0 * ledger.d2;
    if dsum > 0.0 {
        let t = ledger.beta / (8.0 * SQRT2 * ledger.kappa_a * ledger.kappa_a * dsum);
        h1 = h1.min(t.powf(expo));
    }
    Ok(h1)
}

/// Global error constant
/// C = (2/sqrt(beta)) kappa_a^2 ((c1 + c0 c2 + sqrt(2) U (d1 + c0 d2)) / sqrt(beta)
///     + c2 + sqrt(2) d2 U). Reads only base fields.
pub fn global_constant(ledger: &ConstantsLedger) -> Result<f64> {
    ledger.validate_base()?;
    let sb = ledger.beta.sqrt();
    let u = ledger.u();
    let inner = (ledger.c1 + ledger.c0 * ledger.c2 + SQRT2 * u * (ledger.d1 + ledger.c0 * ledger.d2))
        / sb
        + ledger.c2
        + SQRT2 * ledger.d2 * u;
    Ok((2.0 / sb) * ledger.kappa_a * ledger.kappa_a * inner)
}

/// Closed-form Langevin constant
/// (10 (L^2 + G) / m^{3/2}) sqrt(2 d + m (Ex0sq + 1)).
pub fn c_lmc(m: f64, l: f64, g: f64, d: usize, ex0_sq: f64) -> Result<f64> {
    if !(m > 0.0) || !(l >= m) || !(g >= 0.0) || d == 0 || !(ex0_sq >= 0.0) {
        return Err(Error::InvalidArgument(
            "need 0 < m <= L, G >= 0, d >= 1, and a nonnegative start moment".into(),
        ));
    }
    Ok(10.0 * (l * l + g) / m.powf(1.5) * (2.0 * d as f64 + m * (ex0_sq + 1.0)).sqrt())
}

/// Wasserstein error bound exp(-beta k h) w2_0 + c h^{p2 - 1/2}, valid for
/// steps up to the certified threshold.
pub fn w2_upper(k: u64, h: f64, w2_0: f64, ledger: &ConstantsLedger) -> Result<f64> {
    ledger.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    if !(w2_0 >= 0.0) {
        return Err(Error::InvalidArgument(
            "initial distance must be nonnegative".into(),
        ));
    }
    if h > ledger.h1 {
        return Err(Error::AboveCertifiedStep { h, h1: ledger.h1 });
    }
    Ok((-ledger.beta * k as f64 * h).exp() * w2_0 + ledger.c * h.powf(ledger.p2 - 0.5))
}

/// Largest certified step whose bias term stays at or below eps/2.
pub fn step_for_accuracy(eps: f64, ledger: &ConstantsLedger) -> Result<f64> {
    ledger.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("need eps > 0".into()));
    }
    if ledger.c == 0.0 {
        return Ok(ledger.h1);
    }
    let expo = 1.0 / (ledger.p2 - 0.5);
    Ok(ledger.h1.min((eps / (2.0 * ledger.c)).powf(expo)))
}

fn mixing_count(eps: f64, w2_0: f64, rate: f64) -> u64 {
    // rate = 1 / (beta h) at the chosen step; the iterate count is
    // rate * log(2 W2(0) / eps), rounded up.
    let k = rate * (2.0 * w2_0 / eps).ln();
    k.max(0.0).ceil() as u64
}

/// Iterates certified to reach accuracy eps from initial distance w2_0:
/// ceil(max(1/(beta h1), (1/beta) (2c/eps)^{1/(p2-1/2)}) log(2 w2_0 / eps)),
/// and 0 when the start is already within eps/2.
pub fn mixing_upper(eps: f64, w2_0: f64, ledger: &ConstantsLedger) -> Result<u64> {
    ledger.validate()?;
    if !(eps > 0.0) || !(w2_0 >= 0.0) {
        return Err(Error::InvalidArgument(
            "need eps > 0 and a nonnegative initial distance".into(),
        ));
    }
    if w2_0 <= eps / 2.0 {
        return Ok(0);
    }
    let expo = 1.0 / (ledger.p2 - 0.5);
    let rate = (1.0 / (ledger.beta * ledger.h1))
        .max((2.0 * ledger.c / eps).powf(expo) / ledger.beta);
    Ok(mixing_count(eps, w2_0, rate))
}

/// Langevin specialization of the mixing count with the closed-form
/// constant: ceil(max(4 kappa^2, 2 c_lmc / (m eps)) log(2 w2_0 / eps)).
pub fn mixing_upper_lmc(eps: f64, w2_0: f64, m: f64, kappa: f64, c_lmc: f64) -> Result<u64> {
    if !(eps > 0.0) || !(w2_0 >= 0.0) || !(m > 0.0) || !(kappa >= 1.0) || !(c_lmc >= 0.0) {
        return Err(Error::InvalidArgument(
            "need eps > 0 and constants in range".into(),
        ));
    }
    if w2_0 <= eps / 2.0 {
        return Ok(0);
    }
    let rate = (4.0 * kappa * kappa).max(2.0 * c_lmc / (m * eps));
    Ok(mixing_count(eps, w2_0, rate))
}

/// Iterate lower bound for the two-block quadratic family in dimension 2d:
/// (sqrt(d) / (8 eps)) log(sqrt(d) / eps), and 0 once eps >= sqrt(d).
///
/// d counts coordinates per block, half the ambient dimension.
pub fn mixing_lower(d: usize, eps: f64) -> Result<f64> {
    if d == 0 || !(eps > 0.0) {
        return Err(Error::InvalidArgument(
            "need a positive block size and eps > 0".into(),
        ));
    }
    let sd = (d as f64).sqrt();
    if eps >= sd {
        return Ok(0.0);
    }
    Ok(sd / (8.0 * eps) * (sd / eps).ln())
}

/// Ledger of the unadjusted Langevin chain on an L-smooth,
/// m-strongly-convex potential, from the start and target second moments.
///
/// Requires the potential's growth constant G; estimate it or set it in the
/// model first.
pub fn lmc_ledger(p: &PotentialModel, ex0_sq: f64, emu_sq: f64) -> Result<ConstantsLedger> {
    let g = p.g().ok_or(Error::MissingG)?;
    if !(ex0_sq >= 0.0) || !(emu_sq >= 0.0) {
        return Err(Error::InvalidArgument(
            "second moments must be nonnegative".into(),
        ));
    }
    let m = p.m();
    let l = p.l();
    let d = p.d() as f64;
    let s = (2.0 * d / m + ex0_sq + 1.0).sqrt();
    ConstantsLedger {
        beta: m,
        kappa_a: 1.0,
        c0: m.sqrt() / 2.0,
        c1: 2.0 * (l * l + g) * s,
        d1: 0.0,
        c2: 2.0 * l * m.sqrt() * s,
        d2: 0.0,
        p1: 2.0,
        p2: 1.5,
        h0: 1.0 / (4.0 * p.kappa() * l),
        usq: 4.0 * ex0_sq + 6.0 * emu_sq,
        h1: 0.0,
        c: 0.0,
    }
    .finalize()
}
