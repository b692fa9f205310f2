//! Saddle point of the scalar max-min problem
//!
//! ```text
//! max_{beta >= 0} min_{tau >= 0} psi(tau, beta)
//! ```
//!
//! whose solution `(tau*, beta*)` drives every asymptotic predictor. For a
//! fixed `beta` the inner minimizer is the unique root of
//! `j(tau) = tau^2 delta - rho - E[prox(tau~ H; lambda1 tau~ / beta)^2]` on
//! `[sqrt(rho/delta), sqrt((rho+P)/delta)]`; the outer function
//! `Psi(beta) = min_tau psi` is strongly concave, so `beta*` is the unique
//! root of the non-increasing derivative `Psi'`. Both roots are bracketed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;
use crate::scalar::{DomainParams, GaussProx};

const MAX_ROOT_ITERS: usize = 300;

/// Solution of the fixed-point system together with its residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub tau_star: f64,
    pub beta_star: f64,
    /// `1 / (1/tau* + 2 lambda2 / beta*)`
    pub tau_tilde_star: f64,
    /// Optimal scalar cost `psi(tau*, beta*)`.
    pub psi_star: f64,
    /// Residuals of the power equation and of the `beta` equation.
    pub residuals: [f64; 2],
}

impl SaddlePoint {
    /// `(a, b)` such that the limiting precoder entry is `prox(a H; b)`.
    pub fn prox_law(&self, params: &DomainParams) -> (f64, f64) {
        let a = self.tau_tilde_star;
        (a, params.lambda1 * a / self.beta_star)
    }

    pub(crate) fn gauss_prox(&self, params: &DomainParams) -> GaussProx {
        let (a, b) = self.prox_law(params);
        GaussProx::new(a, b, params.sqrt_p())
    }

    /// `tau*^2 delta - rho`, the asymptotic per-antenna power.
    pub fn power(&self, params: &DomainParams) -> f64 {
        self.tau_star * self.tau_star * params.delta - params.rho
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals[0].abs().max(self.residuals[1].abs())
    }
}

/// `1 / (1/tau + 2 lambda2 / beta)`.
#[inline]
pub fn tau_tilde(tau: f64, beta: f64, lambda2: f64) -> f64 {
    1.0 / (1.0 / tau + 2.0 * lambda2 / beta)
}

fn law_at(tau: f64, beta: f64, params: &DomainParams) -> GaussProx {
    let tt = tau_tilde(tau, beta, params.lambda2);
    GaussProx::new(tt, params.lambda1 * tt / beta, params.sqrt_p())
}

/// Search interval `[sqrt(rho/delta), sqrt((rho+P)/delta)]` for the inner root.
pub fn tau_bounds(params: &DomainParams) -> (f64, f64) {
    (
        (params.rho / params.delta).sqrt(),
        ((params.rho + params.p_cap) / params.delta).sqrt(),
    )
}

/// Published upper bound `(delta + 1) sqrt((P + rho) / delta)` on `beta*`.
pub fn beta_max(params: &DomainParams) -> f64 {
    (params.delta + 1.0) * ((params.p_cap + params.rho) / params.delta).sqrt()
}

/// Upper end of the outer bracket. Because `E[H prox] >= 0`, the `beta`
/// equation gives `beta* <= 2 tau* delta <= 2 sqrt(delta (rho + P))`; the
/// larger of this and [`beta_max`] is used.
pub fn beta_bracket_hi(params: &DomainParams) -> f64 {
    beta_max(params).max(2.0 * (params.delta * (params.rho + params.p_cap)).sqrt())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be > 0")));
    }
    Ok(())
}

fn inner_tau_unchecked(beta: f64, params: &DomainParams) -> Result<f64> {
    let (lo, hi) = tau_bounds(params);
    let j = |tau: f64| {
        Ok(tau * tau * params.delta - params.rho - law_at(tau, beta, params).square(0.0))
    };
    // j(lo) = -E[prox^2] <= 0 exactly; a positive value is rounding in
    // lo^2 delta - rho with a vanishing moment, so lo is the root.
    let j_lo = j(lo)?;
    if j_lo >= 0.0 {
        return Ok(lo);
    }
    let j_hi = j(hi)?;
    let root = roots::brent(j, lo, hi, j_lo, j_hi, 0.0, MAX_ROOT_ITERS).map_err(|e| match e {
        Error::Internal(msg) => Error::Internal(format!(
            "inner tau equation lost its bracket at beta = {beta}: {msg}"
        )),
        other => other,
    })?;
    Ok(root.x)
}

/// Unique minimizer `tau*(beta)` of `psi(., beta)`.
pub fn inner_tau(beta: f64, params: &DomainParams) -> Result<f64> {
    params.validate()?;
    check_beta(beta)?;
    inner_tau_unchecked(beta, params)
}

fn psi_prime_unchecked(beta: f64, params: &DomainParams) -> Result<f64> {
    let tau = inner_tau_unchecked(beta, params)?;
    let law = law_at(tau, beta, params);
    Ok(tau * params.delta - law.h_cross(0.0) - 0.5 * beta)
}

/// Derivative of `Psi(beta) = min_tau psi(tau, beta)`:
/// `tau*(beta) delta - E[H prox] - beta / 2`.
pub fn psi_prime(beta: f64, params: &DomainParams) -> Result<f64> {
    params.validate()?;
    check_beta(beta)?;
    psi_prime_unchecked(beta, params)
}

/// `psi(tau, beta)` evaluated through the Moreau-envelope form of the inner
/// expectation.
pub fn psi_value(tau: f64, beta: f64, params: &DomainParams) -> f64 {
    let DomainParams {
        rho,
        delta,
        lambda2,
        ..
    } = *params;
    let k = beta / tau + 2.0 * lambda2;
    let law = law_at(tau, beta, params);
    beta * tau * delta / 2.0 - beta * beta / 4.0 + beta * rho / (2.0 * tau) - 0.5 * beta * beta / k
        + k * law.moreau()
}

/// Right-hand side of the optimal-cost identity
/// `beta*^2 / 4 + lambda2 E[prox^2] + lambda1 E[|prox|]`.
pub fn psi_identity(saddle: &SaddlePoint, params: &DomainParams) -> f64 {
    let law = saddle.gauss_prox(params);
    saddle.beta_star * saddle.beta_star / 4.0
        + params.lambda2 * law.square(0.0)
        + params.lambda1 * law.abs()
}

/// Solve for the unique saddle point.
pub fn solve_saddle(params: &DomainParams) -> Result<SaddlePoint> {
    params.validate()?;
    if !params.is_admissible() {
        return Err(Error::DegenerateSaddle {
            delta: params.delta,
        });
    }

    let beta_hi = beta_bracket_hi(params);
    let f_hi = psi_prime_unchecked(beta_hi, params)?;

    let mut beta_lo = 1e-8_f64.min(0.5 * beta_hi);
    let mut f_lo = psi_prime_unchecked(beta_lo, params)?;
    while f_lo <= 0.0 && beta_lo > 1e-300 {
        beta_lo *= 1e-4;
        f_lo = psi_prime_unchecked(beta_lo, params)?;
    }
    if f_lo <= 0.0 {
        return Err(Error::Internal(format!(
            "Psi' is not positive near beta = 0 (value {f_lo}) for admissible parameters"
        )));
    }

    let root = roots::brent(
        |b| psi_prime_unchecked(b, params),
        beta_lo,
        beta_hi,
        f_lo,
        f_hi,
        0.0,
        MAX_ROOT_ITERS,
    )?;
    let beta = root.x;
    let tau = inner_tau_unchecked(beta, params)?;
    let law = law_at(tau, beta, params);
    let residuals = [
        tau * tau * params.delta - params.rho - law.square(0.0),
        beta - 2.0 * tau * params.delta + 2.0 * law.h_cross(0.0),
    ];
    Ok(SaddlePoint {
        tau_star: tau,
        beta_star: beta,
        tau_tilde_star: tau_tilde(tau, beta, params.lambda2),
        psi_star: psi_value(tau, beta, params),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rho: f64, delta: f64, l1: f64, l2: f64, p: f64) -> DomainParams {
        DomainParams::new(rho, delta, l1, l2, p, 0.25).unwrap()
    }

    #[test]
    fn inner_tau_large_cap_limit() {
        let p = params(1.0, 2.0, 0.0, 0.0, 1e6);
        let tau = inner_tau(2.0, &p).unwrap();
        assert!((tau - 1.0).abs() < 1e-4);
    }

    #[test]
    fn inner_tau_huge_lambda1_pins_lower_bound() {
        let p = params(1.0, 2.0, 1e9, 0.0, 10.0);
        let tau = inner_tau(0.7, &p).unwrap();
        assert!((tau - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inner_tau_rejects_bad_beta() {
        let p = params(1.0, 2.0, 0.1, 0.0, 10.0);
        assert!(inner_tau(0.0, &p).is_err());
        assert!(psi_prime(-1.0, &p).is_err());
    }

    #[test]
    fn degenerate_saddle_is_reported() {
        let p = params(1.0, 0.5, 0.0, 0.0, 10.0);
        let err = solve_saddle(&p).unwrap_err();
        assert!(matches!(err, Error::DegenerateSaddle { .. }));
        assert!(err.to_string().contains("delta >= 1"));
    }

    #[test]
    fn rzf_limit() {
        let p = params(1.0, 2.0, 0.0, 0.0, 1e6);
        let s = solve_saddle(&p).unwrap();
        assert!((s.tau_star - 1.0).abs() < 1e-3);
        assert!((s.beta_star - 2.0).abs() < 2e-3);
        assert!((s.psi_star - 1.0).abs() < 1e-3);
        assert!(s.max_residual() < 1e-9);
    }

    #[test]
    fn psi_prime_vanishes_at_saddle_and_is_positive_near_zero() {
        let p = params(1.0, 0.5, 0.3, 0.005, 10.0);
        let s = solve_saddle(&p).unwrap();
        assert!(psi_prime(s.beta_star, &p).unwrap().abs() < 1e-9);
        // 2 Psi'(0+) = lim 2 tau delta - 2 E[H prox] > 2 sqrt(delta rho)
        let near_zero = psi_prime(1e-10, &p).unwrap();
        assert!(2.0 * near_zero > 2.0 * (p.delta * p.rho).sqrt() - 1e-6);
        assert!(psi_prime(beta_bracket_hi(&p), &p).unwrap() <= 0.0);
    }

    #[test]
    fn identity_and_bounds_hold() {
        let p = params(1.0, 0.5, 0.3, 0.005, 10.0);
        let s = solve_saddle(&p).unwrap();
        assert!((s.psi_star - psi_identity(&s, &p)).abs() < 1e-9);
        let (lo, hi) = tau_bounds(&p);
        assert!(s.tau_star > lo && s.tau_star <= hi);
        let power = s.power(&p);
        assert!(power > 0.0 && power <= p.p_cap);
        assert!(s.beta_star > 0.0 && s.beta_star <= beta_max(&p));
    }
}
