//! Closed-form asymptotic predictors for the l1-norm and thresholded
//! precoders, receive scalings, and the threshold-selection rule. Everything
//! here is a function of a solved [`SaddlePoint`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::SaddlePoint;
use crate::scalar::{q_func, q_inv, DomainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    PredictedL1,
    PredictedThresh,
    Empirical,
}

/// Per-antenna power, active-antenna fraction, SINAD lower bound, BER and
/// the receive scaling used to obtain them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_b: f64,
    pub kappa: f64,
    pub sinad_lb: f64,
    pub ber: f64,
    pub scale: f64,
    pub source: Source,
}

impl MetricReport {
    pub fn sinad_lb_db(&self) -> f64 {
        10.0 * self.sinad_lb.log10()
    }
}

/// Threshold together with the moments of the retained entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub t_x: f64,
    /// `-E[H prox 1{|prox| >= t}] / (tau* delta)`
    pub theta_star: f64,
    /// `sqrt(E[prox^2 1{|prox| >= t}])`
    pub alpha_tilde_star: f64,
}

impl ThresholdStats {
    pub fn alpha_tilde_sq(&self) -> f64 {
        self.alpha_tilde_star * self.alpha_tilde_star
    }
}

/// Limit law of a noise-free received entry given its symbol `S = +-1`:
/// `N(S * signal, spread^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionLaw {
    pub signal: f64,
    pub spread: f64,
}

fn check_tx(t_x: f64, params: &DomainParams) -> Result<()> {
    let cap = params.sqrt_p();
    if !(t_x > 0.0 && t_x < cap) {
        return Err(Error::Domain(format!(
            "threshold t_x = {t_x} must lie in (0, {cap})"
        )));
    }
    Ok(())
}

/// `sigma^2 + (beta^2/4) (tau^2 delta - rho) / (tau^2 delta^2)`
fn l1_noise_distortion(saddle: &SaddlePoint, params: &DomainParams) -> f64 {
    let (tau, beta, delta) = (saddle.tau_star, saddle.beta_star, params.delta);
    params.sigma2 + beta * beta / 4.0 * saddle.power(params) / (tau * tau * delta * delta)
}

/// Asymptotic metrics of the l1-norm precoder.
pub fn predict_l1(saddle: &SaddlePoint, params: &DomainParams) -> Result<MetricReport> {
    let (tau, beta, delta, rho) = (saddle.tau_star, saddle.beta_star, params.delta, params.rho);
    let margin = 2.0 * tau * delta - beta;
    if !(margin > 0.0) {
        return Err(Error::ScalingUndefined(format!(
            "2 tau* delta - beta* = {margin} is not positive"
        )));
    }
    let gain = 1.0 - beta / (2.0 * tau * delta);
    let denom = l1_noise_distortion(saddle, params);
    let sinad_lb = rho * gain * gain / denom;
    Ok(MetricReport {
        p_b: saddle.power(params),
        kappa: 2.0 * q_func(params.lambda1 / beta),
        sinad_lb,
        ber: q_func(rho.sqrt() * gain / denom.sqrt()),
        scale: 2.0 * tau * delta / (rho.sqrt() * margin),
        source: Source::PredictedL1,
    })
}

/// Conditional law of `h_i^T x` for the l1-norm precoder.
pub fn distortion_law_l1(saddle: &SaddlePoint, params: &DomainParams) -> DistortionLaw {
    let (tau, beta, delta) = (saddle.tau_star, saddle.beta_star, params.delta);
    let two_td = 2.0 * tau * delta;
    DistortionLaw {
        signal: (two_td - beta) / two_td * params.rho.sqrt(),
        spread: beta * saddle.power(params).max(0.0).sqrt() / two_td,
    }
}

/// `2 Q(t_x / tau~* + lambda1 / beta*)`: fraction of entries with
/// `|x_i| >= t_x`.
pub fn sparsity_after_threshold(
    t_x: f64,
    saddle: &SaddlePoint,
    params: &DomainParams,
) -> Result<f64> {
    check_tx(t_x, params)?;
    Ok(2.0 * q_func(t_x / saddle.tau_tilde_star + params.lambda1 / saddle.beta_star))
}

/// Threshold that keeps a fraction `kappa` of the entries:
/// `(Q^-1(kappa/2) - lambda1/beta*) tau~*`.
pub fn threshold_for_target(
    kappa: f64,
    saddle: &SaddlePoint,
    params: &DomainParams,
) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Domain(format!(
            "target kappa = {kappa} must lie in (0, 1]"
        )));
    }
    let ratio = params.lambda1 / saddle.beta_star;
    let available = 2.0 * q_func(ratio);
    if kappa > available * (1.0 + 1e-14) {
        return Err(Error::InfeasibleTarget(format!(
            "kappa = {kappa} exceeds the non-zero fraction {available} of the l1 precoder"
        )));
    }
    let t = if kappa >= 1.0 {
        -ratio
    } else {
        q_inv(0.5 * kappa)? - ratio
    };
    let t_x = (t * saddle.tau_tilde_star).max(0.0);
    if t_x >= params.sqrt_p() {
        return Err(Error::InfeasibleTarget(format!(
            "threshold {t_x} for kappa = {kappa} reaches the amplitude cap"
        )));
    }
    Ok(t_x)
}

/// Moments `theta*` and `alpha~*` of the entries retained at threshold `t_x`.
pub fn thresholded_stats(
    t_x: f64,
    saddle: &SaddlePoint,
    params: &DomainParams,
) -> Result<ThresholdStats> {
    check_tx(t_x, params)?;
    let law = saddle.gauss_prox(params);
    let cross = law.h_cross(t_x);
    let power = law.square(t_x);
    Ok(ThresholdStats {
        t_x,
        theta_star: -cross / (saddle.tau_star * params.delta),
        alpha_tilde_star: power.sqrt(),
    })
}

/// Distortion variance `alpha~^2 + theta^2 (delta tau^2 - rho) + 2 alpha~^2 theta`
/// of the thresholded precoder (without noise).
fn thresh_distortion(stats: &ThresholdStats, saddle: &SaddlePoint, params: &DomainParams) -> f64 {
    let a2 = stats.alpha_tilde_sq();
    let th = stats.theta_star;
    a2 + th * th * saddle.power(params) + 2.0 * a2 * th
}

fn check_theta(stats: &ThresholdStats) -> Result<()> {
    if !(stats.theta_star < 0.0) {
        return Err(Error::ScalingUndefined(format!(
            "theta* = {} must be negative for the receive scaling",
            stats.theta_star
        )));
    }
    Ok(())
}

/// Asymptotic metrics of the thresholded precoder.
pub fn predict_thresh(
    stats: &ThresholdStats,
    saddle: &SaddlePoint,
    params: &DomainParams,
) -> Result<MetricReport> {
    check_theta(stats)?;
    let rho = params.rho;
    let th = stats.theta_star;
    let d = thresh_distortion(stats, saddle, params) + params.sigma2;
    if !(d > 0.0) {
        return Err(Error::Numerical(format!(
            "non-positive distortion-plus-noise power {d} for the thresholded precoder"
        )));
    }
    Ok(MetricReport {
        p_b: stats.alpha_tilde_sq(),
        kappa: sparsity_after_threshold(stats.t_x, saddle, params)?,
        sinad_lb: rho * th * th / d,
        ber: q_func(-rho.sqrt() * th / d.sqrt()),
        scale: -1.0 / (rho.sqrt() * th),
        source: Source::PredictedThresh,
    })
}

/// Conditional law of `h_i^T T(x)` for the thresholded precoder.
pub fn distortion_law_thresh(
    stats: &ThresholdStats,
    saddle: &SaddlePoint,
    params: &DomainParams,
) -> Result<DistortionLaw> {
    check_theta(stats)?;
    Ok(DistortionLaw {
        signal: -stats.theta_star * params.rho.sqrt(),
        spread: thresh_distortion(stats, saddle, params).max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::solve_saddle;

    fn rzf_point() -> (SaddlePoint, DomainParams) {
        let params = DomainParams::new(1.0, 2.0, 0.0, 0.0, 1e6, 0.25).unwrap();
        let saddle = SaddlePoint {
            tau_star: 1.0,
            beta_star: 2.0,
            tau_tilde_star: 1.0,
            psi_star: 1.0,
            residuals: [0.0; 2],
        };
        (saddle, params)
    }

    #[test]
    fn l1_prediction_at_closed_form_rzf_saddle() {
        let (s, p) = rzf_point();
        let r = predict_l1(&s, &p).unwrap();
        assert!((r.p_b - 1.0).abs() < 1e-15);
        assert_eq!(r.kappa, 1.0);
        assert!((r.scale - 2.0).abs() < 1e-15);
        assert!((r.sinad_lb - 0.5).abs() < 1e-15);
        assert!((r.ber - q_func(0.5f64.sqrt())).abs() < 1e-15);
        assert!((r.ber - 0.239_750_061_093_477_2).abs() < 1e-9);
    }

    #[test]
    fn huge_noise_drives_ber_to_half() {
        let p = DomainParams::new(1.0, 0.5, 0.3, 0.005, 10.0, 1e12).unwrap();
        let s = solve_saddle(&p).unwrap();
        let r = predict_l1(&s, &p).unwrap();
        assert!(r.sinad_lb < 1e-11);
        assert!((r.ber - 0.5).abs() < 1e-6);
        let t = threshold_for_target(0.3, &s, &p).unwrap();
        let stats = thresholded_stats(t, &s, &p).unwrap();
        let rt = predict_thresh(&stats, &s, &p).unwrap();
        assert!((rt.ber - 0.5).abs() < 1e-6);
    }

    #[test]
    fn scaling_undefined_when_margin_vanishes() {
        let (mut s, p) = rzf_point();
        s.beta_star = 4.0;
        assert!(matches!(
            predict_l1(&s, &p),
            Err(Error::ScalingUndefined(_))
        ));
    }

    #[test]
    fn threshold_rule_examples() {
        let (s, p) = rzf_point();
        assert_eq!(threshold_for_target(1.0, &s, &p).unwrap(), 0.0);
        let t = threshold_for_target(0.5, &s, &p).unwrap();
        assert!((t - 0.674_489_750_196_081_7 * s.tau_tilde_star).abs() < 1e-12);
        assert!(threshold_for_target(0.0, &s, &p).is_err());
    }

    #[test]
    fn infeasible_kappa_is_rejected() {
        let p = DomainParams::new(1.0, 0.5, 0.8, 0.005, 10.0, 0.25).unwrap();
        let s = solve_saddle(&p).unwrap();
        let available = 2.0 * q_func(p.lambda1 / s.beta_star);
        let err = threshold_for_target((available + 0.05).min(1.0), &s, &p).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTarget(_)));
    }

    #[test]
    fn sparsity_domain_and_monotonicity() {
        let p = DomainParams::new(1.0, 0.5, 0.3, 0.005, 10.0, 0.25).unwrap();
        let s = solve_saddle(&p).unwrap();
        assert!(sparsity_after_threshold(0.0, &s, &p).is_err());
        assert!(sparsity_after_threshold(p.sqrt_p(), &s, &p).is_err());
        let mut last = 1.0;
        for i in 1..50 {
            let k = sparsity_after_threshold(i as f64 * 0.06, &s, &p).unwrap();
            assert!(k < last);
            last = k;
        }
    }

    #[test]
    fn cap_edge_sparsity_value() {
        let p = DomainParams::new(1.0, 0.5, 0.0, 0.0, 10.0, 0.25).unwrap();
        let s = SaddlePoint {
            tau_star: 1.0,
            beta_star: 1.0,
            tau_tilde_star: 1.0,
            psi_star: 0.0,
            residuals: [0.0; 2],
        };
        let k = sparsity_after_threshold(p.sqrt_p() * (1.0 - 1e-15), &s, &p).unwrap();
        assert!((k - 0.001_565_402_258_002_549).abs() < 1e-12);
    }

    #[test]
    fn thresholded_matches_l1_as_threshold_vanishes() {
        let p = DomainParams::new(1.0, 0.5, 0.3, 0.005, 10.0, 0.25).unwrap();
        let s = solve_saddle(&p).unwrap();
        let stats = thresholded_stats(1e-8, &s, &p).unwrap();
        let gain = 1.0 - s.beta_star / (2.0 * s.tau_star * p.delta);
        assert!((stats.theta_star + gain).abs() < 1e-6);
        assert!((stats.alpha_tilde_sq() - s.power(&p)).abs() < 1e-6);
        let a = predict_l1(&s, &p).unwrap();
        let b = predict_thresh(&stats, &s, &p).unwrap();
        for (x, y) in [
            (a.p_b, b.p_b),
            (a.sinad_lb, b.sinad_lb),
            (a.ber, b.ber),
            (a.kappa, b.kappa),
        ] {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3));
        }
        let la = distortion_law_l1(&s, &p);
        let lb = distortion_law_thresh(&stats, &s, &p).unwrap();
        assert!((la.signal - lb.signal).abs() < 1e-6);
        assert!((la.spread - lb.spread).abs() < 1e-6);
    }

    #[test]
    fn positive_theta_has_no_scaling() {
        let (s, p) = rzf_point();
        let stats = ThresholdStats {
            t_x: 0.5,
            theta_star: 0.0,
            alpha_tilde_star: 1.0,
        };
        assert!(matches!(
            predict_thresh(&stats, &s, &p),
            Err(Error::ScalingUndefined(_))
        ));
    }
}
