//! Calibration of `(lambda1, rho)` to target asymptotic sparsity and
//! per-antenna power, and the SINAD-optimal threshold search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{predict_l1, predict_thresh, thresholded_stats, MetricReport};
use crate::error::{Error, Result};
use crate::fixed_point::{solve_saddle, SaddlePoint};
use crate::roots;
use crate::scalar::{q_func, DomainParams};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const LAMBDA1_MAX: f64 = 1e6;
const MAX_OUTER_ITERS: usize = 200;
const PAIR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMode {
    L1,
    Thresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneTarget {
    pub kappa_target: f64,
    pub pb_target: f64,
    /// Required in [`TuneMode::Thresh`].
    #[serde(default)]
    pub t_x: Option<f64>,
    pub mode: TuneMode,
}

impl TuneTarget {
    pub fn l1(kappa_target: f64, pb_target: f64) -> Self {
        Self {
            kappa_target,
            pb_target,
            t_x: None,
            mode: TuneMode::L1,
        }
    }

    pub fn thresh(kappa_target: f64, pb_target: f64, t_x: f64) -> Self {
        Self {
            kappa_target,
            pb_target,
            t_x: Some(t_x),
            mode: TuneMode::Thresh,
        }
    }

    /// Threshold in effect: `None` in l1 mode.
    pub fn threshold(&self) -> Result<Option<f64>> {
        match (self.mode, self.t_x) {
            (TuneMode::L1, _) => Ok(None),
            (TuneMode::Thresh, Some(t)) => Ok(Some(t)),
            (TuneMode::Thresh, None) => Err(Error::InvalidArgument(
                "thresholded tuning needs t_x".into(),
            )),
        }
    }

    fn validate(&self, base: &DomainParams) -> Result<()> {
        if !(self.kappa_target > 0.0 && self.kappa_target <= 1.0) {
            return Err(Error::Domain(format!(
                "kappa target {} must lie in (0, 1]",
                self.kappa_target
            )));
        }
        check_pb(self.pb_target, base)?;
        if let Some(t) = self.threshold()? {
            if !(t > 0.0 && t < base.sqrt_p()) {
                return Err(Error::Domain(format!(
                    "threshold t_x = {t} must lie in (0, {})",
                    base.sqrt_p()
                )));
            }
        }
        Ok(())
    }
}

fn check_pb(pb_target: f64, base: &DomainParams) -> Result<()> {
    if !(pb_target > 0.0) {
        return Err(Error::Domain(format!(
            "P_b target {pb_target} must be positive"
        )));
    }
    if pb_target >= base.p_cap {
        return Err(Error::InfeasibleTarget(format!(
            "P_b target {pb_target} is not below the amplitude budget P = {}",
            base.p_cap
        )));
    }
    Ok(())
}

/// Asymptotic power `tau*^2 delta - rho`, or `alpha~*^2` at threshold `t_x`.
fn power_at(saddle: &SaddlePoint, params: &DomainParams, t_x: Option<f64>) -> f64 {
    match t_x {
        None => saddle.power(params),
        Some(t) => saddle.gauss_prox(params).square(t),
    }
}

/// Asymptotic fraction of active antennas.
fn kappa_at(saddle: &SaddlePoint, params: &DomainParams, t_x: Option<f64>) -> f64 {
    let shift = t_x.map_or(0.0, |t| t / saddle.tau_tilde_star);
    2.0 * q_func(shift + params.lambda1 / saddle.beta_star)
}

/// `rho` at which the asymptotic power equals `pb_target` for fixed
/// `lambda1`: `tau*^2 delta - rho` for the l1 precoder, `alpha~*^2` when a
/// threshold is given.
pub fn calibrate_rho(
    lambda1: f64,
    pb_target: f64,
    params_base: &DomainParams,
    t_x: Option<f64>,
) -> Result<f64> {
    calibrate_rho_from(lambda1, pb_target, params_base, t_x, None)
}

fn calibrate_rho_from(
    lambda1: f64,
    pb_target: f64,
    params_base: &DomainParams,
    t_x: Option<f64>,
    guess: Option<f64>,
) -> Result<f64> {
    check_pb(pb_target, params_base)?;
    let base = params_base.with_lambda1(lambda1);
    base.validate()?;
    let residual = |rho: f64| -> Result<f64> {
        let params = base.with_rho(rho);
        let saddle = solve_saddle(&params)?;
        Ok(power_at(&saddle, &params, t_x) - pb_target)
    };

    // bracket [lo, hi] with lo < root <= hi, starting near the guess
    let start = guess.unwrap_or(pb_target).clamp(RHO_MIN, RHO_MAX);
    let mut hi = start;
    let mut f_hi = residual(hi)?;
    let mut lo;
    let mut f_lo;
    if f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        while f_hi < 0.0 {
            if hi >= RHO_MAX {
                return Err(Error::InfeasibleTarget(format!(
                    "P_b target {pb_target} not reached for rho up to {RHO_MAX} at lambda1 = {lambda1}"
                )));
            }
            lo = hi;
            f_lo = f_hi;
            hi = (hi * 4.0).min(RHO_MAX);
            f_hi = residual(hi)?;
        }
    } else {
        let mut probe = hi;
        loop {
            probe = (probe / 4.0).max(RHO_MIN);
            let f = residual(probe)?;
            if f < 0.0 {
                lo = probe;
                f_lo = f;
                break;
            }
            hi = probe;
            f_hi = f;
            if probe <= RHO_MIN {
                return Err(Error::InfeasibleTarget(format!(
                    "P_b target {pb_target} is exceeded already at rho = {RHO_MIN}"
                )));
            }
        }
    }

    let mid = 0.5 * (lo + hi);
    let f_mid = residual(mid)?;
    let monotone = f_lo <= f_mid && f_mid <= f_hi;
    let rho = if monotone {
        roots::brent(residual, lo, hi, f_lo, f_hi, 0.0, MAX_OUTER_ITERS)?.x
    } else {
        golden_section_abs(residual, lo, hi)?
    };
    let r = residual(rho)?;
    if r.abs() > 1e-8 * pb_target.max(1.0) {
        return Err(Error::InfeasibleTarget(format!(
            "P_b residual {r} at rho = {rho} exceeds tolerance"
        )));
    }
    Ok(rho)
}

/// Minimize `|f|` on `[lo, hi]` by golden-section search.
fn golden_section_abs<F>(mut f: F, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?.abs();
    let mut f2 = f(x2)?.abs();
    for _ in 0..MAX_OUTER_ITERS {
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?.abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?.abs();
        }
    }
    Ok(if f1 <= f2 { x1 } else { x2 })
}

/// A calibrated operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda1: f64,
    pub rho: f64,
    pub saddle: SaddlePoint,
    /// Residuals of the sparsity and power equations.
    pub residuals: [f64; 2],
}

impl Calibration {
    pub fn params(&self, base: &DomainParams) -> DomainParams {
        base.with_lambda1(self.lambda1).with_rho(self.rho)
    }
}

/// Solve `{kappa(lambda1, rho) = kappa_target, P_b(lambda1, rho) = pb_target}`
/// by an outer bracketed search in `lambda1` on the sparsity residual with
/// `rho` recalibrated for every `lambda1`.
pub fn calibrate_pair(target: &TuneTarget, params_base: &DomainParams) -> Result<Calibration> {
    params_base.validate()?;
    target.validate(params_base)?;
    let t_x = target.threshold()?;
    let kappa = target.kappa_target;

    let mut last_rho: Option<f64> = None;
    let mut eval = |lambda1: f64| -> Result<(f64, f64, SaddlePoint)> {
        let rho = calibrate_rho_from(lambda1, target.pb_target, params_base, t_x, last_rho)?;
        last_rho = Some(rho);
        let params = params_base.with_lambda1(lambda1).with_rho(rho);
        let saddle = solve_saddle(&params)?;
        Ok((rho, kappa_at(&saddle, &params, t_x) - kappa, saddle))
    };

    let lambda1 = if t_x.is_none() && kappa == 1.0 {
        0.0
    } else {
        let (_, r0, _) = eval(0.0)?;
        if r0 < 0.0 {
            return Err(Error::InfeasibleTarget(format!(
                "kappa target {kappa} exceeds the largest reachable fraction {} at lambda1 = 0",
                r0 + kappa
            )));
        }
        if r0 == 0.0 {
            0.0
        } else {
            let mut hi = 1.0;
            let mut f_hi = eval(hi)?.1;
            while f_hi > 0.0 {
                if hi >= LAMBDA1_MAX {
                    return Err(Error::InfeasibleTarget(format!(
                        "kappa target {kappa} not reached for lambda1 up to {LAMBDA1_MAX}"
                    )));
                }
                hi *= 4.0;
                f_hi = eval(hi)?.1;
            }
            let lo = if hi > 1.0 { hi / 4.0 } else { 0.0 };
            let f_lo = if lo > 0.0 { eval(lo)?.1 } else { r0 };
            if !(f_lo > 0.0 && f_hi <= 0.0) {
                return Err(Error::InfeasibleTarget(format!(
                    "sparsity residual has no sign change on [{lo}, {hi}]: ({f_lo}, {f_hi})"
                )));
            }
            roots::brent(|l| Ok(eval(l)?.1), lo, hi, f_lo, f_hi, 0.0, MAX_OUTER_ITERS)
                .map_err(|e| match e {
                    Error::NoConvergence { iterations, detail } => Error::NoConvergence {
                        iterations,
                        detail: format!("lambda1 calibration: {detail}"),
                    },
                    other => other,
                })?
                .x
        }
    };

    let (rho, r_kappa, saddle) = eval(lambda1)?;
    let params = params_base.with_lambda1(lambda1).with_rho(rho);
    let r_pb = power_at(&saddle, &params, t_x) - target.pb_target;
    if r_kappa.abs() > PAIR_TOL || r_pb.abs() > PAIR_TOL {
        return Err(Error::NoConvergence {
            iterations: MAX_OUTER_ITERS,
            detail: format!(
                "calibration residuals (kappa {r_kappa:e}, P_b {r_pb:e}) above {PAIR_TOL:e}"
            ),
        });
    }
    Ok(Calibration {
        lambda1,
        rho,
        saddle,
        residuals: [r_kappa, r_pb],
    })
}

/// Predicted metrics at a calibration point.
pub fn predict_at(
    cal: &Calibration,
    params_base: &DomainParams,
    t_x: Option<f64>,
) -> Result<MetricReport> {
    let params = cal.params(params_base);
    match t_x {
        None => predict_l1(&cal.saddle, &params),
        Some(t) => predict_thresh(
            &thresholded_stats(t, &cal.saddle, &params)?,
            &cal.saddle,
            &params,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptimum {
    pub t_x: f64,
    pub lambda1: f64,
    pub rho: f64,
    pub sinad_lb: f64,
    pub calibration: Calibration,
}

/// Uniform grid of `grid_size` thresholds on `[0.01 sqrt(P), 0.99 sqrt(P)]`.
pub fn threshold_grid(params_base: &DomainParams, grid_size: usize) -> Vec<f64> {
    let c = params_base.sqrt_p();
    let (lo, hi) = (0.01 * c, 0.99 * c);
    (0..grid_size)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_size - 1) as f64)
        .collect()
}

/// Calibrate the thresholded precoder at every grid threshold and return
/// the point with the largest predicted SINAD lower bound. Infeasible grid
/// points are skipped; ties go to the smallest threshold.
pub fn optimal_threshold(
    kappa_target: f64,
    pb_target: f64,
    params_base: &DomainParams,
    grid_size: usize,
) -> Result<ThresholdOptimum> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid_size = {grid_size} must be >= 2"
        )));
    }
    let grid = threshold_grid(params_base, grid_size);
    let points: Vec<Result<ThresholdOptimum>> = grid
        .par_iter()
        .map(|&t| {
            let target = TuneTarget::thresh(kappa_target, pb_target, t);
            let cal = calibrate_pair(&target, params_base)?;
            let report = predict_at(&cal, params_base, Some(t))?;
            Ok(ThresholdOptimum {
                t_x: t,
                lambda1: cal.lambda1,
                rho: cal.rho,
                sinad_lb: report.sinad_lb,
                calibration: cal,
            })
        })
        .collect();

    let mut best: Option<ThresholdOptimum> = None;
    for point in points {
        match point {
            Ok(p) => {
                if best.is_none_or(|b| p.sinad_lb > b.sinad_lb) {
                    best = Some(p);
                }
            }
            Err(Error::InfeasibleTarget(_)) | Err(Error::ScalingUndefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| {
        Error::InfeasibleTarget(format!(
            "no feasible threshold for kappa = {kappa_target}, P_b = {pb_target}"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DomainParams {
        DomainParams::new(1.0, 0.5, 0.0, 0.005, 10.0, 0.25).unwrap()
    }

    #[test]
    fn rzf_rho_calibration() {
        let p = DomainParams::new(1.0, 2.0, 0.0, 0.0, 1e6, 0.25).unwrap();
        let rho = calibrate_rho(0.0, 1.0, &p, None).unwrap();
        assert!((rho - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rho_round_trip() {
        let rho = calibrate_rho(0.3, 2.0, &base(), None).unwrap();
        let params = base().with_lambda1(0.3).with_rho(rho);
        let s = solve_saddle(&params).unwrap();
        assert!((s.power(&params) - 2.0).abs() <= 1e-8);
        let small = calibrate_rho(0.3, 1e-4, &base(), None).unwrap();
        assert!(small < rho && small < 1e-2);
    }

    #[test]
    fn rho_rejects_unreachable_power() {
        assert!(matches!(
            calibrate_rho(0.1, 10.0, &base(), None),
            Err(Error::InfeasibleTarget(_))
        ));
        assert!(calibrate_rho(0.1, -1.0, &base(), None).is_err());
    }

    #[test]
    fn full_sparsity_means_no_l1_penalty() {
        let cal = calibrate_pair(&TuneTarget::l1(1.0, 2.0), &base()).unwrap();
        assert_eq!(cal.lambda1, 0.0);
        assert!(cal.residuals[1].abs() <= 1e-7);
    }

    #[test]
    fn pair_round_trip() {
        let target = TuneTarget::l1(0.5, 2.8);
        let cal = calibrate_pair(&target, &base()).unwrap();
        let r = predict_at(&cal, &base(), None).unwrap();
        assert!((r.kappa - 0.5).abs() <= 1e-7);
        assert!((r.p_b - 2.8).abs() <= 1e-7);
    }

    #[test]
    fn thresh_pair_round_trip() {
        let target = TuneTarget::thresh(0.4, 2.8, 0.5);
        let cal = calibrate_pair(&target, &base()).unwrap();
        let r = predict_at(&cal, &base(), Some(0.5)).unwrap();
        assert!((r.kappa - 0.4).abs() <= 1e-7);
        assert!((r.p_b - 2.8).abs() <= 1e-7);
    }

    #[test]
    fn thresh_target_needs_threshold() {
        let mut target = TuneTarget::l1(0.5, 2.8);
        target.mode = TuneMode::Thresh;
        assert!(calibrate_pair(&target, &base()).is_err());
        assert!(optimal_threshold(0.5, 2.8, &base(), 1).is_err());
    }
}
