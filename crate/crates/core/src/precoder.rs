//! Finite-dimensional l1-norm precoder
//!
//! ```text
//! x^ = argmin_{|x_i| <= sqrt(P)}  (1/n) |H x - sqrt(rho) s|^2
//!                                 + (lambda2/n) |x|^2 + (lambda1/n) |x|_1
//! ```
//!
//! solved by accelerated proximal gradient. The proximal map of the
//! non-smooth part is the scalar clipped soft threshold applied per
//! coordinate, so iterates carry exact zeros and exact clamps.
//!
//! Matrix-vector products go through nalgebra's `gemv`/`gemv_tr`, which sum
//! in a fixed column order on one thread; results are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{prox_capped, DomainParams};

/// Channel matrix and BPSK symbol vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub h: DMatrix<f64>,
    pub symbols: DVector<f64>,
}

impl Instance {
    pub fn new(h: DMatrix<f64>, symbols: DVector<f64>) -> Result<Self> {
        if h.nrows() != symbols.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} rows but {} symbols were given",
                h.nrows(),
                symbols.len()
            )));
        }
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty channel matrix".into()));
        }
        if let Some(bad) = symbols.iter().find(|&&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidArgument(format!("symbol {bad} is not +-1")));
        }
        Ok(Self { h, symbols })
    }

    /// Number of users.
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    /// Number of antennas.
    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} antennas",
                x.len(),
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Step `1/L` with `L = (2/n)(|H|_2^2 + lambda2)` from power iteration.
    FixedLipschitz,
    /// Increase a local Lipschitz estimate until the quadratic upper bound holds.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative objective change between accepted iterates.
    pub tol_obj: f64,
    /// Bound on [`kkt_residual`].
    pub tol_kkt: f64,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol_obj: 1e-12,
            tol_kkt: 1e-9,
            step_rule: StepRule::FixedLipschitz,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol_obj > 0.0) || !(self.tol_kkt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid solver config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderResult {
    pub x_hat: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Objective after every iteration, starting from the initial point, as
    /// accumulated from the per-step objective changes.
    pub trace: Vec<f64>,
}

impl PrecoderResult {
    /// Number of exactly-zero entries.
    pub fn zeros(&self) -> usize {
        self.x_hat.iter().filter(|&&v| v == 0.0).count()
    }
}

struct Problem<'a> {
    inst: &'a Instance,
    sqrt_rho: f64,
    lambda1: f64,
    lambda2: f64,
    cap: f64,
    inv_n: f64,
}

impl<'a> Problem<'a> {
    fn new(inst: &'a Instance, params: &DomainParams) -> Self {
        Self {
            inst,
            sqrt_rho: params.rho.sqrt(),
            lambda1: params.lambda1,
            lambda2: params.lambda2,
            cap: params.sqrt_p(),
            inv_n: 1.0 / inst.n() as f64,
        }
    }

    /// `r = H x - sqrt(rho) s` given `hx = H x`.
    fn residual_into(&self, hx: &DVector<f64>, r: &mut DVector<f64>) {
        r.copy_from(hx);
        r.axpy(-self.sqrt_rho, &self.inst.symbols, 1.0);
    }

    /// Smooth part given `H x`.
    fn smooth(&self, x: &DVector<f64>, hx: &DVector<f64>) -> f64 {
        let fit: f64 = hx
            .iter()
            .zip(self.inst.symbols.iter())
            .map(|(a, s)| {
                let d = a - self.sqrt_rho * s;
                d * d
            })
            .sum();
        (fit + self.lambda2 * x.norm_squared()) * self.inv_n
    }

    /// `C(z) - C(x)` given `H x` and `hd = H (z - x)`, with every term
    /// written through the difference `z - x`.
    fn change(
        &self,
        x: &DVector<f64>,
        hx: &DVector<f64>,
        z: &DVector<f64>,
        hd: &DVector<f64>,
    ) -> f64 {
        let mut fit = 0.0;
        for ((d, b), s) in hd.iter().zip(hx.iter()).zip(self.inst.symbols.iter()) {
            fit += d * (2.0 * (b - self.sqrt_rho * s) + d);
        }
        let mut ridge = 0.0;
        let mut l1 = 0.0;
        for (a, b) in z.iter().zip(x.iter()) {
            ridge += (a - b) * (a + b);
            l1 += a.abs() - b.abs();
        }
        (fit + self.lambda2 * ridge + self.lambda1 * l1) * self.inv_n
    }

    fn penalty(&self, x: &DVector<f64>) -> f64 {
        self.lambda1 * x.lp_norm(1) * self.inv_n
    }

    /// `(2/n) H^T r + (2 lambda2 / n) x`.
    fn gradient_into(&self, x: &DVector<f64>, r: &DVector<f64>, g: &mut DVector<f64>) {
        g.gemv_tr(2.0 * self.inv_n, &self.inst.h, r, 0.0);
        g.axpy(2.0 * self.lambda2 * self.inv_n, x, 1.0);
    }

    /// Coordinate-wise `prox` of `step * ((lambda1/n)|.|_1 + box)`.
    fn prox_step_into(&self, y: &DVector<f64>, g: &DVector<f64>, lip: f64, z: &mut DVector<f64>) {
        let thr = self.lambda1 * self.inv_n / lip;
        for ((zi, yi), gi) in z.iter_mut().zip(y.iter()).zip(g.iter()) {
            *zi = prox_capped(yi - gi / lip, thr, self.cap);
        }
    }

    fn kkt(&self, x: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let mu = self.lambda1 * self.inv_n;
        x.iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| kkt_coordinate(xi, gi, mu, self.cap))
            .fold(0.0, f64::max)
    }
}

fn kkt_coordinate(xi: f64, gi: f64, mu: f64, cap: f64) -> f64 {
    if xi == 0.0 {
        (gi.abs() - mu).max(0.0)
    } else if xi >= cap {
        (gi + mu).max(0.0)
    } else if xi <= -cap {
        (mu - gi).max(0.0)
    } else {
        (gi + mu * xi.signum()).abs()
    }
}

/// `C(x) = (1/n)|Hx - sqrt(rho) s|^2 + (lambda2/n)|x|^2 + (lambda1/n)|x|_1`.
pub fn objective(inst: &Instance, x: &DVector<f64>, params: &DomainParams) -> Result<f64> {
    inst.check_len(x)?;
    let prob = Problem::new(inst, params);
    let hx = &inst.h * x;
    let value = prob.smooth(x, &hx) + prob.penalty(x);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective evaluated to {value}")));
    }
    Ok(value)
}

/// Infinity-norm distance from the smooth gradient to the negative
/// subdifferential of `(lambda1/n)|.|_1 + box indicator` at `x`. Zero
/// exactly at minimizers.
pub fn kkt_residual(inst: &Instance, x: &DVector<f64>, params: &DomainParams) -> Result<f64> {
    inst.check_len(x)?;
    let prob = Problem::new(inst, params);
    if let Some(bad) = x.iter().find(|v| v.abs() > prob.cap * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "entry {bad} violates the amplitude cap {}",
            prob.cap
        )));
    }
    let hx = &inst.h * x;
    let mut r = DVector::zeros(inst.m());
    prob.residual_into(&hx, &mut r);
    let mut g = DVector::zeros(inst.n());
    prob.gradient_into(x, &r, &mut g);
    Ok(prob.kkt(x, &g))
}

/// Zero every entry with `|x_i| < t_x`; entries at or above the threshold
/// are kept verbatim.
pub fn apply_threshold(x: &DVector<f64>, t_x: f64) -> Result<DVector<f64>> {
    if !(t_x > 0.0) {
        return Err(Error::Domain(format!(
            "threshold t_x = {t_x} must be positive"
        )));
    }
    Ok(x.map(|v| if v.abs() >= t_x { v } else { 0.0 }))
}

/// Largest singular value of `h` squared, by power iteration on `H^T H`.
pub fn spectral_norm_sq(h: &DMatrix<f64>, max_steps: usize, tol: f64) -> f64 {
    let n = h.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut hv = DVector::zeros(h.nrows());
    let mut w = DVector::zeros(n);
    let mut lambda = 0.0;
    for _ in 0..max_steps {
        hv.gemv(1.0, h, &v, 0.0);
        w.gemv_tr(1.0, h, &hv, 0.0);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v.copy_from(&w);
        v /= norm;
        if (next - lambda).abs() <= tol * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Solve the l1-norm precoder from `x = 0`.
pub fn solve_l1_precoder(
    inst: &Instance,
    params: &DomainParams,
    cfg: &SolverConfig,
) -> Result<PrecoderResult> {
    solve_l1_precoder_from(inst, params, cfg, &DVector::zeros(inst.n()))
}

/// Solve the l1-norm precoder from a feasible starting point.
///
/// Monotone FISTA: a proximal-gradient candidate is accepted only if it does
/// not increase the objective, otherwise the momentum restarts from the
/// current iterate. The run stops once the relative objective change and the
/// KKT residual are both below tolerance.
pub fn solve_l1_precoder_from(
    inst: &Instance,
    params: &DomainParams,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<PrecoderResult> {
    params.validate()?;
    cfg.validate()?;
    inst.check_len(x0)?;
    let prob = Problem::new(inst, params);
    let (m, n) = (inst.m(), inst.n());
    let h = &inst.h;

    let mut x = x0.map(|v| v.clamp(-prob.cap, prob.cap));
    let mut hx = h * &x;
    let mut fx = prob.smooth(&x, &hx) + prob.penalty(&x);

    let mut lip = match cfg.step_rule {
        StepRule::FixedLipschitz => {
            // power iteration approaches from below; pad the estimate
            let s2 = spectral_norm_sq(h, 100, 1e-10) * (1.0 + 1e-3);
            2.0 * prob.inv_n * (s2 + prob.lambda2)
        }
        StepRule::Backtracking => {
            let mean_eig = h.norm_squared() / n as f64;
            2.0 * prob.inv_n * (mean_eig + prob.lambda2)
        }
    };

    let mut y = x.clone();
    let mut hy = hx.clone();
    let mut z = DVector::zeros(n);
    let mut hz = DVector::zeros(m);
    let mut d = DVector::zeros(n);
    let mut hd = DVector::zeros(m);
    let mut r = DVector::zeros(m);
    let mut g = DVector::zeros(n);
    let mut x_prev = x.clone();
    let mut hx_prev = hx.clone();
    let mut t = 1.0_f64;

    let mut trace = vec![fx];
    let mut kkt = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        prob.residual_into(&hy, &mut r);
        prob.gradient_into(&y, &r, &mut g);

        let fz = match cfg.step_rule {
            StepRule::FixedLipschitz => {
                prob.prox_step_into(&y, &g, lip, &mut z);
                hz.gemv(1.0, h, &z, 0.0);
                prob.smooth(&z, &hz) + prob.penalty(&z)
            }
            StepRule::Backtracking => {
                let fy = prob.smooth(&y, &hy);
                loop {
                    prob.prox_step_into(&y, &g, lip, &mut z);
                    hz.gemv(1.0, h, &z, 0.0);
                    let fs = prob.smooth(&z, &hz);
                    let d = &z - &y;
                    let bound = fy + g.dot(&d) + 0.5 * lip * d.norm_squared();
                    if fs <= bound + 1e-15 * fy.abs() || lip > 1e300 {
                        break fs + prob.penalty(&z);
                    }
                    lip *= 2.0;
                }
            }
        };
        if !fz.is_finite() {
            return Err(Error::Numerical(format!(
                "objective became {fz} at iteration {iter}"
            )));
        }

        // Near the optimum the change is far below the rounding error of
        // either objective value, and H z - H x loses it too; recompute
        // H (z - x) directly when the cheap estimate is small.
        hd.copy_from(&hz);
        hd -= &hx;
        let mut change = prob.change(&x, &hx, &z, &hd);
        if change.abs() <= 1e-8 * fx.abs() {
            d.copy_from(&z);
            d -= &x;
            hd.gemv(1.0, h, &d, 0.0);
            change = prob.change(&x, &hx, &z, &hd);
        }
        if change <= 0.0 {
            std::mem::swap(&mut x_prev, &mut x);
            std::mem::swap(&mut hx_prev, &mut hx);
            x.copy_from(&z);
            hx.copy_from(&hz);
            fx += change;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            t = t_next;
            y.copy_from(&x);
            y.axpy(-momentum, &x_prev, 1.0 + momentum);
            hy.copy_from(&hx);
            hy.axpy(-momentum, &hx_prev, 1.0 + momentum);
        } else {
            t = 1.0;
            y.copy_from(&x);
            hy.copy_from(&hx);
        }
        trace.push(fx);

        let rel_change = change.min(0.0).abs() / fx.abs().max(f64::MIN_POSITIVE);
        if rel_change < cfg.tol_obj || iter % 50 == 0 {
            prob.residual_into(&hx, &mut r);
            prob.gradient_into(&x, &r, &mut g);
            kkt = prob.kkt(&x, &g);
            if rel_change < cfg.tol_obj && kkt < cfg.tol_kkt {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        prob.residual_into(&hx, &mut r);
        prob.gradient_into(&x, &r, &mut g);
        kkt = prob.kkt(&x, &g);
    }
    let objective = prob.smooth(&x, &hx) + prob.penalty(&x);
    Ok(PrecoderResult {
        x_hat: x,
        objective,
        iterations,
        kkt_residual: kkt,
        converged,
        trace,
    })
}
