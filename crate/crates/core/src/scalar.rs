//! Scalar building blocks: the clipped soft-threshold proximal operator, its
//! Moreau envelope, Gaussian tail functions and closed-form Gaussian
//! expectations of prox functionals.
//!
//! Throughout, `prox(y; t)` minimizes `0.5 (x - y)^2 + t |x|` over
//! `|x| <= sqrt(P)`. For `H ~ N(0, 1)` the variable `prox(a H; b)` is zero on
//! `|H| <= u`, linear `sign(H) a (|H| - u)` on `u <= |H| <= v` and clamped to
//! `sign(H) sqrt(P)` beyond `v`, where `u = b / a` and `v = (b + sqrt(P)) / a`.
//! All moments reduce to shifted Gaussian tail integrals over those pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Constants shared by every formula: gain control `rho`, user/antenna ratio
/// `delta = m / n`, penalty weights, per-antenna amplitude cap `P` and noise
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainParams {
    pub rho: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub p_cap: f64,
    pub sigma2: f64,
}

impl Default for DomainParams {
    /// `rho = 1, delta = 0.5, lambda1 = 0, lambda2 = 0.005, P = 10, sigma2 = 0.25`.
    fn default() -> Self {
        Self {
            rho: 1.0,
            delta: 0.5,
            lambda1: 0.0,
            lambda2: 0.005,
            p_cap: 10.0,
            sigma2: 0.25,
        }
    }
}

impl DomainParams {
    /// Validated constructor.
    pub fn new(
        rho: f64,
        delta: f64,
        lambda1: f64,
        lambda2: f64,
        p_cap: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let p = Self {
            rho,
            delta,
            lambda1,
            lambda2,
            p_cap,
            sigma2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("rho", self.rho, self.rho > 0.0),
            ("delta", self.delta, self.delta > 0.0),
            ("p_cap", self.p_cap, self.p_cap > 0.0),
            ("sigma2", self.sigma2, self.sigma2 >= 0.0),
            ("lambda1", self.lambda1, self.lambda1 >= 0.0),
            ("lambda2", self.lambda2, self.lambda2 >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !value.is_finite() || !ok {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {value} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Whether the saddle point of the scalar problem is unique and has
    /// `beta > 0`: some regularization is active, or there are at least as
    /// many users as antennas.
    pub fn is_admissible(&self) -> bool {
        self.lambda1.max(self.lambda2) > 0.0 || self.delta >= 1.0
    }

    pub fn sqrt_p(&self) -> f64 {
        self.p_cap.sqrt()
    }

    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }

    pub fn with_lambda1(self, lambda1: f64) -> Self {
        Self { lambda1, ..self }
    }
}

fn check_prox_args(y: f64, t: f64, p_cap: f64) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prox input y = {y} is not finite"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "prox threshold t = {t} must be >= 0"
        )));
    }
    if !(p_cap > 0.0 && p_cap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power cap P = {p_cap} must be > 0"
        )));
    }
    Ok(())
}

/// Clipped soft threshold with amplitude cap `cap = sqrt(P)`. No validation.
#[inline]
pub(crate) fn prox_capped(y: f64, t: f64, cap: f64) -> f64 {
    if y >= t + cap {
        cap
    } else if y >= t {
        (y - t).min(cap)
    } else if y >= -t {
        0.0
    } else if y >= -t - cap {
        (y + t).max(-cap)
    } else {
        -cap
    }
}

/// `argmin_{|x| <= sqrt(P)} 0.5 (x - y)^2 + t |x|`.
pub fn prox(y: f64, t: f64, p_cap: f64) -> Result<f64> {
    check_prox_args(y, t, p_cap)?;
    Ok(prox_capped(y, t, p_cap.sqrt()))
}

/// `min_{|x| <= sqrt(P)} 0.5 (x - y)^2 + t |x|`, attained at [`prox`].
pub fn moreau_env(y: f64, t: f64, p_cap: f64) -> Result<f64> {
    check_prox_args(y, t, p_cap)?;
    let x = prox_capped(y, t, p_cap.sqrt());
    Ok(0.5 * (x - y) * (x - y) + t * x.abs())
}

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail of the standard normal, `P[H > x]`.
#[inline]
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse of [`q_func`] on `(0, 1)`.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "q_inv requires p in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let root = roots::brent_on(|x| Ok(q_func(x) - p), -40.0, 40.0, 1e-15, 400)?;
    Ok(root.x)
}

/// Tail integrals `T_k(l) = int_l^inf (h - l)^k phi(h) dh` for `k = 0, 1, 2`
/// and `l >= 0`.
///
/// For large `l` the textbook forms `phi - l Q` and `(1 + l^2) Q - l phi`
/// cancel catastrophically, so they are taken from the Laplace continued
/// fraction of the Mills ratio instead: with `g_k = k / (l + g_{k+1})` and
/// `R = 1 / (l + g_1)`, `T_1 = phi R g_1` and `T_2 = phi R g_1 g_2`.
fn tail_moments(l: f64) -> [f64; 3] {
    let q = q_func(l);
    let d = phi(l);
    if l <= 3.0 {
        return [q, d - l * q, (1.0 + l * l) * q - l * d];
    }
    let mut g = 0.0;
    let mut g2 = 0.0;
    for k in (1..=120u32).rev() {
        if k == 1 {
            g2 = g;
        }
        g = f64::from(k) / (l + g);
    }
    let g1 = g;
    let r = 1.0 / (l + g1);
    [q, d * r * g1, d * r * g1 * g2]
}

/// `int_l^inf (h - l + e)^k phi(h) dh` for `k = 0, 1, 2`.
fn shifted_tail(l: f64, e: f64) -> [f64; 3] {
    let [t0, t1, t2] = tail_moments(l);
    [t0, t1 + e * t0, t2 + 2.0 * e * t1 + e * e * t0]
}

/// Which Gaussian expectation of `X = prox(a H; b)` to evaluate.
///
/// The indicator kinds restrict to `|X| >= t` for a magnitude floor
/// `t in (0, sqrt(P)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxMoment {
    /// `E[X^2]`
    Square,
    /// `E[H X]`
    HCross,
    /// `E[|X|]`
    Abs,
    /// `E[X^2 1{|X| >= t}]`
    IndSquare(f64),
    /// `E[H X 1{|X| >= t}]`
    IndHCross(f64),
    /// `P[|X| >= t]`
    IndMass(f64),
}

impl ProxMoment {
    pub fn magnitude_floor(&self) -> f64 {
        match *self {
            ProxMoment::Square | ProxMoment::HCross | ProxMoment::Abs => 0.0,
            ProxMoment::IndSquare(t) | ProxMoment::IndHCross(t) | ProxMoment::IndMass(t) => t,
        }
    }
}

/// The law of `prox(a H; b)` with cap `c`, `H ~ N(0, 1)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussProx {
    a: f64,
    cap: f64,
    /// Dead-zone edge `b / a`.
    u: f64,
    /// Clamp edge `(b + cap) / a`.
    v: f64,
}

impl GaussProx {
    pub(crate) fn new(a: f64, b: f64, cap: f64) -> Self {
        Self {
            a,
            cap,
            u: b / a,
            v: (b + cap) / a,
        }
    }

    /// `(int_l^v (h-u) phi, int_l^v (h-u)^2 phi)` for `u <= l <= v`.
    fn linear_piece(&self, l: f64) -> (f64, f64) {
        if l >= self.v {
            return (0.0, 0.0);
        }
        let lo = shifted_tail(l, l - self.u);
        let hi = shifted_tail(self.v, self.v - self.u);
        ((lo[1] - hi[1]).max(0.0), (lo[2] - hi[2]).max(0.0))
    }

    fn lower_edge(&self, floor: f64) -> f64 {
        if floor > 0.0 {
            (self.u + floor / self.a).min(self.v)
        } else {
            self.u
        }
    }

    /// `E[X^2 1{|X| >= floor}]`; `floor = 0` gives the plain second moment.
    pub(crate) fn square(&self, floor: f64) -> f64 {
        let (_, j2) = self.linear_piece(self.lower_edge(floor));
        2.0 * (self.a * self.a * j2 + self.cap * self.cap * q_func(self.v))
    }

    /// `E[H X 1{|X| >= floor}]`.
    pub(crate) fn h_cross(&self, floor: f64) -> f64 {
        let (j1, j2) = self.linear_piece(self.lower_edge(floor));
        2.0 * (self.a * (j2 + self.u * j1) + self.cap * phi(self.v))
    }

    /// `E[|X|]`.
    pub(crate) fn abs(&self) -> f64 {
        let (j1, _) = self.linear_piece(self.u);
        2.0 * (self.a * j1 + self.cap * q_func(self.v))
    }

    /// `P[|X| >= floor]` for `floor > 0`.
    pub(crate) fn mass(&self, floor: f64) -> f64 {
        2.0 * q_func(self.lower_edge(floor))
    }

    /// `E[e(a H; b)]` where `e` is the Moreau envelope.
    pub(crate) fn moreau(&self) -> f64 {
        let (a, u, v, cap) = (self.a, self.u, self.v, self.cap);
        let b = u * a;
        let inner = (0.5 - u * phi(u) - q_func(u)).max(0.0);
        let dead = 0.5 * a * a * inner;
        let linear = a * b * (phi(u) - phi(v)) - 0.5 * b * b * (q_func(u) - q_func(v));
        let clamp = 0.5 * a * a * shifted_tail(v, u)[2] + b * cap * q_func(v);
        2.0 * (dead + linear + clamp)
    }
}

fn check_moment_args(a: f64, b: f64, p_cap: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale a = {a} must be > 0")));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "threshold b = {b} must be >= 0"
        )));
    }
    if !(p_cap > 0.0 && p_cap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power cap P = {p_cap} must be > 0"
        )));
    }
    Ok(())
}

/// Closed-form Gaussian expectation of a functional of `prox(a H; b)` with
/// amplitude cap `sqrt(p_cap)`.
pub fn expect_prox_moment(a: f64, b: f64, p_cap: f64, kind: ProxMoment) -> Result<f64> {
    check_moment_args(a, b, p_cap)?;
    let cap = p_cap.sqrt();
    let floor = kind.magnitude_floor();
    if matches!(
        kind,
        ProxMoment::IndSquare(_) | ProxMoment::IndHCross(_) | ProxMoment::IndMass(_)
    ) {
        if !floor.is_finite() || floor < 0.0 {
            return Err(Error::Domain(format!("magnitude floor {floor} is invalid")));
        }
        if floor == 0.0 {
            return Err(Error::Domain(
                "indicator moment with zero magnitude floor; use the plain kind".into(),
            ));
        }
        if floor > cap {
            return Err(Error::Domain(format!(
                "magnitude floor {floor} exceeds the amplitude cap {cap}"
            )));
        }
    }
    let law = GaussProx::new(a, b, cap);
    Ok(match kind {
        ProxMoment::Square => law.square(0.0),
        ProxMoment::HCross => law.h_cross(0.0),
        ProxMoment::Abs => law.abs(),
        ProxMoment::IndSquare(t) => law.square(t),
        ProxMoment::IndHCross(t) => law.h_cross(t),
        ProxMoment::IndMass(t) => law.mass(t),
    })
}

/// Closed-form `E[e(a H; b)]` of the capped Moreau envelope.
pub fn expect_moreau_env(a: f64, b: f64, p_cap: f64) -> Result<f64> {
    check_moment_args(a, b, p_cap)?;
    Ok(GaussProx::new(a, b, p_cap.sqrt()).moreau())
}
