//! Precoder variants behind a common interface.
//!
//! Both variants solve the same convex program; they differ in what is
//! transmitted (the solution itself, or its thresholded version) and hence in
//! the predictor, receive scaling and limit laws that apply. Variants are
//! registered by name so the CLI and the Monte Carlo harness can select one
//! at runtime.

use std::fmt;

use nalgebra::DVector;

use crate::asymptotics::{
    distortion_law_l1, distortion_law_thresh, predict_l1, predict_thresh, thresholded_stats,
    DistortionLaw, MetricReport,
};
use crate::error::{Error, Result};
use crate::fixed_point::SaddlePoint;
use crate::precoder::apply_threshold;
use crate::scalar::DomainParams;

pub trait PrecoderStrategy: Send + Sync + fmt::Debug {
    /// Registry name.
    fn name(&self) -> &'static str;

    /// Magnitude threshold applied before transmission, if any.
    fn threshold(&self) -> Option<f64>;

    /// Asymptotic metrics, including the receive scaling.
    fn predict(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<MetricReport>;

    /// Limit law of a noise-free received entry given its symbol.
    fn distortion_law(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<DistortionLaw>;

    /// Vector put on the antennas given the l1-norm solution.
    fn transmit(&self, x_hat: &DVector<f64>) -> Result<DVector<f64>>;

    /// Image of one limiting l1-norm entry under [`Self::transmit`].
    fn limit_entry(&self, value: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct L1Strategy;

impl PrecoderStrategy for L1Strategy {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn threshold(&self) -> Option<f64> {
        None
    }

    fn predict(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<MetricReport> {
        predict_l1(saddle, params)
    }

    fn distortion_law(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<DistortionLaw> {
        Ok(distortion_law_l1(saddle, params))
    }

    fn transmit(&self, x_hat: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x_hat.clone())
    }

    fn limit_entry(&self, value: f64) -> f64 {
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdedStrategy {
    t_x: f64,
}

impl ThresholdedStrategy {
    pub fn new(t_x: f64) -> Result<Self> {
        if !(t_x > 0.0 && t_x.is_finite()) {
            return Err(Error::Domain(format!(
                "threshold t_x = {t_x} must be positive"
            )));
        }
        Ok(Self { t_x })
    }

    pub fn t_x(&self) -> f64 {
        self.t_x
    }
}

impl PrecoderStrategy for ThresholdedStrategy {
    fn name(&self) -> &'static str {
        "thresholded"
    }

    fn threshold(&self) -> Option<f64> {
        Some(self.t_x)
    }

    fn predict(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<MetricReport> {
        let stats = thresholded_stats(self.t_x, saddle, params)?;
        predict_thresh(&stats, saddle, params)
    }

    fn distortion_law(&self, saddle: &SaddlePoint, params: &DomainParams) -> Result<DistortionLaw> {
        let stats = thresholded_stats(self.t_x, saddle, params)?;
        distortion_law_thresh(&stats, saddle, params)
    }

    fn transmit(&self, x_hat: &DVector<f64>) -> Result<DVector<f64>> {
        apply_threshold(x_hat, self.t_x)
    }

    fn limit_entry(&self, value: f64) -> f64 {
        if value.abs() >= self.t_x {
            value
        } else {
            0.0
        }
    }
}

/// Construction options shared by all registered strategies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrategyOptions {
    pub threshold: Option<f64>,
}

pub struct StrategySpec {
    pub name: &'static str,
    pub description: &'static str,
    pub build: fn(&StrategyOptions) -> Result<Box<dyn PrecoderStrategy>>,
}

fn build_l1(opts: &StrategyOptions) -> Result<Box<dyn PrecoderStrategy>> {
    if let Some(t) = opts.threshold {
        return Err(Error::InvalidArgument(format!(
            "the l1 precoder takes no threshold (got t_x = {t}); use \"thresholded\""
        )));
    }
    Ok(Box::new(L1Strategy))
}

fn build_thresholded(opts: &StrategyOptions) -> Result<Box<dyn PrecoderStrategy>> {
    let t = opts.threshold.ok_or_else(|| {
        Error::InvalidArgument("the thresholded precoder needs a threshold t_x".into())
    })?;
    Ok(Box::new(ThresholdedStrategy::new(t)?))
}

pub static REGISTRY: &[StrategySpec] = &[
    StrategySpec {
        name: "l1",
        description: "box-constrained l1/l2-regularized least squares, transmitted as is",
        build: build_l1,
    },
    StrategySpec {
        name: "thresholded",
        description: "l1-norm solution with entries below t_x set to zero",
        build: build_thresholded,
    },
];

pub fn strategy_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|s| s.name).collect()
}

pub fn build_strategy(name: &str, opts: &StrategyOptions) -> Result<Box<dyn PrecoderStrategy>> {
    let spec = REGISTRY.iter().find(|s| s.name == name).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown precoder \"{name}\"; available: {}",
            strategy_names().join(", ")
        ))
    })?;
    (spec.build)(opts)
}

/// Strategy implied by an optional threshold: thresholded when present.
pub fn strategy_for(threshold: Option<f64>) -> Result<Box<dyn PrecoderStrategy>> {
    let name = if threshold.is_some() {
        "thresholded"
    } else {
        "l1"
    };
    build_strategy(name, &StrategyOptions { threshold })
}
