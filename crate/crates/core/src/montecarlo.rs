//! Monte Carlo harness: random instances, empirical metrics and
//! Wasserstein-2 distances to the limiting laws.
//!
//! Randomness comes from ChaCha20 keyed by the 64-bit seed. Every random
//! object has its own stream, `channel << 32 | draw << 4 | purpose`, so a
//! trial's draws do not depend on which other trials run or in what order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{DistortionLaw, MetricReport, Source};
use crate::error::{Error, Result};
use crate::fixed_point::{solve_saddle, SaddlePoint};
use crate::precoder::{solve_l1_precoder, Instance, SolverConfig};
use crate::scalar::{phi, prox_capped, q_inv, DomainParams};
use crate::strategy::{build_strategy, PrecoderStrategy, StrategyOptions};

/// Random object a stream is reserved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 1,
    Symbols = 2,
    Noise = 3,
    Reference = 4,
}

pub const RNG_DESCRIPTION: &str =
    "ChaCha20 (rand_chacha) keyed by seed; stream = channel << 32 | draw << 4 | purpose \
     (1 channel, 2 symbols, 3 noise, 4 reference sample)";

/// Generator for one `(channel, draw, purpose)` triple.
pub fn stream_rng(seed: u64, channel: usize, draw: usize, purpose: Purpose) -> ChaCha20Rng {
    assert!(
        channel < 1 << 32 && draw < 1 << 28,
        "trial index out of stream range"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((channel as u64) << 32) | ((draw as u64) << 4) | purpose as u64);
    rng
}

/// `m x n` matrix with iid `N(0, 1/n)` entries, filled column by column.
pub fn sample_channel(n: usize, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_iterator(
        m,
        n,
        (0..m * n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)),
    )
}

/// Uniform BPSK symbols.
pub fn sample_symbols(m: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(
        m,
        (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }),
    )
}

/// Instance for channel 0, draw 0 of `seed`.
pub fn sample_instance(n: usize, m: usize, seed: u64) -> Result<Instance> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "n = {n} and m = {m} must be >= 1"
        )));
    }
    let h = sample_channel(n, m, &mut stream_rng(seed, 0, 0, Purpose::Channel));
    let s = sample_symbols(m, &mut stream_rng(seed, 0, 0, Purpose::Symbols));
    Instance::new(h, s)
}

fn check_scale(scale: f64) -> Result<()> {
    if !scale.is_finite() {
        return Err(Error::ScalingUndefined(format!(
            "receive scaling {scale} is not finite"
        )));
    }
    Ok(())
}

/// Per-draw quantities from which every empirical metric is assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DrawStats {
    p_b: f64,
    kappa: f64,
    /// `(1/m) sum |scale h_i^T x - s_i|^2`
    distortion: f64,
    errors: usize,
    decisions: usize,
}

impl DrawStats {
    fn report(&self, scale: f64, sigma2: f64) -> MetricReport {
        MetricReport {
            p_b: self.p_b,
            kappa: self.kappa,
            sinad_lb: 1.0 / (self.distortion + scale * scale * sigma2),
            ber: self.errors as f64 / self.decisions as f64,
            scale,
            source: Source::Empirical,
        }
    }
}

fn draw_stats(
    inst: &Instance,
    x: &DVector<f64>,
    sigma: f64,
    scale: f64,
    noise_draws: usize,
    rng: &mut ChaCha20Rng,
) -> DrawStats {
    let n = x.len() as f64;
    let m = inst.m();
    let hx = &inst.h * x;
    let distortion = hx
        .iter()
        .zip(inst.symbols.iter())
        .map(|(v, s)| (scale * v - s).powi(2))
        .sum::<f64>()
        / m as f64;
    let mut errors = 0;
    for _ in 0..noise_draws {
        for (v, s) in hx.iter().zip(inst.symbols.iter()) {
            let z: f64 = rng.sample(StandardNormal);
            if scale * (v + sigma * z) * s <= 0.0 {
                errors += 1;
            }
        }
    }
    DrawStats {
        p_b: x.norm_squared() / n,
        kappa: x.iter().filter(|&&v| v != 0.0).count() as f64 / n,
        distortion,
        errors,
        decisions: noise_draws * m,
    }
}

/// Empirical metrics of a transmitted vector `x` on one instance:
/// `p_b = |x|^2/n`, `kappa = |x|_0/n`, SINAD lower bound
/// `1 / ((1/m) sum |scale h_i^T x - s_i|^2 + scale^2 sigma^2)`, and the bit
/// error rate of `sign(scale y_i)` over `noise_draws` noise realizations.
pub fn empirical_metrics(
    inst: &Instance,
    x: &DVector<f64>,
    params: &DomainParams,
    scale: f64,
    noise_draws: usize,
    seed: u64,
) -> Result<MetricReport> {
    check_scale(scale)?;
    if x.len() != inst.n() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for {} antennas",
            x.len(),
            inst.n()
        )));
    }
    if noise_draws == 0 {
        return Err(Error::InvalidArgument("noise_draws must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, 0, 0, Purpose::Noise);
    let stats = draw_stats(inst, x, params.sigma2.sqrt(), scale, noise_draws, &mut rng);
    Ok(stats.report(scale, params.sigma2))
}

/// 1-D W2 between two empirical laws given as sorted samples. For unequal
/// sizes the larger sample is read at the mid-point quantile levels of the
/// smaller one by linear interpolation.
pub fn w2_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("W2 of an empty sample".into()));
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let k = small.len();
    let sum: f64 = if k == large.len() {
        small.iter().zip(large).map(|(u, v)| (u - v).powi(2)).sum()
    } else {
        let big = large.len();
        small
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let pos =
                    ((i as f64 + 0.5) / k as f64 * big as f64 - 0.5).clamp(0.0, (big - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(big - 1);
                let v = large[lo] + (pos - lo as f64) * (large[hi] - large[lo]);
                (u - v).powi(2)
            })
            .sum()
    };
    Ok((sum / k as f64).sqrt())
}

fn sorted(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = v.into_iter().collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Sorted iid sample of the limiting transmitted entry: `prox(tau~* G;
/// lambda1 tau~* / beta*)` mapped through the strategy.
pub fn limit_x_sample(
    saddle: &SaddlePoint,
    params: &DomainParams,
    strategy: &dyn PrecoderStrategy,
    size: usize,
    seed: u64,
) -> Vec<f64> {
    let (a, b) = saddle.prox_law(params);
    let cap = params.sqrt_p();
    let mut rng = stream_rng(seed, 0, 0, Purpose::Reference);
    sorted((0..size).map(|_| {
        let g: f64 = rng.sample(StandardNormal);
        strategy.limit_entry(prox_capped(a * g, b, cap))
    }))
}

/// W2 between the entries of `x` and a sorted reference sample.
pub fn w2_to_sample(x: &DVector<f64>, reference: &[f64]) -> Result<f64> {
    w2_sorted(&sorted(x.iter().copied()), reference)
}

/// W2 between the entries of `x` and the limiting law of a transmitted
/// entry, estimated with `ref_sample_size` reference draws.
pub fn w2_to_limit_x(
    x: &DVector<f64>,
    saddle: &SaddlePoint,
    params: &DomainParams,
    strategy: &dyn PrecoderStrategy,
    ref_sample_size: usize,
    seed: u64,
) -> Result<f64> {
    if ref_sample_size < x.len() {
        return Err(Error::InvalidArgument(format!(
            "reference sample of {ref_sample_size} is smaller than n = {}",
            x.len()
        )));
    }
    w2_to_sample(
        x,
        &limit_x_sample(saddle, params, strategy, ref_sample_size, seed),
    )
}

/// Exact W2 between the empirical law of `values` and `N(mean, sd^2)`,
/// integrating each order statistic against the Gaussian quantile function.
pub fn w2_to_gaussian(values: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("W2 of an empty sample".into()));
    }
    let k = values.len();
    let v = sorted(values.iter().copied());
    // Phi^-1(i/k) = -Q^-1(i/k); z_0 = -inf, z_k = +inf
    let z = |i: usize| -> Result<f64> {
        if i == 0 {
            Ok(f64::NEG_INFINITY)
        } else if i == k {
            Ok(f64::INFINITY)
        } else {
            Ok(-q_inv(i as f64 / k as f64)?)
        }
    };
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let pdf = |z: f64| if z.is_finite() { phi(z) } else { 0.0 };
    let mut total = 0.0;
    let mut z_lo = z(0)?;
    for (i, vi) in v.iter().enumerate() {
        let z_hi = z(i + 1)?;
        let d = vi - mean;
        let int1 = pdf(z_lo) - pdf(z_hi);
        let int2 = 1.0 / k as f64 + zphi(z_lo) - zphi(z_hi);
        total += d * d / k as f64 - 2.0 * d * sd * int1 + sd * sd * int2;
        z_lo = z_hi;
    }
    Ok(total.max(0.0).sqrt())
}

/// Conditional W2 of received entries `e = H x` given `s = +1` and `s = -1`
/// to `N(+-signal, spread^2)`.
pub fn w2_to_limit_e(e: &DVector<f64>, s: &DVector<f64>, law: &DistortionLaw) -> Result<[f64; 2]> {
    if e.len() != s.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} received entries for {} symbols",
            e.len(),
            s.len()
        )));
    }
    let mut out = [0.0; 2];
    for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
        let class: Vec<f64> = e
            .iter()
            .zip(s.iter())
            .filter(|(_, &si)| si == sign)
            .map(|(v, _)| *v)
            .collect();
        if class.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no users with symbol {sign:+}"
            )));
        }
        out[slot] = w2_to_gaussian(&class, sign * law.signal, law.spread)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n: usize,
    pub m: usize,
    /// `params.delta` must equal `m / n`.
    pub params: DomainParams,
    pub num_channels: usize,
    pub num_symbol_draws: usize,
    pub seed: u64,
    /// Precoder name from the strategy registry; defaults to "thresholded"
    /// when `threshold` is set and "l1" otherwise.
    #[serde(default)]
    pub precoder: Option<String>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_ref_size")]
    pub ref_sample_size: usize,
}

fn default_ref_size() -> usize {
    100_000
}

impl TrialConfig {
    /// Configuration with `delta` set to `m / n`, 50 symbol draws and the
    /// default solver.
    pub fn new(n: usize, m: usize, params: DomainParams, num_channels: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            params: DomainParams {
                delta: m as f64 / n as f64,
                ..params
            },
            num_channels,
            num_symbol_draws: 50,
            seed,
            precoder: None,
            threshold: None,
            solver: SolverConfig::default(),
            ref_sample_size: default_ref_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n == 0 || self.m == 0 || self.num_channels == 0 || self.num_symbol_draws == 0 {
            return Err(Error::InvalidArgument(
                "n, m, num_channels and num_symbol_draws must be >= 1".into(),
            ));
        }
        let ratio = self.m as f64 / self.n as f64;
        if (self.params.delta - ratio).abs() > 1e-12 * ratio {
            return Err(Error::InvalidArgument(format!(
                "delta = {} does not match m/n = {ratio}",
                self.params.delta
            )));
        }
        if self.ref_sample_size < self.n {
            return Err(Error::InvalidArgument(format!(
                "ref_sample_size = {} must be >= n = {}",
                self.ref_sample_size, self.n
            )));
        }
        if self.num_channels > 1 << 32 || self.num_symbol_draws > 1 << 28 {
            return Err(Error::InvalidArgument(
                "trial counts exceed the stream layout".into(),
            ));
        }
        Ok(())
    }

    pub fn strategy(&self) -> Result<Box<dyn PrecoderStrategy>> {
        let name = match &self.precoder {
            Some(name) => name.as_str(),
            None if self.threshold.is_some() => "thresholded",
            None => "l1",
        };
        build_strategy(
            name,
            &StrategyOptions {
                threshold: self.threshold,
            },
        )
    }
}

/// Standard errors of the aggregated metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub p_b: f64,
    pub kappa: f64,
    pub sinad_lb: f64,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub metrics: MetricReport,
    /// Mean over trials of the W2 distance of the transmitted entries to
    /// their limit law.
    pub w2_x: f64,
    /// Mean over trials of the conditional W2 of `H x` given `s = +1, -1`.
    pub w2_e_cond: [f64; 2],
    /// Across channels when there are several, across draws otherwise.
    pub std_errors: StdErrors,
    pub trials: usize,
    pub unconverged: usize,
    pub per_channel: Vec<MetricReport>,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    stats: DrawStats,
    w2_x: f64,
    w2_e: [f64; 2],
    converged: bool,
}

struct Context<'a> {
    cfg: &'a TrialConfig,
    strategy: &'a dyn PrecoderStrategy,
    scale: f64,
    law: DistortionLaw,
    reference: &'a [f64],
}

fn run_channel(ctx: &Context, channel: usize) -> Result<Vec<TrialOutcome>> {
    let cfg = ctx.cfg;
    let sigma = cfg.params.sigma2.sqrt();
    let h = sample_channel(
        cfg.n,
        cfg.m,
        &mut stream_rng(cfg.seed, channel, 0, Purpose::Channel),
    );
    let mut inst = Instance::new(h, DVector::from_element(cfg.m, 1.0))?;
    (0..cfg.num_symbol_draws)
        .map(|draw| {
            inst.symbols = sample_symbols(
                cfg.m,
                &mut stream_rng(cfg.seed, channel, draw, Purpose::Symbols),
            );
            let sol = solve_l1_precoder(&inst, &cfg.params, &cfg.solver)?;
            let x = ctx.strategy.transmit(&sol.x_hat)?;
            let mut noise = stream_rng(cfg.seed, channel, draw, Purpose::Noise);
            let stats = draw_stats(&inst, &x, sigma, ctx.scale, 1, &mut noise);
            let e = &inst.h * &x;
            let w2_e = if inst.symbols.iter().all(|&s| s == inst.symbols[0]) {
                [f64::NAN; 2]
            } else {
                w2_to_limit_e(&e, &inst.symbols, &ctx.law)?
            };
            Ok(TrialOutcome {
                stats,
                w2_x: w2_to_sample(&x, ctx.reference)?,
                w2_e,
                converged: sol.converged,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

fn std_error(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return 0.0;
    }
    let mu = mean(values.iter().copied());
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

fn aggregate(stats: &[DrawStats]) -> DrawStats {
    DrawStats {
        p_b: mean(stats.iter().map(|s| s.p_b)),
        kappa: mean(stats.iter().map(|s| s.kappa)),
        distortion: mean(stats.iter().map(|s| s.distortion)),
        errors: stats.iter().map(|s| s.errors).sum(),
        decisions: stats.iter().map(|s| s.decisions).sum(),
    }
}

/// Solve the saddle point, then run every `(channel, symbol draw)` trial,
/// re-solving the precoder for each symbol vector.
///
/// Channels are processed in parallel on the current rayon pool; results are
/// collected and reduced in index order, so the report does not depend on
/// the number of threads.
pub fn run_trials(cfg: &TrialConfig) -> Result<EmpiricalReport> {
    cfg.validate()?;
    let strategy = cfg.strategy()?;
    let saddle = solve_saddle(&cfg.params)?;
    run_trials_at(cfg, &saddle, strategy.as_ref())
}

/// [`run_trials`] with an already solved saddle point and strategy.
pub fn run_trials_at(
    cfg: &TrialConfig,
    saddle: &SaddlePoint,
    strategy: &dyn PrecoderStrategy,
) -> Result<EmpiricalReport> {
    cfg.validate()?;
    let predicted = strategy.predict(saddle, &cfg.params)?;
    check_scale(predicted.scale)?;
    let reference = limit_x_sample(saddle, &cfg.params, strategy, cfg.ref_sample_size, cfg.seed);
    let ctx = Context {
        cfg,
        strategy,
        scale: predicted.scale,
        law: strategy.distortion_law(saddle, &cfg.params)?,
        reference: &reference,
    };

    let channels: Vec<Vec<TrialOutcome>> = (0..cfg.num_channels)
        .into_par_iter()
        .map(|c| run_channel(&ctx, c))
        .collect::<Result<_>>()?;

    let sigma2 = cfg.params.sigma2;
    let all: Vec<&TrialOutcome> = channels.iter().flatten().collect();
    let all_stats: Vec<DrawStats> = all.iter().map(|t| t.stats).collect();
    let metrics = aggregate(&all_stats).report(ctx.scale, sigma2);

    let per_channel: Vec<MetricReport> = channels
        .iter()
        .map(|trials| {
            let stats: Vec<DrawStats> = trials.iter().map(|t| t.stats).collect();
            aggregate(&stats).report(ctx.scale, sigma2)
        })
        .collect();

    // units of the standard error: channel means when available, else draws
    let units: Vec<DrawStats> = if cfg.num_channels > 1 {
        channels
            .iter()
            .map(|trials| aggregate(&trials.iter().map(|t| t.stats).collect::<Vec<_>>()))
            .collect()
    } else {
        all_stats.clone()
    };
    let col = |f: fn(&DrawStats) -> f64| -> Vec<f64> { units.iter().map(f).collect() };
    let se_distortion = std_error(&col(|s| s.distortion));
    let std_errors = StdErrors {
        p_b: std_error(&col(|s| s.p_b)),
        kappa: std_error(&col(|s| s.kappa)),
        // delta method on 1 / (d + scale^2 sigma^2)
        sinad_lb: metrics.sinad_lb * metrics.sinad_lb * se_distortion,
        ber: std_error(&col(|s| s.errors as f64 / s.decisions as f64)),
    };

    let finite_mean =
        |f: &dyn Fn(&TrialOutcome) -> f64| mean(all.iter().map(|t| f(t)).filter(|v| v.is_finite()));
    Ok(EmpiricalReport {
        metrics,
        w2_x: finite_mean(&|t| t.w2_x),
        w2_e_cond: [finite_mean(&|t| t.w2_e[0]), finite_mean(&|t| t.w2_e[1])],
        std_errors,
        trials: all.len(),
        unconverged: all.iter().filter(|t| !t.converged).count(),
        per_channel,
    })
}
