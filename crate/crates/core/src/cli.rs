//! Command-line experiment runner.
//!
//! A run is described by a [`RunConfig`], read from an optional JSON file and
//! overridden by flags. Every command writes a CSV (one row per sweep point)
//! and, when an output path is given, a JSON sidecar next to it holding the
//! resolved configuration and the saddle point of every row. Passing the
//! sidecar back through `--config` reproduces the run.
//!
//! CSV columns, in order:
//!
//! ```text
//! sweep_value, status, lambda1, rho, t_x,
//! predicted_pb, predicted_kappa, predicted_sinad_lb, predicted_sinad_lb_db, predicted_ber,
//! empirical_pb, empirical_kappa, empirical_sinad_lb, empirical_sinad_lb_db, empirical_ber,
//! empirical_w2_x, empirical_w2_e_pos, empirical_w2_e_neg,
//! se_pb, se_kappa, se_sinad_lb, se_ber, trials, unconverged, seed
//! ```
//!
//! Empty cells mean "not computed" (no trial section, or an infeasible
//! sweep point). SINAD is given linear and in dB (`10 log10`).
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible target,
//! 4 degenerate saddle, 5 non-convergence, 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::asymptotics::MetricReport;
use crate::error::{Error, Result};
use crate::fixed_point::{solve_saddle, SaddlePoint};
use crate::montecarlo::{run_trials_at, EmpiricalReport, TrialConfig, RNG_DESCRIPTION};
use crate::precoder::SolverConfig;
use crate::scalar::DomainParams;
use crate::strategy::{build_strategy, strategy_names, PrecoderStrategy, StrategyOptions};
use crate::tuner::{calibrate_pair, calibrate_rho, optimal_threshold, Calibration, TuneTarget};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_NO_CONVERGENCE: i32 = 5;

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Domain(_)
        | Error::DimensionMismatch(_) => EXIT_CONFIG,
        Error::InfeasibleTarget(_) => EXIT_INFEASIBLE,
        Error::DegenerateSaddle { .. } | Error::ScalingUndefined(_) => EXIT_DEGENERATE,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve the scalar saddle point.
    Saddle,
    /// Asymptotic metrics at the given parameters.
    Predict,
    /// Predictions plus Monte Carlo estimates at the given parameters.
    Simulate,
    /// Calibrate (lambda1, rho) for target kappa and P_b.
    Tune,
    /// Sweep lambda1; rho is recalibrated per point when --pb is given.
    SweepLambda1,
    /// Sweep P_b with (lambda1, rho) calibrated for --kappa.
    SweepPb,
    /// Sweep the threshold t_x with (lambda1, rho) calibrated for --kappa and --pb.
    SweepThreshold,
    /// Sweep transmit SNR P_b / sigma2 in dB with the SINAD-optimal threshold.
    SweepTsnr,
}

/// Monte Carlo settings; `delta` is tied to `m / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSpec {
    pub n: usize,
    pub m: usize,
    pub num_channels: usize,
    pub num_symbol_draws: usize,
    pub solver: SolverConfig,
    pub ref_sample_size: usize,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            n: 512,
            m: 256,
            num_channels: 10,
            num_symbol_draws: 50,
            solver: SolverConfig::default(),
            ref_sample_size: 100_000,
        }
    }
}

/// Target values for calibration; unset fields are not constrained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub kappa: Option<f64>,
    pub pb: Option<f64>,
    pub t_x: Option<f64>,
}

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub params: DomainParams,
    /// Registered precoder name.
    pub precoder: String,
    pub target: TargetSpec,
    pub trial: Option<TrialSpec>,
    pub sweep_grid: Vec<f64>,
    /// Grid size of the threshold search in `sweep_tsnr`.
    pub threshold_grid_size: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    /// Largest tolerated fraction of unconverged precoder solves.
    pub max_unconverged_fraction: f64,
    pub output_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            params: DomainParams::default(),
            precoder: "l1".into(),
            target: TargetSpec::default(),
            trial: None,
            sweep_grid: Vec::new(),
            threshold_grid_size: 50,
            seed: 0,
            threads: 0,
            max_unconverged_fraction: 0.1,
            output_path: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let command = self.command.ok_or_else(|| config_err("no command given"))?;
        self.params
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if !strategy_names().contains(&self.precoder.as_str()) {
            return Err(config_err(format!(
                "unknown precoder \"{}\"; available: {}",
                self.precoder,
                strategy_names().join(", ")
            )));
        }
        if let Some(trial) = &self.trial {
            if trial.n == 0 || trial.m == 0 {
                return Err(config_err("trial n and m must be >= 1"));
            }
            let ratio = trial.m as f64 / trial.n as f64;
            if (self.params.delta - ratio).abs() > 1e-12 * ratio {
                return Err(config_err(format!(
                    "delta = {} does not match m/n = {}/{}",
                    self.params.delta, trial.m, trial.n
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.max_unconverged_fraction) {
            return Err(config_err("max_unconverged_fraction must lie in [0, 1]"));
        }
        let is_sweep = matches!(
            command,
            Command::SweepLambda1 | Command::SweepPb | Command::SweepThreshold | Command::SweepTsnr
        );
        if is_sweep {
            if self.sweep_grid.is_empty() {
                return Err(config_err("sweep commands need a non-empty --grid"));
            }
            if self.sweep_grid.iter().any(|v| !v.is_finite())
                || self.sweep_grid.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(config_err(
                    "sweep grid must be finite and strictly increasing",
                ));
            }
        }
        let need = |name: &str, v: Option<f64>| {
            v.map(|_| ())
                .ok_or_else(|| config_err(format!("{command:?} needs --{name}")))
        };
        if matches!(
            command,
            Command::Tune | Command::SweepPb | Command::SweepThreshold | Command::SweepTsnr
        ) {
            need("kappa", self.target.kappa)?;
        }
        if matches!(command, Command::Tune | Command::SweepThreshold) {
            need("pb", self.target.pb)?;
        }
        if self.precoder == "thresholded"
            && matches!(
                command,
                Command::Predict | Command::Simulate | Command::SweepLambda1
            )
        {
            need("tx", self.target.t_x)?;
        }
        if command == Command::Simulate && self.trial.is_none() {
            return Err(config_err("simulate needs a trial section or --n/--m"));
        }
        if command == Command::SweepTsnr && self.threshold_grid_size < 2 {
            return Err(config_err("threshold_grid_size must be >= 2"));
        }
        Ok(())
    }

    fn strategy(&self, t_x: Option<f64>) -> Result<Box<dyn PrecoderStrategy>> {
        let threshold = if self.precoder == "thresholded" {
            t_x
        } else {
            None
        };
        build_strategy(&self.precoder, &StrategyOptions { threshold })
    }

    fn trial_config(&self, params: DomainParams, t_x: Option<f64>) -> Option<TrialConfig> {
        self.trial.as_ref().map(|t| TrialConfig {
            n: t.n,
            m: t.m,
            params,
            num_channels: t.num_channels,
            num_symbol_draws: t.num_symbol_draws,
            seed: self.seed,
            precoder: Some(self.precoder.clone()),
            threshold: if self.precoder == "thresholded" {
                t_x
            } else {
                None
            },
            solver: t.solver,
            ref_sample_size: t.ref_sample_size,
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "miso-sparse",
    version,
    about = "Sparse precoding experiments for massive MISO"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// JSON run configuration (or a previously written sidecar).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output CSV path; the sidecar goes to the same path with a .json extension.
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    #[arg(long, global = true)]
    pub pcap: Option<f64>,
    #[arg(long, global = true)]
    pub sigma2: Option<f64>,

    /// Number of antennas; enables the Monte Carlo section.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Number of users; enables the Monte Carlo section.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub channels: Option<usize>,
    #[arg(long, global = true)]
    pub draws: Option<usize>,

    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub pb: Option<f64>,
    #[arg(long, global = true)]
    pub tx: Option<f64>,

    /// Precoder variant: l1 or thresholded.
    #[arg(long, global = true)]
    pub precoder: Option<String>,
    /// Comma-separated, strictly increasing sweep values.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub threshold_grid_size: Option<usize>,
    #[arg(long, global = true)]
    pub max_unconverged: Option<f64>,
}

/// Parse a run configuration, accepting either a bare config or a sidecar
/// with a top-level `config` key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
    let inner = match value.get("config") {
        Some(c) if value.get("version").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| config_err(format!("invalid config: {e}")))
}

impl Cli {
    /// Merge file configuration and flags; flags win.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        if self.command.is_some() {
            cfg.command = self.command;
        }
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.seed, cfg.seed);
        set!(self.threads, cfg.threads);
        set!(self.rho, cfg.params.rho);
        set!(self.lambda1, cfg.params.lambda1);
        set!(self.lambda2, cfg.params.lambda2);
        set!(self.pcap, cfg.params.p_cap);
        set!(self.sigma2, cfg.params.sigma2);
        set!(self.precoder, cfg.precoder);
        set!(self.grid, cfg.sweep_grid);
        set!(self.threshold_grid_size, cfg.threshold_grid_size);
        set!(self.max_unconverged, cfg.max_unconverged_fraction);
        if self.out.is_some() {
            cfg.output_path = self.out.clone();
        }
        if self.kappa.is_some() {
            cfg.target.kappa = self.kappa;
        }
        if self.pb.is_some() {
            cfg.target.pb = self.pb;
        }
        if self.tx.is_some() {
            cfg.target.t_x = self.tx;
        }
        if self.tx.is_some() && self.precoder.is_none() {
            cfg.precoder = "thresholded".into();
        }

        let trial_flags =
            self.n.is_some() || self.m.is_some() || self.channels.is_some() || self.draws.is_some();
        if trial_flags {
            let trial = cfg.trial.get_or_insert_with(TrialSpec::default);
            set!(self.n, trial.n);
            set!(self.m, trial.m);
            set!(self.channels, trial.num_channels);
            set!(self.draws, trial.num_symbol_draws);
            if (self.n.is_some() || self.m.is_some()) && self.delta.is_none() {
                cfg.params.delta = trial.m as f64 / trial.n.max(1) as f64;
            }
        }
        set!(self.delta, cfg.params.delta);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One CSV row.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Row {
    pub sweep_value: Option<f64>,
    pub status: String,
    pub lambda1: Option<f64>,
    pub rho: Option<f64>,
    pub t_x: Option<f64>,
    pub predicted_pb: Option<f64>,
    pub predicted_kappa: Option<f64>,
    pub predicted_sinad_lb: Option<f64>,
    pub predicted_sinad_lb_db: Option<f64>,
    pub predicted_ber: Option<f64>,
    pub empirical_pb: Option<f64>,
    pub empirical_kappa: Option<f64>,
    pub empirical_sinad_lb: Option<f64>,
    pub empirical_sinad_lb_db: Option<f64>,
    pub empirical_ber: Option<f64>,
    pub empirical_w2_x: Option<f64>,
    pub empirical_w2_e_pos: Option<f64>,
    pub empirical_w2_e_neg: Option<f64>,
    pub se_pb: Option<f64>,
    pub se_kappa: Option<f64>,
    pub se_sinad_lb: Option<f64>,
    pub se_ber: Option<f64>,
    pub trials: Option<usize>,
    pub unconverged: Option<usize>,
    pub seed: u64,
}

impl Row {
    fn fill_predicted(&mut self, r: &MetricReport) {
        self.predicted_pb = Some(r.p_b);
        self.predicted_kappa = Some(r.kappa);
        self.predicted_sinad_lb = Some(r.sinad_lb);
        self.predicted_sinad_lb_db = Some(r.sinad_lb_db());
        self.predicted_ber = Some(r.ber);
    }

    fn fill_empirical(&mut self, e: &EmpiricalReport) {
        let r = &e.metrics;
        self.empirical_pb = Some(r.p_b);
        self.empirical_kappa = Some(r.kappa);
        self.empirical_sinad_lb = Some(r.sinad_lb);
        self.empirical_sinad_lb_db = Some(r.sinad_lb_db());
        self.empirical_ber = Some(r.ber);
        self.empirical_w2_x = Some(e.w2_x);
        self.empirical_w2_e_pos = Some(e.w2_e_cond[0]);
        self.empirical_w2_e_neg = Some(e.w2_e_cond[1]);
        self.se_pb = Some(e.std_errors.p_b);
        self.se_kappa = Some(e.std_errors.kappa);
        self.se_sinad_lb = Some(e.std_errors.sinad_lb);
        self.se_ber = Some(e.std_errors.ber);
        self.trials = Some(e.trials);
        self.unconverged = Some(e.unconverged);
    }
}

/// Per-row record in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub sweep_value: Option<f64>,
    pub status: String,
    pub params: Option<DomainParams>,
    pub t_x: Option<f64>,
    pub saddle: Option<SaddlePoint>,
    pub calibration_residuals: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub rng: String,
    pub config: RunConfig,
    pub points: Vec<PointRecord>,
}

/// Result of [`execute`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub sidecar: Sidecar,
}

impl RunOutput {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| Error::Internal(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Internal(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(format!("csv: {e}")))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.sidecar)
            .map_err(|e| Error::Internal(format!("json: {e}")))
    }
}

/// A solved operating point.
struct Point {
    sweep_value: Option<f64>,
    params: DomainParams,
    t_x: Option<f64>,
    saddle: SaddlePoint,
    residuals: Option<[f64; 2]>,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    rows: Vec<Row>,
    points: Vec<PointRecord>,
    unconverged: usize,
    trials: usize,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            rows: Vec::new(),
            points: Vec::new(),
            unconverged: 0,
            trials: 0,
        }
    }

    fn record(&mut self, point: Point) -> Result<()> {
        let strategy = self.cfg.strategy(point.t_x)?;
        let predicted = strategy.predict(&point.saddle, &point.params)?;
        let mut row = Row {
            sweep_value: point.sweep_value,
            status: "ok".into(),
            lambda1: Some(point.params.lambda1),
            rho: Some(point.params.rho),
            t_x: strategy.threshold(),
            seed: self.cfg.seed,
            ..Row::default()
        };
        row.fill_predicted(&predicted);
        if let Some(trial) = self.cfg.trial_config(point.params, point.t_x) {
            let report = run_trials_at(&trial, &point.saddle, strategy.as_ref())?;
            self.unconverged += report.unconverged;
            self.trials += report.trials;
            row.fill_empirical(&report);
        }
        self.rows.push(row);
        self.points.push(PointRecord {
            sweep_value: point.sweep_value,
            status: "ok".into(),
            params: Some(point.params),
            t_x: strategy.threshold(),
            saddle: Some(point.saddle),
            calibration_residuals: point.residuals,
        });
        Ok(())
    }

    /// Record an operating point, or an infeasible marker row for sweeps.
    fn sweep_point(&mut self, value: f64, point: Result<Point>) -> Result<()> {
        match point.and_then(|p| self.record(p)) {
            Ok(()) => Ok(()),
            Err(Error::InfeasibleTarget(_)) | Err(Error::ScalingUndefined(_)) => {
                self.rows.push(Row {
                    sweep_value: Some(value),
                    status: "infeasible".into(),
                    seed: self.cfg.seed,
                    ..Row::default()
                });
                self.points.push(PointRecord {
                    sweep_value: Some(value),
                    status: "infeasible".into(),
                    params: None,
                    t_x: None,
                    saddle: None,
                    calibration_residuals: None,
                });
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self) -> Result<RunOutput> {
        if !self.rows.is_empty() && self.rows.iter().all(|r| r.status != "ok") {
            return Err(Error::InfeasibleTarget(
                "every sweep point is infeasible".into(),
            ));
        }
        if self.trials > 0 {
            let frac = self.unconverged as f64 / self.trials as f64;
            if frac > self.cfg.max_unconverged_fraction {
                return Err(Error::NoConvergence {
                    iterations: self.cfg.trial.as_ref().map_or(0, |t| t.solver.max_iters),
                    detail: format!(
                        "{} of {} precoder solves did not converge (allowed fraction {})",
                        self.unconverged, self.trials, self.cfg.max_unconverged_fraction
                    ),
                });
            }
        }
        Ok(RunOutput {
            rows: self.rows,
            sidecar: Sidecar {
                version: env!("CARGO_PKG_VERSION").into(),
                rng: RNG_DESCRIPTION.into(),
                config: self.cfg.clone(),
                points: self.points,
            },
        })
    }
}

fn calibrated(
    value: Option<f64>,
    base: &DomainParams,
    cal: Calibration,
    t_x: Option<f64>,
) -> Point {
    Point {
        sweep_value: value,
        params: cal.params(base),
        t_x,
        saddle: cal.saddle,
        residuals: Some(cal.residuals),
    }
}

fn tune_target(kappa: f64, pb: f64, t_x: Option<f64>) -> TuneTarget {
    match t_x {
        Some(t) => TuneTarget::thresh(kappa, pb, t),
        None => TuneTarget::l1(kappa, pb),
    }
}

/// Run a validated configuration without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let command = cfg.command.expect("validated");
    let base = cfg.params;
    let thresholded = cfg.precoder == "thresholded";
    let t_x = if thresholded { cfg.target.t_x } else { None };
    let mut run = Runner::new(cfg);

    match command {
        Command::Saddle | Command::Predict | Command::Simulate => {
            let saddle = solve_saddle(&base)?;
            run.record(Point {
                sweep_value: None,
                params: base,
                t_x,
                saddle,
                residuals: None,
            })?;
        }
        Command::Tune => {
            let (kappa, pb) = (cfg.target.kappa.unwrap(), cfg.target.pb.unwrap());
            let cal = calibrate_pair(&tune_target(kappa, pb, t_x), &base)?;
            run.record(calibrated(None, &base, cal, t_x))?;
        }
        Command::SweepLambda1 => {
            for &l1 in &cfg.sweep_grid {
                let point = (|| {
                    let mut params = base.with_lambda1(l1);
                    if let Some(pb) = cfg.target.pb {
                        params.rho = calibrate_rho(l1, pb, &base, t_x)?;
                    }
                    let saddle = solve_saddle(&params)?;
                    Ok(Point {
                        sweep_value: Some(l1),
                        params,
                        t_x,
                        saddle,
                        residuals: None,
                    })
                })();
                run.sweep_point(l1, point)?;
            }
        }
        Command::SweepPb => {
            let kappa = cfg.target.kappa.unwrap();
            for &pb in &cfg.sweep_grid {
                let point = calibrate_pair(&tune_target(kappa, pb, t_x), &base)
                    .map(|cal| calibrated(Some(pb), &base, cal, t_x));
                run.sweep_point(pb, point)?;
            }
        }
        Command::SweepThreshold => {
            if !thresholded {
                return Err(config_err("sweep_threshold needs --precoder thresholded"));
            }
            let (kappa, pb) = (cfg.target.kappa.unwrap(), cfg.target.pb.unwrap());
            for &t in &cfg.sweep_grid {
                let point = calibrate_pair(&TuneTarget::thresh(kappa, pb, t), &base)
                    .map(|cal| calibrated(Some(t), &base, cal, Some(t)));
                run.sweep_point(t, point)?;
            }
        }
        Command::SweepTsnr => {
            let kappa = cfg.target.kappa.unwrap();
            if base.sigma2 <= 0.0 {
                return Err(config_err("sweep_tsnr needs sigma2 > 0"));
            }
            for &db in &cfg.sweep_grid {
                let pb = base.sigma2 * 10f64.powf(db / 10.0);
                let point = match (thresholded, cfg.target.t_x) {
                    (false, _) => calibrate_pair(&TuneTarget::l1(kappa, pb), &base)
                        .map(|cal| calibrated(Some(db), &base, cal, None)),
                    (true, Some(t)) => calibrate_pair(&TuneTarget::thresh(kappa, pb, t), &base)
                        .map(|cal| calibrated(Some(db), &base, cal, Some(t))),
                    (true, None) => optimal_threshold(kappa, pb, &base, cfg.threshold_grid_size)
                        .map(|opt| calibrated(Some(db), &base, opt.calibration, Some(opt.t_x))),
                };
                run.sweep_point(db, point)?;
            }
        }
    }
    run.finish()
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Execute and write the CSV and sidecar. Returns the CSV text.
pub fn run(cfg: &RunConfig) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let output = pool.install(|| execute(cfg))?;
    let csv = output.csv()?;
    if let Some(path) = &cfg.output_path {
        let path = Path::new(path);
        let write = |p: &Path, text: &str| {
            fs::write(p, text).map_err(|e| config_err(format!("cannot write {}: {e}", p.display())))
        };
        write(path, &csv)?;
        write(&sidecar_path(path), &output.sidecar_json()?)?;
    }
    if cfg.command == Some(Command::Saddle) {
        Ok(output.sidecar_json()? + "\n")
    } else {
        Ok(csv)
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match cli.resolve().and_then(|cfg| run(&cfg)) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
