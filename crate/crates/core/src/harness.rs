//! Monte-Carlo sweeps, convergence traces, configuration files and CSV output.
//!
//! Every trial draws its channel from a seed derived only from the sweep seed
//! and the trial index, so the transmit power, the scheme and the worker
//! count never change which channel a trial sees. Trials are computed in
//! fixed-size batches and the stopping rule is applied to the prefix in trial
//! order, which makes the output independent of scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::baselines::{bd_sum_rate, dpc_sum_capacity, BaselineError};
use crate::channel::{dbm_to_mw, generate_channel, mw_to_dbm, ChannelError, ConfigError, SystemConfig};
use crate::optimizer::{optimize_wsr, sca_relaxed, OptimizerError};
use crate::nullspace::{successive_null_bases, NullSpaceError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Trials computed per parallel batch.
pub const BATCH: usize = 8;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_HALF_WIDTH: f64 = 0.5;
pub const DEFAULT_MAX_TRIALS: usize = 500;
pub const DEFAULT_REALIZATIONS: usize = 20;

pub fn default_pt_dbm() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trial {trial}: {message}")]
    Numerical { trial: usize, message: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numerical { .. } => 3,
        }
    }
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    Sns,
    Bd,
    Dpc,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Sns => "sns",
            SchemeKind::Bd => "bd",
            SchemeKind::Dpc => "dpc",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sns" => Ok(SchemeKind::Sns),
            "bd" => Ok(SchemeKind::Bd),
            "dpc" => Ok(SchemeKind::Dpc),
            other => Err(HarnessError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Stop once every scheme's confidence interval is this narrow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiTarget {
    pub confidence: f64,
    pub half_width: f64,
}

impl Default for CiTarget {
    fn default() -> Self {
        CiTarget { confidence: DEFAULT_CONFIDENCE, half_width: DEFAULT_HALF_WIDTH }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Everything but the power budget, which comes from `pt_dbm`.
    pub base: SystemConfig,
    pub pt_dbm: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub max_trials: usize,
    pub ci: CiTarget,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(base: SystemConfig) -> Self {
        SweepSpec {
            base,
            pt_dbm: default_pt_dbm(),
            schemes: vec![SchemeKind::Sns, SchemeKind::Bd, SchemeKind::Dpc],
            max_trials: DEFAULT_MAX_TRIALS,
            ci: CiTarget::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.base.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.pt_dbm.is_empty() {
            return bad("at least one power level is required");
        }
        if self.pt_dbm.iter().any(|p| !p.is_finite()) {
            return bad("power levels must be finite");
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required");
        }
        if self.max_trials == 0 {
            return bad("max trials must be positive");
        }
        if !(self.ci.half_width > 0.0) {
            return bad("confidence half-width must be positive");
        }
        if !(self.ci.confidence > 0.0 && self.ci.confidence < 1.0) {
            return bad("confidence level must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pt_dbm: f64,
    pub scheme: SchemeKind,
    pub mean_sum_rate: f64,
    /// Infinite below two trials.
    pub ci_half_width: f64,
    pub trials: usize,
    pub mean_sca_iterations: Option<f64>,
    /// Hash of the channels of all trials behind the row.
    pub channel_hash: String,
}

/// Per-trial seed: a SplitMix64 finalizer over the sweep seed and trial index.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of all schemes on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub channel_digest: [u8; 32],
    /// Equal-weight sum rate per scheme, in the requested order.
    pub sum_rates: Vec<f64>,
    /// Relaxed SCA iterations of the best ordering, when SNS ran.
    pub sca_iterations: Option<usize>,
}

fn numerical(trial: usize, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Numerical { trial, message: e.to_string() }
}

fn from_optimizer(trial: usize, e: OptimizerError) -> HarnessError {
    match e {
        OptimizerError::Config(c) => c.into(),
        OptimizerError::TooManyUsers(_) | OptimizerError::NullSpace(NullSpaceError::Ordering(_)) => HarnessError::Config(e.to_string()),
        other => numerical(trial, other),
    }
}

fn from_baseline(trial: usize, e: BaselineError) -> HarnessError {
    match e {
        BaselineError::Overloaded { .. } | BaselineError::Input(_) => HarnessError::Config(e.to_string()),
        other => numerical(trial, other),
    }
}

fn from_channel(trial: usize, e: ChannelError) -> HarnessError {
    numerical(trial, e)
}

/// Runs `schemes` on the channel of `trial` at the budget in `config`.
pub fn run_trial(config: &SystemConfig, schemes: &[SchemeKind], seed: u64, trial: usize) -> Result<TrialOutcome, HarnessError> {
    let channels = generate_channel(config, trial_seed(seed, trial)).map_err(|e| from_channel(trial, e))?;
    let channel_digest: [u8; 32] = Sha256::digest(channels.to_bytes()).into();
    let mut sum_rates = Vec::with_capacity(schemes.len());
    let mut sca_iterations = None;
    for &s in schemes {
        let rate = match s {
            SchemeKind::Sns => {
                let design = optimize_wsr(&channels, config).map_err(|e| from_optimizer(trial, e))?;
                sca_iterations = Some(design.best.relaxed_trace.iterations());
                design.best.report.sum
            }
            SchemeKind::Bd => bd_sum_rate(&channels, config.pt_mw, config.sigma2_mw).map_err(|e| from_baseline(trial, e))?.sum_rate,
            SchemeKind::Dpc => {
                dpc_sum_capacity(&channels, config.pt_mw, config.sigma2_mw).map_err(|e| from_baseline(trial, e))?.sum_rate
            }
        };
        if !rate.is_finite() {
            return Err(numerical(trial, format!("{} produced a non-finite rate", s.name())));
        }
        sum_rates.push(rate);
    }
    Ok(TrialOutcome { channel_digest, sum_rates, sca_iterations })
}

/// Runs trials `range` in parallel; the first failing trial in index order wins.
pub fn run_trials(
    config: &SystemConfig,
    schemes: &[SchemeKind],
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<TrialOutcome>, HarnessError> {
    let results: Vec<_> = range.into_par_iter().map(|t| run_trial(config, schemes, seed, t)).collect();
    results.into_iter().collect()
}

/// Sample mean and Student-t confidence half-width.
pub fn mean_and_half_width(xs: &[f64], confidence: f64) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let q = t.inverse_cdf(0.5 + confidence / 2.0);
    (mean, q * (var / n as f64).sqrt())
}

fn all_within(trials: &[TrialOutcome], schemes: usize, ci: &CiTarget) -> bool {
    (0..schemes).all(|s| {
        let xs: Vec<f64> = trials.iter().map(|t| t.sum_rates[s]).collect();
        mean_and_half_width(&xs, ci.confidence).1 <= ci.half_width
    })
}

fn rows_for(pt_dbm: f64, schemes: &[SchemeKind], trials: &[TrialOutcome], ci: &CiTarget) -> Vec<SweepRow> {
    let mut hasher = Sha256::new();
    for t in trials {
        hasher.update(t.channel_digest);
    }
    let channel_hash = hex16(&hasher.finalize());
    schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| {
            let xs: Vec<f64> = trials.iter().map(|t| t.sum_rates[s]).collect();
            let (mean_sum_rate, ci_half_width) = mean_and_half_width(&xs, ci.confidence);
            let mean_sca_iterations = (scheme == SchemeKind::Sns).then(|| {
                trials.iter().map(|t| t.sca_iterations.unwrap_or(0) as f64).sum::<f64>() / trials.len() as f64
            });
            SweepRow { pt_dbm, scheme, mean_sum_rate, ci_half_width, trials: trials.len(), mean_sca_iterations, channel_hash: channel_hash.clone() }
        })
        .collect()
}

fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Adds trials per power level until all schemes meet the CI target or the
/// trial cap is reached. Schemes share trials, so their rows are paired.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    spec.validate()?;
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut rows = Vec::new();
    for &pt in &spec.pt_dbm {
        let config = spec.base.with_pt_dbm(pt);
        let mut trials: Vec<TrialOutcome> = Vec::new();
        let mut used = None;
        while used.is_none() && trials.len() < spec.max_trials {
            let start = trials.len();
            let end = (start + BATCH).min(spec.max_trials);
            trials.extend(run_trials(&config, &schemes, spec.seed, start..end)?);
            used = (start.max(2)..=trials.len()).find(|&n| all_within(&trials[..n], schemes.len(), &spec.ci));
        }
        let n = used.unwrap_or(trials.len());
        rows.extend(rows_for(pt, &schemes, &trials[..n], &spec.ci));
    }
    rows.sort_by(|a, b| a.pt_dbm.total_cmp(&b.pt_dbm).then(a.scheme.cmp(&b.scheme)));
    Ok(rows)
}

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9}")
    } else {
        "inf".into()
    }
}

pub const SWEEP_HEADER: &str = "pt_dbm,scheme,mean_sum_rate,ci_half_width,trials,mean_sca_iterations,channel_hash";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let iters = r.mean_sca_iterations.map(|x| format!("{x:.3}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f(r.pt_dbm),
            r.scheme.name(),
            fmt_f(r.mean_sum_rate),
            fmt_f(r.ci_half_width),
            r.trials,
            iters,
            r.channel_hash
        );
    }
    out
}

/// Averaged convergence trace of the relaxed SCA.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// Mean surrogate optimum per iteration.
    pub surrogate_wsr: Vec<f64>,
    /// Mean exact sum rate per iteration.
    pub exact_sum_rate: Vec<f64>,
    /// Iterations to convergence per realization.
    pub iterations: Vec<usize>,
}

fn padded_mean(traces: &[Vec<f64>], len: usize) -> Vec<f64> {
    (0..len)
        .map(|l| {
            let s: f64 = traces.iter().map(|t| t.get(l).or(t.last()).copied().unwrap_or(0.0)).sum();
            s / traces.len() as f64
        })
        .collect()
}

/// Runs the relaxed SCA on `realizations` channels with the identity
/// ordering and averages the per-iteration traces, holding finished runs at
/// their final value.
pub fn run_convergence(config: &SystemConfig, seed: u64, realizations: usize) -> Result<ConvergenceTrace, HarnessError> {
    config.validate()?;
    if realizations == 0 {
        return Err(HarnessError::Config("at least one realization is required".into()));
    }
    let order: Vec<usize> = (0..config.num_users()).collect();
    let results: Vec<Result<_, HarnessError>> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let ch = generate_channel(config, trial_seed(seed, r)).map_err(|e| from_channel(r, e))?;
            let bases = successive_null_bases(&ch, &order).map_err(|e| numerical(r, e))?;
            let (_, trace) = sca_relaxed(&ch, &bases, config).map_err(|e| from_optimizer(r, e))?;
            Ok(trace)
        })
        .collect();
    let traces = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let len = traces.iter().map(|t| t.iterations()).max().unwrap_or(0);
    let surrogate: Vec<Vec<f64>> = traces.iter().map(|t| t.surrogate.clone()).collect();
    let exact: Vec<Vec<f64>> = traces.iter().map(|t| t.exact_sum.clone()).collect();
    Ok(ConvergenceTrace {
        surrogate_wsr: padded_mean(&surrogate, len),
        exact_sum_rate: padded_mean(&exact, len),
        iterations: traces.iter().map(|t| t.iterations()).collect(),
    })
}

pub const CONVERGENCE_HEADER: &str = "iteration,surrogate_wsr,exact_sum_rate";

pub fn convergence_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for (l, (s, e)) in trace.surrogate_wsr.iter().zip(&trace.exact_sum_rate).enumerate() {
        let _ = writeln!(out, "{},{},{}", l + 1, fmt_f(*s), fmt_f(*e));
    }
    out
}

/// Keys accepted in configuration files.
pub const CONFIG_KEYS: [&str; 9] = ["N", "M", "sigma2_dbm", "eta", "d_m", "epsilon", "inner_gap", "inner_max_iter", "outer_max_iter"];

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| HarnessError::Config(format!("{key}: cannot parse '{}'", s.trim()))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.trim().parse::<T>().map_err(|_| HarnessError::Config(format!("{key}: cannot parse '{}'", v.trim())))
}

/// Parses `key = value` lines over the defaults. `#` starts a comment; lists
/// are comma separated. Weights default to `1/K` when `eta` is absent.
pub fn parse_config(text: &str) -> Result<SystemConfig, HarnessError> {
    let mut cfg = SystemConfig::default();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!("line {}: expected key = value", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if seen.insert(k.to_string(), ()).is_some() {
            return Err(HarnessError::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
        match k {
            "N" => cfg.n_tx = parse_one(k, v)?,
            "M" => cfg.m_rx = parse_list(k, v)?,
            "sigma2_dbm" => cfg.sigma2_mw = dbm_to_mw(parse_one(k, v)?),
            "eta" => cfg.eta = parse_list(k, v)?,
            "d_m" => cfg.dist_m = parse_list(k, v)?,
            "epsilon" => cfg.epsilon = parse_one(k, v)?,
            "inner_gap" => cfg.inner_gap = parse_one(k, v)?,
            "inner_max_iter" => cfg.inner_max_iter = parse_one(k, v)?,
            "outer_max_iter" => cfg.outer_max_iter = parse_one(k, v)?,
            _ => return Err(HarnessError::Config(format!("line {}: unknown key '{k}'", i + 1))),
        }
    }
    if !seen.contains_key("eta") {
        let k = cfg.m_rx.len().max(1);
        cfg.eta = vec![1.0 / k as f64; k];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical text of the configuration, one `key = value` per line in the
/// order of [`CONFIG_KEYS`]; parsing it gives back the same configuration.
pub fn canonical_config(cfg: &SystemConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "N = {}", cfg.n_tx);
    let _ = writeln!(out, "M = {}", join(&cfg.m_rx));
    let _ = writeln!(out, "sigma2_dbm = {}", mw_to_dbm(cfg.sigma2_mw));
    let _ = writeln!(out, "eta = {}", join(&cfg.eta));
    let _ = writeln!(out, "d_m = {}", join(&cfg.dist_m));
    let _ = writeln!(out, "epsilon = {}", cfg.epsilon);
    let _ = writeln!(out, "inner_gap = {}", cfg.inner_gap);
    let _ = writeln!(out, "inner_max_iter = {}", cfg.inner_max_iter);
    let _ = writeln!(out, "outer_max_iter = {}", cfg.outer_max_iter);
    out
}

pub fn config_hash(cfg: &SystemConfig) -> String {
    Sha256::digest(canonical_config(cfg).as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Sidecar metadata: tool version, seed, config hash and canonical config,
/// plus run-specific `extra` entries.
pub fn metadata(cfg: &SystemConfig, seed: u64, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool = sns-mimo {TOOL_VERSION}");
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "config_sha256 = {}", config_hash(cfg));
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    for line in canonical_config(cfg).lines() {
        let _ = writeln!(out, "config.{line}");
    }
    out
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

pub fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}
