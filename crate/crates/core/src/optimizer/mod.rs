//! Weighted-sum-rate maximization for the SNS rate-splitting design.
//!
//! Pipeline per user ordering: null-space bases, SCA on the rank-relaxed
//! problem, eigenbases of its solution, SCA on the reformulated problem
//! whose covariances satisfy the rank limits by construction, and an exact
//! rate evaluation. [`optimize_wsr`] keeps the best ordering.

pub mod inner;
pub mod problem;
pub mod sca;
pub mod surrogate;

use thiserror::Error;

use crate::channel::{ChannelSet, ConfigError, SystemConfig};
use crate::linalg::{numerical_rank, psd_eig, psd_sqrt_factor, CMatrix, LinalgError};
use crate::nullspace::{is_permutation, sns_precoder, successive_null_bases, NullBasisSet, NullSpaceError};
use crate::rates::{evaluate, CovarianceSolution, RateError, RateReport, Structure};

pub use problem::RateProblem;
pub use sca::{build_reformulation, sca_reformulated, sca_relaxed, solve_inner, InnerSolution, Reformulation, ScaTrace};
pub use surrogate::{SurrogatePoint, SurrogateRates};

/// Largest user count for which all orderings are searched by default.
pub const MAX_EXHAUSTIVE_USERS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("{0} users: exhaustive ordering search needs an explicit ordering list above {MAX_EXHAUSTIVE_USERS}")]
    TooManyUsers(usize),
    #[error("non-finite objective")]
    NonFinite,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    NullSpace(#[from] NullSpaceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Surrogate rates of `vars` linearized at `point`.
pub fn surrogate_rates(
    point: &SurrogatePoint,
    vars: &CovarianceSolution,
    channels: &ChannelSet,
    bases: &NullBasisSet,
    config: &SystemConfig,
) -> Result<SurrogateRates, OptimizerError> {
    let problem = RateProblem::new(channels, bases, &vars.structure, config)?;
    Ok(point.rates(&problem, &sca::solution_to_blocks(vars))?)
}

/// Outcome of the full pipeline for one ordering.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub bases: NullBasisSet,
    pub relaxed: CovarianceSolution,
    pub relaxed_trace: ScaTrace,
    pub reformulation: Reformulation,
    pub solution: CovarianceSolution,
    pub trace: ScaTrace,
    pub report: RateReport,
}

/// Best design over the searched orderings.
#[derive(Debug, Clone)]
pub struct WsrDesign {
    pub best: PipelineRun,
    /// Exact weighted sum rate of each searched ordering, in search order.
    pub per_ordering: Vec<(Vec<usize>, f64)>,
}

impl WsrDesign {
    pub fn pipeline_runs(&self) -> usize {
        self.per_ordering.len()
    }
}

pub fn run_pipeline(channels: &ChannelSet, config: &SystemConfig, order: &[usize]) -> Result<PipelineRun, OptimizerError> {
    let bases = successive_null_bases(channels, order)?;
    let (relaxed, relaxed_trace) = sca_relaxed(channels, &bases, config)?;
    let reformulation = build_reformulation(&relaxed, channels)?;
    let (solution, trace) = sca_reformulated(channels, &bases, config, &reformulation.eigenbases, Some(&relaxed))?;
    let report = evaluate(&solution, channels, &bases, config)?;
    Ok(PipelineRun { bases, relaxed, relaxed_trace, reformulation, solution, trace, report })
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..k).collect();
    let mut out = vec![cur.clone()];
    while let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) {
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

/// Runs the pipeline for every ordering and keeps the largest exact WSR;
/// ties go to the lexicographically smallest ordering.
pub fn optimize_wsr(channels: &ChannelSet, config: &SystemConfig) -> Result<WsrDesign, OptimizerError> {
    let k = channels.num_users();
    if k > MAX_EXHAUSTIVE_USERS {
        return Err(OptimizerError::TooManyUsers(k));
    }
    optimize_wsr_over(channels, config, &permutations(k))
}

pub fn optimize_wsr_over(channels: &ChannelSet, config: &SystemConfig, orders: &[Vec<usize>]) -> Result<WsrDesign, OptimizerError> {
    config.validate()?;
    if orders.is_empty() {
        return Err(OptimizerError::Contract("no orderings to search".into()));
    }
    let mut sorted = orders.to_vec();
    sorted.sort();
    let mut best: Option<PipelineRun> = None;
    let mut per_ordering = Vec::with_capacity(sorted.len());
    for order in &sorted {
        if !is_permutation(order, channels.num_users()) {
            return Err(NullSpaceError::Ordering(order.clone()).into());
        }
        let run = run_pipeline(channels, config, order)?;
        per_ordering.push((order.clone(), run.report.wsr));
        if best.as_ref().is_none_or(|b| run.report.wsr > b.report.wsr) {
            best = Some(run);
        }
    }
    Ok(WsrDesign { best: best.expect("at least one ordering"), per_ordering })
}

/// Linear precoders realizing a solution: `P_c` (`N × M`) and `P_p`
/// (`N × M_p`) by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub common: CMatrix,
    pub private: Vec<CMatrix>,
}

impl Precoders {
    pub fn power(&self) -> f64 {
        let tr = |p: &CMatrix| p.iter().map(|z| z.norm_sqr()).sum::<f64>();
        tr(&self.common) + self.private.iter().map(tr).sum::<f64>()
    }
}

fn checked_factor(x: &CMatrix, bound: usize) -> Result<CMatrix, OptimizerError> {
    let eig = psd_eig(x)?;
    let rank = numerical_rank(&eig.eigenvalues);
    if rank > bound {
        return Err(NullSpaceError::RankViolation { rank, bound }.into());
    }
    Ok(psd_sqrt_factor(x, bound)?)
}

pub fn recover_precoders(sol: &CovarianceSolution, bases: &NullBasisSet, channels: &ChannelSet) -> Result<Precoders, OptimizerError> {
    let m = channels.common_dim();
    let rx: Vec<usize> = sol.order.iter().map(|&u| channels.h[u].nrows()).collect();
    match &sol.structure {
        Structure::Reformulated(eig) => {
            let common = &eig.common * checked_factor(&sol.common, m)?;
            let private = sol
                .private
                .iter()
                .enumerate()
                .map(|(p, x)| Ok(bases.basis(p) * &eig.private[p] * checked_factor(x, rx[p])?))
                .collect::<Result<Vec<_>, OptimizerError>>()?;
            Ok(Precoders { common, private })
        }
        Structure::Relaxed => {
            let common = checked_factor(&sol.common, m)?;
            let private = sol
                .private
                .iter()
                .enumerate()
                .map(|(p, x)| Ok(sns_precoder(bases.basis(p), x, rx[p])?))
                .collect::<Result<Vec<_>, OptimizerError>>()?;
            Ok(Precoders { common, private })
        }
    }
}
