//! Successive convex approximation loop and the rank-restricting reformulation.

use crate::channel::{ChannelSet, SystemConfig};
use crate::linalg::{congruence, herm_eig, numerical_rank, trace_re, CMatrix};
use crate::nullspace::NullBasisSet;
use crate::rates::{CovarianceSolution, Eigenbases, Structure};

use super::inner::{maximize, zero_blocks, InnerOptions};
use super::problem::{RateProblem, COMMON};
use super::surrogate::{SurrogateObjective, SurrogatePoint};
use super::OptimizerError;

/// Per-iteration record of one SCA run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScaTrace {
    /// Optimal surrogate value of each inner problem.
    pub surrogate: Vec<f64>,
    /// Exact weighted sum rate at each iterate.
    pub exact_wsr: Vec<f64>,
    /// Exact equal-weight sum rate at each iterate.
    pub exact_sum: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub converged: bool,
}

impl ScaTrace {
    pub fn iterations(&self) -> usize {
        self.surrogate.len()
    }

    pub fn final_surrogate(&self) -> f64 {
        self.surrogate.last().copied().unwrap_or(0.0)
    }
}

/// Solution of one inner problem.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    /// Common block first, then private blocks by position.
    pub blocks: Vec<CMatrix>,
    /// Surrogate weighted sum rate at `blocks`, exact minimum over common rates.
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Fraction of an inner solve's gain below which its gap must fall; early
/// outer iterations then stop well before the absolute tolerance.
pub const INEXACT_FRACTION: f64 = 0.1;

pub(crate) fn inner_options(problem: &RateProblem, config: &SystemConfig) -> InnerOptions {
    InnerOptions::new(problem.budget, config.inner_gap, config.inner_max_iter)
}

/// Maximizes the surrogate at `point` over the power-constrained PSD blocks,
/// warm-started at `start`.
pub fn solve_inner(
    problem: &RateProblem,
    point: &SurrogatePoint,
    start: &[CMatrix],
    config: &SystemConfig,
) -> Result<InnerSolution, OptimizerError> {
    solve_inner_with(problem, point, start, &inner_options(problem, config), false)
}

pub(crate) fn solve_inner_with(
    problem: &RateProblem,
    point: &SurrogatePoint,
    start: &[CMatrix],
    opts: &InnerOptions,
    common_disabled: bool,
) -> Result<InnerSolution, OptimizerError> {
    let objective = SurrogateObjective { problem, point, common_disabled };
    let mut start = start.to_vec();
    if common_disabled {
        start[COMMON] = CMatrix::zeros(0, 0);
    }
    let res = maximize(&objective, &start, opts)?;
    if !res.value.is_finite() {
        return Err(OptimizerError::NonFinite);
    }
    let mut blocks = res.blocks;
    if common_disabled {
        let d = problem.dims[COMMON];
        blocks[COMMON] = CMatrix::zeros(d, d);
    }
    Ok(InnerSolution { blocks, value: res.value, gap: res.gap, iterations: res.iterations })
}

pub(crate) fn blocks_to_solution(order: &[usize], blocks: Vec<CMatrix>, structure: Structure) -> CovarianceSolution {
    let mut it = blocks.into_iter();
    let common = it.next().expect("common block");
    CovarianceSolution { order: order.to_vec(), common, private: it.collect(), structure }
}

pub(crate) fn solution_to_blocks(sol: &CovarianceSolution) -> Vec<CMatrix> {
    let mut blocks = vec![sol.common.clone()];
    blocks.extend(sol.private.iter().cloned());
    blocks
}

/// Runs the SCA iterations on `problem` from `start` (all zero by default).
pub(crate) fn run_sca(problem: &RateProblem, config: &SystemConfig, start: Option<Vec<CMatrix>>) -> Result<(Vec<CMatrix>, ScaTrace), OptimizerError> {
    let dims = problem.dims.clone();
    let mut current = start.unwrap_or_else(|| zero_blocks(&dims));
    let mut trace = ScaTrace::default();
    if problem.budget <= 0.0 {
        trace.surrogate.push(0.0);
        trace.exact_wsr.push(0.0);
        trace.exact_sum.push(0.0);
        trace.inner_iterations.push(0);
        trace.converged = true;
        return Ok((current, trace));
    }
    let opts = InnerOptions { relative_gap: INEXACT_FRACTION, ..inner_options(problem, config) };
    let mut best: Option<(Vec<CMatrix>, f64)> = None;
    for l in 1..=config.outer_max_iter {
        let point = SurrogatePoint::new(problem, &current)?;
        let sol = solve_inner_with(problem, &point, &current, &opts, false)?;
        let (wsr, sum) = problem.exact_objective(&sol.blocks)?;
        trace.surrogate.push(sol.value);
        trace.exact_wsr.push(wsr);
        trace.exact_sum.push(sum);
        trace.inner_iterations.push(sol.iterations);
        if best.as_ref().is_none_or(|b| wsr > b.1) {
            best = Some((sol.blocks.clone(), wsr));
        }
        current = sol.blocks;
        if l > 1 {
            let prev = trace.surrogate[l - 2];
            if (sol.value - prev).abs() < config.epsilon {
                trace.converged = true;
                return Ok((current, trace));
            }
        }
    }
    Ok((best.map(|b| b.0).unwrap_or(current), trace))
}

/// SCA from the all-zero point on the rank-relaxed problem for the ordering in `bases`.
pub fn sca_relaxed(
    channels: &ChannelSet,
    bases: &NullBasisSet,
    config: &SystemConfig,
) -> Result<(CovarianceSolution, ScaTrace), OptimizerError> {
    let problem = RateProblem::new(channels, bases, &Structure::Relaxed, config)?;
    let (blocks, trace) = run_sca(&problem, config, None)?;
    Ok((blocks_to_solution(&bases.order, blocks, Structure::Relaxed), trace))
}

/// Eigenbases of a relaxed solution and the share of each block's trace they capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Reformulation {
    pub eigenbases: Eigenbases,
    pub captured_common: f64,
    pub captured_private: Vec<f64>,
}

// Top-`r` eigenvectors; a numerically zero matrix maps to a zero basis.
fn top_eigenvectors(x: &CMatrix, r: usize) -> Result<(CMatrix, f64), OptimizerError> {
    let n = x.nrows();
    let eig = herm_eig(x)?;
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    if numerical_rank(&clamped) == 0 {
        return Ok((CMatrix::zeros(n, r), 1.0));
    }
    let total: f64 = clamped.iter().sum();
    let kept: f64 = clamped.iter().take(r).sum();
    Ok((eig.eigenvectors.columns(0, r).into_owned(), kept / total))
}

/// Eigenbases spanning the dominant `M` (common) and `M_k` (private)
/// eigenvectors of a relaxed solution.
pub fn build_reformulation(relaxed: &CovarianceSolution, channels: &ChannelSet) -> Result<Reformulation, OptimizerError> {
    if relaxed.is_reformulated() {
        return Err(OptimizerError::Contract("reformulation needs a relaxed solution".into()));
    }
    let m = channels.common_dim();
    let (common, captured_common) = top_eigenvectors(&relaxed.common, m)?;
    let mut private = Vec::with_capacity(relaxed.private.len());
    let mut captured_private = Vec::with_capacity(relaxed.private.len());
    for (p, x) in relaxed.private.iter().enumerate() {
        let mk = channels.h[relaxed.order[p]].nrows();
        let (u, c) = top_eigenvectors(x, mk)?;
        private.push(u);
        captured_private.push(c);
    }
    Ok(Reformulation { eigenbases: Eigenbases { common, private }, captured_common, captured_private })
}

/// SCA over the small blocks `X̃_c`, `X̃_k` of the rank-restricted problem.
///
/// With `warm_start`, a relaxed solution compressed onto the eigenbases
/// (`Uᴴ X U`) replaces the all-zero first expansion point.
pub fn sca_reformulated(
    channels: &ChannelSet,
    bases: &NullBasisSet,
    config: &SystemConfig,
    eigenbases: &Eigenbases,
    warm_start: Option<&CovarianceSolution>,
) -> Result<(CovarianceSolution, ScaTrace), OptimizerError> {
    let structure = Structure::Reformulated(eigenbases.clone());
    let problem = RateProblem::new(channels, bases, &structure, config)?;
    let start = match warm_start {
        Some(relaxed) => Some(compress(relaxed, eigenbases)?),
        None => None,
    };
    let (blocks, trace) = run_sca(&problem, config, start)?;
    Ok((blocks_to_solution(&bases.order, blocks, structure), trace))
}

fn compress(relaxed: &CovarianceSolution, eig: &Eigenbases) -> Result<Vec<CMatrix>, OptimizerError> {
    if relaxed.is_reformulated() || relaxed.private.len() != eig.private.len() {
        return Err(OptimizerError::Contract("warm start must be a relaxed solution of the same size".into()));
    }
    let mut blocks = vec![congruence(&eig.common.adjoint(), &relaxed.common)];
    blocks.extend(relaxed.private.iter().zip(&eig.private).map(|(x, u)| congruence(&u.adjoint(), x)));
    Ok(blocks)
}

/// Total trace of a block list.
pub fn blocks_power(blocks: &[CMatrix]) -> f64 {
    blocks.iter().map(trace_re).sum()
}
