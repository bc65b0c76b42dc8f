//! Concave maximization over PSD blocks sharing a trace budget.
//!
//! The feasible set is `S = { B_j ⪰ 0, Σ_j tr(B_j) ≤ budget }`. Iterates
//! move by accelerated projected gradient steps (backtracked Lipschitz
//! estimate, restart when the momentum stops ascending); the projection onto `S`
//! is spectral and exact. Termination uses the conditional-gradient gap
//!
//! ```text
//! gap(B) = max_{S ∈ S} <∇F(B), S − B> = budget · max(0, max_j λ_max(∇_j F)) − Σ_j <∇_j F, B_j>,
//! ```
//!
//! an upper bound on `F* − F(B)` for concave `F`; its maximizer is the
//! rank-one atom `budget · v vᴴ` on the block with the largest leading
//! gradient eigenvalue.

use crate::linalg::{herm_eig, hermitian_part, inner_re, CMatrix, LinalgError};

/// Values produced by one objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Objective being ascended (smoothed when the objective is nonsmooth).
    pub smoothed: f64,
    /// Objective the caller actually cares about.
    pub exact: f64,
    pub gradient: Option<Vec<CMatrix>>,
}

/// A concave objective over Hermitian blocks with an optional smoothing level.
pub trait BlockObjective {
    fn block_dims(&self) -> Vec<usize>;
    /// `mu` is the smoothing sharpness; ignored by smooth objectives.
    fn evaluate(&self, blocks: &[CMatrix], mu: f64, gradient: bool) -> Result<Evaluation, LinalgError>;
    /// Worst-case gap between the smoothed and exact objective at sharpness `mu`.
    fn smoothing_error(&self, _mu: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOptions {
    pub budget: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    pub mu_start: f64,
    pub mu_max: f64,
    /// Also stop once the gap is below this fraction of the gain over the
    /// starting point; zero disables it.
    pub relative_gap: f64,
}

impl InnerOptions {
    pub fn new(budget: f64, gap_tol: f64, max_iter: usize) -> Self {
        InnerOptions { budget, gap_tol, max_iter, mu_start: 8.0, mu_max: 512.0, relative_gap: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub blocks: Vec<CMatrix>,
    /// Exact objective at `blocks`.
    pub value: f64,
    /// Conditional-gradient gap of the smoothed objective at the last iterate.
    pub gap: f64,
    pub iterations: usize,
}

pub fn zero_blocks(dims: &[usize]) -> Vec<CMatrix> {
    dims.iter().map(|&d| CMatrix::zeros(d, d)).collect()
}

/// Euclidean projection onto `S`: joint eigenvalue thresholding of all blocks.
pub fn project(blocks: &[CMatrix], budget: f64) -> Result<Vec<CMatrix>, LinalgError> {
    let eigs = blocks.iter().map(herm_eig).collect::<Result<Vec<_>, _>>()?;
    let mut all: Vec<f64> = eigs.iter().flat_map(|e| e.eigenvalues.iter().copied()).filter(|&l| l > 0.0).collect();
    let positive: f64 = all.iter().sum();
    let shift = if positive <= budget {
        0.0
    } else {
        // smallest τ with Σ max(λ − τ, 0) = budget
        all.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut tau = 0.0;
        for (i, &l) in all.iter().enumerate() {
            acc += l;
            let t = (acc - budget) / (i + 1) as f64;
            let next = all.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
            if t >= next {
                tau = t;
                break;
            }
        }
        tau.max(0.0)
    };
    Ok(eigs
        .into_iter()
        .map(|mut e| {
            for l in e.eigenvalues.iter_mut() {
                *l = (*l - shift).max(0.0);
            }
            e.reconstruct()
        })
        .collect())
}

/// Conditional-gradient gap and the index of the block holding the atom.
pub fn conditional_gradient_gap(blocks: &[CMatrix], gradient: &[CMatrix], budget: f64) -> Result<(f64, Option<usize>), LinalgError> {
    let mut lead = 0.0;
    let mut arg = None;
    let mut linear = 0.0;
    for (j, (b, g)) in blocks.iter().zip(gradient).enumerate() {
        linear += inner_re(g, b);
        if g.nrows() == 0 {
            continue;
        }
        let l = herm_eig(g)?.eigenvalues[0];
        // ties keep the lowest block index
        if l > lead {
            lead = l;
            arg = Some(j);
        }
    }
    Ok(((budget * lead - linear).max(0.0), arg))
}

fn axpy(x: &[CMatrix], t: f64, d: &[CMatrix]) -> Vec<CMatrix> {
    x.iter().zip(d).map(|(a, b)| a + b.scale(t)).collect()
}

fn diff(a: &[CMatrix], b: &[CMatrix]) -> Vec<CMatrix> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| inner_re(x, y)).sum()
}

const MAX_BACKTRACKS: usize = 60;
/// The gap needs an extra gradient at the iterate, so it is checked periodically.
const GAP_EVERY: usize = 5;
const LIPSCHITZ_DECAY: f64 = 0.9;

/// Maximizes `objective` over `S`, starting from `start` (projected first).
///
/// Returns the iterate with the best exact objective seen, so the result
/// never scores below the starting point.
pub fn maximize(objective: &dyn BlockObjective, start: &[CMatrix], opts: &InnerOptions) -> Result<InnerResult, LinalgError> {
    let dims = objective.block_dims();
    if opts.budget <= 0.0 {
        let blocks = zero_blocks(&dims);
        let value = objective.evaluate(&blocks, opts.mu_max, false)?.exact;
        return Ok(InnerResult { blocks, value, gap: 0.0, iterations: 0 });
    }
    let mut mu = if objective.smoothing_error(opts.mu_start) > 0.0 { opts.mu_start } else { opts.mu_max };
    let mut x = project(&start.iter().map(hermitian_part).collect::<Vec<_>>(), opts.budget)?;
    let mut f0 = objective.evaluate(&x, mu, true)?;
    let mut gx = f0.gradient.take().expect("gradient requested");
    let start_value = f0.exact;
    let mut best = (x.clone(), f0.exact);
    let gnorm = dot(&gx, &gx).sqrt();
    let mut lip = if gnorm > 0.0 { gnorm / opts.budget } else { 1.0 };
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut fresh = true;

    loop {
        if iterations % GAP_EVERY == 0 {
            if !fresh {
                gx = objective.evaluate(&x, mu, true)?.gradient.expect("gradient requested");
                fresh = true;
            }
            gap = conditional_gradient_gap(&x, &gx, opts.budget)?.0;
            let tol = opts.gap_tol.max(opts.relative_gap * (best.1 - start_value));
            let smoothing = objective.smoothing_error(mu);
            if gap <= tol.max(smoothing) {
                if tol >= smoothing || mu >= opts.mu_max {
                    break;
                }
                mu = (mu * 2.0).min(opts.mu_max);
                gx = objective.evaluate(&x, mu, true)?.gradient.expect("gradient requested");
                y = x.clone();
                t = 1.0;
                continue;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut fy = objective.evaluate(&y, mu, true)?;
        let gy = fy.gradient.take().expect("gradient requested");
        let mut next = None;
        for _ in 0..MAX_BACKTRACKS {
            let z = project(&axpy(&y, 1.0 / lip, &gy), opts.budget)?;
            let d = diff(&z, &y);
            let fz = objective.evaluate(&z, mu, false)?;
            let model = fy.smoothed + dot(&gy, &d) - 0.5 * lip * dot(&d, &d);
            if fz.smoothed >= model - 1e-15 * fy.smoothed.abs() {
                next = Some((z, fz));
                break;
            }
            lip *= 2.0;
        }
        let Some((z, fz)) = next else { break };
        // restart when the momentum points downhill
        if dot(&gy, &diff(&z, &x)) < 0.0 {
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = z.iter().zip(&x).map(|(a, b)| a + (a - b).scale(momentum)).collect();
        t = t_next;
        x = z;
        lip *= LIPSCHITZ_DECAY;
        fresh = false;
        if fz.exact > best.1 {
            best = (x.clone(), fz.exact);
        }
    }
    Ok(InnerResult { blocks: best.0, value: best.1, gap, iterations })
}
