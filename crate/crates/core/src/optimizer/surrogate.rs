//! First-order concave minorants of the exact rates.
//!
//! Each rate is `log2det(I + S_signal/σ²) − log2det(I + S_interf/σ²)`, a
//! difference of concave functions. The surrogate keeps the first term and
//! replaces the second by its tangent plane at the expansion point `X̆`:
//!
//! ```text
//! R̃ = log2det(I + S_signal/σ²) − log2det(I + S̆_interf/σ²)
//!     − 1/(σ² ln 2) Σ_q tr(W_qᴴ [I + S̆_interf/σ²]⁻¹ W_q (X_q − X̆_q)).
//! ```
//!
//! For the private rate the sum runs over positions before the user; for the
//! common rate it also includes the user itself, since its own private stream
//! is noise while decoding the common stream.

use std::f64::consts::LN_2;

use crate::linalg::{congruence, trace_product_re, CMatrix, LinalgError};

use super::inner::{BlockObjective, Evaluation};
use super::problem::{private_block, RateProblem, COMMON};

/// Linearization data at an expansion point.
///
/// The interference covariances are kept on the receive side
/// (`H_p Q̆ H_pᴴ`), which is all the surrogate needs.
#[derive(Debug, Clone)]
pub struct SurrogatePoint {
    /// Expansion blocks, common first; the common block is not linearized.
    pub expansion: Vec<CMatrix>,
    /// `H_p (Σ_{q<p} Q̆_q) H_pᴴ` per position.
    pub interference_private: Vec<CMatrix>,
    /// `H_p (Σ_{q≤p} Q̆_q) H_pᴴ` per position.
    pub interference_common: Vec<CMatrix>,
    priv_const: Vec<f64>,
    /// `[p][q]`, `q < p`: `W_{p,q}ᴴ [..]⁻¹ W_{p,q} / (σ² ln 2)`.
    priv_lin: Vec<Vec<CMatrix>>,
    priv_offset: Vec<f64>,
    com_const: Vec<f64>,
    /// `[p][q]`, `q ≤ p`.
    com_lin: Vec<Vec<CMatrix>>,
    com_offset: Vec<f64>,
}

/// Surrogate rates by position.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRates {
    pub private: Vec<f64>,
    pub common_at_user: Vec<f64>,
    /// Weighted sum with the exact minimum over the common rates.
    pub wsr: f64,
}

impl SurrogatePoint {
    pub fn new(problem: &RateProblem, expansion: &[CMatrix]) -> Result<Self, LinalgError> {
        let k = problem.num_users();
        let scale = 1.0 / (problem.sigma2 * LN_2);
        let mut pt = SurrogatePoint {
            expansion: expansion.to_vec(),
            interference_private: Vec::with_capacity(k),
            interference_common: Vec::with_capacity(k),
            priv_const: Vec::with_capacity(k),
            priv_lin: Vec::with_capacity(k),
            priv_offset: Vec::with_capacity(k),
            com_const: Vec::with_capacity(k),
            com_lin: Vec::with_capacity(k),
            com_offset: Vec::with_capacity(k),
        };
        for p in 0..k {
            let (before, own, _) = problem.user_sums(p, expansion);

            let tb = problem.logdet_term(&before, true)?;
            let inv = tb.inverse.expect("inverse requested");
            let lin: Vec<CMatrix> = (0..p)
                .map(|q| congruence(&problem.projected(p, private_block(q)).adjoint(), &inv).scale(scale))
                .collect();
            let offset = lin.iter().enumerate().map(|(q, l)| trace_product_re(l, &expansion[private_block(q)])).sum();
            pt.priv_const.push(tb.value);
            pt.priv_lin.push(lin);
            pt.priv_offset.push(offset);

            let to = problem.logdet_term(&own, true)?;
            let inv = to.inverse.expect("inverse requested");
            let lin: Vec<CMatrix> = (0..=p)
                .map(|q| congruence(&problem.projected(p, private_block(q)).adjoint(), &inv).scale(scale))
                .collect();
            let offset = lin.iter().enumerate().map(|(q, l)| trace_product_re(l, &expansion[private_block(q)])).sum();
            pt.com_const.push(to.value);
            pt.com_lin.push(lin);
            pt.com_offset.push(offset);

            pt.interference_private.push(before);
            pt.interference_common.push(own);
        }
        Ok(pt)
    }

    /// Trace-term coefficient of the private rate at `p` w.r.t. the private block at `q < p`.
    pub fn private_coefficient(&self, p: usize, q: usize) -> &CMatrix {
        &self.priv_lin[p][q]
    }

    /// Trace-term coefficient of the common rate at `p` w.r.t. the private block at `q ≤ p`.
    pub fn common_coefficient(&self, p: usize, q: usize) -> &CMatrix {
        &self.com_lin[p][q]
    }

    pub fn rates(&self, problem: &RateProblem, blocks: &[CMatrix]) -> Result<SurrogateRates, LinalgError> {
        let (private, common) = self.raw_rates(problem, blocks, false)?.0;
        let rc = common.iter().copied().fold(f64::INFINITY, f64::min);
        let wsr = problem.common_weight * rc + problem.eta.iter().zip(&private).map(|(e, r)| e * r).sum::<f64>();
        Ok(SurrogateRates { private, common_at_user: common, wsr })
    }

    #[allow(clippy::type_complexity)]
    fn raw_rates(
        &self,
        problem: &RateProblem,
        blocks: &[CMatrix],
        inverses: bool,
    ) -> Result<((Vec<f64>, Vec<f64>), Vec<(CMatrix, CMatrix)>), LinalgError> {
        let k = problem.num_users();
        let mut private = Vec::with_capacity(k);
        let mut common = Vec::with_capacity(k);
        let mut invs = Vec::new();
        for p in 0..k {
            let (_, own, total) = problem.user_sums(p, blocks);
            let to = problem.logdet_term(&own, inverses)?;
            let tt = problem.logdet_term(&total, inverses)?;
            let lin_p: f64 = self.priv_lin[p]
                .iter()
                .enumerate()
                .map(|(q, l)| trace_product_re(l, &blocks[private_block(q)]))
                .sum();
            let lin_c: f64 = self.com_lin[p]
                .iter()
                .enumerate()
                .map(|(q, l)| trace_product_re(l, &blocks[private_block(q)]))
                .sum();
            private.push(to.value - self.priv_const[p] - (lin_p - self.priv_offset[p]));
            common.push(tt.value - self.com_const[p] - (lin_c - self.com_offset[p]));
            if inverses {
                invs.push((to.inverse.expect("inverse requested"), tt.inverse.expect("inverse requested")));
            }
        }
        Ok(((private, common), invs))
    }

    /// Gradient of `Σ_p wp[p] R̃_p + Σ_p wc[p] R̃_{p,c}` w.r.t. every block.
    pub fn weighted_gradient(
        &self,
        problem: &RateProblem,
        blocks: &[CMatrix],
        wp: &[f64],
        wc: &[f64],
    ) -> Result<Vec<CMatrix>, LinalgError> {
        let (_, invs) = self.raw_rates(problem, blocks, true)?;
        Ok(self.gradient_from_inverses(problem, &invs, wp, wc))
    }

    fn gradient_from_inverses(&self, problem: &RateProblem, invs: &[(CMatrix, CMatrix)], wp: &[f64], wc: &[f64]) -> Vec<CMatrix> {
        let scale = 1.0 / (problem.sigma2 * LN_2);
        let mut grad: Vec<CMatrix> = problem.dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
        for (p, (inv_own, inv_tot)) in invs.iter().enumerate() {
            let c_tot = inv_tot.scale(wc[p] * scale);
            let c_both = &c_tot + inv_own.scale(wp[p] * scale);
            grad[COMMON] += congruence(&problem.projected(p, COMMON).adjoint(), &c_tot);
            for q in 0..=p {
                let j = private_block(q);
                grad[j] += congruence(&problem.projected(p, j).adjoint(), &c_both);
                grad[j] -= self.com_lin[p][q].scale(wc[p]);
                if q < p {
                    grad[j] -= self.priv_lin[p][q].scale(wp[p]);
                }
            }
        }
        grad
    }
}

/// Smooth lower approximation of the minimum, `−(1/μ) log2 Σ 2^{−μ r}`,
/// and its gradient weights.
pub fn softmin(values: &[f64], mu: f64) -> (f64, Vec<f64>) {
    let rmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let terms: Vec<f64> = values.iter().map(|&r| (-mu * (r - rmin)).exp2()).collect();
    let s: f64 = terms.iter().sum();
    (rmin - s.log2() / mu, terms.into_iter().map(|t| t / s).collect())
}

/// Surrogate weighted sum rate as an inner-solver objective.
pub struct SurrogateObjective<'a> {
    pub problem: &'a RateProblem,
    pub point: &'a SurrogatePoint,
    /// Drops the common stream: its block is forced to zero and its rate
    /// leaves the objective.
    pub common_disabled: bool,
}

impl BlockObjective for SurrogateObjective<'_> {
    fn block_dims(&self) -> Vec<usize> {
        let mut d = self.problem.dims.clone();
        if self.common_disabled {
            d[COMMON] = 0;
        }
        d
    }

    fn evaluate(&self, blocks: &[CMatrix], mu: f64, gradient: bool) -> Result<Evaluation, LinalgError> {
        let padded;
        let blocks = if self.common_disabled {
            let mut b = blocks.to_vec();
            let d = self.problem.dims[COMMON];
            b[COMMON] = CMatrix::zeros(d, d);
            padded = b;
            &padded[..]
        } else {
            blocks
        };
        let pr = self.problem;
        let ((private, common), invs) = self.point.raw_rates(pr, blocks, gradient)?;
        let private_part: f64 = pr.eta.iter().zip(&private).map(|(e, r)| e * r).sum();
        let (exact, smoothed, wc) = if self.common_disabled {
            (private_part, private_part, vec![0.0; common.len()])
        } else {
            let rmin = common.iter().copied().fold(f64::INFINITY, f64::min);
            let (smin, weights) = if common.len() > 1 { softmin(&common, mu) } else { (rmin, vec![1.0]) };
            let wc = weights.iter().map(|w| w * pr.common_weight).collect();
            (pr.common_weight * rmin + private_part, pr.common_weight * smin + private_part, wc)
        };
        let gradient = gradient.then(|| {
            let mut g = self.point.gradient_from_inverses(pr, &invs, &pr.eta, &wc);
            if self.common_disabled {
                g[COMMON] = CMatrix::zeros(0, 0);
            }
            g
        });
        Ok(Evaluation { smoothed, exact, gradient })
    }

    fn smoothing_error(&self, mu: f64) -> f64 {
        let k = self.problem.num_users();
        if k > 1 && !self.common_disabled {
            self.problem.common_weight * (k as f64).log2() / mu
        } else {
            0.0
        }
    }
}
