//! Receive-side form of the rate expressions used inside the solvers.
//!
//! With lifts `T_j` (block `j = 0` common, `j = 1 + q` private at position
//! `q`), user `p` only ever sees `W_{p,j} B_j W_{p,j}ᴴ` where
//! `W_{p,j} = H_p T_j` is `M_p × d_j`. Users at positions after `p` do not
//! appear: their lifts lie in the null space of `H_p`.

use crate::channel::{ChannelSet, SystemConfig};
use crate::linalg::{congruence, logdet_and_inverse, logdet_chol, CMatrix, LinalgError};
use crate::nullspace::NullBasisSet;
use crate::rates::{common_weight, lifts_for, RateError, Structure};

/// Block index of the common covariance.
pub const COMMON: usize = 0;

/// Block index of the private covariance at position `p`.
#[inline]
pub fn private_block(p: usize) -> usize {
    p + 1
}

#[derive(Debug, Clone)]
pub struct RateProblem {
    pub sigma2: f64,
    /// Weights by position.
    pub eta: Vec<f64>,
    pub common_weight: f64,
    pub budget: f64,
    pub dims: Vec<usize>,
    pub order: Vec<usize>,
    /// `proj[p][j] = H_p T_j` for `j ∈ 0..=p+1`.
    proj: Vec<Vec<CMatrix>>,
}

/// Per-user rates by position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalRates {
    pub private: Vec<f64>,
    pub common_at_user: Vec<f64>,
}

pub(crate) struct LogDetTerm {
    pub value: f64,
    pub inverse: Option<CMatrix>,
}

impl RateProblem {
    pub fn new(
        channels: &ChannelSet,
        bases: &NullBasisSet,
        structure: &Structure,
        config: &SystemConfig,
    ) -> Result<Self, RateError> {
        let k = channels.num_users();
        if bases.num_users() != k || config.eta.len() != k {
            return Err(RateError::Dimension("users, bases and weights disagree".into()));
        }
        if !(config.sigma2_mw > 0.0) {
            return Err(RateError::Domain(config.sigma2_mw));
        }
        let (tc, tp) = lifts_for(structure, bases)?;
        let order = bases.order.clone();
        let mut dims = vec![tc.ncols()];
        dims.extend(tp.iter().map(|t| t.ncols()));
        let proj = (0..k)
            .map(|p| {
                let h = &channels.h[order[p]];
                let mut row = vec![h * &tc];
                row.extend(tp[..=p].iter().map(|t| h * t));
                row
            })
            .collect();
        let eta: Vec<f64> = order.iter().map(|&u| config.eta[u]).collect();
        Ok(RateProblem {
            sigma2: config.sigma2_mw,
            common_weight: common_weight(&config.eta),
            eta,
            budget: config.pt_mw,
            dims,
            order,
            proj,
        })
    }

    pub fn num_users(&self) -> usize {
        self.proj.len()
    }

    pub fn rx(&self, p: usize) -> usize {
        self.proj[p][0].nrows()
    }

    pub fn projected(&self, p: usize, j: usize) -> &CMatrix {
        &self.proj[p][j]
    }

    /// `W_{p,j} B_j W_{p,j}ᴴ` for every block user `p` sees.
    pub(crate) fn received(&self, p: usize, blocks: &[CMatrix]) -> Vec<CMatrix> {
        (0..=p + 1).map(|j| congruence(&self.proj[p][j], &blocks[j])).collect()
    }

    /// `log2 det(I + S / σ²)` and optionally the inverse of its argument.
    pub(crate) fn logdet_term(&self, s: &CMatrix, inverse: bool) -> Result<LogDetTerm, LinalgError> {
        let m = s.nrows();
        let mut a = s.scale(1.0 / self.sigma2);
        for i in 0..m {
            a[(i, i)].re += 1.0;
        }
        if inverse {
            let (value, inv) = logdet_and_inverse(&a)?;
            Ok(LogDetTerm { value, inverse: Some(inv) })
        } else {
            let value = logdet_chol(&a).ok_or(LinalgError::Singular)?;
            Ok(LogDetTerm { value, inverse: None })
        }
    }

    /// Receive-side covariances of user `p`: private interference
    /// (positions `< p`), plus own stream, plus common stream.
    pub(crate) fn user_sums(&self, p: usize, blocks: &[CMatrix]) -> (CMatrix, CMatrix, CMatrix) {
        let y = self.received(p, blocks);
        let m = self.rx(p);
        let mut before = CMatrix::zeros(m, m);
        for q in 0..p {
            before += &y[private_block(q)];
        }
        let own = &before + &y[private_block(p)];
        let total = &own + &y[COMMON];
        (before, own, total)
    }

    pub fn exact_rates(&self, blocks: &[CMatrix]) -> Result<PositionalRates, LinalgError> {
        let k = self.num_users();
        let mut private = vec![0.0; k];
        let mut common = vec![0.0; k];
        for p in 0..k {
            let (before, own, total) = self.user_sums(p, blocks);
            let lb = self.logdet_term(&before, false)?.value;
            let lo = self.logdet_term(&own, false)?.value;
            let lt = self.logdet_term(&total, false)?.value;
            private[p] = (lo - lb).max(0.0);
            common[p] = (lt - lo).max(0.0);
        }
        Ok(PositionalRates { private, common_at_user: common })
    }

    pub fn weighted(&self, rates: &PositionalRates) -> (f64, f64) {
        let rc = rates.common_at_user.iter().copied().fold(f64::INFINITY, f64::min);
        let wsr = self.common_weight * rc + self.eta.iter().zip(&rates.private).map(|(e, r)| e * r).sum::<f64>();
        let sum = rc + rates.private.iter().sum::<f64>();
        (wsr, sum)
    }

    /// Exact weighted sum rate and equal-weight sum rate.
    pub fn exact_objective(&self, blocks: &[CMatrix]) -> Result<(f64, f64), LinalgError> {
        Ok(self.weighted(&self.exact_rates(blocks)?))
    }
}
