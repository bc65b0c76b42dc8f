//! Achievable rates of the rate-splitting SNS scheme, in bits per channel use.
//!
//! Every user first decodes the common stream treating its own and all
//! earlier private streams as noise, removes it, then decodes its private
//! stream with the earlier users' streams as noise. Later users' streams are
//! absent by construction of the null-space bases.

use thiserror::Error;

use crate::channel::{ChannelSet, SystemConfig};
use crate::linalg::{congruence, logdet_chol, trace_re, CMatrix, LinalgError};
use crate::nullspace::NullBasisSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise power must be positive, got {0}")]
    Domain(f64),
    #[error("log-determinant argument is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Eigenbases that restrict the covariances to rank `M` and `M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbases {
    /// `U_c`, `N × M`.
    pub common: CMatrix,
    /// `U_p` per ordering position, `n_p × M_p`.
    pub private: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    /// Blocks are `Q_c` (`N × N`) and `X_p` (`n_p × n_p`).
    Relaxed,
    /// Blocks are `X̃_c` (`M × M`) and `X̃_p` (`M_p × M_p`).
    Reformulated(Eigenbases),
}

/// Covariance blocks of a candidate design, private blocks indexed by
/// position in `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSolution {
    pub order: Vec<usize>,
    pub common: CMatrix,
    pub private: Vec<CMatrix>,
    pub structure: Structure,
}

/// Transmit covariances `Q_c` and `Q_p` (all `N × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCovariances {
    pub common: CMatrix,
    pub private: Vec<CMatrix>,
}

impl CovarianceSolution {
    /// All-zero relaxed solution shaped for `bases`.
    pub fn zeros_relaxed(bases: &NullBasisSet) -> Self {
        let n = bases.bases[0].nrows();
        CovarianceSolution {
            order: bases.order.clone(),
            common: CMatrix::zeros(n, n),
            private: (0..bases.num_users()).map(|p| CMatrix::zeros(bases.block_dim(p), bases.block_dim(p))).collect(),
            structure: Structure::Relaxed,
        }
    }

    pub fn zeros_reformulated(bases: &NullBasisSet, eig: Eigenbases) -> Self {
        let m = eig.common.ncols();
        CovarianceSolution {
            order: bases.order.clone(),
            common: CMatrix::zeros(m, m),
            private: eig.private.iter().map(|u| CMatrix::zeros(u.ncols(), u.ncols())).collect(),
            structure: Structure::Reformulated(eig),
        }
    }

    /// Sum of block traces.
    pub fn power(&self) -> f64 {
        trace_re(&self.common) + self.private.iter().map(trace_re).sum::<f64>()
    }

    pub fn is_reformulated(&self) -> bool {
        matches!(self.structure, Structure::Reformulated(_))
    }

    /// Matrices `T_c`, `T_p` with `Q_c = T_c B_c T_cᴴ` and `Q_p = T_p B_p T_pᴴ`.
    pub fn lifts(&self, bases: &NullBasisSet) -> Result<(CMatrix, Vec<CMatrix>), RateError> {
        lifts_for(&self.structure, bases)
    }
}

pub(crate) fn lifts_for(structure: &Structure, bases: &NullBasisSet) -> Result<(CMatrix, Vec<CMatrix>), RateError> {
    let n = bases.bases[0].nrows();
    match structure {
        Structure::Relaxed => Ok((CMatrix::identity(n, n), bases.bases.clone())),
        Structure::Reformulated(eig) => {
            if eig.private.len() != bases.num_users() {
                return Err(RateError::Dimension("eigenbasis count differs from user count".into()));
            }
            if eig.common.nrows() != n {
                return Err(RateError::Dimension("common eigenbasis has wrong row count".into()));
            }
            let mut private = Vec::with_capacity(eig.private.len());
            for (p, u) in eig.private.iter().enumerate() {
                if u.nrows() != bases.block_dim(p) {
                    return Err(RateError::Dimension(format!("eigenbasis {p} has {} rows", u.nrows())));
                }
                private.push(bases.basis(p) * u);
            }
            Ok((eig.common.clone(), private))
        }
    }
}

pub fn effective_covariances(sol: &CovarianceSolution, bases: &NullBasisSet) -> Result<EffectiveCovariances, RateError> {
    if sol.private.len() != bases.num_users() || sol.order != bases.order {
        return Err(RateError::Dimension("solution and bases disagree on users or ordering".into()));
    }
    let (tc, tp) = sol.lifts(bases)?;
    let check = |t: &CMatrix, b: &CMatrix, what: &str| {
        if t.ncols() != b.nrows() || !b.is_square() {
            Err(RateError::Dimension(format!("{what} block is {}x{}, lift has {} columns", b.nrows(), b.ncols(), t.ncols())))
        } else {
            Ok(())
        }
    };
    check(&tc, &sol.common, "common")?;
    let common = congruence(&tc, &sol.common);
    let mut private = Vec::with_capacity(tp.len());
    for (p, (t, b)) in tp.iter().zip(&sol.private).enumerate() {
        check(t, b, &format!("private {p}"))?;
        private.push(congruence(t, b));
    }
    Ok(EffectiveCovariances { common, private })
}

fn check_noise(sigma2: f64) -> Result<(), RateError> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(RateError::Domain(sigma2))
    }
}

// log2 det(σ² I + H S Hᴴ)
fn noisy_logdet(h: &CMatrix, s: &CMatrix, sigma2: f64) -> Result<f64, RateError> {
    let mut a = congruence(h, s);
    for i in 0..a.nrows() {
        a[(i, i)].re += sigma2;
    }
    logdet_chol(&a).ok_or(RateError::NotPositiveDefinite)
}

fn sum_of(qs: &[CMatrix], n: usize) -> CMatrix {
    qs.iter().fold(CMatrix::zeros(n, n), |acc, q| acc + q)
}

/// Private rate of the user at position `p`; `h` and `qs` are positional.
pub fn private_rate(p: usize, h: &[&CMatrix], qs: &[CMatrix], sigma2: f64) -> Result<f64, RateError> {
    check_noise(sigma2)?;
    let n = h[p].ncols();
    let before = sum_of(&qs[..p], n);
    let with_own = &before + &qs[p];
    let r = noisy_logdet(h[p], &with_own, sigma2)? - noisy_logdet(h[p], &before, sigma2)?;
    Ok(r.max(0.0))
}

/// Rate at which the user at position `p` can decode the common stream.
pub fn common_rate_at_user(p: usize, h: &[&CMatrix], qc: &CMatrix, qs: &[CMatrix], sigma2: f64) -> Result<f64, RateError> {
    check_noise(sigma2)?;
    let n = h[p].ncols();
    let interference = sum_of(&qs[..=p], n);
    let total = &interference + qc;
    let r = noisy_logdet(h[p], &total, sigma2)? - noisy_logdet(h[p], &interference, sigma2)?;
    Ok(r.max(0.0))
}

/// Rates of one design; per-user vectors are indexed by user label.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub private: Vec<f64>,
    pub common_at_user: Vec<f64>,
    pub common: f64,
    pub wsr: f64,
    pub sum: f64,
}

/// `Σ_k η_k²`, the weight of the common rate.
pub fn common_weight(eta: &[f64]) -> f64 {
    eta.iter().map(|e| e * e).sum()
}

pub fn evaluate(
    sol: &CovarianceSolution,
    channels: &ChannelSet,
    bases: &NullBasisSet,
    config: &SystemConfig,
) -> Result<RateReport, RateError> {
    let k = channels.num_users();
    if config.eta.len() != k {
        return Err(RateError::Dimension(format!("{} weights for {k} users", config.eta.len())));
    }
    let cov = effective_covariances(sol, bases)?;
    let h: Vec<&CMatrix> = sol.order.iter().map(|&u| &channels.h[u]).collect();
    let mut private = vec![0.0; k];
    let mut common_at_user = vec![0.0; k];
    for p in 0..k {
        let user = sol.order[p];
        private[user] = private_rate(p, &h, &cov.private, config.sigma2_mw)?;
        common_at_user[user] = common_rate_at_user(p, &h, &cov.common, &cov.private, config.sigma2_mw)?;
    }
    Ok(report_from_parts(private, common_at_user, &config.eta))
}

pub(crate) fn report_from_parts(private: Vec<f64>, common_at_user: Vec<f64>, eta: &[f64]) -> RateReport {
    let common = common_at_user.iter().copied().fold(f64::INFINITY, f64::min);
    let wsr = common_weight(eta) * common + eta.iter().zip(&private).map(|(e, r)| e * r).sum::<f64>();
    let sum = common + private.iter().sum::<f64>();
    RateReport { private, common_at_user, common, wsr, sum }
}
