//! Reference schemes: block diagonalization and the DPC sum capacity.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::channel::ChannelSet;
use crate::linalg::{c64, logdet_and_inverse, svd, CMatrix, LinalgError};
use crate::optimizer::inner::{maximize, zero_blocks, BlockObjective, Evaluation, InnerOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("user {user}: block-diagonalization null space has {dim} dimensions for {rx} receive antennas")]
    Overloaded { user: usize, dim: usize, rx: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Bd,
    Dpc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub scheme: Scheme,
    /// Per-user rates; only block diagonalization has them.
    pub user_rates: Option<Vec<f64>>,
    pub sum_rate: f64,
    pub power: f64,
    /// Block-diagonalization precoders per user (empty for DPC).
    pub precoders: Vec<CMatrix>,
}

/// Water-filling over parallel channels with gains `g_i` (SNR per unit power).
pub fn water_fill(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    idx.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut powers = vec![0.0; gains.len()];
    if budget <= 0.0 || idx.is_empty() {
        return powers;
    }
    let mut inv_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (n, &i) in idx.iter().enumerate() {
        inv_sum += 1.0 / gains[i];
        let candidate = (budget + inv_sum) / (n + 1) as f64;
        if candidate > 1.0 / gains[i] {
            level = candidate;
            active = n + 1;
        } else {
            break;
        }
    }
    for &i in &idx[..active] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    powers
}

fn validate(channels: &ChannelSet, pt: f64, sigma2: f64) -> Result<(), BaselineError> {
    if channels.num_users() == 0 {
        return Err(BaselineError::Input("no users".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(BaselineError::Input(format!("noise power {sigma2}")));
    }
    if !(pt >= 0.0) {
        return Err(BaselineError::Input(format!("power budget {pt}")));
    }
    Ok(())
}

/// Zero-forcing block diagonalization with one water level across all users' eigenmodes.
pub fn bd_sum_rate(channels: &ChannelSet, pt: f64, sigma2: f64) -> Result<BaselineResult, BaselineError> {
    validate(channels, pt, sigma2)?;
    let k = channels.num_users();
    let n = channels.n_tx();
    let mut modes = Vec::with_capacity(k);
    for user in 0..k {
        let rows: usize = (0..k).filter(|&u| u != user).map(|u| channels.h[u].nrows()).sum();
        let mut others = CMatrix::zeros(rows, n);
        let mut r = 0;
        for u in (0..k).filter(|&u| u != user) {
            let h = &channels.h[u];
            others.rows_mut(r, h.nrows()).copy_from(h);
            r += h.nrows();
        }
        let basis = crate::linalg::null_space(&others)?;
        let rx = channels.h[user].nrows();
        if basis.ncols() < rx {
            return Err(BaselineError::Overloaded { user, dim: basis.ncols(), rx });
        }
        let eff = &channels.h[user] * &basis;
        let dec = svd(&eff)?;
        let steer = &basis * dec.v.columns(0, dec.singular_values.len());
        modes.push((steer, dec.singular_values));
    }
    let gains: Vec<f64> = modes.iter().flat_map(|(_, s)| s.iter().map(|x| x * x / sigma2)).collect();
    let powers = water_fill(&gains, pt);
    let mut at = 0;
    let mut user_rates = Vec::with_capacity(k);
    let mut precoders = Vec::with_capacity(k);
    for (steer, s) in &modes {
        let p = &powers[at..at + s.len()];
        let g = &gains[at..at + s.len()];
        user_rates.push(p.iter().zip(g).map(|(p, g)| (1.0 + p * g).log2()).sum::<f64>());
        let mut pre = steer.clone();
        for (j, &pj) in p.iter().enumerate() {
            pre.column_mut(j).scale_mut(pj.sqrt());
        }
        precoders.push(pre);
        at += s.len();
    }
    Ok(BaselineResult {
        scheme: Scheme::Bd,
        sum_rate: user_rates.iter().sum(),
        user_rates: Some(user_rates),
        power: powers.iter().sum(),
        precoders,
    })
}

/// `log2 det(I_N + σ⁻² Σ_k H_kᴴ S_k H_k)` over dual-MAC covariances `S_k`.
struct DualMac<'a> {
    channels: &'a ChannelSet,
    sigma2: f64,
}

impl BlockObjective for DualMac<'_> {
    fn block_dims(&self) -> Vec<usize> {
        self.channels.rx_counts()
    }

    fn evaluate(&self, blocks: &[CMatrix], _mu: f64, gradient: bool) -> Result<Evaluation, LinalgError> {
        let n = self.channels.n_tx();
        let mut a = CMatrix::identity(n, n);
        let s = 1.0 / self.sigma2;
        for (h, b) in self.channels.h.iter().zip(blocks) {
            a += (h.adjoint() * b * h).scale(s);
        }
        let (value, inv) = logdet_and_inverse(&a)?;
        let gradient = gradient.then(|| {
            self.channels
                .h
                .iter()
                .map(|h| (h * &inv * h.adjoint()).scale(s / LN_2))
                .collect()
        });
        Ok(Evaluation { smoothed: value, exact: value, gradient })
    }
}

/// Gap tolerance, in bits, for the dual-MAC solve.
pub const DPC_GAP_TOL: f64 = 1e-4;
const DPC_MAX_ITER: usize = 5000;

/// DPC sum capacity of the broadcast channel through its dual MAC.
pub fn dpc_sum_capacity(channels: &ChannelSet, pt: f64, sigma2: f64) -> Result<BaselineResult, BaselineError> {
    validate(channels, pt, sigma2)?;
    let obj = DualMac { channels, sigma2 };
    let dims = obj.block_dims();
    let res = if pt > 0.0 {
        // start from equal power on every receive dimension
        let total: usize = dims.iter().sum();
        let start: Vec<CMatrix> = dims
            .iter()
            .map(|&d| CMatrix::identity(d, d) * c64(pt / total as f64, 0.0))
            .collect();
        maximize(&obj, &start, &InnerOptions::new(pt, DPC_GAP_TOL, DPC_MAX_ITER))?
    } else {
        maximize(&obj, &zero_blocks(&dims), &InnerOptions::new(0.0, DPC_GAP_TOL, DPC_MAX_ITER))?
    };
    let power = res.blocks.iter().map(crate::linalg::trace_re).sum();
    Ok(BaselineResult { scheme: Scheme::Dpc, user_rates: None, sum_rate: res.value.max(0.0), power, precoders: vec![] })
}
