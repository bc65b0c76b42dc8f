//! Successive null-space bases and the precoders built on them.

use thiserror::Error;

use crate::channel::ChannelSet;
use crate::linalg::{null_space, psd_eig, psd_sqrt_factor, numerical_rank, CMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullSpaceError {
    #[error("invalid user ordering {0:?}")]
    Ordering(Vec<usize>),
    #[error("null space of the first {users} users has dimension {got}, expected {expected}")]
    Dimension { users: usize, got: usize, expected: usize },
    #[error("covariance rank {rank} exceeds the bound {bound}")]
    RankViolation { rank: usize, bound: usize },
    #[error("basis has {basis} columns but the covariance block is {block}x{block}")]
    Shape { basis: usize, block: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub fn is_permutation(order: &[usize], k: usize) -> bool {
    if order.len() != k {
        return false;
    }
    let mut seen = vec![false; k];
    for &u in order {
        if u >= k || seen[u] {
            return false;
        }
        seen[u] = true;
    }
    true
}

/// Null-space bases `N_p` for each position `p` of a user ordering.
///
/// Position `p` serves user `order[p]`; its basis spans the null space of the
/// stacked channels of the users at positions `0..p` (identity for `p = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NullBasisSet {
    pub bases: Vec<CMatrix>,
    pub order: Vec<usize>,
}

impl NullBasisSet {
    pub fn num_users(&self) -> usize {
        self.order.len()
    }

    /// Dimension of the private covariance block at position `p`.
    pub fn block_dim(&self, p: usize) -> usize {
        self.bases[p].ncols()
    }

    pub fn basis(&self, p: usize) -> &CMatrix {
        &self.bases[p]
    }
}

pub fn successive_null_bases(channels: &ChannelSet, order: &[usize]) -> Result<NullBasisSet, NullSpaceError> {
    let k = channels.num_users();
    if !is_permutation(order, k) {
        return Err(NullSpaceError::Ordering(order.to_vec()));
    }
    let n = channels.n_tx();
    let mut bases = Vec::with_capacity(k);
    bases.push(CMatrix::identity(n, n));
    let mut stacked = CMatrix::zeros(0, n);
    for p in 1..k {
        let prev = &channels.h[order[p - 1]];
        let rows = stacked.nrows();
        stacked = stacked.resize_vertically(rows + prev.nrows(), crate::linalg::c64(0.0, 0.0));
        stacked.rows_mut(rows, prev.nrows()).copy_from(prev);
        let basis = null_space(&stacked)?;
        let expected = n.saturating_sub(stacked.nrows());
        if basis.ncols() != expected {
            return Err(NullSpaceError::Dimension { users: p, got: basis.ncols(), expected });
        }
        bases.push(basis);
    }
    Ok(NullBasisSet { bases, order: order.to_vec() })
}

/// `P = N X^{1/2}` with an `N × rank_bound` square-root factor.
pub fn sns_precoder(basis: &CMatrix, x: &CMatrix, rank_bound: usize) -> Result<CMatrix, NullSpaceError> {
    if basis.ncols() != x.nrows() || !x.is_square() {
        return Err(NullSpaceError::Shape { basis: basis.ncols(), block: x.nrows() });
    }
    let eig = psd_eig(x)?;
    let rank = numerical_rank(&eig.eigenvalues);
    if rank > rank_bound {
        return Err(NullSpaceError::RankViolation { rank, bound: rank_bound });
    }
    let f = psd_sqrt_factor(x, rank_bound)?;
    Ok(basis * f)
}
