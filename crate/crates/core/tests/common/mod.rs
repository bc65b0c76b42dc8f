//! Independent oracles and random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sns_mimo::channel::{generate_channel, ChannelSet, SystemConfig};
use sns_mimo::linalg::{c64, hermitian_part, logdet_psd, svd, trace_re, CMatrix};
use sns_mimo::nullspace::{successive_null_bases, NullBasisSet};
use sns_mimo::optimizer::{build_reformulation, permutations};
use sns_mimo::rates::{CovarianceSolution, Eigenbases, Structure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c64(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

pub fn random_hermitian(r: &mut impl Rng, n: usize) -> CMatrix {
    hermitian_part(&random_matrix(r, n, n))
}

pub fn random_psd(r: &mut impl Rng, n: usize, rank: usize) -> CMatrix {
    let a = random_matrix(r, n, rank);
    &a * a.adjoint()
}

/// `M = (2, 4, 4)`, `N = 10` at 50 m.
pub fn equal_distances(pt_dbm: f64) -> SystemConfig {
    SystemConfig::new(10, vec![2, 4, 4], vec![50.0; 3], pt_dbm)
}

/// `M = (2, 4, 4)`, `N = 10` at 250, 150 and 50 m.
pub fn unequal_distances(pt_dbm: f64) -> SystemConfig {
    SystemConfig::new(10, vec![2, 4, 4], vec![250.0, 150.0, 50.0], pt_dbm)
}

/// Channel and bases for a seed, cycling through the orderings.
pub fn instance(cfg: &SystemConfig, seed: u64) -> (ChannelSet, NullBasisSet) {
    let ch = generate_channel(cfg, seed).unwrap();
    let orders = permutations(cfg.num_users());
    let bases = successive_null_bases(&ch, &orders[seed as usize % orders.len()]).unwrap();
    (ch, bases)
}

/// Block sizes of the relaxed problem: `N`, then `n_p` per position.
pub fn relaxed_dims(bases: &NullBasisSet) -> Vec<usize> {
    let mut d = vec![bases.bases[0].nrows()];
    d.extend((0..bases.num_users()).map(|p| bases.block_dim(p)));
    d
}

/// PSD blocks of random rank with total trace a random fraction of `budget`.
pub fn random_blocks(r: &mut impl Rng, dims: &[usize], budget: f64) -> Vec<CMatrix> {
    let raw: Vec<CMatrix> = dims
        .iter()
        .map(|&d| {
            let rank = r.random_range(1..=d.max(1));
            random_psd(r, d, rank)
        })
        .collect();
    let total: f64 = raw.iter().map(trace_re).sum();
    let scale = budget * r.random_range(0.05..1.0) / total;
    raw.into_iter().map(|b| b.scale(scale)).collect()
}

pub fn solution(bases: &NullBasisSet, blocks: Vec<CMatrix>, structure: Structure) -> CovarianceSolution {
    let mut it = blocks.into_iter();
    let common = it.next().unwrap();
    CovarianceSolution { order: bases.order.clone(), common, private: it.collect(), structure }
}

pub fn blocks_of(sol: &CovarianceSolution) -> Vec<CMatrix> {
    let mut b = vec![sol.common.clone()];
    b.extend(sol.private.iter().cloned());
    b
}

pub fn random_eigenbases(r: &mut impl Rng, ch: &ChannelSet, bases: &NullBasisSet) -> Eigenbases {
    let blocks = random_blocks(r, &relaxed_dims(bases), 100.0);
    build_reformulation(&solution(bases, blocks, Structure::Relaxed), ch).unwrap().eigenbases
}

/// Single-user MIMO capacity by bisection on the water level.
pub fn capacity_oracle(h: &CMatrix, pt: f64, sigma2: f64) -> f64 {
    let gains: Vec<f64> = svd(h).unwrap().singular_values.iter().map(|s| s * s / sigma2).filter(|&g| g > 0.0).collect();
    let used = |w: f64| gains.iter().map(|g| (w - 1.0 / g).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, pt + gains.iter().map(|g| 1.0 / g).fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) > pt {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    gains.iter().map(|g| (1.0 + (lo - 1.0 / g).max(0.0) * g).log2()).sum()
}

/// `log2 det(σ²I + H_p (Σ_{k<upto} N_k X_k N_kᴴ) H_pᴴ)` from explicit covariances;
/// `x[k + 1]` is the private block at position `k`.
pub fn interference_logdet(ch: &ChannelSet, bases: &NullBasisSet, x: &[CMatrix], p: usize, upto: usize, sigma2: f64) -> f64 {
    let h = &ch.h[bases.order[p]];
    let n = h.ncols();
    let mut q = CMatrix::zeros(n, n);
    for k in 0..upto {
        let b = bases.basis(k);
        q += b * &x[k + 1] * b.adjoint();
    }
    let m = h.nrows();
    logdet_psd(&(CMatrix::identity(m, m).scale(sigma2) + h * q * h.adjoint())).unwrap()
}

/// Central-difference gradient of `f` at Hermitian `x`, as the Hermitian
/// matrix `C` with `df = tr(C dX)`.
pub fn finite_difference_gradient(f: impl Fn(&CMatrix) -> f64, x: &CMatrix, step: f64) -> CMatrix {
    let d = x.nrows();
    let deriv = |e: &CMatrix| (f(&(x + e.scale(step))) - f(&(x - e.scale(step)))) / (2.0 * step);
    let mut c = CMatrix::zeros(d, d);
    for i in 0..d {
        let mut e = CMatrix::zeros(d, d);
        e[(i, i)] = c64(1.0, 0.0);
        c[(i, i)] = c64(deriv(&e), 0.0);
        for j in i + 1..d {
            let mut er = CMatrix::zeros(d, d);
            er[(i, j)] = c64(1.0, 0.0);
            er[(j, i)] = c64(1.0, 0.0);
            let mut ei = CMatrix::zeros(d, d);
            ei[(i, j)] = c64(0.0, 1.0);
            ei[(j, i)] = c64(0.0, -1.0);
            let (re, im) = (deriv(&er) / 2.0, deriv(&ei) / 2.0);
            c[(i, j)] = c64(re, im);
            c[(j, i)] = c64(re, -im);
        }
    }
    c
}

/// Exhaustive weighted sum rate over diagonal covariances for two
/// single-antenna users on `H_1 = [a, 0]`, `H_2 = [0, b]`, user 1 first.
///
/// Powers on the grid `pt / steps`: common on antennas 1 and 2, user 1
/// private on antennas 1 and 2, user 2 private on antenna 2 (its null
/// space). Leftover power goes to user 2, whose weighted rate grows with it.
pub fn diagonal_grid_wsr(a: f64, b: f64, pt: f64, sigma2: f64, steps: usize) -> f64 {
    let (g1, g2) = (a * a / sigma2, b * b / sigma2);
    let unit = pt / steps as f64;
    let mut best = 0.0f64;
    for c1 in 0..=steps {
        for c2 in 0..=steps - c1 {
            for p11 in 0..=steps - c1 - c2 {
                for p12 in 0..=steps - c1 - c2 - p11 {
                    let p2 = (steps - c1 - c2 - p11 - p12) as f64 * unit;
                    let (c1, c2, p11, p12) = (c1 as f64 * unit, c2 as f64 * unit, p11 as f64 * unit, p12 as f64 * unit);
                    let r1 = (1.0 + g1 * p11).log2();
                    let r1c = (1.0 + g1 * (c1 + p11)).log2() - r1;
                    let r2 = (1.0 + g2 * (p12 + p2)).log2() - (1.0 + g2 * p12).log2();
                    let r2c = (1.0 + g2 * (c2 + p12 + p2)).log2() - (1.0 + g2 * (p12 + p2)).log2();
                    best = best.max(0.5 * r1c.min(r2c) + 0.5 * (r1 + r2));
                }
            }
        }
    }
    best
}
