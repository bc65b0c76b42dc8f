//! System configuration and the i.i.d. Rayleigh channel model with path loss.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{c64, svd, CMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("degenerate channel: all-zero matrix")]
    Degenerate,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Converts dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Everything a single link-level run needs. Powers are linear milliwatts.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Transmit antennas at the base station.
    pub n_tx: usize,
    /// Receive antennas per user.
    pub m_rx: Vec<usize>,
    pub sigma2_mw: f64,
    pub pt_mw: f64,
    /// User weights; must sum to one.
    pub eta: Vec<f64>,
    /// User distances in meters.
    pub dist_m: Vec<f64>,
    /// Outer SCA tolerance on the change of the surrogate optimum.
    pub epsilon: f64,
    /// Conditional-gradient gap at which the inner solver stops, in bits.
    pub inner_gap: f64,
    pub inner_max_iter: usize,
    pub outer_max_iter: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    /// Three users with `M = (2, 4, 4)`, `N = 10`, all at 50 m, 20 dBm budget.
    fn default() -> Self {
        SystemConfig {
            n_tx: 10,
            m_rx: vec![2, 4, 4],
            sigma2_mw: dbm_to_mw(-35.0),
            pt_mw: dbm_to_mw(20.0),
            eta: vec![1.0 / 3.0; 3],
            dist_m: vec![50.0; 3],
            epsilon: 1e-5,
            inner_gap: 1e-4,
            inner_max_iter: 2000,
            outer_max_iter: 200,
            seed: 0,
        }
    }
}

impl SystemConfig {
    /// Builds a configuration with equal weights and default solver settings.
    pub fn new(n_tx: usize, m_rx: Vec<usize>, dist_m: Vec<f64>, pt_dbm: f64) -> Self {
        let k = m_rx.len();
        SystemConfig {
            n_tx,
            eta: vec![1.0 / k as f64; k],
            m_rx,
            dist_m,
            pt_mw: dbm_to_mw(pt_dbm),
            ..SystemConfig::default()
        }
    }

    pub fn num_users(&self) -> usize {
        self.m_rx.len()
    }

    pub fn with_pt_dbm(&self, pt_dbm: f64) -> Self {
        SystemConfig { pt_mw: dbm_to_mw(pt_dbm), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = self.m_rx.len();
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if k == 0 {
            return bad("at least one user is required".into());
        }
        if self.eta.len() != k || self.dist_m.len() != k {
            return bad(format!(
                "{} users but {} weights and {} distances",
                k,
                self.eta.len(),
                self.dist_m.len()
            ));
        }
        if self.m_rx.contains(&0) {
            return bad("every user needs at least one receive antenna".into());
        }
        let total: usize = self.m_rx.iter().sum();
        if self.n_tx < total {
            return bad(format!("overloaded system: N = {} < sum M_k = {}", self.n_tx, total));
        }
        if self.eta.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return bad("weights must lie in [0, 1]".into());
        }
        let s: f64 = self.eta.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {s}, expected 1"));
        }
        if !(self.sigma2_mw > 0.0 && self.sigma2_mw.is_finite()) {
            return bad("noise power must be positive".into());
        }
        if !(self.pt_mw >= 0.0 && self.pt_mw.is_finite()) {
            return bad("power budget must be non-negative".into());
        }
        if self.dist_m.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("distances must be positive".into());
        }
        if !(self.epsilon > 0.0) || !(self.inner_gap > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 {
            return bad("iteration caps must be positive".into());
        }
        Ok(())
    }
}

/// Channel matrices `H_k` (`M_k × N`) and their path losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMatrix>,
    pub path_loss: Vec<f64>,
}

impl ChannelSet {
    /// Wraps given channel matrices, repairing row rank where needed.
    pub fn from_matrices(h: Vec<CMatrix>) -> Result<Self, ChannelError> {
        let k = h.len();
        let h = h
            .into_iter()
            .map(|m| ensure_full_row_rank(&m).map(|(e, _)| e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChannelSet { h, path_loss: vec![1.0; k] })
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn n_tx(&self) -> usize {
        self.h[0].ncols()
    }

    /// Effective receive antennas per user.
    pub fn rx_counts(&self) -> Vec<usize> {
        self.h.iter().map(|m| m.nrows()).collect()
    }

    /// Common-stream dimension, the smallest receive-antenna count.
    pub fn common_dim(&self) -> usize {
        self.rx_counts().into_iter().min().unwrap_or(0)
    }

    /// Little-endian bytes of every entry, for hashing.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for m in &self.h {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                    out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
                }
            }
        }
        out
    }
}

/// Draws `H_k = G_k / sqrt(L_k)` with `[G_k]_ij ~ CN(0, 1)` and `L_k = d_k²`.
///
/// The generator is ChaCha20 keyed by `seed`; user `k` reads from stream `k`,
/// entries in row-major order, real part before imaginary part. Each user's
/// draw is therefore independent of the other users and of scheduling.
pub fn generate_channel(config: &SystemConfig, seed: u64) -> Result<ChannelSet, ChannelError> {
    let n = config.n_tx;
    let mut h = Vec::with_capacity(config.num_users());
    let mut path_loss = Vec::with_capacity(config.num_users());
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for (k, (&m, &d)) in config.m_rx.iter().zip(&config.dist_m).enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let loss = d * d;
        let inv = 1.0 / loss.sqrt();
        let mut g = CMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                g[(i, j)] = c64(re * scale * inv, im * scale * inv);
            }
        }
        let (eff, _) = ensure_full_row_rank(&g)?;
        h.push(eff);
        path_loss.push(loss);
    }
    Ok(ChannelSet { h, path_loss })
}

/// Returns `h` unchanged when it has full row rank; otherwise `Σ_r V_rᴴ`,
/// the `r × N` matrix carrying the same row space and Gram matrix `HᴴH`.
pub fn ensure_full_row_rank(h: &CMatrix) -> Result<(CMatrix, usize), ChannelError> {
    let dec = svd(h)?;
    let r = dec.rank();
    if r == 0 {
        return Err(ChannelError::Degenerate);
    }
    if r == h.nrows() {
        return Ok((h.clone(), r));
    }
    let mut eff = dec.v.columns(0, r).adjoint();
    for i in 0..r {
        eff.row_mut(i).scale_mut(dec.singular_values[i]);
    }
    Ok((eff, r))
}
