//! Dense complex-matrix kernels used throughout the crate.
//!
//! Decompositions are delegated to `nalgebra`; this module adds the
//! conventions the rest of the code relies on: descending ordering,
//! deterministic column phases, the numerical rank rule, base-2
//! log-determinants and PSD clamping.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use thiserror::Error;

pub use nalgebra::Complex;

/// Complex scalar.
pub type C64 = Complex<f64>;

/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;

/// Relative threshold below which a singular value or eigenvalue counts as zero.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Absolute threshold used when the leading value itself is zero.
pub const RANK_ABS_TOL: f64 = 1e-12;
/// Negative eigenvalues down to `-PSD_CLAMP_TOL * max(1, ||A||_F)` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

const EIG_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is singular")]
    Singular,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("decomposition did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Builds a matrix from row-major entries, rejecting NaN/Inf.
pub fn cmatrix(rows: usize, cols: usize, row_major: &[C64]) -> Result<CMatrix> {
    if row_major.len() != rows * cols {
        return Err(LinalgError::Dimension(format!(
            "{} entries for a {rows}x{cols} matrix",
            row_major.len()
        )));
    }
    let m = CMatrix::from_row_slice(rows, cols, row_major);
    ensure_finite(&m)?;
    Ok(m)
}

/// Builds a real-valued complex matrix from row-major entries.
pub fn cmatrix_real(rows: usize, cols: usize, row_major: &[f64]) -> Result<CMatrix> {
    let data: Vec<C64> = row_major.iter().map(|&x| c64(x, 0.0)).collect();
    cmatrix(rows, cols, &data)
}

pub fn ensure_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Real diagonal matrix.
pub fn diag_real(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| c64(v, 0.0)),
    ))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn trace_re(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Re tr(A B) without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let x = a[(i, j)] * b[(j, i)];
            acc += x.re;
        }
    }
    acc
}

/// Frobenius inner product Re tr(Aᴴ B).
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `A X Aᴴ`.
pub fn congruence(a: &CMatrix, x: &CMatrix) -> CMatrix {
    let ax = a * x;
    ax * a.adjoint()
}

/// Numerical rank of a descending list of non-negative values.
pub fn numerical_rank(values_desc: &[f64]) -> usize {
    let lead = values_desc.first().copied().unwrap_or(0.0);
    if lead <= RANK_ABS_TOL {
        return 0;
    }
    let thr = RANK_REL_TOL * lead;
    values_desc.iter().filter(|&&v| v > thr).count()
}

/// Rotates each column so its largest-magnitude entry is real and non-negative.
/// Returns the applied unit phases.
fn fix_column_phases(m: &mut CMatrix) -> Vec<C64> {
    let mut phases = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..m.nrows() {
            // strict comparison keeps the first index among equal magnitudes
            let a = m[(i, j)].norm();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = i;
            }
        }
        let z = m[(best, j)];
        let phase = if z.norm() > 0.0 { (z / z.norm()).conj() } else { c64(1.0, 0.0) };
        for i in 0..m.nrows() {
            m[(i, j)] *= phase;
        }
        phases.push(phase);
    }
    phases
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermEig {
    /// V diag(λ) Vᴴ.
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * v.adjoint()
    }
}

pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(HermEig { eigenvalues: vec![], eigenvectors: CMatrix::zeros(0, 0) });
    }
    let sym = hermitian_part(a);
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, MAX_SWEEPS).ok_or(LinalgError::NoConvergence)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_phases(&mut eigenvectors);
    Ok(HermEig { eigenvalues, eigenvectors })
}

/// Singular value decomposition `A = U Σ V[:, ..p]ᴴ` with `p = min(m, n)`.
///
/// `u` is `m × p`; `v` is the full `n × n` unitary whose trailing columns span
/// the null space of `A` once the rank is known.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let p = self.singular_values.len();
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.columns(0, p).adjoint()
    }

    /// Columns of `V` beyond the numerical rank.
    pub fn null_space(&self) -> CMatrix {
        let r = self.rank();
        let n = self.v.nrows();
        self.v.columns(r, n - r).into_owned()
    }
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    ensure_finite(a)?;
    let (m, n) = a.shape();
    if m > n {
        // A = (Aᴴ)ᴴ; the wide routine yields a full V for Aᴴ, which is U for A.
        let t = svd_wide(&a.adjoint())?;
        let p = n;
        return Ok(Svd {
            u: t.v.columns(0, p).into_owned(),
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    svd_wide(a)
}

// m <= n: pad with zero rows to n x n so the decomposition returns a full V.
fn svd_wide(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(Svd { u: CMatrix::zeros(m, 0), singular_values: vec![], v: CMatrix::zeros(0, 0) });
    }
    let mut padded = CMatrix::zeros(n, n);
    padded.rows_mut(0, m).copy_from(a);
    let dec = SVD::try_new(padded, true, true, EIG_EPS, MAX_SWEEPS).ok_or(LinalgError::NoConvergence)?;
    let u_p = dec.u.ok_or(LinalgError::NoConvergence)?;
    let vt = dec.v_t.ok_or(LinalgError::NoConvergence)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]).then(i.cmp(&j)));
    let mut v = CMatrix::zeros(n, n);
    let mut u_full = CMatrix::zeros(n, n);
    let mut sv = vec![0.0; n];
    for (dst, &src) in idx.iter().enumerate() {
        v.set_column(dst, &vt.row(src).adjoint());
        u_full.set_column(dst, &u_p.column(src));
        sv[dst] = dec.singular_values[src];
    }
    let phases = fix_column_phases(&mut v);
    for (j, ph) in phases.iter().enumerate() {
        let mut col = u_full.column_mut(j);
        col *= *ph;
    }
    let rank = numerical_rank(&sv);
    let mut u = CMatrix::zeros(m, m);
    // Leading left vectors of a zero-padded matrix vanish on the padding rows.
    u.columns_mut(0, rank).copy_from(&u_full.view((0, 0), (m, rank)));
    if rank < m {
        // Complete U with directions orthogonal to its leading columns.
        let lead = u.columns(0, rank).into_owned();
        let comp = orthonormal_complement(&lead, m)?;
        u.columns_mut(rank, m - rank).copy_from(&comp.columns(0, m - rank));
    }
    sv.truncate(m);
    Ok(Svd { u, singular_values: sv, v })
}

// Orthonormal basis of the complement of span(cols) in C^m via the projector's eigenvectors.
fn orthonormal_complement(cols: &CMatrix, m: usize) -> Result<CMatrix> {
    let proj = CMatrix::identity(m, m) - cols * cols.adjoint();
    let eig = herm_eig(&proj)?;
    let k = m - cols.ncols();
    Ok(eig.eigenvectors.columns(0, k).into_owned())
}

/// Orthonormal basis of the null space of `a` (`n × (n - rank)`).
pub fn null_space(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() == 0 {
        return Ok(CMatrix::identity(a.ncols(), a.ncols()));
    }
    Ok(svd(a)?.null_space())
}

/// Smallest eigenvalue must exceed `-PSD_CLAMP_TOL * max(1, ||A||_F)`.
fn psd_tolerance(a: &CMatrix) -> f64 {
    PSD_CLAMP_TOL * a.norm().max(1.0)
}

/// Eigendecomposition with negative eigenvalues clamped to zero.
pub fn psd_eig(a: &CMatrix) -> Result<HermEig> {
    let mut eig = herm_eig(a)?;
    let tol = psd_tolerance(a);
    if let Some(&min) = eig.eigenvalues.last() {
        if min < -tol {
            return Err(LinalgError::NotPsd(min));
        }
    }
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// Nearest PSD matrix after clamping tiny negative eigenvalues.
pub fn clamp_psd(a: &CMatrix) -> Result<CMatrix> {
    Ok(psd_eig(a)?.reconstruct())
}

/// log₂ det of a Hermitian positive-definite matrix via Cholesky.
///
/// Falls back to an eigenvalue check so that indefinite input is reported as
/// [`LinalgError::NotPsd`] and singular PSD input as [`LinalgError::Singular`].
pub fn logdet_psd(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!("log-det of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    ensure_finite(a)?;
    if let Some(v) = logdet_chol(a) {
        return Ok(v);
    }
    let eig = herm_eig(a)?;
    let min = eig.eigenvalues.last().copied().unwrap_or(1.0);
    if min < -psd_tolerance(a) {
        Err(LinalgError::NotPsd(min))
    } else if min <= 0.0 {
        Err(LinalgError::Singular)
    } else {
        Ok(eig.eigenvalues.iter().map(|l| l.log2()).sum())
    }
}

// Complex Cholesky takes square roots of negative pivots instead of failing,
// so a valid factor must have real positive diagonal entries.
fn positive_cholesky(a: &CMatrix) -> Option<(Cholesky<C64, nalgebra::Dyn>, f64)> {
    let chol = Cholesky::new(hermitian_part(a))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-8 * d.re {
            return None;
        }
        acc += 2.0 * d.re.log2();
    }
    Some((chol, acc))
}

/// Cholesky-based log₂ det; `None` when the factorization breaks down.
pub fn logdet_chol(a: &CMatrix) -> Option<f64> {
    positive_cholesky(a).map(|(_, v)| v)
}

/// log₂ det and inverse of a Hermitian positive-definite matrix.
pub fn logdet_and_inverse(a: &CMatrix) -> Result<(f64, CMatrix)> {
    let (chol, acc) = positive_cholesky(a).ok_or(LinalgError::Singular)?;
    let inv = hermitian_part(&chol.inverse());
    Ok((acc, inv))
}

/// Rectangular factor `F` with `r` columns such that `F Fᴴ` is the best
/// rank-`r` PSD approximation of `x`; columns follow descending eigenvalues.
pub fn psd_sqrt_factor(x: &CMatrix, r: usize) -> Result<CMatrix> {
    if r == 0 {
        return Err(LinalgError::Argument("rank bound must be positive".into()));
    }
    let eig = psd_eig(x)?;
    let n = x.nrows();
    let mut f = CMatrix::zeros(n, r);
    for j in 0..r.min(n) {
        let s = eig.eigenvalues[j].sqrt();
        if s > 0.0 {
            f.set_column(j, &(eig.eigenvectors.column(j) * c64(s, 0.0)));
        }
    }
    Ok(f)
}

/// Largest eigenvalue and its eigenvector of a Hermitian matrix.
pub fn leading_eigenpair(a: &CMatrix) -> Result<(f64, CMatrix)> {
    let eig = herm_eig(a)?;
    Ok((eig.eigenvalues[0], eig.eigenvectors.columns(0, 1).into_owned()))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn orthonormality_error(v: &CMatrix) -> f64 {
        let g = v.adjoint() * v;
        let id = CMatrix::identity(g.nrows(), g.ncols());
        (g - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn eig_identity() {
        let e = herm_eig(&CMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues.len(), 3);
        for l in &e.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_diagonal_is_permuted_identity() {
        let e = herm_eig(&diag_real(&[-1.0, 2.0])).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-14);
        let v = &e.eigenvectors;
        assert!((v[(1, 0)] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!((v[(0, 1)] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!(v[(0, 0)].norm() < 1e-14 && v[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn eig_random_reconstructs() {
        let mut r = rng(1);
        for _ in 0..20 {
            let a = random_hermitian(&mut r, 4);
            let e = herm_eig(&a).unwrap();
            let err = (e.reconstruct() - &a).norm();
            assert!(err <= 1e-10 * a.norm().max(1.0), "{err}");
            assert!(orthonormality_error(&e.eigenvectors) <= 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(herm_eig(&CMatrix::zeros(2, 3)), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn eigenvector_phase_convention() {
        let mut r = rng(2);
        let e = herm_eig(&random_hermitian(&mut r, 5)).unwrap();
        for j in 0..5 {
            let col = e.eigenvectors.column(j);
            let (imax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            assert!(col[imax].im.abs() < 1e-14 && col[imax].re > 0.0);
        }
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let s = svd(&CMatrix::identity(2, 2)).unwrap();
        assert!(s.singular_values.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let mut r = rng(3);
        let u = random_matrix(&mut r, 3, 1);
        let v = random_matrix(&mut r, 4, 1);
        let u = &u / c64(u.norm(), 0.0);
        let v = &v / c64(v.norm(), 0.0);
        let s = svd(&(&u * v.adjoint())).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-12);
        assert!(s.singular_values[1..].iter().all(|x| x.abs() < 1e-12));
        assert_eq!(s.rank(), 1);
    }

    #[test]
    fn svd_random_wide_and_tall() {
        let mut r = rng(4);
        for &(m, n) in &[(3, 5), (5, 3), (4, 4), (1, 6)] {
            let a = random_matrix(&mut r, m, n);
            let s = svd(&a).unwrap();
            let err = (s.reconstruct() - &a).norm();
            assert!(err <= 1e-10 * a.norm().max(1.0), "{m}x{n}: {err}");
            assert!(orthonormality_error(&s.u) <= 1e-10);
            assert!(orthonormality_error(&s.v) <= 1e-10);
            assert_eq!(s.v.shape(), (n, n));
            let ns = s.null_space();
            assert_eq!(ns.ncols(), n - m.min(n));
            if ns.ncols() > 0 {
                assert!((&a * &ns).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn svd_rank_deficient_wide_has_orthonormal_u() {
        let mut r = rng(5);
        let b = random_matrix(&mut r, 3, 1);
        let c = random_matrix(&mut r, 1, 6);
        let a = &b * &c;
        let s = svd(&a).unwrap();
        assert_eq!(s.rank(), 1);
        assert!(orthonormality_error(&s.u) <= 1e-10);
        assert!((s.reconstruct() - &a).norm() <= 1e-10 * a.norm());
        assert_eq!(s.null_space().ncols(), 5);
    }

    #[test]
    fn svd_matches_eig_on_psd() {
        let mut r = rng(6);
        let a = random_psd(&mut r, 5, 5);
        let s = svd(&a).unwrap();
        let e = herm_eig(&a).unwrap();
        for (x, y) in s.singular_values.iter().zip(&e.eigenvalues) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn logdet_closed_forms() {
        assert!(logdet_psd(&CMatrix::identity(4, 4)).unwrap().abs() < 1e-15);
        assert!((logdet_psd(&diag_real(&[2.0, 2.0])).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn logdet_matches_eigen_product() {
        let mut r = rng(7);
        for _ in 0..10 {
            let a = CMatrix::identity(4, 4) + random_psd(&mut r, 4, 3);
            let e = herm_eig(&a).unwrap();
            let oracle: f64 = e.eigenvalues.iter().map(|l| l.log2()).sum();
            assert!((logdet_psd(&a).unwrap() - oracle).abs() <= 1e-9);
        }
    }

    #[test]
    fn logdet_errors() {
        assert!(matches!(logdet_psd(&diag_real(&[1.0, -1.0])), Err(LinalgError::NotPsd(_))));
        assert!(matches!(logdet_psd(&diag_real(&[1.0, 0.0])), Err(LinalgError::Singular)));
    }

    #[test]
    fn sylvester_identity() {
        let mut r = rng(8);
        let a = random_matrix(&mut r, 3, 5);
        let left = logdet_psd(&(CMatrix::identity(3, 3) + &a * a.adjoint())).unwrap();
        let right = logdet_psd(&(CMatrix::identity(5, 5) + a.adjoint() * &a)).unwrap();
        assert!((left - right).abs() <= 1e-9);
    }

    #[test]
    fn sqrt_factor_cases() {
        let f = psd_sqrt_factor(&CMatrix::zeros(3, 3), 2).unwrap();
        assert_eq!(f.shape(), (3, 2));
        assert!(f.norm() == 0.0);

        let f = psd_sqrt_factor(&diag_real(&[4.0, 0.0]), 1).unwrap();
        assert!((f[(0, 0)] - c64(2.0, 0.0)).norm() < 1e-14 && f[(1, 0)].norm() < 1e-14);

        let mut r = rng(9);
        let x = random_psd(&mut r, 5, 2);
        let f = psd_sqrt_factor(&x, 2).unwrap();
        assert!((&f * f.adjoint() - &x).norm() <= 1e-9);

        assert!(matches!(psd_sqrt_factor(&x, 0), Err(LinalgError::Argument(_))));
    }

    #[test]
    fn clamp_tolerance() {
        let tiny = diag_real(&[1.0, -1e-12]);
        let c = clamp_psd(&tiny).unwrap();
        assert!(herm_eig(&c).unwrap().eigenvalues[1] >= -1e-15);
        assert!(clamp_psd(&diag_real(&[1.0, -1e-3])).is_err());
    }

    #[test]
    fn construction_rejects_nan() {
        assert_eq!(cmatrix_real(1, 2, &[1.0, f64::NAN]), Err(LinalgError::NonFinite));
        assert!(matches!(cmatrix_real(2, 2, &[1.0]), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn rank_rule() {
        assert_eq!(numerical_rank(&[0.0, 0.0]), 0);
        assert_eq!(numerical_rank(&[1.0, 1e-11, 0.0]), 1);
        assert_eq!(numerical_rank(&[1.0, 1e-9]), 2);
    }

    #[test]
    fn trace_helpers() {
        let mut r = rng(10);
        let a = random_matrix(&mut r, 3, 4);
        let b = random_matrix(&mut r, 4, 3);
        assert!((trace_product_re(&a, &b) - trace_re(&(&a * &b))).abs() < 1e-12);
    }
}
