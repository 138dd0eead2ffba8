//! Dense linear algebra used by the statistics.
//!
//! All square roots of symmetric matrices use the eigendecomposition, so
//! `A^{1/2}` and `A^{-1/2}` are the unique symmetric positive-definite roots.
//! `vec` stacks columns (column-major); with that convention
//! `(b' ⊗ I_k) vec(R) = R b`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix, checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPd {
    m: DMatrix<f64>,
}

impl SymPd {
    /// Validates symmetry (relative 1e-12) and strict positivity of the spectrum.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let m = symmetrize(&m);
        let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: min_eig });
        }
        Ok(Self { m })
    }

    /// Symmetrizes `(m + m')/2` before validating; for matrices produced by
    /// products that are symmetric only up to rounding.
    pub fn from_symmetrized(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Self::new(symmetrize(&m))
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        self.m.clone().symmetric_eigen()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.min()
    }

    /// `A^p` through the eigendecomposition.
    pub fn power(&self, p: f64) -> SymPd {
        let eig = self.eigen();
        let vals = eig.eigenvalues.map(|v| libm::pow(v, p));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        SymPd { m: symmetrize(&m) }
    }

    pub fn sqrt(&self) -> SymPd {
        self.power(0.5)
    }

    pub fn inv_sqrt(&self) -> SymPd {
        self.power(-0.5)
    }

    pub fn inverse(&self) -> SymPd {
        // Cholesky is more accurate than the spectral inverse for ill-conditioned input.
        match self.m.clone().cholesky() {
            Some(ch) => SymPd { m: symmetrize(&ch.inverse()) },
            None => self.power(-1.0),
        }
    }

    pub fn log_det(&self) -> f64 {
        match self.m.clone().cholesky() {
            Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>(),
            None => self.eigen().eigenvalues.iter().map(|v| libm::log(*v)).sum(),
        }
    }

    /// Lower Cholesky factor.
    pub fn cholesky_lower(&self) -> DMatrix<f64> {
        match self.m.clone().cholesky() {
            Some(ch) => ch.l(),
            // Positive spectrum was verified at construction; fall back to the
            // spectral root, which is also a valid (non-triangular) factor.
            None => self.sqrt().m,
        }
    }

    /// `(i, j)` block of size `b×b` when the matrix is viewed as a grid of blocks.
    pub fn block(&self, i: usize, j: usize, b: usize) -> DMatrix<f64> {
        self.m.view((i * b, j * b), (b, b)).into_owned()
    }
}

impl AsRef<DMatrix<f64>> for SymPd {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric positive-definite inverse square root `B` with `B·A·B = I`.
pub fn sym_inv_sqrt(a: &SymPd) -> SymPd {
    a.inv_sqrt()
}

/// Orthogonal projection `N_A = A (A'A)^{-1} A'` onto the column span of `a`.
pub fn projection(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = a.transpose() * a;
    check_full_rank(&gram, "projection")?;
    let inv = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("A'A is singular".into()))?
        .inverse();
    Ok(symmetrize(&(a * inv * a.transpose())))
}

/// Annihilator `M_A = I − N_A`.
pub fn annihilator(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    Ok(DMatrix::identity(n, n) - projection(a)?)
}

pub(crate) fn check_full_rank(gram: &DMatrix<f64>, what: &str) -> Result<()> {
    if gram.nrows() == 0 {
        return Ok(());
    }
    let eig = symmetrize(gram).symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::RankDeficient(format!(
            "{what}: Gram matrix eigenvalues range {min:e}..{max:e}"
        )));
    }
    Ok(())
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major `vec`.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// In-place lower Cholesky factorization of a row-major `n×n` matrix.
///
/// Only the lower triangle is read. Returns `false` when a pivot is not positive.
#[inline]
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for p in 0..j {
            d -= a[j * n + p] * a[j * n + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// `‖L^{-1} v‖²` for a row-major lower factor `L`, i.e. `v' A^{-1} v`.
#[inline]
pub fn chol_quad_form(l: &[f64], n: usize, v: &[f64], work: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = v[i];
        for p in 0..i {
            s -= l[i * n + p] * work[p];
        }
        let y = s / l[i * n + i];
        work[i] = y;
        acc += y * y;
    }
    acc
}

#[inline]
pub fn chol_log_det(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| libm::log(l[i * n + i])).sum::<f64>()
}

/// Row-major copy of a square matrix, the layout the slice kernels expect.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * m.ncols());
    for i in 0..n {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymPd {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymPd::from_symmetrized(&a * a.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    #[test]
    fn inv_sqrt_identity_and_diagonal() {
        let b = sym_inv_sqrt(&SymPd::identity(3));
        assert!((b.matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);

        let d = SymPd::new(DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![4.0, 9.0]))).unwrap();
        let b = sym_inv_sqrt(&d);
        assert!((b.matrix()[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((b.matrix()[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(b.matrix()[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_multiplies_back_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = 2 + trial % 19;
            let a = random_spd(&mut rng, n);
            let b = sym_inv_sqrt(&a);
            let bab = b.matrix() * a.matrix() * b.matrix();
            assert!((bab - DMatrix::<f64>::identity(n, n)).amax() < 1e-10);
            let comm = b.matrix() * a.matrix() - a.matrix() * b.matrix();
            assert!(comm.amax() < 1e-10 * a.matrix().amax());
        }
    }

    #[test]
    fn non_pd_reports_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SymPd::new(m) {
            Err(Error::NotPositiveDefinite { eigenvalue }) => assert!((eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(SymPd::new(asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn projection_of_unit_vector() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let n = projection(&e1).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![1.0, 0.0, 0.0]));
        assert!((n - expected).amax() < 1e-15);
    }

    #[test]
    fn projection_idempotent_symmetric_and_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-2.0..2.0));
            let n = projection(&a).unwrap();
            assert!((&n * &n - &n).amax() < 1e-10);
            assert!((&n - n.transpose()).amax() < 1e-12);
            let m = annihilator(&a).unwrap();
            assert!((&m * &a).amax() < 1e-10);
            assert!((&n + &m - DMatrix::<f64>::identity(7, 7)).amax() < 1e-12);
        }
    }

    #[test]
    fn projection_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(projection(&a), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn vec_is_column_major() {
        // (b' ⊗ I) vec(R) = R b
        let r = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.3, -1.7]);
        let lhs = kron(&b.transpose(), &DMatrix::identity(3, 3)) * vec_of(&r);
        let rhs = &r * &b;
        assert!((lhs - rhs.column(0)).amax() < 1e-14);
        assert_eq!(unvec(&vec_of(&r), 3, 2), r);
    }

    #[test]
    fn slice_cholesky_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(&mut rng, 6);
        let mut l = row_major(a.matrix());
        assert!(cholesky_in_place(&mut l, 6));
        let v: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let mut work = [0.0; 6];
        let q = chol_quad_form(&l, 6, &v, &mut work);
        let dv = DVector::from_vec(v);
        let expected = (dv.transpose() * a.inverse().matrix() * &dv)[0];
        assert!((q - expected).abs() < 1e-10 * expected.abs().max(1.0));
        assert!((chol_log_det(&l, 6) - a.log_det()).abs() < 1e-10);
    }
}
