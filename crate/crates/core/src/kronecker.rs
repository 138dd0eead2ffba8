//! The special case `Σ = Ω⊗Φ`.
//!
//! Here the LR statistic has the closed form QLR, the pair `(Q, Ω0)` with
//! `Q = [S:T]'[S:T]` is a maximal invariant, and `Q` has a noncentral Wishart
//! density.

use alloc::format;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{invalid, Error, Result};
use crate::model::STDecomposition;
use crate::numerics::linalg::{kron, SymPd};
use crate::numerics::special::{ln_gamma, log_bessel_i_scaled};

/// Relative reconstruction error below which `Σ` is treated as Kronecker.
pub const KRONECKER_TOLERANCE: f64 = 1e-8;

/// `Σ = Ω⊗Φ` with `trace Φ = k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerForm {
    omega: Matrix2<f64>,
    phi: SymPd,
    residual: f64,
}

impl KroneckerForm {
    pub fn omega(&self) -> &Matrix2<f64> {
        &self.omega
    }

    pub fn phi(&self) -> &SymPd {
        &self.phi
    }

    /// `‖Σ − Ω⊗Φ‖_F / ‖Σ‖_F` of the factorization.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `Ω0 = B0'ΩB0`.
    pub fn omega0(&self, beta0: f64) -> Matrix2<f64> {
        let b0 = Matrix2::new(1.0, 0.0, -beta0, 1.0);
        b0.transpose() * self.omega * b0
    }

    /// Structural-form variance of `(u, v2)` at `β`: `Ψ = A(β)^{-1} Ω A(β)^{-1}'`
    /// with `A(β) = [[1, β], [0, 1]]`.
    pub fn psi(&self, beta: f64) -> Matrix2<f64> {
        let ainv = Matrix2::new(1.0, -beta, 0.0, 1.0);
        ainv * self.omega * ainv.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let om = DMatrix::from_fn(2, 2, |i, j| self.omega[(i, j)]);
        kron(&om, self.phi.matrix())
    }
}

/// Nearest Kronecker factorization of the `2k×2k` matrix `Σ`.
///
/// The rearrangement with rows `vec(Σ_ij)` is rank one exactly when `Σ` is
/// Kronecker; its leading singular pair gives `(Ω, Φ)`. Returns `None` unless
/// the relative reconstruction error is below [`KRONECKER_TOLERANCE`].
pub fn detect_kronecker(sigma: &SymPd, k: usize) -> Option<KroneckerForm> {
    let form = nearest_kronecker(sigma, k)?;
    (form.residual < KRONECKER_TOLERANCE).then_some(form)
}

/// The factorization regardless of its quality; `None` only when the leading
/// factors are not positive definite.
pub fn nearest_kronecker(sigma: &SymPd, k: usize) -> Option<KroneckerForm> {
    let m = sigma.matrix();
    if k == 0 || m.nrows() != 2 * k {
        return None;
    }
    let mut rearranged = DMatrix::zeros(4, k * k);
    for j in 0..2 {
        for i in 0..2 {
            let block = m.view((i * k, j * k), (k, k));
            rearranged.row_mut(i + 2 * j).copy_from_slice(block.clone_owned().as_slice());
        }
    }
    // rearranged' rearranged is k²×k²; the 4×4 Gram on the other side is cheaper.
    let gram = &rearranged * rearranged.transpose();
    let eig = gram.symmetric_eigen();
    let (imax, smax) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
        if *v > acc.1 {
            (i, *v)
        } else {
            acc
        }
    });
    if !(smax > 0.0) {
        return None;
    }
    let u = eig.eigenvectors.column(imax).into_owned();
    let v = rearranged.transpose() * &u;
    let mut omega = Matrix2::new(u[0], u[2], u[1], u[3]);
    let mut phi = DMatrix::from_column_slice(k, k, v.as_slice());
    let tr = phi.trace();
    if tr == 0.0 {
        return None;
    }
    let scale = tr / k as f64;
    phi /= scale;
    omega *= scale;
    let omega = (omega + omega.transpose()) * 0.5;
    let phi = SymPd::from_symmetrized(phi).ok()?;
    if !(omega[(0, 0)] > 0.0 && omega.determinant() > 0.0) {
        return None;
    }
    let mut form = KroneckerForm { omega, phi, residual: 0.0 };
    let norm = m.norm();
    form.residual = if norm > 0.0 { (m - form.reconstruct()).norm() / norm } else { 0.0 };
    Some(form)
}

/// `(c_β, d_β)` with `E[S] = c_β Φ^{-1/2} μ` and `E[T] = d_β Φ^{-1/2} μ`:
/// `c_β = (β − β0)(b0'Ωb0)^{-1/2}`, `d_β = a'Ω^{-1}a0 (a0'Ω^{-1}a0)^{-1/2}`.
pub fn c_d_coefficients(omega: &Matrix2<f64>, beta: f64, beta0: f64) -> Result<(f64, f64)> {
    let inv = omega.try_inverse().filter(|_| omega[(0, 0)] > 0.0 && omega.determinant() > 0.0);
    let Some(inv) = inv else {
        return Err(Error::NotPositiveDefinite { eigenvalue: omega.symmetric_eigenvalues().min() });
    };
    let b0 = nalgebra::Vector2::new(1.0, -beta0);
    let a0 = nalgebra::Vector2::new(beta0, 1.0);
    let a = nalgebra::Vector2::new(beta, 1.0);
    let c = (beta - beta0) / libm::sqrt(b0.dot(&(omega * b0)));
    let d = a.dot(&(inv * a0)) / libm::sqrt(a0.dot(&(inv * a0)));
    Ok((c, d))
}

/// `Q = [S:T]'[S:T]`, stored as its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QStat {
    pub qs: f64,
    pub qst: f64,
    pub qt: f64,
}

impl QStat {
    pub fn from_st(s: &DVector<f64>, t: &DVector<f64>) -> Self {
        Self { qs: s.norm_squared(), qst: s.dot(t), qt: t.norm_squared() }
    }

    /// `|q| = qS qT − qST²`.
    pub fn det(&self) -> f64 {
        self.qs * self.qt - self.qst * self.qst
    }

    /// `(Q_S, Q_T, Q_ST²)`, the maximal invariant under both group factors.
    pub fn two_sided(&self) -> (f64, f64, f64) {
        (self.qs, self.qt, self.qst * self.qst)
    }
}

pub fn q_stat(st: &STDecomposition) -> QStat {
    QStat::from_st(&st.s, &st.t)
}

/// `ξ_β(q) = c² qS + 2cd qST + d² qT`.
pub fn xi_beta(q: &QStat, c: f64, d: f64) -> f64 {
    c * c * q.qs + 2.0 * c * d * q.qst + d * d * q.qt
}

/// Log density of `Q` at `q` (Lebesgue measure on `(qS, qST, qT)`) when the
/// true parameters are `β` and `λ = μ'Φ^{-1}μ`.
pub fn log_q_density(q: &QStat, beta: f64, lambda: f64, omega: &Matrix2<f64>, beta0: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(invalid!("the density of Q needs k >= 2, got {k}"));
    }
    if !(lambda >= 0.0) {
        return Err(invalid!("lambda must be nonnegative, got {lambda}"));
    }
    let det = q.det();
    if !(det > 0.0) || !(q.qs > 0.0) || !(q.qt > 0.0) {
        return Err(invalid!("|q| must be positive, got {det:e}"));
    }
    let (c, d) = c_d_coefficients(omega, beta, beta0)?;
    let kf = k as f64;
    let nu = (kf - 2.0) / 2.0;
    let log_k0 = -((kf + 2.0) / 2.0 * core::f64::consts::LN_2
        + 0.5 * libm::log(core::f64::consts::PI)
        + ln_gamma((kf - 1.0) / 2.0));
    // ξ is a PSD quadratic form in (c, d) for PSD q; clip rounding below zero.
    let xi = xi_beta(q, c, d).max(0.0);
    let x = libm::sqrt(lambda * xi);
    Ok(log_k0 - lambda * (c * c + d * d) / 2.0 + (kf - 3.0) / 2.0 * libm::log(det) - (q.qs + q.qt) / 2.0
        + log_bessel_i_scaled(nu, x))
}

pub fn q_density(q: &QStat, beta: f64, lambda: f64, omega: &Matrix2<f64>, beta0: f64, k: usize) -> Result<f64> {
    log_q_density(q, beta, lambda, omega, beta0, k).map(libm::exp)
}

/// `Γ = A(Δ')^{-1} g2 A(Δ)` with `A(Δ) = [[1, Δ], [0, 1]]`.
pub fn structural_gamma(g2: &Matrix2<f64>, delta: f64) -> Result<Matrix2<f64>> {
    let (g11, g21, g22) = check_lower(g2)?;
    let m = delta * g21 + g22;
    if m == 0.0 {
        return Err(Error::Degenerate("delta * g21 + g22 = 0".into()));
    }
    Ok(Matrix2::new(g11 * g22 / m, 0.0, g21, m))
}

/// Induced action on `(Δ, λ, Ψ)`:
/// `(Δ g11/(Δ g21 + g22), (Δ g21 + g22)² λ, Γ Ψ Γ')`.
pub fn structural_action(g2: &Matrix2<f64>, delta: f64, lambda: f64, psi: &Matrix2<f64>) -> Result<(f64, f64, Matrix2<f64>)> {
    let gamma = structural_gamma(g2, delta)?;
    let (g11, g21, g22) = check_lower(g2)?;
    let m = delta * g21 + g22;
    Ok((delta * g11 / m, m * m * lambda, gamma * psi * gamma.transpose()))
}

fn check_lower(g2: &Matrix2<f64>) -> Result<(f64, f64, f64)> {
    if g2[(0, 1)] != 0.0 {
        return Err(invalid!("g2 must be lower triangular, upper entry is {}", g2[(0, 1)]));
    }
    let (g11, g21, g22) = (g2[(0, 0)], g2[(1, 0)], g2[(1, 1)]);
    if g11 * g22 == 0.0 {
        return Err(Error::SingularGroupElement(format!("g11 * g22 = 0 (g11 = {g11}, g22 = {g22})")));
    }
    Ok((g11, g21, g22))
}
