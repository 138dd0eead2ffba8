//! The group `GL(k) × lower-triangular GL(2)` acting on `(R0, Σ0)` and on the
//! parameters `(Δ, μ, Σ0)`.

use alloc::format;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::SymPd;

use super::NullRotated;

/// `(g1, g2)` with `g1 ∈ GL(k)` and `g2` lower triangular and invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    g1: DMatrix<f64>,
    g2: Matrix2<f64>,
}

impl GroupElement {
    /// `g2` is given by its entries `(g11, g21, g22)`; the upper-right entry is zero.
    pub fn new(g1: DMatrix<f64>, g11: f64, g21: f64, g22: f64) -> Result<Self> {
        if !g1.is_square() || g1.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!("g1 must be square, got {}x{}", g1.nrows(), g1.ncols())));
        }
        if g1.iter().chain([g11, g21, g22].iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("group element has non-finite entries"));
        }
        let det = g1.determinant();
        if !(det.abs() > 0.0) || g1.clone().try_inverse().is_none() {
            return Err(Error::SingularGroupElement(format!("det g1 = {det:e}")));
        }
        if g11 * g22 == 0.0 {
            return Err(Error::SingularGroupElement(format!("g11 * g22 = 0 (g11 = {g11}, g22 = {g22})")));
        }
        Ok(Self { g1, g2: Matrix2::new(g11, 0.0, g21, g22) })
    }

    pub fn identity(k: usize) -> Self {
        Self { g1: DMatrix::identity(k, k), g2: Matrix2::identity() }
    }

    pub fn k(&self) -> usize {
        self.g1.nrows()
    }

    pub fn g1(&self) -> &DMatrix<f64> {
        &self.g1
    }

    pub fn g2(&self) -> &Matrix2<f64> {
        &self.g2
    }

    pub fn g11(&self) -> f64 {
        self.g2[(0, 0)]
    }

    pub fn g21(&self) -> f64 {
        self.g2[(1, 0)]
    }

    pub fn g22(&self) -> f64 {
        self.g2[(1, 1)]
    }

    /// `χ1(g1) = |det g1|²`.
    pub fn chi1(&self) -> f64 {
        let d = self.g1.determinant();
        d * d
    }

    /// `χ2(g2) = |det g2|^k`.
    pub fn chi2(&self) -> f64 {
        libm::pow((self.g11() * self.g22()).abs(), self.k() as f64)
    }

    /// `self ∘ other`: acting with `other` first, then `self`.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.k() != other.k() {
            return Err(Error::DimensionMismatch("group elements of different k".into()));
        }
        let g2 = self.g2 * other.g2;
        GroupElement::new(&self.g1 * &other.g1, g2[(0, 0)], g2[(1, 0)], g2[(1, 1)])
    }

    /// `g2 ⊗ g1`.
    pub fn kron(&self) -> DMatrix<f64> {
        let g2 = DMatrix::from_fn(2, 2, |i, j| self.g2[(i, j)]);
        g2.kronecker(&self.g1)
    }

    fn act_sigma(&self, sigma0: &SymPd) -> Result<SymPd> {
        let g = self.kron();
        SymPd::from_symmetrized(&g * sigma0.matrix() * g.transpose())
    }
}

/// A point in the alternative: `β`, `Δ = β − β0`, the instrument mean `μ` and
/// its strength `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativePoint {
    pub beta: f64,
    pub delta: f64,
    pub mu: DVector<f64>,
    pub lambda: f64,
}

impl AlternativePoint {
    /// `λ` is taken as `‖μ‖²`; Kronecker designs that need `μ_Φ'μ_Φ` set it directly.
    pub fn new(beta0: f64, delta: f64, mu: DVector<f64>) -> Self {
        let lambda = mu.norm_squared();
        Self { beta: beta0 + delta, delta, mu, lambda }
    }

    /// Mean of `R0`: `μ (Δ, 1)`.
    pub fn mean_r0(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[&self.mu * self.delta, self.mu.clone()])
    }
}

/// `(g1 R0 g2', (g2⊗g1) Σ0 (g2'⊗g1'))`.
pub fn act(g: &GroupElement, nr: &NullRotated) -> Result<NullRotated> {
    if g.k() != nr.k() {
        return Err(Error::DimensionMismatch(format!("g has k = {}, data have k = {}", g.k(), nr.k())));
    }
    let g2t = DMatrix::from_fn(2, 2, |i, j| g.g2[(j, i)]);
    let r0 = &g.g1 * nr.r0() * g2t;
    NullRotated::new(r0, g.act_sigma(nr.sigma0())?)
}

/// Induced action on the parameters: `Δ ↦ Δ g11 / (Δ g21 + g22)`,
/// `μ ↦ g1 μ (Δ g21 + g22)`, `Σ0 ↦ (g2⊗g1) Σ0 (g2'⊗g1')`.
pub fn act_params(g: &GroupElement, pt: &AlternativePoint, sigma0: &SymPd) -> Result<(AlternativePoint, SymPd)> {
    if g.k() != pt.mu.len() {
        return Err(Error::DimensionMismatch(format!("g has k = {}, mu has {}", g.k(), pt.mu.len())));
    }
    let den = pt.delta * g.g21() + g.g22();
    if den == 0.0 || !(pt.delta * g.g11() / den).is_finite() {
        return Err(Error::Degenerate(format!(
            "delta * g21 + g22 = {den:e}; the transformed parameter is at infinity"
        )));
    }
    let delta = pt.delta * g.g11() / den;
    let mu = &g.g1 * &pt.mu * den;
    let beta0 = pt.beta - pt.delta;
    Ok((AlternativePoint::new(beta0, delta, mu), g.act_sigma(sigma0)?))
}
