//! The sufficient pair `(R, Σ)`, the `S`/`T` statistics and the null rotation.

use alloc::format;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::SymPd;

/// `R` (k×2) with the variance `Σ` (2k×2k) of `vec(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedForm {
    r: DMatrix<f64>,
    sigma: SymPd,
}

impl ReducedForm {
    pub fn new(r: DMatrix<f64>, sigma: SymPd) -> Result<Self> {
        if r.ncols() != 2 || r.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!("R must be k x 2, got {}x{}", r.nrows(), r.ncols())));
        }
        if sigma.dim() != 2 * r.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "Sigma is {0}x{0}, expected {1}x{1}",
                sigma.dim(),
                2 * r.nrows()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("R has non-finite entries"));
        }
        Ok(Self { r, sigma })
    }

    pub fn k(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn sigma(&self) -> &SymPd {
        &self.sigma
    }
}

/// `H0: β = β0` tested at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub beta0: f64,
    pub alpha: f64,
}

impl Hypothesis {
    pub fn new(beta0: f64, alpha: f64) -> Result<Self> {
        if !beta0.is_finite() {
            return Err(invalid!("beta0 must be finite"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid!("alpha must lie in (0, 1), got {alpha}"));
        }
        Ok(Self { beta0, alpha })
    }

    /// `a0 = (β0, 1)'`.
    pub fn a0(&self) -> [f64; 2] {
        [self.beta0, 1.0]
    }

    /// `b0 = (1, −β0)'`.
    pub fn b0(&self) -> [f64; 2] {
        [1.0, -self.beta0]
    }

    /// `B0 = [b0 : e2]`, so that `a0'B0 = (0, 1)`.
    pub fn b0_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, 0.0, -self.beta0, 1.0)
    }
}

/// `S`, `T` and their weighting matrices at `β0`.
///
/// `d_beta0` is `D_β` evaluated at `β = β0`, which equals
/// `[(a0'⊗I)Σ^{-1}(a0⊗I)]^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct STDecomposition {
    pub s: DVector<f64>,
    pub t: DVector<f64>,
    pub c_beta0: SymPd,
    pub d_beta0: SymPd,
}

// (w' ⊗ I_k) M (w ⊗ I_k) for a 2-vector w and a 2k×2k matrix M.
pub(crate) fn contract(m: &DMatrix<f64>, w: [f64; 2], k: usize) -> DMatrix<f64> {
    let b = |i: usize, j: usize| m.view((i * k, j * k), (k, k));
    b(0, 0) * (w[0] * w[0]) + (b(0, 1) + b(1, 0)) * (w[0] * w[1]) + b(1, 1) * (w[1] * w[1])
}

pub fn st_decompose(rf: &ReducedForm, hyp: &Hypothesis) -> Result<STDecomposition> {
    let k = rf.k();
    let (a0, b0) = (hyp.a0(), hyp.b0());
    let r = rf.r();
    let sig = rf.sigma().matrix();
    let c = SymPd::from_symmetrized(contract(sig, b0, k))?.inv_sqrt();
    let s = c.matrix() * (r.column(0) * b0[0] + r.column(1) * b0[1]);

    let sig_inv = rf.sigma().inverse();
    let m = SymPd::from_symmetrized(contract(sig_inv.matrix(), a0, k))?;
    let vec_r = DVector::from_column_slice(r.as_slice());
    let w = sig_inv.matrix() * vec_r;
    let aw = w.rows(0, k) * a0[0] + w.rows(k, k) * a0[1];
    let t = m.inv_sqrt().matrix() * aw;
    Ok(STDecomposition { s, t, c_beta0: c, d_beta0: m.sqrt() })
}

/// `(R0, Σ0)` with `R0 = R B0` and `Σ0 = (B0'⊗I)Σ(B0⊗I)`; under `H0` the mean
/// of the first column of `R0` vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct NullRotated {
    r0: DMatrix<f64>,
    sigma0: SymPd,
}

impl NullRotated {
    pub fn new(r0: DMatrix<f64>, sigma0: SymPd) -> Result<Self> {
        let rf = ReducedForm::new(r0, sigma0)?;
        Ok(Self { r0: rf.r, sigma0: rf.sigma })
    }

    pub fn k(&self) -> usize {
        self.r0.nrows()
    }

    pub fn r0(&self) -> &DMatrix<f64> {
        &self.r0
    }

    pub fn sigma0(&self) -> &SymPd {
        &self.sigma0
    }

    /// `Σ0` block `(i, j)`, `i, j ∈ {0, 1}`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.sigma0.block(i, j, self.k())
    }

    /// The same data viewed as a reduced form tested at `β0 = 0`.
    pub fn as_reduced_form(&self) -> ReducedForm {
        ReducedForm { r: self.r0.clone(), sigma: self.sigma0.clone() }
    }

    /// Undoes [`null_rotate`] for the hypothesis it was built with.
    pub fn unrotate(&self, hyp: &Hypothesis) -> Result<ReducedForm> {
        let inv = hyp.b0_matrix().try_inverse().expect("B0 is unit lower triangular");
        let rf = transform(&self.r0, &self.sigma0, &inv)?;
        Ok(rf)
    }
}

// (R M, (M'⊗I) Σ (M⊗I)) for a 2×2 matrix M.
fn transform(r: &DMatrix<f64>, sigma: &SymPd, m: &Matrix2<f64>) -> Result<ReducedForm> {
    let k = r.nrows();
    let mm = DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
    let r_new = r * &mm;
    let big = mm.kronecker(&DMatrix::<f64>::identity(k, k));
    let s_new = big.transpose() * sigma.matrix() * &big;
    ReducedForm::new(r_new, SymPd::from_symmetrized(s_new)?)
}

pub fn null_rotate(rf: &ReducedForm, hyp: &Hypothesis) -> Result<NullRotated> {
    let out = transform(rf.r(), rf.sigma(), &hyp.b0_matrix())?;
    Ok(NullRotated { r0: out.r, sigma0: out.sigma })
}
