//! Raw IV data, partialling out controls, the reduction to `R`, and the
//! plug-in long-run variance.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::{annihilator, check_full_rank, symmetrize, SymPd};

use super::ReducedForm;

/// Observations of the outcome `y1`, the endogenous regressor `y2`, exogenous
/// controls `x` (may have zero columns) and instruments `ztilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct IVDataset {
    y1: DVector<f64>,
    y2: DVector<f64>,
    x: DMatrix<f64>,
    ztilde: DMatrix<f64>,
}

impl IVDataset {
    pub fn new(
        y1: DVector<f64>,
        y2: DVector<f64>,
        x: DMatrix<f64>,
        ztilde: DMatrix<f64>,
    ) -> Result<Self> {
        let n = y1.len();
        if y2.len() != n || x.nrows() != n || ztilde.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y1 has {n} rows, y2 {}, X {}, Z {}",
                y2.len(),
                x.nrows(),
                ztilde.nrows()
            )));
        }
        let (k, p) = (ztilde.ncols(), x.ncols());
        if k == 0 {
            return Err(invalid!("at least one instrument is required"));
        }
        if n <= k + p {
            return Err(invalid!("need n > k + p, got n = {n}, k = {k}, p = {p}"));
        }
        let all_finite = y1.iter().chain(y2.iter()).chain(x.iter()).chain(ztilde.iter());
        if all_finite.clone().any(|v| !v.is_finite()) {
            return Err(invalid!("data contain non-finite values"));
        }
        let full = DMatrix::from_fn(n, k + p, |i, j| if j < k { ztilde[(i, j)] } else { x[(i, j - k)] });
        check_full_rank(&(full.transpose() * &full), "[Z : X]")?;
        Ok(Self { y1, y2, x, ztilde })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn k(&self) -> usize {
        self.ztilde.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[self.y1.clone(), self.y2.clone()])
    }

    pub fn controls(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn instruments(&self) -> &DMatrix<f64> {
        &self.ztilde
    }

    /// `M_X Y`, the outcomes with controls removed (`Y` itself when `p = 0`).
    pub fn residualized_outcomes(&self) -> Result<DMatrix<f64>> {
        let y = self.y();
        if self.p() == 0 {
            return Ok(y);
        }
        Ok(annihilator(&self.x)? * y)
    }
}

/// `(Z, Y)` with `Z = M_X Z̃` and `Y = [y1 : y2]`.
pub fn partial_out(data: &IVDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let z = if data.p() == 0 {
        data.ztilde.clone()
    } else {
        annihilator(&data.x)? * &data.ztilde
    };
    check_full_rank(&(z.transpose() * &z), "M_X Z")?;
    Ok((z, data.y()))
}

/// `R = (Z'Z)^{-1/2} Z'Y` paired with `sigma`.
pub fn reduce(z: &DMatrix<f64>, y: &DMatrix<f64>, sigma: SymPd) -> Result<ReducedForm> {
    if z.nrows() != y.nrows() || y.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "Z is {}x{}, Y is {}x{} (expected n x 2)",
            z.nrows(),
            z.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let zz = SymPd::from_symmetrized(z.transpose() * z)?;
    let r = zz.inv_sqrt().matrix() * (z.transpose() * y);
    ReducedForm::new(r, sigma)
}

/// Bartlett-kernel long-run variance of `vec((Z'Z)^{-1/2} Z'V)` from the
/// reduced-form OLS residuals. `bandwidth = 0` gives the heteroskedasticity-only
/// estimator. `y` should already have any controls partialled out.
pub fn estimate_sigma_plugin(z: &DMatrix<f64>, y: &DMatrix<f64>, bandwidth: usize) -> Result<SymPd> {
    let (n, k) = (z.nrows(), z.ncols());
    if y.nrows() != n || y.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!("Y is {}x{}, expected {n}x2", y.nrows(), y.ncols())));
    }
    if n <= k {
        return Err(invalid!("no residual degrees of freedom (n = {n}, k = {k})"));
    }
    if bandwidth >= n {
        return Err(invalid!("bandwidth {bandwidth} must be smaller than n = {n}"));
    }
    let zz = SymPd::from_symmetrized(z.transpose() * z)?;
    let coef = zz.inverse().matrix() * (z.transpose() * y);
    let resid = y - z * coef;
    if resid.amax() <= 1e-12 * y.amax().max(1.0) {
        return Err(Error::Degenerate("reduced-form residuals are identically zero".into()));
    }
    let pz = z * zz.inv_sqrt().matrix();
    let d = 2 * k;
    // Row i of f is vec(P z_i v_i') = v_i ⊗ P z_i.
    let f = DMatrix::from_fn(n, d, |i, j| resid[(i, j / k)] * pz[(i, j % k)]);
    let mut s = f.transpose() * &f;
    for lag in 1..=bandwidth {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        let head = f.rows(lag, n - lag);
        let tail = f.rows(0, n - lag);
        let gamma = head.transpose() * tail;
        s += (&gamma + gamma.transpose()) * w;
    }
    let s = symmetrize(&s);
    let eig = s.clone().symmetric_eigen();
    let floor = 1e-10 * s.trace() / d as f64;
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let floored = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    SymPd::from_symmetrized(floored)
}
