//! Simulation designs: `Σ0` and `μ` for the homoskedastic and near-singular
//! designs, user-supplied blocks, and draws of `R0 ~ N(μ a_Δ', Σ0)`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{AlternativePoint, NullRotated};
use crate::numerics::linalg::SymPd;
use crate::numerics::rng::{fill_standard_normal, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Homoskedastic,
    /// `Σ11 = c11 I`, `Σ12 = c12 J_k`, `Σ22 = c22 I`.
    NearSingular,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuShape {
    /// `μ = √λ e1`.
    E1,
    /// `μ = √(λ/k) 1_k`.
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub k: usize,
    pub lambda_per_k: f64,
    /// Structural-error correlation (homoskedastic design).
    pub rho: f64,
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
    pub mu_shape: MuShape,
    pub beta0: f64,
    /// `(Σ11, Σ12, Σ22)` for [`DesignKind::Custom`].
    pub custom_blocks: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

/// `c12² + c12^{-3}`, the near-singular choice of `c22`.
pub fn ns_c22(c12: f64) -> f64 {
    c12 * c12 + libm::pow(c12, -3.0)
}

impl DesignSpec {
    pub fn homoskedastic(k: usize, lambda_per_k: f64, rho: f64) -> Self {
        Self {
            kind: DesignKind::Homoskedastic,
            k,
            lambda_per_k,
            rho,
            c11: 1.0,
            c12: 0.0,
            c22: 1.0,
            mu_shape: MuShape::Ones,
            beta0: 0.0,
            custom_blocks: None,
        }
    }

    pub fn near_singular(k: usize, lambda_per_k: f64) -> Self {
        Self {
            kind: DesignKind::NearSingular,
            k,
            lambda_per_k,
            rho: 0.0,
            c11: 1.0,
            c12: 100.0,
            c22: ns_c22(100.0),
            mu_shape: MuShape::E1,
            beta0: 0.0,
            custom_blocks: None,
        }
    }

    pub fn custom(s11: DMatrix<f64>, s12: DMatrix<f64>, s22: DMatrix<f64>, lambda_per_k: f64, mu_shape: MuShape) -> Self {
        let k = s11.nrows();
        Self {
            kind: DesignKind::Custom,
            k,
            lambda_per_k,
            rho: 0.0,
            c11: 0.0,
            c12: 0.0,
            c22: 0.0,
            mu_shape,
            beta0: 0.0,
            custom_blocks: Some((s11, s12, s22)),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_per_k * self.k as f64
    }
}

/// `J_k`: ones on the anti-diagonal.
pub fn anti_diagonal(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if i + j + 1 == k { 1.0 } else { 0.0 })
}

fn from_blocks(s11: &DMatrix<f64>, s12: &DMatrix<f64>, s22: &DMatrix<f64>) -> Result<SymPd> {
    let k = s11.nrows();
    if [s11.shape(), s12.shape(), s22.shape()].iter().any(|s| *s != (k, k)) {
        return Err(Error::DimensionMismatch("Sigma0 blocks must all be k x k".into()));
    }
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    m.view_mut((0, 0), (k, k)).copy_from(s11);
    m.view_mut((0, k), (k, k)).copy_from(s12);
    m.view_mut((k, 0), (k, k)).copy_from(&s12.transpose());
    m.view_mut((k, k), (k, k)).copy_from(s22);
    SymPd::new(m)
}

/// `(Σ0, μ)` for a design.
pub fn assemble(spec: &DesignSpec) -> Result<(SymPd, DVector<f64>)> {
    let k = spec.k;
    if k < 1 {
        return Err(invalid!("k must be positive"));
    }
    if !(spec.lambda_per_k >= 0.0) {
        return Err(invalid!("lambda/k must be nonnegative, got {}", spec.lambda_per_k));
    }
    let id = DMatrix::<f64>::identity(k, k);
    let sigma0 = match spec.kind {
        DesignKind::Homoskedastic => {
            if !(spec.rho > -1.0 && spec.rho < 1.0) {
                return Err(invalid!("rho must lie in (-1, 1), got {}", spec.rho));
            }
            // Ω = A(β0) Ψ A(β0)' with A(β0) = [[1, β0], [0, 1]], and
            // B0'A(β0) = I, so Σ0 = Ψ ⊗ I_k whatever β0 is.
            let psi = DMatrix::from_row_slice(2, 2, &[1.0, spec.rho, spec.rho, 1.0]);
            SymPd::new(psi.kronecker(&id))?
        }
        DesignKind::NearSingular => {
            from_blocks(&(&id * spec.c11), &(anti_diagonal(k) * spec.c12), &(&id * spec.c22))?
        }
        DesignKind::Custom => {
            let (a, b, c) = spec.custom_blocks.as_ref().ok_or_else(|| invalid!("custom design needs Sigma0 blocks"))?;
            if a.nrows() != k {
                return Err(Error::DimensionMismatch(format!("blocks are {}x{}, k = {k}", a.nrows(), a.ncols())));
            }
            from_blocks(a, b, c)?
        }
    };
    let lambda = spec.lambda();
    let mu = match spec.mu_shape {
        MuShape::E1 => {
            let mut m = DVector::zeros(k);
            m[0] = libm::sqrt(lambda);
            m
        }
        MuShape::Ones => DVector::from_element(k, libm::sqrt(lambda / k as f64)),
    };
    Ok((sigma0, mu))
}

/// Draws of `R0` with `vec(R0) ~ N(vec(μ (Δ, 1)), Σ0)`.
#[derive(Debug, Clone)]
pub struct R0Sampler {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    k: usize,
}

impl R0Sampler {
    pub fn new(sigma0: &SymPd, mu: &DVector<f64>, delta: f64) -> Result<Self> {
        let k = mu.len();
        if sigma0.dim() != 2 * k {
            return Err(Error::DimensionMismatch(format!("Sigma0 is {0}x{0}, mu has {k} entries", sigma0.dim())));
        }
        let pt = AlternativePoint::new(0.0, delta, mu.clone());
        let mean = DVector::from_column_slice(pt.mean_r0().as_slice());
        Ok(Self { mean, chol: sigma0.cholesky_lower(), k })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut z = DVector::zeros(2 * self.k);
        fill_standard_normal(rng, z.as_mut_slice());
        let v = &self.mean + &self.chol * z;
        DMatrix::from_column_slice(self.k, 2, v.as_slice())
    }
}

/// A batch of draws and the parameters that generated them.
#[derive(Debug, Clone)]
pub struct DrawBatch {
    pub draws: Vec<DMatrix<f64>>,
    pub truth: AlternativePoint,
    pub sigma0: SymPd,
}

impl DrawBatch {
    pub fn rotated(&self) -> impl Iterator<Item = NullRotated> + '_ {
        self.draws.iter().map(|r0| NullRotated::new(r0.clone(), self.sigma0.clone()).expect("draw dimensions match"))
    }
}

/// `n_draws` draws; draw `i` uses the stream `rng.derive(i)`.
pub fn draw_r0(sigma0: &SymPd, mu: &DVector<f64>, delta: f64, n_draws: usize, rng: RngStream) -> Result<DrawBatch> {
    let sampler = R0Sampler::new(sigma0, mu, delta)?;
    let draws = (0..n_draws).map(|i| sampler.draw(&mut rng.derive(i as u64).rng())).collect();
    Ok(DrawBatch { draws, truth: AlternativePoint::new(0.0, delta, mu.clone()), sigma0: sigma0.clone() })
}
