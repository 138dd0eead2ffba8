//! Precomputed blocks of `Σ0` for repeated evaluation at fixed variance.
//!
//! With `l_η = (sin η, cos η)'` and `b_η = (cos η, −sin η)'`, the likelihood
//! terms reduce to the moment form
//! `J(η) = (R0 b_η)' V(η)^{-1} (R0 b_η)`, `V(η) = (b_η'⊗I) Σ0 (b_η⊗I)`,
//! and `vec(R0)'Σ0^{-1/2} N Σ0^{-1/2} vec(R0) − T'T = S'S − J(η)`.
//! `det((l_η'⊗I)Σ0^{-1}(l_η⊗I)) = det V(η) / det Σ0` gives the volume term.

use alloc::vec::Vec;

use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::NullRotated;
use crate::numerics::linalg::{chol_log_det, chol_quad_form, cholesky_in_place, row_major, SymPd};

#[derive(Debug, Clone)]
pub struct NullFrame {
    k: usize,
    s11: Vec<f64>,
    s12_sym: Vec<f64>,
    s22: Vec<f64>,
    /// `Σ11^{-1/2}`, the matrix `C_{β0}`.
    c: DMatrix<f64>,
    s11_half: DMatrix<f64>,
    /// Schur complement `Σ22 − Σ21 Σ11^{-1} Σ12` and its roots.
    schur_half: DMatrix<f64>,
    schur_inv_half: DMatrix<f64>,
    /// `Σ21 Σ11^{-1}`.
    h: DMatrix<f64>,
    log_det_sigma0: f64,
}

/// Scratch space for allocation-free objective evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    v: Vec<f64>,
    rb: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    pub fn new(k: usize) -> Self {
        Self { v: alloc::vec![0.0; k * k], rb: alloc::vec![0.0; k], tmp: alloc::vec![0.0; k] }
    }
}

impl NullFrame {
    pub fn new(sigma0: &SymPd) -> Result<Self> {
        let k = sigma0.dim() / 2;
        let s11 = SymPd::from_symmetrized(sigma0.block(0, 0, k))?;
        let s12 = sigma0.block(0, 1, k);
        let s21 = sigma0.block(1, 0, k);
        let s22 = sigma0.block(1, 1, k);
        let s11_inv = s11.inverse();
        let h = &s21 * s11_inv.matrix();
        let schur = SymPd::from_symmetrized(&s22 - &h * &s12)?;
        Ok(Self {
            k,
            s11: row_major(s11.matrix()),
            s12_sym: row_major(&(&s12 + &s21)),
            s22: row_major(&s22),
            c: s11.inv_sqrt().into_matrix(),
            s11_half: s11.sqrt().into_matrix(),
            schur_half: schur.sqrt().into_matrix(),
            schur_inv_half: schur.inv_sqrt().into_matrix(),
            h,
            log_det_sigma0: sigma0.log_det(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c_beta0(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `D_{β0} = [(a0'⊗I)Σ^{-1}(a0⊗I)]^{1/2}`, equal to the inverse root of the Schur complement.
    pub fn d_beta0(&self) -> &DMatrix<f64> {
        &self.schur_inv_half
    }

    pub fn log_det_sigma0(&self) -> f64 {
        self.log_det_sigma0
    }

    /// `(S, T)` of the rotated data.
    pub fn st(&self, r0: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let r1 = r0.column(0);
        let s = &self.c * r1;
        let t = &self.schur_inv_half * (r0.column(1) - &self.h * r1);
        (s, t)
    }

    /// Inverse of [`NullFrame::st`].
    pub fn r0_from_st(&self, s: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let r1 = &self.s11_half * s;
        let r2 = &self.schur_half * t + &self.h * &r1;
        DMatrix::from_columns(&[r1, r2])
    }

    /// `C_{β0} D_{β0}^{-1} T`, the direction onto which LM projects `S`.
    pub fn lm_direction(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.c * (&self.schur_half * t)
    }

    /// Fills `ws.v` with the Cholesky factor of `V(η)`; false if not positive definite.
    fn factor_v(&self, cs: f64, sn: f64, ws: &mut Workspace) -> bool {
        let (a, b, c) = (cs * cs, -sn * cs, sn * sn);
        for (i, v) in ws.v.iter_mut().enumerate() {
            *v = a * self.s11[i] + b * self.s12_sym[i] + c * self.s22[i];
        }
        cholesky_in_place(&mut ws.v, self.k)
    }

    /// `J(η)`, or `+∞` when `V(η)` is numerically singular.
    #[inline]
    pub fn objective(&self, r01: &[f64], r02: &[f64], eta: f64, ws: &mut Workspace) -> f64 {
        let (sn, cs) = libm::sincos(eta);
        if !self.factor_v(cs, sn, ws) {
            return f64::INFINITY;
        }
        for i in 0..self.k {
            ws.rb[i] = cs * r01[i] - sn * r02[i];
        }
        chol_quad_form(&ws.v, self.k, &ws.rb, &mut ws.tmp)
    }

    /// Complex zeros of `det V(η)` as `(Re η, |Im η|)`, with `Re η` in `[−π/2, π/2)`.
    ///
    /// With `t = tan η`, `V(η) = cos²η (Σ11 − t(Σ12+Σ21) + t²Σ22)`, so the zeros
    /// are the eigenvalues of a quadratic pencil, found through its companion
    /// linearization. Zeros with `|t| > 1` come from the reversed pencil in
    /// `1/t`, which is better conditioned there.
    pub fn angular_singularities(&self) -> Vec<(f64, f64)> {
        let k = self.k;
        let a = DMatrix::from_row_slice(k, k, &self.s11);
        let b = DMatrix::from_row_slice(k, k, &self.s12_sym);
        let c = DMatrix::from_row_slice(k, k, &self.s22);
        let mut out = Vec::new();
        for reversed in [false, true] {
            // Pencil p(t) = lead t² − mid t + tail.
            let (tail, lead) = if reversed { (&c, &a) } else { (&a, &c) };
            let Some(lead_inv) = lead.clone().try_inverse() else { continue };
            let mut m = DMatrix::zeros(2 * k, 2 * k);
            m.view_mut((0, k), (k, k)).fill_with_identity();
            m.view_mut((k, 0), (k, k)).copy_from(&(-&lead_inv * tail));
            m.view_mut((k, k), (k, k)).copy_from(&(&lead_inv * &b));
            for z in m.complex_eigenvalues().iter() {
                let (x, y) = (z.re, z.im);
                let r2 = x * x + y * y;
                if r2 > 1.0 || (reversed && r2 == 1.0) || !r2.is_finite() {
                    continue;
                }
                // Reversed eigenvalues are 1/t.
                let (x, y) = if reversed {
                    if r2 == 0.0 {
                        out.push((-FRAC_PI_2, 0.0));
                        continue;
                    }
                    (x / r2, -y / r2)
                } else {
                    (x, y)
                };
                let re = 0.5 * libm::atan2(2.0 * x, 1.0 - x * x - y * y);
                let im = 0.25 * libm::log((x * x + (1.0 + y) * (1.0 + y)) / (x * x + (1.0 - y) * (1.0 - y)));
                out.push((super::lr::wrap(re), im.abs()));
            }
        }
        out
    }

    /// Per-node Cholesky factors and log determinants of `V(η)`.
    pub fn node_cache(&self, nodes: &[f64]) -> NodeCache {
        let kk = self.k * self.k;
        let mut ws = Workspace::new(self.k);
        let mut chol = Vec::with_capacity(nodes.len() * kk);
        let mut log_det_v = Vec::with_capacity(nodes.len());
        let mut trig = Vec::with_capacity(nodes.len());
        for &eta in nodes {
            let (sn, cs) = libm::sincos(eta);
            let ok = self.factor_v(cs, sn, &mut ws);
            chol.extend_from_slice(&ws.v);
            log_det_v.push(if ok { chol_log_det(&ws.v, self.k) } else { f64::NAN });
            trig.push((sn, cs, ok));
        }
        NodeCache { k: self.k, chol, log_det_v, trig }
    }
}

/// Variance-only quantities at fixed quadrature nodes.
#[derive(Debug, Clone)]
pub struct NodeCache {
    k: usize,
    chol: Vec<f64>,
    log_det_v: Vec<f64>,
    trig: Vec<(f64, f64, bool)>,
}

impl NodeCache {
    pub fn len(&self) -> usize {
        self.trig.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trig.is_empty()
    }

    pub fn log_det_v(&self, i: usize) -> f64 {
        self.log_det_v[i]
    }

    /// `J` at node `i`; `+∞` where `V` was singular.
    #[inline]
    pub fn objective(&self, i: usize, r01: &[f64], r02: &[f64], ws: &mut Workspace) -> f64 {
        let (sn, cs, ok) = self.trig[i];
        if !ok {
            return f64::INFINITY;
        }
        for j in 0..self.k {
            ws.rb[j] = cs * r01[j] - sn * r02[j];
        }
        let kk = self.k * self.k;
        chol_quad_form(&self.chol[i * kk..(i + 1) * kk], self.k, &ws.rb, &mut ws.tmp)
    }
}

impl NullRotated {
    pub fn frame(&self) -> Result<NullFrame> {
        NullFrame::new(self.sigma0())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{null_rotate, st_decompose, Hypothesis, ReducedForm};
    use crate::numerics::rng::RngStream;
    use crate::testutil::{random_spd, standard_normal_matrix};

    #[test]
    fn frame_st_matches_literal_definition() {
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..20 {
            let rf = ReducedForm::new(standard_normal_matrix(&mut rng, 4, 2), random_spd(&mut rng, 8)).unwrap();
            let hyp = Hypothesis::new(-0.6, 0.05).unwrap();
            let st = st_decompose(&rf, &hyp).unwrap();
            let nr = null_rotate(&rf, &hyp).unwrap();
            let frame = nr.frame().unwrap();
            let (s, t) = frame.st(nr.r0());
            assert!((&s - &st.s).amax() < 1e-10);
            assert!((&t - &st.t).amax() < 1e-10);
            assert!((frame.c_beta0() - st.c_beta0.matrix()).amax() < 1e-10);
            assert!((frame.d_beta0() - st.d_beta0.matrix()).amax() < 1e-10);
            let back = frame.r0_from_st(&s, &t);
            assert!((back - nr.r0()).amax() < 1e-10);
        }
    }

    #[test]
    fn singularities_of_near_singular_design() {
        let (sigma0, _) = crate::designs::assemble(&crate::designs::DesignSpec::near_singular(5, 2.0)).unwrap();
        let frame = NullFrame::new(&sigma0).unwrap();
        let sing = frame.angular_singularities();
        // Zeros at t = (±100 ± i·10^{-3}) / c22.
        let c22 = crate::designs::ns_c22(100.0);
        let (x, y) = (100.0 / c22, 1e-3 / c22);
        for sign in [-1.0, 1.0] {
            let re = libm::atan(sign * x);
            let hit = sing.iter().find(|(r, _)| (r - re).abs() < 1e-6).expect("zero found");
            let expect = y / (1.0 + x * x);
            assert!((hit.1 - expect).abs() < 1e-2 * expect, "{hit:?} vs {expect}");
        }
        // Homoskedastic Ψ ⊗ I: zeros of 1 − 2ρt + t², i.e. t = ρ ± i√(1−ρ²).
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let frame = NullFrame::new(&SymPd::new(psi.kronecker(&DMatrix::<f64>::identity(3, 3))).unwrap()).unwrap();
        for (re, im) in frame.angular_singularities() {
            assert!((re - core::f64::consts::FRAC_PI_4).abs() < 1e-6, "{re}");
            let r: f64 = (1.0 - 0.81f64).sqrt();
            assert!((im - 0.25 * libm::log((1.0 + r) / (1.0 - r))).abs() < 1e-6, "{im}");
        }
    }

    #[test]
    fn objective_at_zero_is_ar_and_matches_dense() {
        let mut rng = RngStream::new(2, 0).rng();
        let k = 3;
        let sigma0 = random_spd(&mut rng, 2 * k);
        let r0 = standard_normal_matrix(&mut rng, k, 2);
        let frame = NullFrame::new(&sigma0).unwrap();
        let (s, _) = frame.st(&r0);
        let mut ws = Workspace::new(k);
        let (r01, r02) = (r0.column(0).clone_owned(), r0.column(1).clone_owned());
        let j0 = frame.objective(r01.as_slice(), r02.as_slice(), 0.0, &mut ws);
        assert!((j0 - s.norm_squared()).abs() < 1e-10);
        for &eta in &[-1.2, -0.3, 0.4, 1.1] {
            let (sn, cs): (f64, f64) = (libm::sin(eta), libm::cos(eta));
            let bk = DMatrix::from_row_slice(2, 1, &[cs, -sn]).kronecker(&DMatrix::<f64>::identity(k, k));
            let v = bk.transpose() * sigma0.matrix() * &bk;
            let rb = &r0 * nalgebra::Vector2::new(cs, -sn);
            let dense = (rb.transpose() * v.try_inverse().unwrap() * &rb)[(0, 0)];
            let fast = frame.objective(r01.as_slice(), r02.as_slice(), eta, &mut ws);
            assert!((dense - fast).abs() < 1e-10 * dense.max(1.0));
            let cache = frame.node_cache(&[eta]);
            assert!((cache.objective(0, r01.as_slice(), r02.as_slice(), &mut ws) - fast).abs() < 1e-12 * fast.max(1.0));
        }
    }
}
