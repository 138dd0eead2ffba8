//! Statistics with closed forms: Wald, AR, LM, QLR and LC.

use alloc::collections::BTreeMap;
use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::model::{contract, Hypothesis, ReducedForm, STDecomposition};

/// A statistic with labelled diagnostics (optimizer argmax, node counts, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct StatValue {
    pub value: f64,
    pub diagnostics: BTreeMap<&'static str, f64>,
}

impl StatValue {
    pub fn new(value: f64) -> Self {
        Self { value, diagnostics: BTreeMap::new() }
    }

    pub fn with(mut self, label: &'static str, v: f64) -> Self {
        self.diagnostics.insert(label, v);
        self
    }

    pub fn diagnostic(&self, label: &str) -> Option<f64> {
        self.diagnostics.get(label).copied()
    }

    pub(crate) fn checked(self) -> Result<Self> {
        if self.value.is_finite() {
            Ok(self)
        } else {
            Err(Error::Degenerate(format!("statistic evaluated to {}", self.value)))
        }
    }
}

/// Known-variance t statistic of the 2SLS estimator, `(β̂ − β0)/σ̂_β`.
pub fn wald(rf: &ReducedForm, hyp: &Hypothesis) -> Result<StatValue> {
    let (beta_hat, se) = wald_parts(rf.r(), rf.sigma().matrix(), rf.k())?;
    StatValue::new((beta_hat - hyp.beta0) / se).with("beta_hat", beta_hat).with("se", se).checked()
}

/// `(β̂, σ̂_β)` from `R` and `Σ`. On null-rotated data this gives `β̂ − β0`.
pub(crate) fn wald_parts(r: &DMatrix<f64>, sigma: &DMatrix<f64>, k: usize) -> Result<(f64, f64)> {
    let (r1, r2) = (r.column(0), r.column(1));
    let rr = r2.norm_squared();
    if !(rr > 0.0) {
        return Err(Error::Degenerate("R2 = 0: the Wald statistic is undefined".into()));
    }
    let beta_hat = r2.dot(&r1) / rr;
    let v = contract(sigma, [1.0, -beta_hat], k);
    let var = (r2.transpose() * v * r2)[(0, 0)] / (rr * rr);
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!("Wald variance {var:e} is not positive")));
    }
    Ok((beta_hat, libm::sqrt(var)))
}

/// `AR = S'S`.
pub fn ar(st: &STDecomposition) -> StatValue {
    StatValue::new(st.s.norm_squared())
}

/// `LM = S' N_{C D^{-1} T} S`.
pub fn lm(st: &STDecomposition) -> Result<StatValue> {
    let dinv = st.d_beta0.inverse();
    let dir = st.c_beta0.matrix() * (dinv.matrix() * &st.t);
    lm_along(&st.s, &dir)
}

/// Squared length of the projection of `s` onto `dir`.
pub fn lm_along(s: &DVector<f64>, dir: &DVector<f64>) -> Result<StatValue> {
    let dd = dir.norm_squared();
    if !(dd > 0.0) {
        return Err(Error::Degenerate("LM direction C D^-1 T is zero".into()));
    }
    let sd = s.dot(dir);
    Ok(StatValue::new(sd * sd / dd))
}

/// `(AR − r + √((AR − r)² + 4 LM r)) / 2` with `r = T'T`.
pub fn qlr(ar_v: f64, lm_v: f64, t: &DVector<f64>) -> Result<StatValue> {
    if lm_v > ar_v + 1e-10 * ar_v.abs().max(1.0) {
        return Err(invalid!("LM ({lm_v}) exceeds AR ({ar_v})"));
    }
    if lm_v < -1e-12 {
        return Err(invalid!("LM must be nonnegative, got {lm_v}"));
    }
    Ok(StatValue::new(qlr_value(ar_v, lm_v.min(ar_v).max(0.0), t.norm_squared())))
}

pub(crate) fn qlr_value(ar: f64, lm: f64, r: f64) -> f64 {
    let d = ar - r;
    let disc = libm::sqrt(d * d + 4.0 * lm * r);
    if d >= 0.0 {
        0.5 * (d + disc)
    } else {
        // d + disc loses every digit when LM r is small next to d²; use the
        // rationalized form 2 LM r / (disc − d).
        if disc - d > 0.0 {
            2.0 * lm * r / (disc - d)
        } else {
            0.0
        }
    }
}

/// `m AR + (1 − m) LM`.
pub fn lc(ar_v: f64, lm_v: f64, m: f64) -> Result<StatValue> {
    if !(0.0..=1.0).contains(&m) {
        return Err(invalid!("LC weight m must lie in [0, 1], got {m}"));
    }
    Ok(StatValue::new(m * ar_v + (1.0 - m) * lm_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::st_decompose;
    use crate::numerics::linalg::SymPd;
    use crate::numerics::rng::RngStream;
    use crate::testutil::{random_spd, standard_normal_matrix};
    use proptest::prelude::*;

    fn st_from(s: &[f64], t: &[f64]) -> STDecomposition {
        let k = s.len();
        STDecomposition {
            s: DVector::from_column_slice(s),
            t: DVector::from_column_slice(t),
            c_beta0: SymPd::identity(k),
            d_beta0: SymPd::identity(k),
        }
    }

    #[test]
    fn wald_zero_at_exact_fit() {
        let r2 = DVector::from_vec(alloc::vec![1.0, -2.0, 0.5]);
        let r = DMatrix::from_columns(&[&r2 * 0.7, r2.clone()]);
        let rf = ReducedForm::new(r, SymPd::identity(6)).unwrap();
        let w = wald(&rf, &Hypothesis::new(0.7, 0.05).unwrap()).unwrap();
        assert!(w.value.abs() < 1e-14);
        let rf0 = ReducedForm::new(DMatrix::zeros(3, 2), SymPd::identity(6)).unwrap();
        assert!(wald(&rf0, &Hypothesis::new(0.0, 0.05).unwrap()).is_err());
    }

    #[test]
    fn ar_values() {
        assert_eq!(ar(&st_from(&[0.0, 0.0], &[1.0, 1.0])).value, 0.0);
        assert_eq!(ar(&st_from(&[0.0, 1.0], &[1.0, 1.0])).value, 1.0);
    }

    #[test]
    fn lm_projection_cases() {
        assert!(lm(&st_from(&[0.0, 2.0], &[1.0, 0.0])).unwrap().value.abs() < 1e-15);
        assert!((lm(&st_from(&[3.0, 0.0], &[1.0, 0.0])).unwrap().value - 9.0).abs() < 1e-14);
        assert!((lm(&st_from(&[-1.7], &[0.3])).unwrap().value - 1.7 * 1.7).abs() < 1e-14);
        assert!(lm(&st_from(&[1.0, 1.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn qlr_special_cases() {
        let zero = DVector::zeros(3);
        assert_eq!(qlr(5.0, 2.0, &zero).unwrap().value, 5.0);
        let t = DVector::from_vec(alloc::vec![1.0, 2.0, 0.0]);
        assert!((qlr(4.0, 4.0, &t).unwrap().value - 4.0).abs() < 1e-14);
        assert!((qlr(7.0, 0.0, &t).unwrap().value - 2.0).abs() < 1e-14);
        assert_eq!(qlr(3.0, 0.0, &t).unwrap().value, 0.0);
        assert!(qlr(1.0, 2.0, &t).is_err());
    }

    #[test]
    fn lc_values() {
        assert_eq!(lc(4.0, 2.0, 1.0).unwrap().value, 4.0);
        assert_eq!(lc(4.0, 2.0, 0.0).unwrap().value, 2.0);
        assert_eq!(lc(4.0, 2.0, 0.5).unwrap().value, 3.0);
        assert!(lc(4.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn ordering_on_random_instances() {
        let mut rng = RngStream::new(9, 0).rng();
        for _ in 0..200 {
            let rf = ReducedForm::new(standard_normal_matrix(&mut rng, 4, 2), random_spd(&mut rng, 8)).unwrap();
            let st = st_decompose(&rf, &Hypothesis::new(0.3, 0.05).unwrap()).unwrap();
            let a = ar(&st).value;
            let l = lm(&st).unwrap().value;
            let q = qlr(a, l, &st.t).unwrap().value;
            assert!(l >= 0.0 && l <= a * (1.0 + 1e-12));
            assert!(q >= 0.0 && q <= a * (1.0 + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn qlr_between_lm_and_ar(ar_v in 0.0f64..50.0, frac in 0.0f64..1.0, r in 0.0f64..1e4) {
            let lm_v = ar_v * frac;
            let q = qlr_value(ar_v, lm_v, r);
            prop_assert!(q >= lm_v * (1.0 - 1e-9) - 1e-12);
            prop_assert!(q <= ar_v * (1.0 + 1e-12) + 1e-12);
            prop_assert!(q >= 0.0);
            // QLR solves q² − (AR − r) q − LM r = 0.
            let resid = q * q - (ar_v - r) * q - lm_v * r;
            prop_assert!(resid.abs() <= 1e-8 * (q * q + (ar_v + r) * q + lm_v * r).max(1e-12));
        }
    }
}
