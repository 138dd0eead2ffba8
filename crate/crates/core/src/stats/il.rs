//! The integrated likelihood statistics, reported on the log scale.
//!
//! `ln IL = ln ∫ exp(½(S'S − J(η))) |(l_η'⊗I)Σ0^{-1}(l_η⊗I)|^{-1/2} w(η) dη`
//! with `w(η) = |sin η|^{k−2}` (IL) or `|cos η|^{k−2}` (IL0). The log-sum-exp
//! over nodes factors out the largest term, so no intermediate overflows.
//!
//! The integrand is π-periodic and smooth except where the weight vanishes.
//! The rule on `(−π/2, π/2)` is therefore translated so that this point sits
//! at the ends of the interval, which keeps Gauss–Legendre convergence
//! geometric for odd `k` as well.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use super::frame::{NodeCache, NullFrame, Workspace};
use super::StatValue;
use crate::error::{invalid, Result};
use crate::model::{null_rotate, Hypothesis, NullRotated, ReducedForm};
use crate::numerics::quadrature::{graded_rule, log_sum_exp_weighted, QuadratureRule};

/// Angular weight of the integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IlWeight {
    /// `|sin η|^{k−2}`.
    Sin,
    /// `|cos η|^{k−2}`.
    Cos,
    /// `|(sin θ − β0 cos θ)/√(1+β0²)|^{k−2}`, for the original-data angle θ.
    Original { beta0: f64 },
}

impl IlWeight {
    /// Translation applied to the nodes: the zero of the weight moves to `−π/2`.
    fn shift(&self) -> f64 {
        match *self {
            IlWeight::Sin => FRAC_PI_2,
            IlWeight::Cos => 0.0,
            IlWeight::Original { beta0 } => libm::atan(beta0) + FRAC_PI_2,
        }
    }

    fn log_weight(&self, eta: f64, k: usize) -> f64 {
        if k == 2 {
            return 0.0;
        }
        let (sn, cs) = libm::sincos(eta);
        let base = match *self {
            IlWeight::Sin => sn.abs(),
            IlWeight::Cos => cs.abs(),
            IlWeight::Original { beta0 } => (sn - beta0 * cs).abs() / libm::sqrt(1.0 + beta0 * beta0),
        };
        (k as f64 - 2.0) * libm::log(base)
    }
}

/// Node-wise constants of the integrand at a fixed variance, so that each
/// evaluation costs one triangular solve per node.
#[derive(Debug, Clone)]
pub struct IlEvaluator {
    cache: NodeCache,
    ones: Vec<f64>,
    // ln(quadrature weight) + ln w(η) + ½ ln|Σ0| − ½ ln|V(η)|, per node.
    base: Vec<f64>,
}

/// Zeros of `det V` closer than this to the real axis trigger the graded rule.
pub const ADAPT_DISTANCE: f64 = 0.15;

/// The rule actually used for a variance: `quad` itself when `det V(η)` has no
/// complex zero within [`ADAPT_DISTANCE`] of the real axis, otherwise a graded
/// composite rule with `⌈n/20⌉` nodes per panel and the same baseline density
/// as `quad`. Nodes are on `(−π/2, π/2)` before the weight's translation.
pub fn adapted_rule(frame: &NullFrame, quad: &QuadratureRule, weight: IlWeight) -> Result<QuadratureRule> {
    let shift = weight.shift();
    let near: Vec<(f64, f64)> = frame
        .angular_singularities()
        .into_iter()
        .filter(|(_, d)| *d < ADAPT_DISTANCE)
        .map(|(re, d)| (super::lr::wrap(re - shift), d))
        .collect();
    if near.is_empty() {
        return Ok(quad.clone());
    }
    let p = quad.len().div_ceil(20).max(2);
    graded_rule(&near, p, PI * p as f64 / quad.len() as f64)
}

impl IlEvaluator {
    pub fn new(frame: &NullFrame, quad: &QuadratureRule, weight: IlWeight) -> Result<Self> {
        let k = frame.k();
        if k < 2 {
            return Err(invalid!("the integrated likelihood requires k >= 2, got k = {k}"));
        }
        let quad = adapted_rule(frame, quad, weight)?;
        let shift = weight.shift();
        let nodes: Vec<f64> = quad.nodes().iter().map(|x| x + shift).collect();
        let cache = frame.node_cache(&nodes);
        let half_ld = 0.5 * frame.log_det_sigma0();
        let base: Vec<f64> = nodes
            .iter()
            .zip(quad.weights())
            .enumerate()
            .map(|(i, (&eta, &w))| {
                let ld = cache.log_det_v(i);
                if ld.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    libm::log(w) + weight.log_weight(eta, k) + half_ld - 0.5 * ld
                }
            })
            .collect();
        let ones = alloc::vec![1.0; base.len()];
        Ok(Self { cache, ones, base })
    }

    pub fn nodes(&self) -> usize {
        self.base.len()
    }

    /// `ln IL` for data with columns `r01`, `r02` and `S'S = ss`; `terms` is scratch.
    /// Returns the value and the largest log term (the factored-out offset).
    pub fn log_il(&self, r01: &[f64], r02: &[f64], ss: f64, ws: &mut Workspace, terms: &mut Vec<f64>) -> (f64, f64) {
        terms.clear();
        for (i, &b) in self.base.iter().enumerate() {
            let t = if b == f64::NEG_INFINITY {
                b
            } else {
                b + 0.5 * (ss - self.cache.objective(i, r01, r02, ws))
            };
            terms.push(t);
        }
        log_sum_exp_weighted(terms, &self.ones)
    }
}

fn evaluate(frame: &NullFrame, r: &nalgebra::DMatrix<f64>, ss: f64, quad: &QuadratureRule, weight: IlWeight) -> Result<StatValue> {
    let ev = IlEvaluator::new(frame, quad, weight)?;
    let mut ws = Workspace::new(frame.k());
    let mut terms = Vec::with_capacity(quad.len());
    let (c1, c2) = (r.column(0).clone_owned(), r.column(1).clone_owned());
    let (v, offset) = ev.log_il(c1.as_slice(), c2.as_slice(), ss, &mut ws, &mut terms);
    StatValue::new(v).with("log_offset", offset).with("nodes", ev.nodes() as f64).checked()
}

/// `ln IL` of rotated data.
pub fn il(nr: &NullRotated, quad: &QuadratureRule) -> Result<StatValue> {
    check_k(nr.k())?;
    let frame = nr.frame()?;
    let (s, _) = frame.st(nr.r0());
    evaluate(&frame, nr.r0(), s.norm_squared(), quad, IlWeight::Sin)
}

/// `ln IL0`: the same integral with weight `|cos η|^{k−2}`.
pub fn il0(nr: &NullRotated, quad: &QuadratureRule) -> Result<StatValue> {
    check_k(nr.k())?;
    let frame = nr.frame()?;
    let (s, _) = frame.st(nr.r0());
    evaluate(&frame, nr.r0(), s.norm_squared(), quad, IlWeight::Cos)
}

/// `ln IL` integrated over the original-data angle θ (`β = tan θ`) without
/// rotating `Σ`; equals `ln IL − ((k−2)/2) ln(1+β0²)`.
pub fn il_original(rf: &ReducedForm, hyp: &Hypothesis, quad: &QuadratureRule) -> Result<StatValue> {
    check_k(rf.k())?;
    let frame = NullFrame::new(rf.sigma())?;
    let nr = null_rotate(rf, hyp)?;
    let (s, _) = nr.frame()?.st(nr.r0());
    evaluate(&frame, rf.r(), s.norm_squared(), quad, IlWeight::Original { beta0: hyp.beta0 })
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(invalid!("the integrated likelihood requires k >= 2, got k = {k}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::gauss_legendre;
    use crate::numerics::rng::RngStream;
    use crate::testutil::{random_spd, standard_normal_matrix};
    use core::f64::consts::{FRAC_PI_2, PI};
    use nalgebra::{DMatrix, DVector};

    fn instance(seed: u64, k: usize) -> ReducedForm {
        let mut rng = RngStream::new(seed, 0).rng();
        ReducedForm::new(standard_normal_matrix(&mut rng, k, 2) * 1.5, random_spd(&mut rng, 2 * k)).unwrap()
    }

    // Direct evaluation of the integrand from its definition with dense algebra.
    fn integrand_dense(rf: &ReducedForm, theta: f64, weight: f64) -> f64 {
        let k = rf.k();
        let (sn, cs) = (libm::sin(theta), libm::cos(theta));
        let l = DMatrix::from_row_slice(2, 1, &[sn, cs]).kronecker(&DMatrix::<f64>::identity(k, k));
        let sig_inv = rf.sigma().inverse().into_matrix();
        let m = l.transpose() * &sig_inv * &l;
        let v = DVector::from_column_slice(rf.r().as_slice());
        let u = l.transpose() * &sig_inv * &v;
        let proj = (u.transpose() * m.clone().try_inverse().unwrap() * &u)[(0, 0)];
        let st = crate::model::st_decompose(rf, &Hypothesis::new(0.0, 0.05).unwrap()).unwrap();
        libm::exp(0.5 * (proj - st.t.norm_squared())) / libm::sqrt(m.determinant()) * weight
    }

    #[test]
    fn matches_dense_integrand() {
        let rf = instance(1, 3);
        let nr = null_rotate(&rf, &Hypothesis::new(0.0, 0.05).unwrap()).unwrap();
        let fast = il(&nr, &QuadratureRule::default()).unwrap().value;
        // Oracle: each half-interval separately, so the kink of |sin| at 0 is an endpoint.
        let half = gauss_legendre(400).unwrap();
        let dense: f64 = [-1.0, 1.0]
            .iter()
            .map(|side| half.integrate(|x| {
                let t = side * (x + FRAC_PI_2) / 2.0;
                0.5 * integrand_dense(&rf, t, libm::sin(t).abs())
            }))
            .sum();
        assert!((fast - libm::log(dense)).abs() < 1e-10, "{fast} vs {}", libm::log(dense));
    }

    #[test]
    fn k2_il_equals_il0_and_is_finite() {
        let rf = instance(2, 2);
        let nr = null_rotate(&rf, &Hypothesis::new(0.4, 0.05).unwrap()).unwrap();
        let q = QuadratureRule::default();
        let a = il(&nr, &q).unwrap();
        let b = il0(&nr, &q).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        assert!(a.value.is_finite());
    }

    #[test]
    fn rejects_k1() {
        let rf = instance(3, 1);
        let nr = null_rotate(&rf, &Hypothesis::new(0.0, 0.05).unwrap()).unwrap();
        assert!(il(&nr, &QuadratureRule::default()).is_err());
        assert!(il_original(&rf, &Hypothesis::new(0.0, 0.05).unwrap(), &QuadratureRule::default()).is_err());
    }

    #[test]
    fn original_representation_identity() {
        let q = QuadratureRule::default();
        for seed in 0..10 {
            let k = 2 + (seed as usize % 4);
            let rf = instance(10 + seed, k);
            for beta0 in [-2.0, -0.5, 0.0, 1.0, 2.0] {
                let hyp = Hypothesis::new(beta0, 0.05).unwrap();
                let nr = null_rotate(&rf, &hyp).unwrap();
                let a = il(&nr, &q).unwrap().value;
                let b = il_original(&rf, &hyp, &q).unwrap().value;
                let expect = a - 0.5 * (k as f64 - 2.0) * libm::log(1.0 + beta0 * beta0);
                assert!((b - expect).abs() < 1e-8, "k={k} beta0={beta0}: {b} vs {expect}");
            }
        }
    }

    #[test]
    fn node_refinement_is_stable() {
        let designs = [
            crate::designs::DesignSpec::near_singular(5, 2.0),
            crate::designs::DesignSpec::homoskedastic(5, 2.0, 0.9),
            crate::designs::DesignSpec::homoskedastic(4, 8.0, -0.5),
        ];
        let (q201, q401) = (gauss_legendre(201).unwrap(), gauss_legendre(401).unwrap());
        for spec in &designs {
            let (sig, mu) = crate::designs::assemble(spec).unwrap();
            for seed in 0..8u64 {
                let delta = (seed as f64 - 4.0) * 0.4;
                let r0 = crate::designs::R0Sampler::new(&sig, &mu, delta)
                    .unwrap()
                    .draw(&mut RngStream::new(seed, 9).rng());
                let nr = NullRotated::new(r0, sig.clone()).unwrap();
                let rf = nr.as_reduced_form();
                for f in [
                    |nr: &NullRotated, q: &QuadratureRule| il(nr, q).unwrap().value,
                    |nr: &NullRotated, q: &QuadratureRule| il0(nr, q).unwrap().value,
                ] {
                    let (a, b) = (f(&nr, &q201), f(&nr, &q401));
                    assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
                }
                let hyp = Hypothesis::new(0.7, 0.05).unwrap();
                let a = il_original(&rf, &hyp, &q201).unwrap().value;
                let b = il_original(&rf, &hyp, &q401).unwrap().value;
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn change_of_variables_identity() {
        for k in 2..=10 {
            for i in 1..200 {
                let eta = -FRAC_PI_2 + PI * i as f64 / 200.0;
                if i == 100 {
                    continue;
                }
                let (s, t) = (libm::sin(eta), libm::tan(eta));
                let lhs = libm::pow(s.abs(), k as f64) * (1.0 + t * t) / (t * t);
                let rhs = libm::pow(s.abs(), k as f64 - 2.0);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
            }
        }
    }
}
