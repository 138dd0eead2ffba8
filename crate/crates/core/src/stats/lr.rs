//! The likelihood ratio statistic by multi-start numerical maximization.
//!
//! The search runs in the null-rotated frame over `η ∈ [−π/2, π/2]`, where
//! `η = arctan(β − β0)`. Each local search is confined to that interval even
//! though the objective is π-periodic. `LR = S'S − min_η J(η)`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::frame::{NullFrame, Workspace};
use super::optimize::{local_minimize, Minimum};
use super::StatValue;
use crate::error::Result;
use crate::model::{null_rotate, Hypothesis, ReducedForm};
use crate::numerics::linalg::SymPd;
use crate::numerics::rng::RngStream;

/// Start-point and tolerance settings for the LR search.
#[derive(Debug, Clone, PartialEq)]
pub struct LROptConfig {
    pub n_random_starts: usize,
    pub include_beta0: bool,
    /// Additional starts given as values of β (the infeasible CLR adds the true β).
    pub include_extra_betas: Vec<f64>,
    pub local_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LROptConfig {
    fn default() -> Self {
        Self {
            n_random_starts: 50,
            include_beta0: true,
            include_extra_betas: Vec::new(),
            local_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl LROptConfig {
    pub fn n_starts(&self) -> usize {
        self.n_random_starts + usize::from(self.include_beta0) + self.include_extra_betas.len()
    }
}

// First bracketing step of each local search, in radians.
const INITIAL_STEP: f64 = 0.05;

/// Multi-start LR on the rotated data `r0` whose `S'S` is `ss`.
///
/// Random starts are drawn as `θ ~ U[−π/2, π/2]` on the original scale, that
/// is `β = tan θ`, and mapped to `η = arctan(β − β0)`.
pub fn lr_in_frame<R: Rng + ?Sized>(
    frame: &NullFrame,
    r0: &DMatrix<f64>,
    ss: f64,
    beta0: f64,
    cfg: &LROptConfig,
    rng: &mut R,
    ws: &mut Workspace,
) -> StatValue {
    let r01 = r0.column(0);
    let r02 = r0.column(1);
    let (r01, r02) = (r01.as_slice(), r02.as_slice());
    let mut best: Option<(Minimum, usize)> = None;
    let mut evaluations = 0;
    let mut search = |eta0: f64, idx: usize, ws: &mut Workspace| {
        let m = local_minimize(
            |eta| {
                if eta.abs() > FRAC_PI_2 {
                    f64::INFINITY
                } else {
                    frame.objective(r01, r02, eta, ws)
                }
            },
            eta0,
            INITIAL_STEP,
            PI,
            cfg.local_tolerance,
            cfg.max_iterations,
        );
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|(b, _)| m.fx < b.fx) {
            best = Some((m, idx));
        }
    };
    let mut idx = 0;
    for _ in 0..cfg.n_random_starts {
        let theta: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        search(eta_of_beta(libm::tan(theta), beta0), idx, ws);
        idx += 1;
    }
    if cfg.include_beta0 {
        search(0.0, idx, ws);
        idx += 1;
    }
    for &b in &cfg.include_extra_betas {
        search(eta_of_beta(b, beta0), idx, ws);
        idx += 1;
    }
    match best {
        Some((m, winner)) => StatValue::new(ss - m.fx)
            .with("argmax_eta", wrap(m.x))
            .with("argmax_beta", beta0 + libm::tan(wrap(m.x)))
            .with("winning_start", winner as f64)
            .with("evaluations", evaluations as f64),
        // No starts: the statistic is undefined; report the β0 value, LR = 0.
        None => StatValue::new(0.0).with("winning_start", -1.0),
    }
}

fn eta_of_beta(beta: f64, beta0: f64) -> f64 {
    libm::atan(beta - beta0)
}

/// Maps an angle to `[−π/2, π/2)`.
pub(crate) fn wrap(eta: f64) -> f64 {
    let x = eta + FRAC_PI_2;
    let r = x - PI * libm::floor(x / PI);
    // Rounding can land exactly on π.
    if r >= PI {
        -FRAC_PI_2
    } else {
        r - FRAC_PI_2
    }
}

/// `LR` for `(R, Σ)` at `β0`, maximized from the configured starts.
pub fn lr(rf: &ReducedForm, hyp: &Hypothesis, cfg: &LROptConfig, rng: RngStream) -> Result<StatValue> {
    let nr = null_rotate(rf, hyp)?;
    let frame = NullFrame::new(nr.sigma0())?;
    let (s, _) = frame.st(nr.r0());
    let mut ws = Workspace::new(rf.k());
    lr_in_frame(&frame, nr.r0(), s.norm_squared(), hyp.beta0, cfg, &mut rng.rng(), &mut ws).checked()
}

/// One-dimensional Nelder–Mead in unbounded β with the usual default stopping
/// rule (function spread and simplex width both ≤ 1e-4, at most 200 iterations).
/// This is the draw-and-search scheme on the real line, kept to reproduce its
/// failure; it is not a sound way to compute LR.
pub fn lr_naive(frame: &NullFrame, r0: &DMatrix<f64>, ss: f64, start_beta: f64, ws: &mut Workspace) -> StatValue {
    let r01 = r0.column(0);
    let r02 = r0.column(1);
    let (r01, r02) = (r01.as_slice(), r02.as_slice());
    // β0 is 0 in the rotated frame, so β − β0 is the search variable itself.
    let mut f = |d: f64| {
        let v = frame.objective(r01, r02, libm::atan(d), ws);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let m = nelder_mead_1d(&mut f, start_beta, 1e-4, 1e-4, 200);
    StatValue::new(ss - m.fx).with("argmax_beta", m.x).with("evaluations", m.evaluations as f64)
}

fn nelder_mead_1d<F: FnMut(f64) -> f64>(f: &mut F, x0: f64, tol_x: f64, tol_f: f64, max_iter: usize) -> Minimum {
    let x1 = if x0 != 0.0 { 1.05 * x0 } else { 0.00025 };
    let mut v = [(x0, f(x0)), (x1, f(x1))];
    let mut evals = 2;
    for _ in 0..max_iter {
        if v[1].1 < v[0].1 {
            v.swap(0, 1);
        }
        let (best, worst) = (v[0], v[1]);
        let spread_f = (worst.1 - best.1).abs();
        let spread_x = (worst.0 - best.0).abs();
        if spread_f <= tol_f.max(10.0 * f64::EPSILON * best.1.abs())
            && spread_x <= tol_x.max(10.0 * f64::EPSILON * best.0.abs())
        {
            break;
        }
        // The centroid of the n = 1 best vertices is the best vertex itself.
        let xr = 2.0 * best.0 - worst.0;
        let fr = f(xr);
        evals += 1;
        if fr < best.1 {
            let xe = 3.0 * best.0 - 2.0 * worst.0;
            let fe = f(xe);
            evals += 1;
            v[1] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < worst.1 {
            let xc = 1.5 * best.0 - 0.5 * worst.0;
            let fc = f(xc);
            evals += 1;
            v[1] = if fc <= fr { (xc, fc) } else { (xr, fr) };
        } else {
            let xcc = 0.5 * (best.0 + worst.0);
            let fcc = f(xcc);
            evals += 1;
            // A shrink toward the best vertex coincides with the inside contraction in one dimension.
            v[1] = (xcc, fcc);
        }
    }
    if v[1].1 < v[0].1 {
        v.swap(0, 1);
    }
    Minimum { x: v[0].0, fx: v[0].1, evaluations: evals }
}

/// LR evaluated literally as `max_θ vec(R)'Σ^{-1/2} N_{Σ^{-1/2}(l_θ⊗I)} Σ^{-1/2} vec(R) − T'T`
/// on the original data: an `n_grid`-point θ grid followed by local polishing of
/// the best grid points. Independent of the optimizer behind [`lr`].
pub fn lr_dense(rf: &ReducedForm, hyp: &Hypothesis, n_grid: usize) -> Result<StatValue> {
    let k = rf.k();
    let inv_half = rf.sigma().inv_sqrt();
    let w = inv_half.matrix() * DVector::from_column_slice(rf.r().as_slice());
    let st = crate::model::st_decompose(rf, hyp)?;
    let tt = st.t.norm_squared();
    let proj = |theta: f64| -> f64 {
        let (sn, cs) = libm::sincos(theta);
        let lk = DMatrix::from_fn(2 * k, k, |i, j| {
            if i % k == j {
                if i < k {
                    sn
                } else {
                    cs
                }
            } else {
                0.0
            }
        });
        let x = inv_half.matrix() * lk;
        let xw = x.transpose() * &w;
        match SymPd::from_symmetrized(x.transpose() * &x) {
            Ok(g) => (xw.transpose() * g.inverse().matrix() * &xw)[(0, 0)],
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let n = n_grid.max(2);
    let h = PI / n as f64;
    let vals: Vec<(f64, f64)> = (0..n).map(|i| {
        let th = -FRAC_PI_2 + h * i as f64;
        (th, proj(th))
    }).collect();
    // Polish every local maximum of the grid that is within reach of the best.
    let top = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let mut best = (vals[0].0, top);
    for i in 0..n {
        let (prev, cur, next) = (vals[(i + n - 1) % n].1, vals[i].1, vals[(i + 1) % n].1);
        if cur >= prev && cur >= next && cur >= top - 1e-3 * top.abs().max(1.0) {
            let m = local_minimize(|t| -proj(t), vals[i].0, h / 4.0, 2.0 * h, 1e-12, 200);
            if -m.fx > best.1 {
                best = (m.x, -m.fx);
            }
        }
    }
    StatValue::new(best.1 - tt).with("argmax_theta", wrap(best.0)).with("grid", n as f64).checked()
}

/// `|LR_moment − LR_projection|`: the moment form `b'R'[(b'⊗I)Σ(b⊗I)]^{-1}Rb`
/// searched by [`lr`] against the projection form of [`lr_dense`].
pub fn lr_equivalence_check(rf: &ReducedForm, hyp: &Hypothesis) -> Result<f64> {
    let cfg = LROptConfig { n_random_starts: 100, ..LROptConfig::default() };
    let a = lr(rf, hyp, &cfg, RngStream::new(0x5eed, 0))?;
    let b = lr_dense(rf, hyp, 10_000)?;
    Ok((a.value - b.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;
    use crate::testutil::{random_spd, standard_normal_matrix};

    fn instance(seed: u64, k: usize) -> ReducedForm {
        let mut rng = RngStream::new(seed, 0).rng();
        ReducedForm::new(standard_normal_matrix(&mut rng, k, 2) * 2.0, random_spd(&mut rng, 2 * k)).unwrap()
    }

    #[test]
    fn zero_data() {
        let rf = ReducedForm::new(DMatrix::zeros(3, 2), random_spd(&mut RngStream::new(1, 0).rng(), 6)).unwrap();
        let hyp = Hypothesis::new(0.5, 0.05).unwrap();
        assert_eq!(lr(&rf, &hyp, &LROptConfig::default(), RngStream::new(1, 1)).unwrap().value, 0.0);
        assert!(lr_equivalence_check(&rf, &hyp).unwrap() < 1e-12);
    }

    #[test]
    fn multistart_matches_dense_grid() {
        for seed in 0..10 {
            let rf = instance(seed, 4);
            let hyp = Hypothesis::new(0.3, 0.05).unwrap();
            let ms = lr(&rf, &hyp, &LROptConfig::default(), RngStream::new(seed, 7)).unwrap();
            let grid = lr_dense(&rf, &hyp, 10_000).unwrap();
            assert!((ms.value - grid.value).abs() < 1e-6, "seed {seed}: {} vs {}", ms.value, grid.value);
        }
    }

    #[test]
    fn lr_at_least_zero_with_beta0_start() {
        for seed in 0..20 {
            let rf = instance(100 + seed, 3);
            let cfg = LROptConfig { n_random_starts: 0, ..LROptConfig::default() };
            let v = lr(&rf, &Hypothesis::new(-1.0, 0.05).unwrap(), &cfg, RngStream::new(0, 0)).unwrap();
            assert!(v.value >= -1e-12);
            assert_eq!(v.diagnostic("winning_start"), Some(0.0));
        }
    }

    #[test]
    fn wrap_range() {
        for x in [-10.0, -FRAC_PI_2, -1.0, 0.0, 1.0, FRAC_PI_2, 7.0] {
            let w = wrap(x);
            assert!((-FRAC_PI_2..FRAC_PI_2).contains(&w));
            assert!(libm::sin(2.0 * (w - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn nelder_mead_quadratic() {
        let m = nelder_mead_1d(&mut |x| (x - 2.0) * (x - 2.0), 10.0, 1e-8, 1e-12, 500);
        assert!((m.x - 2.0).abs() < 1e-5, "{m:?}");
    }
}
