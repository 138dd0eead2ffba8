//! Conditional critical values, test decisions and confidence sets.
//!
//! Every test compares a statistic `ψ(S, t, Σ)` with `κ(t, Σ)`, the `1 − α`
//! null quantile of `ψ(S, t, Σ)` over `S ~ N(0, I_k)` at the observed `T = t`.
//! `κ` is simulated unless the statistic is pivotal and an exact quantile is
//! known.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::kronecker::detect_kronecker;
use crate::model::{null_rotate, Hypothesis, NullRotated, ReducedForm};
use crate::numerics::linalg::SymPd;
use crate::numerics::quadrature::QuadratureRule;
use crate::numerics::quantile::empirical_quantile_mut;
use crate::numerics::rng::{fill_standard_normal, RngStream};
use crate::numerics::special::{chi2_quantile, normal_quantile};
use crate::stats::{
    lm_along, lr_in_frame, lr_naive, qlr_value, wald_parts, IlEvaluator, IlWeight, LROptConfig, NullFrame,
    Workspace,
};

/// The implemented tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Ar,
    Lm,
    Wald,
    Cqlr,
    Clr,
    /// CLR from a single Nelder–Mead search on the real line.
    ClrNaive,
    Cil,
    Cil0,
    Lc,
}

impl TestKind {
    pub const ALL: [TestKind; 9] = [
        TestKind::Ar,
        TestKind::Lm,
        TestKind::Wald,
        TestKind::Cqlr,
        TestKind::Clr,
        TestKind::ClrNaive,
        TestKind::Cil,
        TestKind::Cil0,
        TestKind::Lc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Ar => "ar",
            TestKind::Lm => "lm",
            TestKind::Wald => "wald",
            TestKind::Cqlr => "cqlr",
            TestKind::Clr => "clr",
            TestKind::ClrNaive => "clr-naive",
            TestKind::Cil => "cil",
            TestKind::Cil0 => "cil0",
            TestKind::Lc => "lc",
        }
    }

    /// Tests defined for a single instrument.
    pub fn allows_k1(&self) -> bool {
        matches!(self, TestKind::Ar | TestKind::Lm | TestKind::Wald)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        TestKind::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTest(String::from(s)))
    }
}

/// Simulation settings for `κ(t, Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalQuantileSpec {
    pub n_sims: usize,
    pub alpha: f64,
    pub rng: RngStream,
}

impl ConditionalQuantileSpec {
    pub fn new(n_sims: usize, alpha: f64, rng: RngStream) -> Result<Self> {
        if n_sims == 0 {
            return Err(invalid!("n_sims must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid!("alpha must lie in (0, 1), got {alpha}"));
        }
        Ok(Self { n_sims, alpha, rng })
    }

    /// Below this many draws the simulated quantile is noisy enough to matter.
    pub const RECOMMENDED_MIN_SIMS: usize = 100;

    pub fn is_underpowered(&self) -> bool {
        self.n_sims < Self::RECOMMENDED_MIN_SIMS
    }
}

/// Options shared by all tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub lr: LROptConfig,
    pub quadrature: QuadratureRule,
    /// The weight `m` of the LC statistic `m AR + (1 − m) LM`.
    pub lc_weight: f64,
    /// Simulate `κ` for AR, LM and Wald instead of using exact quantiles.
    pub simulate_pivotal: bool,
    /// CLR uses the closed form when `Σ0` is Kronecker.
    pub kronecker_dispatch: bool,
    /// The naive CLR draws its start uniformly on `[−range, range]` in β.
    pub naive_start_range: f64,
    /// The naive CLR reuses one start for every simulated draw, as a single
    /// call to a routine with a fixed initial point would.
    pub naive_shared_start: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            lr: LROptConfig::default(),
            quadrature: QuadratureRule::default(),
            lc_weight: 0.5,
            simulate_pivotal: false,
            kronecker_dispatch: true,
            naive_start_range: 1000.0,
            naive_shared_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// Simulated draws behind the critical value; 0 for an exact quantile.
    pub n_sims: usize,
    pub seed: u64,
    pub diagnostics: BTreeMap<&'static str, f64>,
}

/// Simulates `κ(t, Σ)`: the `1 − α` empirical quantile of `stat(m, S^(m), rng_m)`
/// over `S^(m) ~ N(0, I_k)`, `m = 0..n_sims`. Draw `m` uses the stream
/// `spec.rng.derive(m)`; `S^(m)` comes first and the evaluator may keep
/// drawing from the same generator.
pub fn conditional_quantile<F>(mut stat: F, k: usize, spec: &ConditionalQuantileSpec) -> Result<f64>
where
    F: FnMut(u64, &DVector<f64>, &mut ChaCha8Rng) -> Result<f64>,
{
    let mut values = Vec::with_capacity(spec.n_sims);
    let mut s = DVector::zeros(k);
    for m in 0..spec.n_sims as u64 {
        let mut rng = spec.rng.derive(m).rng();
        fill_standard_normal(&mut rng, s.as_mut_slice());
        let v = stat(m, &s, &mut rng)?;
        if v.is_nan() {
            return Err(Error::Degenerate(alloc::format!("simulated statistic is NaN at draw {m}")));
        }
        values.push(v);
    }
    empirical_quantile_mut(&mut values, 1.0 - spec.alpha)
}

// Stream index of the observed statistic's own randomness (CLR starts).
const OBSERVED_STREAM: u64 = u64::MAX;
// Stream index of the start shared by the naive CLR's simulated draws.
const SHARED_START_STREAM: u64 = u64::MAX - 1;

/// Where the integrated likelihood is evaluated.
#[derive(Debug, Clone)]
enum IlFrame {
    Rotated(IlEvaluator),
    /// On the original `(R, Σ)`, integrating over `θ` with `β = tan θ`.
    Original { ev: IlEvaluator, beta0: f64 },
}

/// A test prepared for a fixed `Σ0`, reusable across data sets that share it.
#[derive(Debug, Clone)]
pub struct ConditionalTester {
    kind: TestKind,
    beta0: f64,
    frame: NullFrame,
    sigma0: DMatrix<f64>,
    cfg: TestConfig,
    il: Option<IlFrame>,
    kronecker: bool,
    ws: Workspace,
    terms: Vec<f64>,
}

impl ConditionalTester {
    /// Prepares `kind` for rotated data with variance `sigma0` at `β0`.
    pub fn new(kind: TestKind, sigma0: &SymPd, beta0: f64, cfg: &TestConfig) -> Result<Self> {
        let frame = NullFrame::new(sigma0)?;
        let k = frame.k();
        check_k(kind, k)?;
        if kind == TestKind::Lc && !(0.0..=1.0).contains(&cfg.lc_weight) {
            return Err(invalid!("LC weight m must lie in [0, 1], got {}", cfg.lc_weight));
        }
        let il = match kind {
            TestKind::Cil => Some(IlFrame::Rotated(IlEvaluator::new(&frame, &cfg.quadrature, IlWeight::Sin)?)),
            TestKind::Cil0 => Some(IlFrame::Rotated(IlEvaluator::new(&frame, &cfg.quadrature, IlWeight::Cos)?)),
            _ => None,
        };
        let kronecker = kind == TestKind::Clr && cfg.kronecker_dispatch && detect_kronecker(sigma0, k).is_some();
        Ok(Self {
            kind,
            beta0,
            frame,
            sigma0: sigma0.matrix().clone(),
            cfg: cfg.clone(),
            il,
            kronecker,
            ws: Workspace::new(k),
            terms: Vec::new(),
        })
    }

    /// CIL with the statistic integrated over the original-data angle. The
    /// factor `(1+β0²)^{(k−2)/2}` relating it to the rotated form is constant
    /// given `β0` and cancels against the critical value.
    pub fn new_original_cil(rf: &ReducedForm, hyp: &Hypothesis, cfg: &TestConfig) -> Result<Self> {
        let nr = null_rotate(rf, hyp)?;
        let frame = NullFrame::new(nr.sigma0())?;
        check_k(TestKind::Cil, frame.k())?;
        let orig = NullFrame::new(rf.sigma())?;
        let ev = IlEvaluator::new(&orig, &cfg.quadrature, IlWeight::Original { beta0: hyp.beta0 })?;
        let k = frame.k();
        Ok(Self {
            kind: TestKind::Cil,
            beta0: hyp.beta0,
            frame,
            sigma0: nr.sigma0().matrix().clone(),
            cfg: cfg.clone(),
            il: Some(IlFrame::Original { ev, beta0: hyp.beta0 }),
            kronecker: false,
            ws: Workspace::new(k),
            terms: Vec::new(),
        })
    }

    pub fn kind(&self) -> TestKind {
        self.kind
    }

    pub fn frame(&self) -> &NullFrame {
        &self.frame
    }

    /// Whether CLR runs as its Kronecker closed form.
    pub fn uses_closed_form(&self) -> bool {
        self.kronecker
    }

    /// The statistic at `(s, t)`; `rng` supplies optimizer starts where needed.
    pub fn statistic(&mut self, s: &DVector<f64>, t: &DVector<f64>, rng: &mut ChaCha8Rng, naive_start: Option<f64>) -> Result<f64> {
        let ss = s.norm_squared();
        let v = match self.kind {
            TestKind::Ar => ss,
            TestKind::Lm => lm_along(s, &self.frame.lm_direction(t))?.value,
            TestKind::Cqlr => self.qlr(s, t)?,
            TestKind::Lc => {
                let lm = lm_along(s, &self.frame.lm_direction(t))?.value;
                self.cfg.lc_weight * ss + (1.0 - self.cfg.lc_weight) * lm
            }
            TestKind::Wald => {
                let r0 = self.frame.r0_from_st(s, t);
                let (d, se) = wald_parts(&r0, &self.sigma0, self.frame.k())?;
                (d / se).abs()
            }
            TestKind::Clr if self.kronecker => self.qlr(s, t)?,
            TestKind::Clr => {
                let r0 = self.frame.r0_from_st(s, t);
                lr_in_frame(&self.frame, &r0, ss, self.beta0, &self.cfg.lr, rng, &mut self.ws).value
            }
            TestKind::ClrNaive => {
                let start = match naive_start {
                    Some(b) => b,
                    None => self.draw_naive_start(rng),
                };
                let r0 = self.frame.r0_from_st(s, t);
                lr_naive(&self.frame, &r0, ss, start - self.beta0, &mut self.ws).value
            }
            TestKind::Cil | TestKind::Cil0 => {
                let r0 = self.frame.r0_from_st(s, t);
                let (c1, c2) = match &self.il {
                    Some(IlFrame::Original { beta0, .. }) => {
                        // R = R0 B0^{-1}: R1 = R01 + β0 R02.
                        (r0.column(0) + r0.column(1) * *beta0, r0.column(1).into_owned())
                    }
                    _ => (r0.column(0).into_owned(), r0.column(1).into_owned()),
                };
                let ev = match self.il.as_ref() {
                    Some(IlFrame::Rotated(ev)) | Some(IlFrame::Original { ev, .. }) => ev,
                    None => unreachable!("integrated likelihood tests carry an evaluator"),
                };
                ev.log_il(c1.as_slice(), c2.as_slice(), ss, &mut self.ws, &mut self.terms).0
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Degenerate(alloc::format!("{} statistic evaluated to {v}", self.kind)))
        }
    }

    fn qlr(&self, s: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        let ss = s.norm_squared();
        let lm = lm_along(s, &self.frame.lm_direction(t))?.value.min(ss);
        Ok(qlr_value(ss, lm, t.norm_squared()))
    }

    fn draw_naive_start(&self, rng: &mut ChaCha8Rng) -> f64 {
        let r = self.cfg.naive_start_range;
        rng.random_range(-r..=r)
    }

    /// The exact critical value of a pivotal statistic, if one is used.
    pub fn exact_critical_value(&self, alpha: f64) -> Result<Option<f64>> {
        if self.cfg.simulate_pivotal {
            return Ok(None);
        }
        Ok(match self.kind {
            TestKind::Ar => Some(chi2_quantile(1.0 - alpha, self.frame.k() as f64)?),
            TestKind::Lm => Some(chi2_quantile(1.0 - alpha, 1.0)?),
            TestKind::Wald => Some(normal_quantile(1.0 - alpha / 2.0)?),
            _ => None,
        })
    }

    /// `κ(t, Σ0)` by simulation.
    pub fn simulate_critical_value(&mut self, t: &DVector<f64>, spec: &ConditionalQuantileSpec) -> Result<f64> {
        let shared = (self.kind == TestKind::ClrNaive && self.cfg.naive_shared_start)
            .then(|| self.draw_naive_start(&mut spec.rng.derive(SHARED_START_STREAM).rng()));
        let k = self.frame.k();
        conditional_quantile(|_, s, rng| self.statistic(s, t, rng, shared), k, spec)
    }

    /// `1 − α` quantile of the statistic over the supplied null draws of `S`.
    /// Draw `m` gets the stream `rng.derive(m)` for any optimizer starts.
    pub fn critical_value_from_draws(&mut self, t: &DVector<f64>, draws: &[DVector<f64>], alpha: f64, rng: RngStream) -> Result<f64> {
        let shared = (self.kind == TestKind::ClrNaive && self.cfg.naive_shared_start)
            .then(|| self.draw_naive_start(&mut rng.derive(SHARED_START_STREAM).rng()));
        let mut values = Vec::with_capacity(draws.len());
        for (m, s) in draws.iter().enumerate() {
            values.push(self.statistic(s, t, &mut rng.derive(m as u64).rng(), shared)?);
        }
        empirical_quantile_mut(&mut values, 1.0 - alpha)
    }

    /// Runs the test on rotated data `r0` (whose variance is this tester's `Σ0`).
    pub fn run(&mut self, r0: &DMatrix<f64>, spec: &ConditionalQuantileSpec) -> Result<TestReport> {
        let (s, t) = self.frame.st(r0);
        let mut rng = spec.rng.derive(OBSERVED_STREAM).rng();
        let statistic = self.statistic(&s, &t, &mut rng, None)?;
        let (critical_value, n_sims) = match self.exact_critical_value(spec.alpha)? {
            Some(c) => (c, 0),
            None => (self.simulate_critical_value(&t, spec)?, spec.n_sims),
        };
        let mut diagnostics = BTreeMap::new();
        if self.kind == TestKind::Clr {
            diagnostics.insert("closed_form", f64::from(u8::from(self.kronecker)));
        }
        Ok(TestReport {
            test: self.kind,
            statistic,
            critical_value,
            reject: statistic > critical_value,
            n_sims,
            seed: spec.rng.seed,
            diagnostics,
        })
    }
}

fn check_k(kind: TestKind, k: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid!("no instruments"));
    }
    if k == 1 && !kind.allows_k1() {
        return Err(match kind {
            TestKind::Cil | TestKind::Cil0 => invalid!("CIL requires k >= 2"),
            _ => invalid!("{kind} requires k >= 2; with one instrument use ar, lm or wald"),
        });
    }
    Ok(())
}

/// Runs `kind` on `(R, Σ)` at `β0`.
pub fn run_test(
    kind: TestKind,
    rf: &ReducedForm,
    hyp: &Hypothesis,
    spec: &ConditionalQuantileSpec,
    cfg: &TestConfig,
) -> Result<TestReport> {
    let nr = null_rotate(rf, hyp)?;
    run_test_rotated(kind, &nr, hyp.beta0, spec, cfg)
}

/// Runs `kind` on data already rotated to the null `β0`.
pub fn run_test_rotated(
    kind: TestKind,
    nr: &NullRotated,
    beta0: f64,
    spec: &ConditionalQuantileSpec,
    cfg: &TestConfig,
) -> Result<TestReport> {
    ConditionalTester::new(kind, nr.sigma0(), beta0, cfg)?.run(nr.r0(), spec)
}

/// Grid points and decisions of an inverted test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub grid: Vec<f64>,
    pub rejected: Vec<bool>,
    pub reports: Vec<TestReport>,
    /// Maximal runs of consecutive accepted grid points, as `(first, last)`.
    pub intervals: Vec<(f64, f64)>,
}

impl ConfidenceSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// The set reaches an end of the grid and may continue beyond it.
    pub fn touches_grid_boundary(&self) -> bool {
        matches!(self.rejected.first(), Some(false)) || matches!(self.rejected.last(), Some(false))
    }
}

/// Maximal runs of `false` in `rejected`, as pairs of grid values.
pub fn accepted_intervals(grid: &[f64], rejected: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &r) in rejected.iter().enumerate() {
        match (r, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((grid[s], grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[rejected.len() - 1]));
    }
    out
}

/// Inverts `kind` over `grid`: the set of `β0` not rejected. CIL is evaluated
/// on the original data at every grid point; all points share `spec`'s seed.
pub fn confidence_set(
    kind: TestKind,
    rf: &ReducedForm,
    grid: &[f64],
    alpha: f64,
    spec: &ConditionalQuantileSpec,
    cfg: &TestConfig,
) -> Result<ConfidenceSet> {
    if grid.is_empty() {
        return Err(invalid!("confidence-set grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid!("confidence-set grid must be strictly increasing"));
    }
    let mut rejected = Vec::with_capacity(grid.len());
    let mut reports = Vec::with_capacity(grid.len());
    for &b in grid {
        let hyp = Hypothesis::new(b, alpha)?;
        let report = if kind == TestKind::Cil {
            let mut tester = ConditionalTester::new_original_cil(rf, &hyp, cfg)?;
            let nr = null_rotate(rf, &hyp)?;
            tester.run(nr.r0(), spec)?
        } else {
            run_test(kind, rf, &hyp, spec, cfg)?
        };
        rejected.push(report.reject);
        reports.push(report);
    }
    let intervals = accepted_intervals(grid, &rejected);
    Ok(ConfidenceSet { grid: grid.to_vec(), rejected, reports, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{assemble, DesignSpec, R0Sampler};
    use crate::numerics::special::chi2_cdf;
    use crate::testutil::{random_spd, standard_normal_matrix};

    fn instance(seed: u64, k: usize) -> ReducedForm {
        let mut rng = RngStream::new(seed, 0).rng();
        ReducedForm::new(standard_normal_matrix(&mut rng, k, 2), random_spd(&mut rng, 2 * k)).unwrap()
    }

    #[test]
    fn test_names_round_trip() {
        for t in TestKind::ALL {
            assert_eq!(t.name().parse::<TestKind>().unwrap(), t);
        }
        assert_eq!(" CIL ".parse::<TestKind>().unwrap(), TestKind::Cil);
        assert_eq!("foo".parse::<TestKind>(), Err(Error::UnknownTest("foo".into())));
    }

    // Standard error of the p-quantile estimate: √(p(1−p)/n) / f(q).
    fn quantile_se(p: f64, n: usize, density: f64) -> f64 {
        libm::sqrt(p * (1.0 - p) / n as f64) / density
    }

    #[test]
    fn pivotal_quantiles_match_chi_square() {
        let k = 4;
        let rf = instance(1, k);
        let hyp = Hypothesis::new(0.3, 0.05).unwrap();
        let nr = null_rotate(&rf, &hyp).unwrap();
        let cfg = TestConfig { simulate_pivotal: true, ..TestConfig::default() };
        let n = 20_000;
        let spec = ConditionalQuantileSpec::new(n, 0.05, RngStream::new(2, 0)).unwrap();
        for (kind, df) in [(TestKind::Ar, k as f64), (TestKind::Lm, 1.0)] {
            let exact = chi2_quantile(0.95, df).unwrap();
            let h = 1e-4;
            let dens = (chi2_cdf(exact + h, df) - chi2_cdf(exact - h, df)) / (2.0 * h);
            let se = quantile_se(0.95, n, dens);
            let mut tester = ConditionalTester::new(kind, nr.sigma0(), hyp.beta0, &cfg).unwrap();
            for scale in [0.0, 1.0, 10.0] {
                let t = DVector::from_fn(k, |i, _| scale * (i as f64 - 1.5));
                let t = if scale == 0.0 { DVector::from_element(k, 1e-3) } else { t };
                let q = tester.simulate_critical_value(&t, &spec).unwrap();
                assert!((q - exact).abs() < 3.0 * se, "{kind} t-scale {scale}: {q} vs {exact} (se {se})");
            }
        }
    }

    #[test]
    fn exact_quantiles_are_used_by_default() {
        let rf = instance(3, 3);
        let hyp = Hypothesis::new(0.0, 0.05).unwrap();
        let spec = ConditionalQuantileSpec::new(10, 0.05, RngStream::new(1, 0)).unwrap();
        let cfg = TestConfig::default();
        let r = run_test(TestKind::Ar, &rf, &hyp, &spec, &cfg).unwrap();
        assert_eq!(r.n_sims, 0);
        assert_eq!(r.critical_value, chi2_quantile(0.95, 3.0).unwrap());
        assert_eq!(r.reject, r.statistic > r.critical_value);
        let r = run_test(TestKind::Wald, &rf, &hyp, &spec, &cfg).unwrap();
        assert!((r.critical_value - 1.959963984540054).abs() < 1e-12);
        let w = crate::stats::wald(&rf, &hyp).unwrap().value;
        assert!((r.statistic - w.abs()).abs() < 1e-10 * w.abs().max(1.0));
    }

    #[test]
    fn small_ar_is_accepted() {
        let k = 3;
        let sigma = SymPd::identity(2 * k);
        let r = DMatrix::from_column_slice(k, 2, &[0.1, -0.2, 0.3, 1.0, 2.0, 3.0]);
        let rf = ReducedForm::new(r, sigma).unwrap();
        let spec = ConditionalQuantileSpec::new(100, 0.05, RngStream::new(1, 0)).unwrap();
        let rep = run_test(TestKind::Ar, &rf, &Hypothesis::new(0.0, 0.05).unwrap(), &spec, &TestConfig::default()).unwrap();
        assert!((rep.statistic - 0.14).abs() < 1e-12);
        assert!(!rep.reject);
    }

    #[test]
    fn one_instrument_restrictions() {
        let rf = instance(4, 1);
        let hyp = Hypothesis::new(0.0, 0.05).unwrap();
        let spec = ConditionalQuantileSpec::new(50, 0.05, RngStream::new(1, 0)).unwrap();
        let cfg = TestConfig::default();
        for kind in [TestKind::Ar, TestKind::Lm, TestKind::Wald] {
            assert!(run_test(kind, &rf, &hyp, &spec, &cfg).is_ok());
        }
        let err = run_test(TestKind::Cil, &rf, &hyp, &spec, &cfg).unwrap_err();
        assert_eq!(err, invalid!("CIL requires k >= 2"));
        assert!(run_test(TestKind::Clr, &rf, &hyp, &spec, &cfg).is_err());
    }

    #[test]
    fn log_transform_leaves_decisions_unchanged() {
        let k = 3;
        let rf = instance(5, k);
        let hyp = Hypothesis::new(0.5, 0.05).unwrap();
        let nr = null_rotate(&rf, &hyp).unwrap();
        let mut tester = ConditionalTester::new(TestKind::Cil, nr.sigma0(), hyp.beta0, &TestConfig::default()).unwrap();
        let (s, t) = tester.frame().st(nr.r0());
        let spec = ConditionalQuantileSpec::new(500, 0.05, RngStream::new(6, 0)).unwrap();
        let mut dummy = RngStream::new(0, 0).rng();
        let obs = tester.statistic(&s, &t, &mut dummy, None).unwrap();
        let q_log = conditional_quantile(|_, s, rng| tester.statistic(s, &t, rng, None), k, &spec).unwrap();
        let q_exp = conditional_quantile(|_, s, rng| tester.statistic(s, &t, rng, None).map(libm::exp), k, &spec).unwrap();
        assert_eq!(libm::exp(q_log), q_exp);
        assert_eq!(obs > q_log, libm::exp(obs) > q_exp);
    }

    #[test]
    fn clr_dispatches_to_closed_form_for_kronecker_variance() {
        let (sigma0, mu) = assemble(&DesignSpec::homoskedastic(4, 2.0, 0.9)).unwrap();
        let sampler = R0Sampler::new(&sigma0, &mu, 0.5).unwrap();
        let cfg = TestConfig::default();
        let numeric = TestConfig { kronecker_dispatch: false, ..TestConfig::default() };
        let spec = ConditionalQuantileSpec::new(200, 0.05, RngStream::new(7, 0)).unwrap();
        let mut a = ConditionalTester::new(TestKind::Clr, &sigma0, 0.0, &cfg).unwrap();
        let mut b = ConditionalTester::new(TestKind::Clr, &sigma0, 0.0, &numeric).unwrap();
        let mut c = ConditionalTester::new(TestKind::Cqlr, &sigma0, 0.0, &cfg).unwrap();
        assert!(a.uses_closed_form() && !b.uses_closed_form());
        for i in 0..5 {
            let r0 = sampler.draw(&mut RngStream::new(8, i).rng());
            let (ra, rb, rc) = (a.run(&r0, &spec).unwrap(), b.run(&r0, &spec).unwrap(), c.run(&r0, &spec).unwrap());
            assert_eq!((ra.statistic, ra.critical_value), (rc.statistic, rc.critical_value));
            assert!((ra.statistic - rb.statistic).abs() < 1e-8 * ra.statistic.max(1.0));
            assert!((ra.critical_value - rb.critical_value).abs() < 1e-8 * ra.critical_value.max(1.0));
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let rf = instance(9, 3);
        let hyp = Hypothesis::new(-0.2, 0.05).unwrap();
        let spec = ConditionalQuantileSpec::new(100, 0.05, RngStream::new(10, 3)).unwrap();
        let cfg = TestConfig { lr: LROptConfig { n_random_starts: 5, ..LROptConfig::default() }, ..TestConfig::default() };
        for kind in TestKind::ALL {
            let a = run_test(kind, &rf, &hyp, &spec, &cfg).unwrap();
            let b = run_test(kind, &rf, &hyp, &spec, &cfg).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn intervals_are_maximal_accepted_runs() {
        let g = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(accepted_intervals(&g, &[true; 6]), alloc::vec![]);
        assert_eq!(accepted_intervals(&g, &[false; 6]), alloc::vec![(1.0, 6.0)]);
        assert_eq!(
            accepted_intervals(&g, &[false, true, false, false, true, false]),
            alloc::vec![(1.0, 1.0), (3.0, 4.0), (6.0, 6.0)]
        );
        assert_eq!(accepted_intervals(&[0.0], &[true]), alloc::vec![]);
    }

    #[test]
    fn ar_confidence_set_matches_direct_inversion() {
        let k = 3;
        let rf = instance(11, k);
        let grid: Vec<f64> = (0..81).map(|i| -4.0 + 0.1 * i as f64).collect();
        let spec = ConditionalQuantileSpec::new(10, 0.05, RngStream::new(1, 0)).unwrap();
        let cs = confidence_set(TestKind::Ar, &rf, &grid, 0.05, &spec, &TestConfig::default()).unwrap();
        let crit = chi2_quantile(0.95, k as f64).unwrap();
        for (b, rej) in grid.iter().zip(&cs.rejected) {
            let st = crate::model::st_decompose(&rf, &Hypothesis::new(*b, 0.05).unwrap()).unwrap();
            assert_eq!(*rej, st.s.norm_squared() > crit, "beta0 = {b}");
        }
        assert_eq!(cs.intervals, accepted_intervals(&grid, &cs.rejected));
        assert!(confidence_set(TestKind::Ar, &rf, &[1.0, 0.5], 0.05, &spec, &TestConfig::default()).is_err());
    }

    #[test]
    fn original_cil_matches_rotated_cil() {
        let k = 4;
        let rf = instance(12, k);
        let spec = ConditionalQuantileSpec::new(300, 0.05, RngStream::new(13, 0)).unwrap();
        let cfg = TestConfig::default();
        for b in [-1.5, 0.0, 0.8] {
            let hyp = Hypothesis::new(b, 0.05).unwrap();
            let nr = null_rotate(&rf, &hyp).unwrap();
            let rot = run_test(TestKind::Cil, &rf, &hyp, &spec, &cfg).unwrap();
            let orig = ConditionalTester::new_original_cil(&rf, &hyp, &cfg).unwrap().run(nr.r0(), &spec).unwrap();
            let shift = (k as f64 - 2.0) / 2.0 * libm::log(1.0 + b * b);
            assert!((rot.statistic - shift - orig.statistic).abs() < 1e-8);
            assert!((rot.critical_value - shift - orig.critical_value).abs() < 1e-8);
            assert_eq!(rot.reject, orig.reject);
        }
    }
}
