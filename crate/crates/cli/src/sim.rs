//! Monte Carlo harness: power curves and optimizer start-point diagnostics.

use haciv_core::conditional::{ConditionalQuantileSpec, ConditionalTester, TestConfig};
use haciv_core::designs::{assemble, DesignKind, DesignSpec, R0Sampler};
use haciv_core::numerics::RngStream;
use haciv_core::stats::{lr_in_frame, LROptConfig, NullFrame, Workspace};
use rayon::prelude::*;

use crate::config::TestName;
use crate::error::{CliError, CliResult};

// Top-level stream indices under the run seed.
const DATA_STREAM: u64 = 0;
const QUANTILE_STREAM: u64 = 1;
const START_STREAM: u64 = 2;

pub fn design_name(kind: DesignKind) -> &'static str {
    match kind {
        DesignKind::Homoskedastic => "homoskedastic",
        DesignKind::NearSingular => "ns",
        DesignKind::Custom => "custom",
    }
}

#[derive(Debug, Clone)]
pub struct PowerOptions {
    pub alpha: f64,
    pub reps: usize,
    pub quantile_sims: usize,
    pub seed: u64,
    pub test_cfg: TestConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub design: &'static str,
    pub k: usize,
    pub lambda_per_k: f64,
    pub beta_rescaled: f64,
    pub beta: f64,
    pub test: String,
    pub reject_rate: f64,
    pub mc_se: f64,
    pub reps: usize,
    pub seed: u64,
}

impl PowerRow {
    pub const HEADER: [&'static str; 10] =
        ["design", "k", "lambda_per_k", "beta_rescaled", "beta", "test", "reject_rate", "mc_se", "reps", "seed"];
}

/// Rejection rates of each test at each grid point, with the grid given in
/// rescaled units `β·λ^{1/2}`.
///
/// Replication `r` draws its data from one stream at every grid point, so the
/// curves use common random numbers; the simulated critical values use a
/// stream addressed by `(grid index, r)`. Output order is test-major and does
/// not depend on scheduling.
pub fn power_curve(design: &DesignSpec, tests: &[TestName], grid: &[f64], opts: &PowerOptions) -> CliResult<Vec<PowerRow>> {
    let (sigma0, mu) = assemble(design)?;
    let lambda = design.lambda();
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(CliError::Usage("power curves need lambda/k > 0 for the rescaled grid".into()));
    }
    let data = RngStream::new(opts.seed, DATA_STREAM);
    let quant = RngStream::new(opts.seed, QUANTILE_STREAM);
    let mut rows = Vec::with_capacity(tests.len() * grid.len());
    for &test in tests {
        let shared = ConditionalTester::new(test.kind(), &sigma0, design.beta0, &opts.test_cfg)?;
        for (g, &x) in grid.iter().enumerate() {
            let beta = design.beta0 + x / lambda.sqrt();
            let template = match test {
                TestName::ClrInfeasible => {
                    let mut cfg = opts.test_cfg.clone();
                    cfg.lr.include_extra_betas.push(beta);
                    ConditionalTester::new(test.kind(), &sigma0, design.beta0, &cfg)?
                }
                TestName::Kind(_) => shared.clone(),
            };
            let sampler = R0Sampler::new(&sigma0, &mu, beta - design.beta0)?;
            let decisions = (0..opts.reps)
                .into_par_iter()
                .map_init(
                    || template.clone(),
                    |tester, r| {
                        let r0 = sampler.draw(&mut data.derive(r as u64).rng());
                        let spec = ConditionalQuantileSpec::new(
                            opts.quantile_sims,
                            opts.alpha,
                            quant.derive(g as u64).derive(r as u64),
                        )?;
                        Ok(tester.run(&r0, &spec)?.reject)
                    },
                )
                .collect::<CliResult<Vec<bool>>>()?;
            let p = decisions.iter().filter(|d| **d).count() as f64 / opts.reps as f64;
            rows.push(PowerRow {
                design: design_name(design.kind),
                k: design.k,
                lambda_per_k: design.lambda_per_k,
                beta_rescaled: x,
                beta,
                test: test.to_string(),
                reject_rate: p,
                mc_se: (p * (1.0 - p) / opts.reps as f64).sqrt(),
                reps: opts.reps,
                seed: opts.seed,
            });
        }
    }
    Ok(rows)
}

/// A start-point scheme: number of random starts and whether `β0` is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartScheme {
    pub random: usize,
    pub beta0: bool,
}

pub const DIAG_SCHEMES: [StartScheme; 4] = [
    StartScheme { random: 1, beta0: false },
    StartScheme { random: 0, beta0: true },
    StartScheme { random: 51, beta0: false },
    StartScheme { random: 50, beta0: true },
];

/// Pairwise comparison of start schemes over null draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagTable {
    pub schemes: Vec<StartScheme>,
    /// `lr[i][j]`: LR of draw `i` under scheme `j`.
    pub lr: Vec<Vec<f64>>,
}

/// Share of draws where the column scheme improves on the row scheme by more
/// than 0.1% in relative terms, and the mean relative improvement (percent)
/// over those draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagCell {
    pub beats_pct: f64,
    pub mean_improvement_pct: f64,
}

pub const IMPROVEMENT_MARGIN: f64 = 1e-3;

impl DiagTable {
    pub fn cell(&self, row: usize, col: usize) -> DiagCell {
        let mut count = 0usize;
        let mut with_base = 0usize;
        let mut total = 0.0;
        for v in &self.lr {
            let (base, other) = (v[row], v[col]);
            if other - base > IMPROVEMENT_MARGIN * base.abs() {
                count += 1;
                if base != 0.0 {
                    with_base += 1;
                    total += (other - base) / base.abs() * 100.0;
                }
            }
        }
        DiagCell {
            beats_pct: 100.0 * count as f64 / self.lr.len() as f64,
            mean_improvement_pct: if with_base > 0 { total / with_base as f64 } else { 0.0 },
        }
    }
}

/// LR under every scheme for `reps` null draws of `design`.
pub fn diag_opt(design: &DesignSpec, schemes: &[StartScheme], reps: usize, seed: u64, base: &LROptConfig) -> CliResult<DiagTable> {
    let (sigma0, mu) = assemble(design)?;
    let frame = NullFrame::new(&sigma0)?;
    let sampler = R0Sampler::new(&sigma0, &mu, 0.0)?;
    let data = RngStream::new(seed, DATA_STREAM);
    let starts = RngStream::new(seed, START_STREAM);
    let lr = (0..reps)
        .into_par_iter()
        .map_init(
            || Workspace::new(design.k),
            |ws, i| {
                let r0 = sampler.draw(&mut data.derive(i as u64).rng());
                let (s, _) = frame.st(&r0);
                let ss = s.norm_squared();
                schemes
                    .iter()
                    .enumerate()
                    .map(|(j, sc)| {
                        let cfg = LROptConfig { n_random_starts: sc.random, include_beta0: sc.beta0, ..base.clone() };
                        let mut rng = starts.derive(i as u64).derive(j as u64).rng();
                        lr_in_frame(&frame, &r0, ss, design.beta0, &cfg, &mut rng, ws).value
                    })
                    .collect::<Vec<f64>>()
            },
        )
        .collect();
    Ok(DiagTable { schemes: schemes.to_vec(), lr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use haciv_core::conditional::TestKind;

    fn quick_opts(reps: usize) -> PowerOptions {
        PowerOptions { alpha: 0.05, reps, quantile_sims: 50, seed: 3, test_cfg: TestConfig::default() }
    }

    #[test]
    fn power_rows_shape_and_determinism() {
        let design = DesignSpec::homoskedastic(3, 2.0, 0.5);
        let tests = [TestName::Kind(TestKind::Ar), TestName::Kind(TestKind::Cqlr)];
        let grid = [-2.0, 0.0, 2.0];
        let a = power_curve(&design, &tests, &grid, &quick_opts(40)).unwrap();
        let b = power_curve(&design, &tests, &grid, &quick_opts(40)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(a[0].test, "ar");
        assert_eq!(a[3].test, "cqlr");
        for r in &a {
            assert!((0.0..=1.0).contains(&r.reject_rate));
            assert!((r.mc_se - (r.reject_rate * (1.0 - r.reject_rate) / 40.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let design = DesignSpec::near_singular(3, 2.0);
        let tests = [TestName::Kind(TestKind::Cil), TestName::ClrInfeasible];
        let mut opts = quick_opts(12);
        opts.test_cfg.lr.n_random_starts = 5;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| power_curve(&design, &tests, &[0.0, 3.0], &opts)).unwrap();
        let b = three.install(|| power_curve(&design, &tests, &[0.0, 3.0], &opts)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_lambda_is_rejected() {
        let design = DesignSpec::homoskedastic(3, 0.0, 0.5);
        let err = power_curve(&design, &[TestName::Kind(TestKind::Ar)], &[0.0], &quick_opts(5)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn diag_cells() {
        let t = DiagTable {
            schemes: DIAG_SCHEMES.to_vec(),
            lr: vec![vec![1.0, 2.0, 1.0, 1.0], vec![-1.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0005, 1.0]],
        };
        let c = t.cell(0, 1);
        assert!((c.beats_pct - 200.0 / 3.0).abs() < 1e-12);
        assert!((c.mean_improvement_pct - 150.0).abs() < 1e-12);
        // 0.05% is inside the margin.
        assert_eq!(t.cell(0, 2).beats_pct, 100.0 / 3.0);
        assert_eq!(t.cell(1, 0).beats_pct, 0.0);
    }

    #[test]
    fn diag_beta0_schemes_are_nonnegative() {
        let design = DesignSpec::near_singular(4, 2.0);
        let t = diag_opt(&design, &DIAG_SCHEMES, 20, 9, &LROptConfig::default()).unwrap();
        for v in &t.lr {
            assert!(v[1] >= 0.0 && v[3] >= 0.0);
            assert!(v[3] >= v[1] - 1e-9);
        }
    }
}
