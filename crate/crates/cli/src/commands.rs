//! The five batch commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use haciv_core::conditional::{confidence_set, run_test, ConditionalQuantileSpec, ConditionalTester, TestConfig, TestKind};
use haciv_core::designs::{assemble, DesignSpec, MuShape, R0Sampler};
use haciv_core::model::{estimate_sigma_plugin, null_rotate, partial_out, reduce, Hypothesis, ReducedForm};
use haciv_core::numerics::RngStream;
use haciv_core::stats::LROptConfig;

use crate::config::{Command, DesignArg, RunConfig, TestName};
use crate::error::{CliError, CliResult};
use crate::io::{csv_writer, fmt_f64, read_dataset, read_matrix, write_err};
use crate::sim::{diag_opt, power_curve, PowerOptions, PowerRow, DIAG_SCHEMES};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    match cfg.command {
        Command::Test => cmd_test(cfg),
        Command::Power => cmd_power(cfg),
        Command::Confset => cmd_confset(cfg),
        Command::Quantile => cmd_quantile(cfg),
        Command::DiagOpt => cmd_diag_opt(cfg),
    }
}

pub fn test_config(cfg: &RunConfig) -> TestConfig {
    TestConfig {
        lr: LROptConfig { n_random_starts: cfg.lr_starts, include_beta0: cfg.lr_include_beta0, ..LROptConfig::default() },
        ..TestConfig::default()
    }
}

pub fn design_spec(cfg: &RunConfig) -> CliResult<DesignSpec> {
    let mut spec = match cfg.design {
        DesignArg::Homoskedastic => DesignSpec::homoskedastic(cfg.k, cfg.lambda_per_k, cfg.rho),
        DesignArg::Ns => {
            let mut s = DesignSpec::near_singular(cfg.k, cfg.lambda_per_k);
            s.c12 = cfg.c12;
            s.c22 = haciv_core::designs::ns_c22(cfg.c12);
            s
        }
        DesignArg::Custom => {
            let path = cfg
                .sigma_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--design custom needs --sigma-file with the 2k x 2k matrix Sigma0".into()))?;
            let sigma = read_matrix(path, None)?;
            let d = sigma.dim();
            if d % 2 != 0 {
                return Err(CliError::Data(format!("{}: Sigma0 must be 2k x 2k, got {d} x {d}", path.display())));
            }
            let k = d / 2;
            let m = sigma.matrix();
            let block = |i: usize, j: usize| m.view((i * k, j * k), (k, k)).into_owned();
            DesignSpec::custom(block(0, 0), block(0, 1), block(1, 1), cfg.lambda_per_k, MuShape::Ones)
        }
    };
    if let Some(shape) = cfg.mu_shape {
        spec.mu_shape = shape.into();
    }
    spec.beta0 = cfg.beta0;
    Ok(spec)
}

fn check_tests_for_k(tests: &[TestName], k: usize) -> CliResult<()> {
    for t in tests {
        if k < 2 && !t.kind().allows_k1() {
            return Err(CliError::Usage(match t.kind() {
                TestKind::Cil | TestKind::Cil0 => "CIL requires k >= 2".to_string(),
                _ => format!("{t} requires k >= 2; with one instrument use ar, lm or wald"),
            }));
        }
    }
    Ok(())
}

fn data_tests(cfg: &RunConfig) -> CliResult<Vec<TestKind>> {
    cfg.tests
        .iter()
        .map(|t| match t {
            TestName::Kind(k) => Ok(*k),
            TestName::ClrInfeasible => {
                Err(CliError::Usage("clr-infeasible needs the true beta and is only available in `power`".into()))
            }
        })
        .collect()
}

/// `(R, Σ)` from `--in`, with `Σ` from `--sigma-file` or the plug-in estimator.
pub fn load_reduced_form(cfg: &RunConfig) -> CliResult<ReducedForm> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Usage(format!("{:?} needs --in <data.csv>", cfg.command)))?;
    let data = read_dataset(path)?;
    let (z, _) = partial_out(&data)?;
    let y = data.residualized_outcomes()?;
    let sigma = match &cfg.sigma_file {
        Some(p) => read_matrix(p, Some(2 * data.k()))?,
        None => estimate_sigma_plugin(&z, &y, cfg.bandwidth)?,
    };
    Ok(reduce(&z, &y, sigma)?)
}

fn finish<W: Write>(w: csv::Writer<W>, out: Option<&Path>) -> CliResult<()> {
    w.into_inner().map_err(|e| write_err(out, e))?.flush().map_err(|e| write_err(out, e))
}

fn cmd_test(cfg: &RunConfig) -> CliResult<()> {
    let tests = data_tests(cfg)?;
    let rf = load_reduced_form(cfg)?;
    check_tests_for_k(&cfg.tests, rf.k())?;
    let hyp = Hypothesis::new(cfg.beta0, cfg.alpha)?;
    let tcfg = test_config(cfg);
    let spec = ConditionalQuantileSpec::new(cfg.quantile_sims, cfg.alpha, RngStream::new(cfg.seed, 0))?;
    let out = cfg.out.as_deref();
    let mut w = csv_writer(out)?;
    w.write_record(["test", "beta0", "statistic", "critical_value", "reject", "alpha", "n_sims", "seed"])
        .map_err(|e| write_err(out, e))?;
    for kind in tests {
        let r = run_test(kind, &rf, &hyp, &spec, &tcfg)?;
        w.write_record([
            kind.to_string(),
            fmt_f64(cfg.beta0),
            fmt_f64(r.statistic),
            fmt_f64(r.critical_value),
            r.reject.to_string(),
            fmt_f64(cfg.alpha),
            r.n_sims.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| write_err(out, e))?;
    }
    finish(w, out)
}

fn cmd_power(cfg: &RunConfig) -> CliResult<()> {
    let design = design_spec(cfg)?;
    check_tests_for_k(&cfg.tests, design.k)?;
    let grid = cfg.beta_grid.map_or_else(|| vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0], |g| g.points());
    let opts = PowerOptions {
        alpha: cfg.alpha,
        reps: cfg.reps,
        quantile_sims: cfg.quantile_sims,
        seed: cfg.seed,
        test_cfg: test_config(cfg),
    };
    let rows = power_curve(&design, &cfg.tests, &grid, &opts)?;
    let out = cfg.out.as_deref();
    let mut w = csv_writer(out)?;
    w.write_record(PowerRow::HEADER).map_err(|e| write_err(out, e))?;
    for r in rows {
        w.write_record([
            r.design.to_string(),
            r.k.to_string(),
            fmt_f64(r.lambda_per_k),
            fmt_f64(r.beta_rescaled),
            fmt_f64(r.beta),
            r.test,
            fmt_f64(r.reject_rate),
            fmt_f64(r.mc_se),
            r.reps.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| write_err(out, e))?;
    }
    finish(w, out)
}

/// Path of the interval summary written next to `--out`.
pub fn intervals_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "confset".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.intervals.csv"))
}

fn cmd_confset(cfg: &RunConfig) -> CliResult<()> {
    let tests = data_tests(cfg)?;
    let grid = cfg.beta_grid.ok_or_else(|| CliError::Usage("confset needs --beta-grid min:max:step".into()))?.points();
    let rf = load_reduced_form(cfg)?;
    check_tests_for_k(&cfg.tests, rf.k())?;
    let tcfg = test_config(cfg);
    let spec = ConditionalQuantileSpec::new(cfg.quantile_sims, cfg.alpha, RngStream::new(cfg.seed, 0))?;
    let sets = tests
        .iter()
        .map(|&kind| confidence_set(kind, &rf, &grid, cfg.alpha, &spec, &tcfg).map(|s| (kind, s)))
        .collect::<Result<Vec<_>, _>>()?;

    let out = cfg.out.as_deref();
    let mut w = csv_writer(out)?;
    w.write_record(["test", "beta0", "statistic", "critical_value", "reject"]).map_err(|e| write_err(out, e))?;
    for (kind, set) in &sets {
        for (b, r) in set.grid.iter().zip(&set.reports) {
            w.write_record([
                kind.to_string(),
                fmt_f64(*b),
                fmt_f64(r.statistic),
                fmt_f64(r.critical_value),
                r.reject.to_string(),
            ])
            .map_err(|e| write_err(out, e))?;
        }
    }
    let summary_path = out.map(intervals_path);
    let mut w = match summary_path.as_deref() {
        Some(p) => {
            finish(w, out)?;
            csv_writer(Some(p))?
        }
        None => {
            w.flush().map_err(|e| write_err(out, e))?;
            let mut inner = w.into_inner().map_err(|e| write_err(out, e))?;
            inner.write_all(b"\r\n").map_err(|e| write_err(out, e))?;
            csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(inner)
        }
    };
    let sp = summary_path.as_deref();
    w.write_record(["test", "lower", "upper", "note"]).map_err(|e| write_err(sp, e))?;
    for (kind, set) in &sets {
        if set.is_empty() {
            w.write_record([kind.to_string(), String::new(), String::new(), "empty set".into()])
                .map_err(|e| write_err(sp, e))?;
            continue;
        }
        let (first, last) = (set.grid[0], set.grid[set.grid.len() - 1]);
        for &(lo, hi) in &set.intervals {
            let note = if lo == first || hi == last { "set may extend beyond grid" } else { "" };
            w.write_record([kind.to_string(), fmt_f64(lo), fmt_f64(hi), note.to_string()])
                .map_err(|e| write_err(sp, e))?;
        }
    }
    finish(w, sp)
}

fn cmd_quantile(cfg: &RunConfig) -> CliResult<()> {
    let tests = data_tests(cfg)?;
    let tcfg = test_config(cfg);
    let base = RngStream::new(cfg.seed, 0);
    // Each source is a rotated sample and its Σ0: the data, or null draws of the design.
    let (sigma0, samples, k) = if cfg.input.is_some() {
        let rf = load_reduced_form(cfg)?;
        let nr = null_rotate(&rf, &Hypothesis::new(cfg.beta0, cfg.alpha)?)?;
        let k = nr.k();
        (nr.sigma0().clone(), vec![("data".to_string(), nr.r0().clone())], k)
    } else {
        let design = design_spec(cfg)?;
        let (sigma0, mu) = assemble(&design)?;
        let sampler = R0Sampler::new(&sigma0, &mu, 0.0)?;
        let draws = (0..cfg.reps).map(|r| (r.to_string(), sampler.draw(&mut base.derive(r as u64).rng()))).collect();
        (sigma0, draws, design.k)
    };
    check_tests_for_k(&cfg.tests, k)?;
    let out = cfg.out.as_deref();
    let mut w = csv_writer(out)?;
    w.write_record(["source", "test", "beta0", "t_norm", "critical_value", "n_sims", "seed"])
        .map_err(|e| write_err(out, e))?;
    for kind in tests {
        let mut tester = ConditionalTester::new(kind, &sigma0, cfg.beta0, &tcfg)?;
        for (i, (source, r0)) in samples.iter().enumerate() {
            let (_, t) = tester.frame().st(r0);
            let spec = ConditionalQuantileSpec::new(cfg.quantile_sims, cfg.alpha, base.derive(u64::MAX - 2).derive(i as u64))?;
            let (kappa, n) = match tester.exact_critical_value(cfg.alpha)? {
                Some(c) => (c, 0),
                None => (tester.simulate_critical_value(&t, &spec)?, cfg.quantile_sims),
            };
            w.write_record([
                source.clone(),
                kind.to_string(),
                fmt_f64(cfg.beta0),
                fmt_f64(t.norm()),
                fmt_f64(kappa),
                n.to_string(),
                cfg.seed.to_string(),
            ])
            .map_err(|e| write_err(out, e))?;
        }
    }
    finish(w, out)
}

fn cmd_diag_opt(cfg: &RunConfig) -> CliResult<()> {
    let design = design_spec(cfg)?;
    let base = LROptConfig::default();
    let table = diag_opt(&design, &DIAG_SCHEMES, cfg.reps, cfg.seed, &base)?;
    let out = cfg.out.as_deref();
    let mut w = csv_writer(out)?;
    w.write_record(["row_random_starts", "row_beta0", "col_random_starts", "col_beta0", "beats_pct", "mean_improvement_pct", "draws"])
        .map_err(|e| write_err(out, e))?;
    let yes_no = |b: bool| if b { "yes" } else { "no" }.to_string();
    for (i, r) in table.schemes.iter().enumerate() {
        for (j, c) in table.schemes.iter().enumerate() {
            if i == j {
                continue;
            }
            let cell = table.cell(i, j);
            w.write_record([
                r.random.to_string(),
                yes_no(r.beta0),
                c.random.to_string(),
                yes_no(c.beta0),
                fmt_f64(cell.beats_pct),
                fmt_f64(cell.mean_improvement_pct),
                cfg.reps.to_string(),
            ])
            .map_err(|e| write_err(out, e))?;
        }
    }
    finish(w, out)
}
