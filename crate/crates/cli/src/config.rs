//! Command-line flags and the `key=value` config file that backs them.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{CommandFactory, Parser, ValueEnum};
use haciv_core::conditional::TestKind;
use haciv_core::designs::MuShape;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Test,
    Power,
    Confset,
    Quantile,
    DiagOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Homoskedastic,
    Ns,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MuShapeArg {
    E1,
    Ones,
}

impl From<MuShapeArg> for MuShape {
    fn from(m: MuShapeArg) -> Self {
        match m {
            MuShapeArg::E1 => MuShape::E1,
            MuShapeArg::Ones => MuShape::Ones,
        }
    }
}

/// A test as named on the command line. `clr-infeasible` is the CLR test with
/// the true β added to the optimizer starts, so it only exists in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestName {
    Kind(TestKind),
    ClrInfeasible,
}

impl TestName {
    pub fn kind(&self) -> TestKind {
        match self {
            TestName::Kind(k) => *k,
            TestName::ClrInfeasible => TestKind::Clr,
        }
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestName::Kind(k) => write!(f, "{k}"),
            TestName::ClrInfeasible => f.write_str("clr-infeasible"),
        }
    }
}

impl FromStr for TestName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("clr-infeasible") {
            return Ok(TestName::ClrInfeasible);
        }
        s.parse::<TestKind>().map(TestName::Kind).map_err(|e| e.to_string())
    }
}

/// An evenly spaced grid written `min:max:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.min + self.step * i as f64).collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, step] = parts.as_slice() else {
            return Err(format!("expected min:max:step, got `{s}`"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        let g = Grid { min: num(min)?, max: num(max)?, step: num(step)? };
        if !(g.min.is_finite() && g.max.is_finite() && g.step > 0.0 && g.step.is_finite()) {
            return Err(format!("grid `{s}` needs finite bounds and a positive step"));
        }
        if g.max < g.min {
            return Err(format!("grid `{s}` has max below min"));
        }
        Ok(g)
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

/// Weak-instrument-robust tests for linear IV with HAC errors.
#[derive(Debug, Clone, Parser)]
#[command(name = "haciv", version, args_override_self = true)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub command: Command,

    /// Flat `key=value` file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "homoskedastic")]
    pub design: DesignArg,

    #[arg(long, default_value_t = 5)]
    pub k: usize,

    #[arg(long, default_value_t = 2.0)]
    pub lambda_per_k: f64,

    /// Structural error correlation in the homoskedastic design.
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub rho: f64,

    /// Off-diagonal scale of the near-singular design.
    #[arg(long, default_value_t = 100.0)]
    pub c12: f64,

    #[arg(long, value_enum)]
    pub mu_shape: Option<MuShapeArg>,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long, default_value_t = 1000)]
    pub reps: usize,

    #[arg(long, default_value_t = 1000)]
    pub quantile_sims: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// `min:max:step`; rescaled units `β·λ^{1/2}` for power, plain `β` for confset.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: Option<Grid>,

    /// Null value for `test` and `quantile`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta0: f64,

    #[arg(long, value_delimiter = ',', default_value = "ar,lm,cqlr,cil")]
    pub tests: Vec<TestName>,

    #[arg(long, default_value_t = 50)]
    pub lr_starts: usize,

    #[arg(long, value_parser = parse_bool, default_value = "true", action = clap::ArgAction::Set)]
    pub lr_include_beta0: bool,

    /// Bartlett bandwidth of the plug-in long-run variance.
    #[arg(long, default_value_t = 0)]
    pub bandwidth: usize,

    /// `2k x 2k` variance of `vec(R)` (data commands) or `Σ0` (custom design).
    #[arg(long)]
    pub sigma_file: Option<PathBuf>,

    #[arg(long = "in")]
    pub input: Option<PathBuf>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Parses `args` (program name first), merging a `--config` file whose
    /// entries are overridden by explicit flags.
    pub fn from_args<I, T>(args: I) -> Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
        let Some(path) = config_path(&args) else {
            return Self::try_parse_from(args);
        };
        let file_args = read_config_file(&path).map_err(|msg| {
            Self::command().error(clap::error::ErrorKind::ValueValidation, msg)
        })?;
        let mut merged = Vec::with_capacity(args.len() + file_args.len());
        merged.push(args.first().cloned().unwrap_or_else(|| "haciv".into()));
        merged.extend(file_args);
        merged.extend(args.into_iter().skip(1));
        Self::try_parse_from(merged)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.reps == 0 {
            return Err(CliError::Usage("--reps must be at least 1".into()));
        }
        if self.quantile_sims == 0 {
            return Err(CliError::Usage("--quantile-sims must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.tests.is_empty() {
            return Err(CliError::Usage("--tests is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(())
    }
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Turns `key = value` lines into `--key=value` arguments. Blank lines and
/// lines starting with `#` are skipped; `_` in keys reads as `-`.
pub fn read_config_file(path: &Path) -> Result<Vec<OsString>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let cmd = RunConfig::command();
    let known: Vec<String> = cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected key=value", path.display(), i + 1));
        };
        let key = key.trim().replace('_', "-");
        if key == "config" || !known.contains(&key) {
            return Err(format!("{}:{}: unknown key `{key}`", path.display(), i + 1));
        }
        out.push(format!("--{key}={}", value.trim()).into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points() {
        let g: Grid = "-1:1:0.5".parse().unwrap();
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let g: Grid = "0:1:0.3".parse().unwrap();
        assert_eq!(g.points().len(), 4);
        assert!("1:0:1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("0:1".parse::<Grid>().is_err());
    }

    #[test]
    fn test_names() {
        assert_eq!("clr-infeasible".parse::<TestName>().unwrap(), TestName::ClrInfeasible);
        assert_eq!("CIL".parse::<TestName>().unwrap(), TestName::Kind(TestKind::Cil));
        assert!("foo".parse::<TestName>().is_err());
    }

    #[test]
    fn defaults_and_lists() {
        let c = RunConfig::from_args(["haciv", "--command", "power", "--tests", "ar,clr-infeasible", "--rho", "-0.9"]).unwrap();
        assert_eq!(c.tests, vec![TestName::Kind(TestKind::Ar), TestName::ClrInfeasible]);
        assert_eq!(c.rho, -0.9);
        assert_eq!(c.reps, 1000);
        assert!(c.lr_include_beta0);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# power run\ncommand = power\nreps=20\nlambda_per_k = 4\nlr-include-beta0=false\n").unwrap();
        let p = path.to_str().unwrap();
        let c = RunConfig::from_args(["haciv", "--config", p, "--reps", "7"]).unwrap();
        assert_eq!(c.command, Command::Power);
        assert_eq!(c.reps, 7);
        assert_eq!(c.lambda_per_k, 4.0);
        assert!(!c.lr_include_beta0);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "command=power\nfrobnicate=3\n").unwrap();
        let err = RunConfig::from_args(["haciv", "--config", path.to_str().unwrap()]).unwrap_err();
        assert!(err.to_string().contains("unknown key `frobnicate`"), "{err}");
    }
}
