//! Command-line entry points.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::copula::CopulaSpec;
use crate::critical::{cached_tables, verify_table, LimitSettings};
use crate::error::{CvmError, Result};
use crate::exec::{with_workers, Execution};
use crate::harness::{run_experiment, ConfigFile, ExperimentConfig, ExperimentKind, Scale};
use crate::harness::{DEFAULT_MASTER_SEED, DEFAULT_RANGE_FRACTION};
use crate::matern::{
    generate_independent_bivariate_field, kappa_from_range_fraction, pit_transform, MaternParams,
    MixingRegime,
};
use crate::report::{write_raw, TableArtifact};
use crate::statistic::{compute_cvm_statistic, cvm_permutation_pvalue_with};
use crate::weights::{resolve_weight, ANDERSON_DARLING};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "spatial-cvm",
    version,
    about = "Cramér–von Mises independence tests for random fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical size under independence.
    Size(RunArgs),
    /// Power under copula alternatives.
    Power(RunArgs),
    /// Power under weaker alternatives.
    Weaker(RunArgs),
    /// Sensitivity to the Matérn range used in data generation.
    Bandwidth(RunArgs),
    /// CvM against Mantel, cross-K and distance covariance.
    Comparison(RunArgs),
    /// Every experiment in turn.
    All(RunArgs),
    /// Recompute the asymptotic critical values and compare with the reference table.
    VerifyCv(VerifyArgs),
    /// Test a single simulated dataset.
    Test(TestArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replication scale [default: desk].
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Weight(s) to use; repeatable.
    #[arg(long)]
    pub weight: Vec<String>,
    /// Grid side length(s); repeatable.
    #[arg(long)]
    pub m: Vec<usize>,
    /// Also write full-precision JSON tables.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Truncation level of the eigen-series.
    #[arg(long)]
    pub j: Option<usize>,
    /// Monte Carlo draws.
    #[arg(long)]
    pub n_mc: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = ANDERSON_DARLING)]
    pub weight: String,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    /// Mixing parameter θ of the Matérn regime.
    #[arg(long, default_value_t = 4.0)]
    pub theta: f64,
    /// Gaussian-copula correlation; independent fields when absent.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Permutations for the permutation p-value.
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

fn load_config(common: &CommonArgs) -> Result<ConfigFile> {
    match &common.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

/// Resolved configuration: defaults, then the config file, then flags.
pub fn experiment_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut file = load_config(&args.common)?;
    if args.scale.is_some() {
        file.scale = args.scale;
    }
    let mut cfg = file.resolve(kind, Scale::default());
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.common.out {
        cfg.out_dir = o.clone();
    }
    if args.common.workers.is_some() {
        cfg.workers = args.common.workers;
    }
    if !args.weight.is_empty() {
        cfg.weights = args.weight.clone();
    }
    if !args.m.is_empty() {
        cfg.grid_sizes = args.m.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one experiment and write its CSV and LaTeX tables.
pub fn run_and_write(kind: ExperimentKind, args: &RunArgs) -> Result<TableArtifact> {
    let cfg = experiment_config(kind, args)?;
    log::info!("running {} experiment", kind.name());
    let table = run_experiment(&cfg)?;
    if args.raw {
        write_raw(&table, cfg.out_dir.join(format!("{}.json", table.name)))?;
    }
    let artifact = TableArtifact::new(table, &cfg.out_dir);
    artifact.write_all()?;
    println!(
        "{}: {} rows -> {}",
        kind.name(),
        artifact.table.rows.len(),
        artifact.csv_path.display()
    );
    Ok(artifact)
}

fn verify(args: &VerifyArgs) -> Result<i32> {
    let file = load_config(&args.common)?;
    let mut settings: LimitSettings = file.limit.unwrap_or_default();
    if let Some(j) = args.j {
        settings.j = j;
    }
    if let Some(n) = args.n_mc {
        settings.n_mc = n;
    }
    if let Some(s) = args.common.seed {
        settings.seed = s;
    }
    settings.validate()?;
    let report = with_workers(args.common.workers.or(file.workers), || {
        verify_table(&settings, Execution::Parallel)
    })?;
    print!("{}", report.render());
    Ok(if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn single_test(args: &TestArgs) -> Result<i32> {
    let file = load_config(&args.common)?;
    let seed = args
        .common
        .seed
        .or(file.seed)
        .unwrap_or(DEFAULT_MASTER_SEED);
    let limit = file.limit.unwrap_or_default();
    let w = resolve_weight(&args.weight)?;
    let regime = MixingRegime::from_theta(args.theta)?;
    let kappa = kappa_from_range_fraction(DEFAULT_RANGE_FRACTION, args.m, regime.nu)?;
    let params = MaternParams::new(1.0, kappa, regime.nu)?;
    let pair = match args.rho {
        None => {
            let (x, y) = generate_independent_bivariate_field(args.m, &params, seed)?;
            pit_transform(&x, &y)?
        }
        Some(rho) => CopulaSpec::Gaussian { rho }.sample(args.m, &params, seed)?,
    };
    with_workers(args.common.workers.or(file.workers), || -> Result<i32> {
        let r = compute_cvm_statistic(&pair, &w, true)?;
        let table = cached_tables(&[&w], &limit, Execution::Parallel)?.remove(0);
        let c = table.value(args.alpha).ok_or_else(|| {
            CvmError::InvalidParameter(format!("no critical value at alpha = {}", args.alpha))
        })?;
        let p =
            cvm_permutation_pvalue_with(&pair, &w, args.permutations, seed, Execution::Parallel)?;
        println!("weight            {}", w.name());
        println!("n                 {}", r.n);
        println!("T_n               {:.6}", r.t_n);
        println!("mu_n              {:.6}", r.mu_n);
        println!("T_cent            {:.6}", r.t_cent);
        println!("critical value    {c:.6} (alpha = {})", args.alpha);
        println!(
            "asymptotic        {}",
            if r.t_cent > c {
                "reject"
            } else {
                "do not reject"
            }
        );
        println!("permutation p     {p:.4} (B = {})", args.permutations);
        Ok(EXIT_OK)
    })
}

/// Dispatch a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let kind = match &cli.command {
        Command::Size(_) => ExperimentKind::Size,
        Command::Power(_) => ExperimentKind::Power,
        Command::Weaker(_) => ExperimentKind::Weaker,
        Command::Bandwidth(_) => ExperimentKind::Bandwidth,
        Command::Comparison(_) => ExperimentKind::Comparison,
        Command::All(args) => {
            for kind in ExperimentKind::ALL {
                run_and_write(kind, args)?;
            }
            return Ok(EXIT_OK);
        }
        Command::VerifyCv(args) => return verify(args),
        Command::Test(args) => return single_test(args),
    };
    match cli.command {
        Command::Size(a)
        | Command::Power(a)
        | Command::Weaker(a)
        | Command::Bandwidth(a)
        | Command::Comparison(a) => {
            run_and_write(kind, &a)?;
        }
        _ => unreachable!(),
    }
    Ok(EXIT_OK)
}

/// Parse `argv` and run; usage errors print clap's message.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e @ (CvmError::Config(_) | CvmError::UnknownWeight(_))) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(cli_main(["spatial-cvm", "frobnicate"]), EXIT_USAGE);
        assert_eq!(cli_main(["spatial-cvm"]), EXIT_USAGE);
        assert_eq!(
            cli_main(["spatial-cvm", "size", "--scale", "huge"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn unknown_weight_is_a_usage_error() {
        assert_eq!(
            cli_main(["spatial-cvm", "test", "--weight", "nope", "--m", "5"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "spatial-cvm",
            "size",
            "--seed",
            "7",
            "--out",
            "/tmp/x",
            "--weight",
            "uniform",
            "--m",
            "10",
            "--m",
            "12",
        ])
        .unwrap();
        let Command::Size(args) = cli.command else {
            panic!()
        };
        let cfg = experiment_config(ExperimentKind::Size, &args).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.weights, vec!["uniform".to_string()]);
        assert_eq!(cfg.grid_sizes, vec![10, 12]);
        assert_eq!(cfg.size_replications, 500);
    }

    #[test]
    fn out_defaults_to_results() {
        let cli = Cli::try_parse_from(["spatial-cvm", "power"]).unwrap();
        let Command::Power(args) = cli.command else {
            panic!()
        };
        assert_eq!(
            experiment_config(ExperimentKind::Power, &args)
                .unwrap()
                .out_dir,
            PathBuf::from("results")
        );
    }
}
