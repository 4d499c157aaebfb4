use std::path::PathBuf;

use bpot::mcmc::McmcConfig;
use bpot::priors::{PriorKind, PriorSpec};
use bpot::scedasis::BallMethod;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bpot", version, about = "Bayesian peaks-over-threshold inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the GP posterior of the top-k excesses.
    Fit(FitArgs),
    /// Posterior of the extreme quantile at tail probability p.
    Quantile(QuantileArgs),
    /// Posterior predictive quantiles of a future peak.
    Predict(PredictArgs),
    /// Scedasis posterior on a covariate grid.
    Scedasis(ScedasisArgs),
    /// Test for a covariate effect on the tail.
    TestCovariate(TestArgs),
    /// Run a simulation experiment from a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    pub output: PathBuf,
    /// Number of top order statistics.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorArg {
    Flat,
    Mdi,
    Jeffreys,
    DataDependent,
}

#[derive(Debug, Clone, Args)]
pub struct PosteriorArgs {
    #[arg(long, value_enum, default_value = "flat")]
    pub prior: PriorArg,
    /// Shape support as `lower,upper`.
    #[arg(long = "gamma-range")]
    pub gamma_range: Option<String>,
    /// Total chain length, burn-in included.
    #[arg(long = "mcmc-iters", default_value_t = 25_000)]
    pub mcmc_iters: usize,
    #[arg(long = "burn-in", default_value_t = 5_000)]
    pub burn_in: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Kernel,
    Knn,
}

#[derive(Debug, Clone, Args)]
pub struct BallArgs {
    #[arg(long, value_enum, default_value = "kernel")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0.1)]
    pub bw: f64,
    /// Neighbours for the KNN ball; defaults to 15% of n.
    #[arg(long = "K")]
    pub knn: Option<usize>,
    /// Total mass of the uniform DP base measure.
    #[arg(long = "tau-mass", default_value_t = 5.0)]
    pub tau_mass: f64,
    /// Covariate points: `0.1,0.5` in one dimension, `0.1,0.2;0.5,0.5` in several.
    #[arg(long = "x-grid")]
    pub x_grid: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub posterior: PosteriorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct QuantileArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    #[arg(long)]
    pub p: f64,
    #[command(flatten)]
    pub ball: BallArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    /// Exceedance probabilities beyond the threshold, comma separated.
    #[arg(long = "p-star", default_value = "0.1,0.01")]
    pub p_star: String,
    #[command(flatten)]
    pub ball: BallArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScedasisArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub ball: BallArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long = "tau-mass", default_value_t = 5.0)]
    pub tau_mass: f64,
    #[arg(long = "M", default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Experiment definition (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved settings, embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub p_star: Option<Vec<f64>>,
    pub prior: Option<PriorSpec>,
    pub mcmc: Option<McmcConfig>,
    pub scedasis: Option<ScedasisBlock>,
    pub test: Option<TestBlock>,
    pub experiment: Option<serde_json::Value>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScedasisBlock {
    pub method: BallMethod,
    pub tau_total: f64,
    pub x_grid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestBlock {
    pub tau_total: f64,
    pub m: usize,
    pub alpha: f64,
}

impl RunConfig {
    pub fn new(command: &str, output: PathBuf, seed: u64) -> Self {
        RunConfig {
            command: command.to_string(),
            input: None,
            output,
            k: None,
            p: None,
            p_star: None,
            prior: None,
            mcmc: None,
            scedasis: None,
            test: None,
            experiment: None,
            seed,
        }
    }

    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": "bpot",
            "version": env!("CARGO_PKG_VERSION"),
            "config": self,
            "seed": self.seed,
        })
    }
}

/// A user seed, or a fresh one reported on stderr.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("no --seed given; using seed {s}");
        s
    })
}

pub fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("cannot parse {what} entry '{t}'")))
        })
        .collect()
}

impl PosteriorArgs {
    pub fn prior(&self) -> CliResult<PriorSpec> {
        let kind = match self.prior {
            PriorArg::Flat => PriorKind::Flat,
            PriorArg::Mdi => PriorKind::Mdi,
            PriorArg::Jeffreys => PriorKind::Jeffreys,
            PriorArg::DataDependent => PriorKind::DataDependent,
        };
        let mut spec = PriorSpec::new(kind);
        if let Some(r) = &self.gamma_range {
            let v = parse_list(r, "--gamma-range")?;
            if v.len() != 2 {
                return Err(CliError::config("--gamma-range takes `lower,upper`"));
            }
            spec = spec.truncated(v[0], v[1])?;
        }
        Ok(spec)
    }

    pub fn mcmc(&self, seed: u64) -> CliResult<McmcConfig> {
        let cfg = McmcConfig {
            iterations: self.mcmc_iters,
            burn_in: self.burn_in,
            seed,
            ..McmcConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl BallArgs {
    pub fn method(&self, n: usize) -> BallMethod {
        match self.method {
            MethodArg::Kernel => BallMethod::Kernel { bw: self.bw },
            MethodArg::Knn => BallMethod::Knn {
                k: self
                    .knn
                    .unwrap_or_else(|| ((0.15 * n as f64).round() as usize).max(1)),
            },
        }
    }

    /// Parsed grid; in one dimension the default is eleven points on `[0, 1]`.
    pub fn grid(&self, d: usize) -> CliResult<Vec<Vec<f64>>> {
        let Some(s) = &self.x_grid else {
            if d == 1 {
                return Ok((0..=10).map(|i| vec![i as f64 / 10.0]).collect());
            }
            return Err(CliError::config("--x-grid is required with more than one covariate"));
        };
        let pts: Vec<Vec<f64>> = if d == 1 {
            parse_list(s, "--x-grid")?.into_iter().map(|v| vec![v]).collect()
        } else {
            s.split(';')
                .map(|p| parse_list(p, "--x-grid"))
                .collect::<CliResult<_>>()?
        };
        if let Some(p) = pts.iter().find(|p| p.len() != d) {
            return Err(CliError::config(format!(
                "grid point {p:?} has {} coordinates, data have {d}",
                p.len()
            )));
        }
        Ok(pts)
    }
}
