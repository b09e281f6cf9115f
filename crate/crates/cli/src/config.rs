use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use disorder_core::{parse_model, ModelFile};
use sha2::{Digest, Sha256};

use crate::output::Header;
use crate::Failure;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "disorder", version, about = "Bayesian disorder detection for sensor nets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Model file (TOML)
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Master seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte Carlo replications (or simulated paths)
    #[arg(long, global = true)]
    pub reps: Option<u64>,

    /// Steps of the uniform posterior grid
    #[arg(long, global = true)]
    pub grid: Option<usize>,

    /// Override the model horizon
    #[arg(long, global = true)]
    pub horizon: Option<usize>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Cross-check results against brute-force oracles
    #[arg(long, global = true)]
    pub self_check: bool,

    /// Value iteration tolerance
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,

    /// Value iteration limit
    #[arg(long, global = true, default_value_t = 100_000)]
    pub max_iter: usize,

    /// Largest joint grid for the game solver
    #[arg(long, global = true, default_value_t = disorder_core::equilibrium::DEFAULT_STATE_BUDGET)]
    pub budget: usize,

    /// Random multi-point deviations per player for `verify`
    #[arg(long, global = true, default_value_t = 200)]
    pub deviations: usize,

    /// Observed symbols for `filter`, comma separated (e.g. 0,1,1)
    #[arg(long, global = true, value_delimiter = ',')]
    pub observations: Option<Vec<usize>>,

    /// Sensor (1-based) the observations belong to
    #[arg(long, global = true, default_value_t = 1)]
    pub sensor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check a model file
    Validate,
    /// Simulate disorder times and observation paths
    Simulate,
    /// Posterior disorder probabilities along paths
    Filter,
    /// Optimal stopping rule of each sensor
    SolveSensor,
    /// Equilibrium of the stopping game
    SolveGame,
    /// Naive fusion of the sensors' own rules
    FuseNaive,
    /// Check the equilibrium against unilateral deviations
    Verify,
    /// Naive fusion against the equilibrium on common random numbers
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Filter => "filter",
            Command::SolveSensor => "solve-sensor",
            Command::SolveGame => "solve-game",
            Command::FuseNaive => "fuse-naive",
            Command::Verify => "verify",
            Command::Compare => "compare",
        }
    }

    fn default_reps(self) -> u64 {
        match self {
            Command::Simulate => 10,
            Command::Filter => 1,
            _ => 10_000,
        }
    }

    /// `None` means the exact reachable grid.
    fn default_grid(self) -> Option<usize> {
        match self {
            Command::SolveSensor | Command::FuseNaive => Some(1000),
            Command::Verify => None,
            _ => Some(20),
        }
    }
}

#[derive(Debug)]
pub struct RunConfig {
    pub command: Command,
    pub model_path: PathBuf,
    model_text: String,
    pub model: ModelFile,
    pub seed: u64,
    pub seed_defaulted: bool,
    pub reps: u64,
    pub grid: Option<usize>,
    pub horizon: usize,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub self_check: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub budget: usize,
    pub deviations: usize,
    pub observations: Option<Vec<usize>>,
    pub sensor: usize,
}

impl RunConfig {
    pub fn resolve(cli: Cli) -> Result<Self, Failure> {
        let model_path = cli.model.ok_or_else(|| Failure::Invalid("--model is required".into()))?;
        let model_text = fs::read_to_string(&model_path)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", model_path.display())))?;
        let mut model = parse_model(&model_text)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", model_path.display())))?;
        if let Some(h) = cli.horizon {
            model.net = model.net.with_horizon(h);
        }
        if cli.reps == Some(0) {
            return Err(Failure::Invalid("--reps must be at least 1".into()));
        }
        if cli.grid == Some(0) {
            return Err(Failure::Invalid("--grid must be at least 1".into()));
        }
        if cli.workers == Some(0) {
            return Err(Failure::Invalid("--workers must be at least 1".into()));
        }
        if !(cli.tol > 0.0) {
            return Err(Failure::Invalid("--tol must be positive".into()));
        }
        if cli.sensor == 0 || cli.sensor > model.net.size() {
            return Err(Failure::Invalid(format!("--sensor must be in 1..={}", model.net.size())));
        }
        Ok(Self {
            command: cli.command,
            horizon: model.net.horizon,
            model_path,
            model_text,
            model,
            seed: cli.seed.unwrap_or(DEFAULT_SEED),
            seed_defaulted: cli.seed.is_none(),
            reps: cli.reps.unwrap_or(cli.command.default_reps()),
            grid: cli.grid.or(cli.command.default_grid()),
            out: cli.out,
            workers: cli.workers,
            self_check: cli.self_check,
            tol: cli.tol,
            max_iter: cli.max_iter,
            budget: cli.budget,
            deviations: cli.deviations,
            observations: cli.observations,
            sensor: cli.sensor,
        })
    }

    /// Everything that can change an artifact, in a fixed order. Worker
    /// count and output directory are left out on purpose.
    fn canonical(&self) -> String {
        let model_digest = crate::commands::hex(&Sha256::digest(self.model_text.as_bytes()));
        let grid = self.grid.map_or_else(|| "reachable".to_string(), |g| g.to_string());
        let obs = self
            .observations
            .as_ref()
            .map_or_else(|| "none".to_string(), |o| o.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        format!(
            "command={}\nmodel-sha256={model_digest}\nseed={}\nreps={}\ngrid={grid}\nhorizon={}\nself-check={}\n\
             tol={:e}\nmax-iter={}\nbudget={}\ndeviations={}\nobservations={obs}\nsensor={}\n",
            self.command.name(),
            self.seed,
            self.reps,
            self.horizon,
            self.self_check,
            self.tol,
            self.max_iter,
            self.budget,
            self.deviations,
            self.sensor,
        )
    }

    pub fn config_hash(&self) -> String {
        crate::commands::hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn header(&self) -> Header {
        Header { command: self.command.name().to_string(), config_hash: self.config_hash(), seed: self.seed }
    }

    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model_path.display());
        let _ = writeln!(s, "out: {}", self.out.display());
        let _ = writeln!(
            s,
            "workers: {}",
            self.workers.map_or_else(|| format!("auto ({})", rayon::current_num_threads()), |w| w.to_string())
        );
        for line in self.canonical().lines() {
            let _ = writeln!(s, "{}", line.replacen('=', ": ", 1));
        }
        if self.seed_defaulted {
            let _ = writeln!(s, "(seed defaulted; pass --seed {} to reproduce)", self.seed);
        }
        let _ = writeln!(s, "config-hash: {}", self.config_hash());
        s
    }
}
