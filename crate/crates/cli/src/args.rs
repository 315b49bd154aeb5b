use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "conjdesign", version, about = "Conjecture-based incentive design for smooth games")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override (check threshold, design constraint or root tolerance).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Centralized design of conjectures for a coordinator objective.
    Solve(SolveArgs),
    /// Decentralized protocol: broadcast targets, per-player root solves.
    Decentralized(DecentralizedArgs),
    /// Learning dynamics over a grid of algorithms and step sizes.
    Dynamics(DynamicsArgs),
    /// Consistency residuals of a conjecture set at a profile.
    Check(CheckArgs),
    /// Regenerate one of the benchmark experiments.
    Reproduce(ReproduceArgs),
    /// Write a game-spec file.
    ExportGame(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Affine,
    Quadratic,
}

impl From<Family> for conjdesign::FamilyKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Affine => conjdesign::FamilyKind::Affine,
            Family::Quadratic => conjdesign::FamilyKind::Quadratic,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Game-spec file or catalog game name.
    #[arg(long)]
    pub game: String,
    /// cs, cw or cs2.
    #[arg(long, default_value = "cs")]
    pub mode: String,
    #[arg(long, value_enum, default_value = "affine")]
    pub family: Family,
    /// welfare, product, default or an objective file.
    #[arg(long, default_value = "default")]
    pub objective: String,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value = "result.json")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct DecentralizedArgs {
    #[arg(long)]
    pub game: String,
    #[arg(long, value_enum, default_value = "affine")]
    pub family: Family,
    #[arg(long, default_value = "default")]
    pub objective: String,
    /// Coordinator multistarts.
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    /// Starts per player root solve.
    #[arg(long, default_value_t = 8)]
    pub player_starts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value = "outcome.json")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[arg(long)]
    pub game: String,
    /// Comma-separated algorithms: conj-gd, sg, lola, eg, og, sga.
    #[arg(long = "algo", value_delimiter = ',', required = true)]
    pub algorithms: Vec<String>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Conjecture file or stored set name, needed by conj-gd.
    #[arg(long)]
    pub conjectures: Option<String>,
    /// Initial profile (file, reference name or list); all ones by default.
    #[arg(long)]
    pub x0: Option<String>,
    /// Profile distances are measured to; the game's NE by default.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub lookahead: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sga_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub game: String,
    /// Conjecture file or stored set name.
    #[arg(long)]
    pub conjectures: String,
    /// Profile file, reference name or coordinate list.
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 1)]
    pub order: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Tragedy,
    Olsder,
    Coordination,
    Saddle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tragedy => "tragedy",
            Experiment::Olsder => "olsder",
            Experiment::Coordination => "coordination",
            Experiment::Saddle => "saddle",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Catalog game name or spec file.
    #[arg(long)]
    pub game: String,
    /// Constructor parameters as JSON, e.g. '{"k": 100}'.
    #[arg(long)]
    pub params: Option<String>,
    /// Output file name; `<game>.json` by default.
    #[arg(long)]
    pub output: Option<String>,
}
