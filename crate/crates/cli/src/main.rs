mod commands;
mod input;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::report::Failure;

#[derive(Parser, Debug)]
#[command(name = "detloss", version, about = "Detection-loss attacks and certification for lossy Bell tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-party attack on Bob's detector.
    Attack(AttackArgs),
    /// Two-sided attack reproducing equal losses on both detectors.
    Improved(ImprovedArgs),
    /// Tripartite box and bound-randomness verdict.
    Boundrand(BoundrandArgs),
    /// Local-polytope membership of the lossy behavior.
    Localtest(LocaltestArgs),
    /// Channel-loss planning.
    Plan(PlanArgs),
    /// Round-by-round Monte-Carlo log as JSON lines.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Include wall-clock duration in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug, Serialize)]
struct AttackArgs {
    /// Builtin name (chsh-tsirelson, magic-square) or path to a JSON file.
    #[arg(long, default_value = "chsh-tsirelson")]
    behavior: String,
    /// One efficiency for every Bob setting, or one per setting.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    eta: Vec<f64>,
    /// Targeted Bob settings, 1-based.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    targets: Vec<usize>,
    /// Monte-Carlo rounds; omitted means no simulation.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance for the induced-vs-expected comparison.
    #[arg(long, default_value_t = detloss::EXACT_TOL)]
    tol: f64,
    /// Report infeasibility diagnostics and exit 0.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct ImprovedArgs {
    #[arg(long, default_value = "chsh-tsirelson")]
    behavior: String,
    /// Efficiency to reproduce; defaults to the critical value.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    targets: Vec<usize>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = detloss::EXACT_TOL)]
    tol: f64,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct BoundrandArgs {
    #[arg(long, default_value = "magic-square")]
    behavior: String,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// LP feasibility tolerance.
    #[arg(long, default_value_t = detloss::polytope::DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct LocaltestArgs {
    #[arg(long, default_value = "chsh-tsirelson")]
    behavior: String,
    /// Efficiencies applied to both detectors.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    eta: Vec<f64>,
    #[arg(long, default_value_t = detloss::polytope::DEFAULT_TOL)]
    tol: f64,
    /// Also bisect the detection threshold to this width.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct PlanArgs {
    /// Fibre attenuation in dB/km.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Fibre length in km.
    #[arg(long)]
    length: Option<f64>,
    /// Number of key bases for the distance bound.
    #[arg(long)]
    bases: Option<u64>,
    /// Alice's setting count for the improved threshold.
    #[arg(long = "m-a")]
    m_a: Option<usize>,
    /// Effective target size |G|' for the improved threshold.
    #[arg(long = "g-prime")]
    g_prime: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum AttackKind {
    Primary,
    Improved,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "chsh-tsirelson")]
    behavior: String,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    eta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    targets: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "primary")]
    attack: AttackKind,
    /// Write the log here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Failure::INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Attack(a) => commands::attack(&a),
        Command::Improved(a) => commands::improved(&a),
        Command::Boundrand(a) => commands::boundrand(&a),
        Command::Localtest(a) => commands::localtest(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    ExitCode::from(code)
}
