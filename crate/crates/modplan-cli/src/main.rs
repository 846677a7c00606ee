//! Command-line front end: scenario generation and validation, exact and
//! sliced solves with reports, and SVG rendering.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use modplan::bnb::BnbConfig;
use modplan::model::{TerminalMode, Weights};
use modplan::report::{run, RunOptions};
use modplan::scenario::{
    generate, load_scenario, load_solution, save_scenario, Family, GenerateParams,
};
use modplan::svg::render_svg;

#[derive(Parser)]
#[command(
    name = "modplan",
    about = "Plan robot trajectories among movable obstacles with minimum total displacement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark scenario file.
    Generate(GenerateArgs),
    /// Validate a scenario file and print derived problem statistics.
    Validate { scenario: PathBuf },
    /// Solve a scenario for one slice count.
    Solve(SolveArgs),
    /// Solve a scenario for a list of slice counts and emit a report table.
    Sweep(SweepArgs),
    /// Render a solved trajectory to SVG.
    Render {
        scenario: PathBuf,
        solution: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario family: square, corridor or random.
    #[arg(long)]
    family: Family,
    /// Number of obstacles.
    #[arg(long, default_value_t = 9)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Robot model: first-order or double-integrator.
    #[arg(long, default_value = "first-order")]
    model: String,
    /// Horizon override (steps).
    #[arg(long)]
    horizon: Option<usize>,
    /// Terminal mode: soft or hard.
    #[arg(long, default_value = "soft")]
    terminal: String,
    /// Weight preset: standard, light-displacement or heavy-displacement.
    #[arg(long, default_value = "standard")]
    weights: String,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    scenario: PathBuf,
    /// Number of horizon slices (1 = exact).
    #[arg(short, default_value_t = 1)]
    m: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also solve exactly and report the optimality gap.
    #[arg(long)]
    reference: bool,
    /// Output directory for solution, SVG and report files.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    scenario: PathBuf,
    /// Comma-separated slice counts, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    m_list: Vec<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also solve exactly and report optimality gaps.
    #[arg(long)]
    reference: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Big-M override for the collision rows.
    #[arg(long)]
    big_m: Option<f64>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    node_limit: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Stop at this relative optimality gap instead of full optimality.
    #[arg(long)]
    gap: Option<f64>,
    /// Log one line per branch-and-bound node (requires RUST_LOG=debug).
    #[arg(long)]
    log_nodes: bool,
}

impl SolverArgs {
    fn bnb_config(&self) -> BnbConfig {
        BnbConfig {
            node_limit: self.node_limit,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            target_gap: self.gap,
            log_nodes: self.log_nodes,
            ..BnbConfig::default()
        }
    }
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Generate(args) => generate_cmd(args),
        Command::Validate { scenario } => validate_cmd(scenario),
        Command::Solve(args) => {
            let options = RunOptions {
                m_values: vec![args.m],
                with_reference: args.reference,
                bnb: args.solver.bnb_config(),
                big_m: args.solver.big_m,
                out_dir: args.out,
                render: true,
            };
            run_cmd(args.scenario, options)
        }
        Command::Sweep(args) => {
            if args.m_list.is_empty() {
                bail!("--m-list must name at least one slice count");
            }
            let options = RunOptions {
                m_values: args.m_list,
                with_reference: args.reference,
                bnb: args.solver.bnb_config(),
                big_m: args.solver.big_m,
                out_dir: args.out,
                render: true,
            };
            run_cmd(args.scenario, options)
        }
        Command::Render {
            scenario,
            solution,
            out,
        } => {
            let scenario = load_scenario(&scenario)?;
            let solution = load_solution(&solution)?;
            render_svg(&scenario, &solution, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn generate_cmd(args: GenerateArgs) -> Result<()> {
    let model = match args.model.as_str() {
        "first-order" => modplan::model::RobotModel::FirstOrder,
        "double-integrator" => modplan::model::RobotModel::DoubleIntegrator,
        other => bail!("unknown model {other:?}"),
    };
    let terminal = match args.terminal.as_str() {
        "soft" => TerminalMode::Soft,
        "hard" => TerminalMode::Hard,
        other => bail!("unknown terminal mode {other:?}"),
    };
    let weights = match args.weights.as_str() {
        "standard" => Weights::standard(),
        "light-displacement" => Weights::light_displacement(),
        "heavy-displacement" => Weights::heavy_displacement(),
        other => bail!("unknown weight preset {other:?}"),
    };
    let params = GenerateParams {
        count: args.count,
        seed: args.seed,
        model,
        horizon: args.horizon,
        weights,
        terminal,
        ..Default::default()
    };
    let scenario = generate(args.family, &params)?;
    save_scenario(&scenario, &args.out)?;
    println!(
        "wrote {} ({} obstacles, T = {})",
        args.out.display(),
        scenario.obstacle_count(),
        scenario.horizon
    );
    Ok(())
}

fn validate_cmd(path: PathBuf) -> Result<()> {
    let scenario = load_scenario(&path).context("validation failed")?;
    let (problem, layout) = modplan::formulation::build_default(&scenario)?;
    println!("{}: valid", path.display());
    println!("  model            {}", scenario.model);
    println!("  horizon          {}", scenario.horizon);
    println!("  obstacles        {}", scenario.obstacle_count());
    println!("  variables        {}", layout.total());
    println!("  binaries         {}", layout.binary_count());
    println!("  equality rows    {}", problem.qp.a_eq.nrows());
    println!("  inequality rows  {}", problem.qp.a.nrows());
    println!(
        "  default big-M    {:.3}",
        modplan::formulation::default_big_m(&scenario)?
    );
    Ok(())
}

fn run_cmd(path: PathBuf, options: RunOptions) -> Result<()> {
    let scenario = load_scenario(&path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let artifacts = run(&scenario, &name, &options)?;
    print!("{}", artifacts.report.to_table());
    if let Some(dir) = &options.out_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}
