use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gibbs_harness::plot::{self, Series};
use gibbs_harness::{run, HarnessError, HarnessResult, Overrides, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "mgibbs", version, about = "Sampling and verification runs for marked Gibbs point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw finite-volume Gibbs samples to JSONL.
    Sample(RunArgs),
    /// Area, perimeter and Euler characteristic of a disc union.
    Geometry(RunArgs),
    /// Tempered class and range separation of stored configurations.
    Temper(RunArgs),
    /// Empirical stability constants and the Lennard-Jones floor.
    Audit(RunArgs),
    /// Per-volume relative entropy curve and its ceiling.
    Entropy(RunArgs),
    /// DLR residuals for the functional library.
    Dlr(RunArgs),
    /// Exact kernel compatibility on an enumerable instance.
    Compat(RunArgs),
    /// Langevin invariant-law check and mark moment audit.
    Diffusion(RunArgs),
    /// Extract an (x, y, err) CSV series from a report.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    z: Option<f64>,
    /// Model name or TOML inline table, e.g. `{ model = "hardcore" }`.
    #[arg(long)]
    model: Option<String>,
    /// Cube half-width or TOML inline table.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long = "burnin")]
    burn_in: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    /// `free` or a JSONL file holding the boundary configuration.
    #[arg(long)]
    boundary: Option<String>,
    /// Input file of the geometry and temper stages.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            z: self.z,
            model: self.model.clone(),
            window: self.window.clone(),
            steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
            chains: self.chains,
            boundary: self.boundary.clone(),
            input: self.input.clone(),
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct PlotArgs {
    /// Report CSV; entropy_curve.csv columns by default.
    #[arg(required_unless_present = "lj")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "n")]
    x: String,
    #[arg(long, default_value = "per_volume")]
    y: String,
    #[arg(long, default_value = "stderr")]
    err: String,
    /// Table without an error column.
    #[arg(long)]
    no_err: bool,
    /// Emit the Lennard-Jones profile on [1.2, 3] instead of reading a report.
    #[arg(long, conflicts_with = "input")]
    lj: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn plot_data(args: &PlotArgs) -> HarnessResult<()> {
    let rows = if args.lj {
        plot::lj_sweep()
    } else {
        let input = args.input.as_ref().expect("clap requires input");
        let series = Series::new(&args.x, &args.y, (!args.no_err).then_some(args.err.as_str()));
        plot::extract(input, &series)?
    };
    match &args.out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| HarnessError::Io {
                path: p.clone(),
                source: e,
            })?;
            plot::write_series(f, &rows)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            plot::write_series(&mut lock, &rows)?;
            lock.flush().map_err(|e| HarnessError::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn run_stage(stage: Stage, args: &RunArgs) -> HarnessResult<()> {
    let config = RunConfig::load(args.config.as_deref(), stage, &args.overrides())?;
    let record = run(&config)?;
    println!("{}", config.output_dir().display());
    log::info!("completed in {:.1}s", record.wall_clock_seconds);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(a) => run_stage(Stage::Sample, a),
        Command::Geometry(a) => run_stage(Stage::Geometry, a),
        Command::Temper(a) => run_stage(Stage::Temper, a),
        Command::Audit(a) => run_stage(Stage::Audit, a),
        Command::Entropy(a) => run_stage(Stage::Entropy, a),
        Command::Dlr(a) => run_stage(Stage::Dlr, a),
        Command::Compat(a) => run_stage(Stage::Compat, a),
        Command::Diffusion(a) => run_stage(Stage::Diffusion, a),
        Command::PlotData(a) => plot_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mgibbs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
