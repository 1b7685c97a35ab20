use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ostd_core::harness::{
    run_experiment, run_regret_sweep, runtime_bench, write_experiment, write_regret, write_timing,
    ExperimentOutput, RegretRow, TimingRow,
};
use ostd_core::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ostd",
    version,
    about = "Online GP temporal-difference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured estimator and write error curves.
    Run(Common),
    /// Regret of the single-kernel learner against horizon.
    Regret {
        #[command(flatten)]
        common: Common,
        /// Ascending horizons; defaults to the config's `regret.horizons`.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Per-slot wall-clock time of each method in `bench.methods`.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_run(cfg: &ExperimentConfig, out: &ExperimentOutput) {
    println!("environment      {}", out.environment);
    println!("estimator        {}", out.estimator);
    println!("trajectories     {}", cfg.num_trajectories);
    println!("horizon          {}", out.curves.len());
    println!("features         {}", cfg.num_features);
    println!("final pred err   {:.4}", out.final_prediction_error());
    println!("final bellman    {:.4}", out.final_bellman_error());
    if let Some(w) = out.final_weights() {
        for (k, spec) in out.kernels.iter().enumerate() {
            println!("weight {} {:<7} {:.4}", spec.family, spec.lengthscale, w[k]);
        }
    }
    let worst = out
        .stability
        .iter()
        .map(|r| r.report.mean_sq_change / r.report.cap)
        .fold(0.0_f64, f64::max);
    println!("stability        max lhs/cap {worst:.3e}");
}

fn print_regret(rows: &[RegretRow]) {
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>10}",
        "T", "R", "R1", "bound", "R/logT"
    );
    for r in rows {
        println!(
            "{:>6} {:>12.4} {:>12.4} {:>12.4} {:>10.4}",
            r.horizon,
            r.regret,
            r.regret_r1,
            r.bound,
            r.regret_over_log_t()
        );
    }
}

fn print_timing(rows: &[TimingRow]) {
    println!(
        "{:<12} {:>7} {:>7} {:>14}",
        "method", "from", "to", "us/slot"
    );
    for r in rows {
        println!(
            "{:<12} {:>7} {:>7} {:>14.2}",
            r.method.name(),
            r.window_start,
            r.window_end,
            r.median_seconds_per_slot * 1e6
        );
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let out = run_experiment(&cfg)?;
            let paths = write_experiment(&out, &cfg.output_dir)?;
            print_run(&cfg, &out);
            for p in paths {
                info!("wrote {}", p.display());
            }
        }
        Command::Regret { common, horizons } => {
            let cfg = common.load()?;
            let horizons = horizons.unwrap_or_else(|| cfg.regret.horizons.clone());
            let sweep = run_regret_sweep(&cfg, &horizons, true)?;
            let path = write_regret(&sweep.rows, &cfg.output_dir)?;
            print_regret(&sweep.rows);
            info!("wrote {}", path.display());
        }
        Command::Bench(common) => {
            let cfg = common.load()?;
            let rows = runtime_bench(&cfg)?;
            let path = write_timing(&rows, &cfg.output_dir)?;
            print_timing(&rows);
            info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Config(_) => 2,
                e if e.is_numeric() => 3,
                _ => 1,
            })
        }
    }
}
