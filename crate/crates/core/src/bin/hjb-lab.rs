use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ergodic_hjb::run::{self, Experiment, RunOptions};

/// Runs HJB solver experiments from a TOML config.
#[derive(Parser, Debug)]
#[command(name = "hjb-lab", version)]
struct Args {
    /// Config file, or `builtin:NAME` for a catalog entry.
    #[arg(long, required_unless_present = "list_builtins")]
    config: Option<String>,
    /// Output directory (default: the config's `out_dir`, else runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated subset of validate,simulate,pde,bsde,asymptotics.
    #[arg(long)]
    experiments: Option<String>,
    /// Print the builtin catalog and exit.
    #[arg(long)]
    list_builtins: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { run::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if args.list_builtins {
        print!("{}", run::list_builtins());
        return ExitCode::SUCCESS;
    }
    if let Some(n) = args.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(run::EXIT_CONFIG as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(run::EXIT_SOLVER as u8);
        }
    }
    let experiments = match args.experiments.as_deref().map(Experiment::parse_list).transpose() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(run::EXIT_CONFIG as u8);
        }
    };
    let opts = RunOptions {
        config: args.config.unwrap_or_default(),
        out_dir: args.out,
        seed: args.seed,
        experiments,
    };
    match run::run_experiment(&opts) {
        Ok(report) => {
            for s in &report.stages {
                println!("{:<12} {:?}", s.stage.name(), s.status);
            }
            for (stage, c) in report.failed_checks() {
                println!("FAILED {}.{}: {} (bound {})", stage.name(), c.name, c.value, c.bound);
            }
            for (k, v) in &report.headline {
                println!("{k} = {v}");
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code_for(&e) as u8)
        }
    }
}
