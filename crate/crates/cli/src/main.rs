use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use timeblocks::SolveOptions;
use timeblocks_cli::execute;
use timeblocks_cli::run::{Command, RunOptions};

/// Finite multistage stochastic optimization by dynamic programming over
/// histories and time blocks.
#[derive(Parser, Debug)]
#[command(name = "timeblocks", version)]
struct Args {
    /// Problem file (JSON); for `build-dam`, a dam parameter file.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum)]
    command: Command,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print every value table in full.
    #[arg(long)]
    full: bool,
    /// `oracle` checks a seeded sample of histories per stage instead of all.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; more than one enables the parallel solver paths.
    #[arg(long)]
    threads: Option<usize>,
    /// Largest dense table, in entries.
    #[arg(long)]
    budget: Option<usize>,
    /// Verification tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Add the wall time to the report (makes reports non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let text = match std::fs::read_to_string(&args.problem) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.problem.display());
            return ExitCode::from(2);
        }
    };
    let threads = args.threads.unwrap_or(1);
    if threads > 1 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let defaults = SolveOptions::default();
    let opts = RunOptions {
        full: args.full,
        tolerance: args.tolerance,
        seed: args.seed,
        timing: args.timing,
        solve: SolveOptions {
            budget: args.budget.unwrap_or(defaults.budget),
            parallel: threads > 1,
            ..defaults
        },
    };
    let (output, code) = execute(&text, args.command, &opts);
    if code >= 2 {
        eprint!("{output}");
    } else if let Some(path) = &args.out {
        if let Err(e) = std::fs::write(path, &output) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    } else {
        print!("{output}");
    }
    ExitCode::from(code as u8)
}
