//! Command-line verifier for mfv1 fixtures.
//!
//! Exit codes: 0 when every check passes, 1 when a mathematical check
//! fails, 2 on input or usage errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "mfv", version, about = "Exact verifier for filtered Frobenius data, Higgs subsheaves, and Cartier descent")]
struct Cli {
    /// Write the machine-readable report (JSON) to this path
    #[arg(long, global = true)]
    json: Option<PathBuf>,

    /// Seed for the randomized property checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check every chart axiom and overlap compatibility
    Validate { file: PathBuf },
    /// Compute and check the graded Higgs data of each de Rham chart
    Grade { file: PathBuf },
    /// Associate a de Rham subsheaf to a named theta-stable submodule
    Associate {
        file: PathBuf,
        /// Name of a submodule declared in the fixture
        #[arg(long)]
        sub: String,
        /// Transport the chart to this lifting first (name or expression)
        #[arg(long)]
        lifting: Option<String>,
        /// Recompute under this lifting and compare (name or expression)
        #[arg(long)]
        compare_lifting: Option<String>,
        /// Saturate the result to its subbundle closure
        #[arg(long)]
        saturate: bool,
    },
    /// p-curvature of the mod-p connection of each de Rham chart
    Pcurv { file: PathBuf },
    /// Cartier-Katz descent of a named horizontal submodule of the fiber
    Descend {
        file: PathBuf,
        #[arg(long)]
        sub: String,
        /// Laurent-degree bound for the flat-section solver
        #[arg(long)]
        degree_bound: Option<i64>,
    },
    /// Associate then descend a subsystem of Hodge bundles; must return it
    Roundtrip {
        file: PathBuf,
        #[arg(long)]
        sub: String,
    },
    /// Inverse Cartier transform of a Higgs fixture by exponential twisting
    Twist {
        file: PathBuf,
        /// JSON file with per-chart Frobenius liftings
        #[arg(long)]
        liftings: PathBuf,
    },
    /// Transition degrees and slopes on a two-chart projective line
    Degree { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = match &cli.command {
        Commands::Validate { file } => commands::validate(file),
        Commands::Grade { file } => commands::grade(file),
        Commands::Associate { file, sub, lifting, compare_lifting, saturate } => {
            commands::associate(
                file,
                sub,
                lifting.as_deref(),
                compare_lifting.as_deref(),
                *saturate,
                cli.seed,
            )
        }
        Commands::Pcurv { file } => commands::pcurv(file, cli.seed),
        Commands::Descend { file, sub, degree_bound } => {
            commands::descend(file, sub, *degree_bound)
        }
        Commands::Roundtrip { file, sub } => commands::roundtrip(file, sub),
        Commands::Twist { file, liftings } => commands::twist(file, liftings),
        Commands::Degree { file } => commands::degree(file),
    };
    let mut report = match outcome {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    report.wall_ms = started.elapsed().as_millis();
    let color = std::env::var("MFV_COLOR").map(|v| !v.is_empty() && v != "0").unwrap_or(false);
    print!("{}", report.render_text(color));
    if let Some(path) = &cli.json {
        if let Err(err) = std::fs::write(path, report.to_json()) {
            eprintln!("error: cannot write {}: {err}", path.display());
            return ExitCode::from(2);
        }
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
