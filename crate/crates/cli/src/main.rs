use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parareg::commands::{load_problem, run_command, Command, Flags};
use parareg::problem::{fixture, list_fixtures};

#[derive(Parser)]
#[command(name = "parareg", version, about = "Second-order variational analysis of constraint systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tangent, normal and critical cones with the multiplier set.
    Cones(Run),
    /// Second subderivative of the constraint-set indicator.
    Subderivative(Run),
    /// Second-order optimality conditions and sampled quadratic growth.
    Optimality(Run),
    /// Augmented Lagrangian second semiderivative and growth threshold.
    Auglag(Run),
    /// Graphical derivative of the normal cone mapping.
    Gder(Run),
    /// Brute-force difference-quotient estimates.
    Oracle(Run),
    /// Qualification conditions, multipliers and subregularity.
    Diagnose(Run),
    /// List the built-in fixtures or write them as files.
    Fixtures {
        /// Directory to write `<name>.json` files into.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Run {
    /// Problem file, or the name of a built-in fixture.
    file: String,
    /// Direction, comma separated; replaces the file's directions.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w: Option<Vec<f64>>,
    /// Value tested for graphical-derivative membership.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    /// Growth-test ball radius.
    #[arg(long)]
    eps: Option<f64>,
    /// Growth modulus to test.
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Growth-test sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Parameter of a parameterized fixture (parabola coefficient, epigraph exponent).
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Append brute-force cross-checks.
    #[arg(long)]
    oracle: bool,
    /// Test emptiness of second-order tangent sets (oracle command).
    #[arg(long)]
    t2: bool,
    /// Print the machine-readable report.
    #[arg(long)]
    json: bool,
    /// Record wall time in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    tol_eq: Option<f64>,
    #[arg(long)]
    tol_cone: Option<f64>,
    #[arg(long)]
    tol_oracle: Option<f64>,
    #[arg(long)]
    tol_lp: Option<f64>,
}

fn configure_threads() {
    let threads = std::env::var("PARAREG_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|n| *n > 0);
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cmd: Command, run: Run) -> ExitCode {
    let flags = Flags {
        w: run.w,
        q: run.q,
        rho_grid: run.rho_grid,
        eps: run.eps,
        ell: run.ell,
        seed: run.seed,
        samples: run.samples,
        c: run.c,
        oracle: run.oracle,
        t2: run.t2,
        tol_eq: run.tol_eq,
        tol_cone: run.tol_cone,
        tol_oracle: run.tol_oracle,
        tol_lp: run.tol_lp,
        timing: run.timing,
    };
    let report = load_problem(&run.file, flags.c).and_then(|file| run_command(cmd, &file, &flags));
    match report {
        Ok(r) => {
            let text = if run.json { r.to_json() + "\n" } else { r.to_text() };
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::from(r.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let (cmd, run) = match cli.command {
        Cmd::Cones(r) => (Command::Cones, r),
        Cmd::Subderivative(r) => (Command::Subderivative, r),
        Cmd::Optimality(r) => (Command::Optimality, r),
        Cmd::Auglag(r) => (Command::Auglag, r),
        Cmd::Gder(r) => (Command::Gder, r),
        Cmd::Oracle(r) => (Command::Oracle, r),
        Cmd::Diagnose(r) => (Command::Diagnose, r),
        Cmd::Fixtures { write } => {
            for name in list_fixtures() {
                match &write {
                    None => println!("{name}"),
                    Some(dir) => {
                        let path = dir.join(format!("{name}.json"));
                        let text = fixture(name, None).expect("built-in fixtures are valid").to_json();
                        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text + "\n")) {
                            eprintln!("error: {}: {e}", path.display());
                            return ExitCode::from(1);
                        }
                        println!("{}", path.display());
                    }
                }
            }
            return ExitCode::SUCCESS;
        }
    };
    execute(cmd, run)
}
