use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use densefit::run;

/// Dense IUV render-and-compare body fitting toolkit.
#[derive(Parser)]
#[command(name = "densefit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset.
    Generate(run::GenerateArgs),
    /// Render a single configuration to an IUV file.
    Render(run::RenderArgs),
    /// Fit pose, shape and camera to IUV targets.
    Fit(run::FitArgs),
    /// Evaluate fitted parameters against dataset ground truth.
    Eval(run::EvalArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(run::GradcheckArgs),
}

fn main() {
    // Exit codes: 0 success, 1 usage, 2 I/O or data, 3 numeric/divergence.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => run::run_generate(args),
        Command::Render(args) => run::run_render(args),
        Command::Fit(args) => run::run_fit(args),
        Command::Eval(args) => run::run_eval(args),
        Command::Gradcheck(args) => run::run_gradcheck(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
