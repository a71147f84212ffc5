use clap::{Args, Parser, Subcommand};
use msalab::cli::{parse_config, run, Experiment, Overrides};
use msalab::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "msalab", version, about = "Multiscale-analysis diagnostics for random multi-particle operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the suitable-cover laws on a sweep of rectangles.
    Cover(Common),
    /// Classify one sampled box at a list of energies.
    Classify(Common),
    /// Estimate the averaged eigenvalue count in an interval.
    Wegner(Common),
    /// Estimate the two-volume level-spacing probability.
    TwoVolume(Common),
    /// Check the initial-scale probability bound.
    InitialStep(Common),
    /// Check deterministic lemmas on configured instances.
    LemmaCheck(Common),
    /// Run one stage of the scale-by-scale estimate.
    Msa(Common),
    /// Write the sparse matrix of one sampled box.
    DumpMatrix(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow scales below the theoretical constants; results are labelled.
    #[arg(long)]
    illustrative: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, common) = match cli.command {
        Command::Cover(c) => (Experiment::Cover, c),
        Command::Classify(c) => (Experiment::Classify, c),
        Command::Wegner(c) => (Experiment::Wegner, c),
        Command::TwoVolume(c) => (Experiment::TwoVolume, c),
        Command::InitialStep(c) => (Experiment::InitialStep, c),
        Command::LemmaCheck(c) => (Experiment::LemmaCheck, c),
        Command::Msa(c) => (Experiment::Msa, c),
        Command::DumpMatrix(c) => (Experiment::DumpMatrix, c),
    };
    let mut cfg = match parse_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        trials: common.trials,
        out_dir: common.out,
        illustrative: common.illustrative,
    });
    match run(&cfg, exp, common.illustrative) {
        Ok(outcome) => {
            println!("{} -> {}", exp.name(), outcome.csv.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("invariant failed: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_) | Error::Precondition(_))) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("aborted: {e}");
            ExitCode::from(3)
        }
    }
}
