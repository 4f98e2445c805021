use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cincgan::cli::{cmd_compare, cmd_convert, cmd_evaluate, cmd_synth, cmd_train};
use cincgan::config::RunConfig;

#[derive(Parser)]
#[command(name = "cincgan", version, about = "Whisper-to-normal feature conversion experiments")]
struct Args {
    /// Run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `[run] out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic parallel corpus.
    Synth,
    /// Train the configured method.
    Train,
    /// Convert one whisper utterance file.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Score a checkpoint on the configured split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and score both methods with one seed.
    Compare,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> cincgan::Result<()> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_overrides(args.seed, args.out)?;
    match args.command {
        Command::Synth => println!("{}", cmd_synth(&cfg)?.display()),
        Command::Train => {
            let s = cmd_train(&cfg)?;
            println!("{}", s.model.display());
            for p in &s.loss_csvs {
                println!("{}", p.display());
            }
        }
        Command::Convert { checkpoint, input } => {
            println!("{}", cmd_convert(&cfg, &checkpoint, &input)?.display());
        }
        Command::Evaluate { checkpoint } => print!("{}", cmd_evaluate(&cfg, &checkpoint)?.summary()),
        Command::Compare => {
            let s = cmd_compare(&cfg)?;
            println!("== cyclegan ({:.1} s)", s.train_seconds[0]);
            print!("{}", s.baseline.summary());
            println!("== cincgan ({:.1} s)", s.train_seconds[1]);
            print!("{}", s.cincgan.summary());
            println!("{}", s.comparison.display());
        }
    }
    Ok(())
}
