//! The full pipeline the `compare` subcommand runs, shrunk to finish in
//! seconds: synthesize, train both methods with one seed, convert and
//! score the test split, and write per-speaker reductions.
//!
//!     cargo run --release --example compare_methods [out-dir]

use std::path::PathBuf;

use cincgan::cli::cmd_compare;
use cincgan::config::RunConfig;

const CONFIG: &str = "
[run]
seed = 4

[synth]
speakers = 2
heldout-speakers = 1
train-frames = 800

[train]
epochs = 10
hidden = 64, 64
learning-rate = 0.001
";

fn main() -> cincgan::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("cincgan-compare"), PathBuf::from);
    let cfg = RunConfig::parse(CONFIG)?.with_overrides(None, Some(out))?;
    let s = cmd_compare(&cfg)?;

    for (name, report, secs) in [
        ("cyclegan", &s.baseline, s.train_seconds[0]),
        ("cincgan", &s.cincgan, s.train_seconds[1]),
    ] {
        println!("== {name} (trained in {secs:.1} s)");
        print!("{}", report.summary());
    }
    println!("\n{}", std::fs::read_to_string(&s.comparison).unwrap_or_default());
    println!("outputs under {}", cfg.out.display());
    Ok(())
}
