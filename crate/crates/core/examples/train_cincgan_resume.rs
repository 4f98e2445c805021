//! Trains the joint model for a few epochs, saves a checkpoint, resumes
//! from the file, and confirms the result matches an uninterrupted run
//! bit for bit.
//!
//!     cargo run --release --example train_cincgan_resume

use cincgan::data::{synth_corpus, SynthSpec};
use cincgan::trainer::{train_cincgan, Checkpoint, Session, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth_corpus(&SynthSpec::default(), 9)?;
    let data = corpus.training_set()?;
    let stats_fp = corpus.stats.fingerprint();
    let config = TrainConfig {
        epochs: 6,
        seed: 9,
        hidden: vec![48, 48],
        ..TrainConfig::default()
    };

    let straight = train_cincgan(&data, &config, stats_fp)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("half.ckpt");
    let mut first = Session::cincgan(&config, &data, stats_fp)?;
    for _ in 0..config.epochs / 2 {
        first.run_epoch()?;
    }
    first.checkpoint().save(&path)?;
    println!("saved after epoch {}", first.epoch());

    let mut resumed = Session::resume(&config, &data, Checkpoint::load(&path)?, stats_fp)?;
    resumed.run(|_| Ok(()))?;
    let resumed = resumed.finish();

    for r in resumed.reports.iter().step_by(resumed.reports.len() / 4) {
        println!("epoch {} step {:>3} total {:.4}", r.epoch, r.step, r.total);
    }
    let same = straight.checkpoint.encode() == resumed.checkpoint.encode();
    println!("resumed checkpoint identical to uninterrupted run: {same}");
    assert!(same);
    Ok(())
}
