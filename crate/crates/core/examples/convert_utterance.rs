//! Trains a quick joint model, then converts one whispered test utterance
//! under both voicing policies and prints a few frames next to the normal
//! reference.
//!
//!     cargo run --release --example convert_utterance

use cincgan::convert::{Converter, UvPolicy, DEFAULT_VOICED_FRACTION};
use cincgan::data::{synth_corpus, SynthSpec};
use cincgan::metrics::{f0_rmse, mcd};
use cincgan::trainer::{train_cincgan, TrainConfig};

fn main() -> cincgan::Result<()> {
    let corpus = synth_corpus(&SynthSpec::default(), 2)?;
    let data = corpus.training_set()?;
    let config = TrainConfig {
        epochs: 20,
        seed: 2,
        hidden: vec![64, 64],
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let trained = train_cincgan(&data, &config, corpus.stats.fingerprint())?;
    let conv = Converter::new(&trained.checkpoint, &corpus.stats)?;

    let (whisper, normal) = corpus.test_pairs().swap_remove(0);
    println!("utterance {} ({} frames)", whisper.id, whisper.len());
    println!("  unconverted MCD {:.3} dB", mcd(&whisper, &normal)?);

    let policies = [
        UvPolicy::AllVoiced,
        UvPolicy::SourceEnergyQuantile {
            voiced_fraction: DEFAULT_VOICED_FRACTION,
        },
    ];
    for policy in policies {
        let out = conv.convert(&whisper, policy)?;
        let rmse = f0_rmse(&out, &normal)?;
        println!(
            "  {:<22} MCD {:.3} dB, log-F0 RMSE {:.4} over {} co-voiced frames",
            policy.name(),
            mcd(&out, &normal)?,
            rmse.rmse,
            rmse.frames
        );
    }

    let out = conv.convert(&whisper, UvPolicy::AllVoiced)?;
    println!("\n frame   c0 conv   c0 ref   F0 conv   F0 ref");
    for i in (0..out.len()).step_by(out.len() / 8) {
        let (c, r) = (&out.frames[i], &normal.frames[i]);
        let ref_f0 = if r.voiced() { format!("{:8.1}", r.f0_hz) } else { "      uv".into() };
        println!("{i:>6} {:>9.3} {:>8.3} {:>9.1} {ref_f0}", c.mcc[0], r.mcc[0], c.f0_hz);
    }
    Ok(())
}
