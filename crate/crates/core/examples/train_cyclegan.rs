//! Trains the two-stage baseline: whisper to normal cepstra first, then a
//! separate cepstra-to-F0 mapping on the frozen first stage's output.
//!
//!     cargo run --release --example train_cyclegan

use cincgan::convert::{Converter, UvPolicy};
use cincgan::data::{synth_corpus, SynthSpec};
use cincgan::metrics::evaluate_pairs;
use cincgan::trainer::{train_cyclegan, Method, TrainConfig};

fn main() -> cincgan::Result<()> {
    let corpus = synth_corpus(&SynthSpec::default(), 5)?;
    let data = corpus.training_set()?;
    let config = TrainConfig {
        method: Method::CycleGan,
        epochs: 15,
        seed: 5,
        hidden: vec![64, 64],
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let (stage1, stage2) = train_cyclegan(&data, &config, corpus.stats.fingerprint())?;

    for (name, outcome) in [("stage 1", &stage1), ("stage 2", &stage2)] {
        let last = outcome.reports.last().expect("at least one step");
        let terms: Vec<String> = last.terms.iter().map(|(n, _, v)| format!("{n} {v:.3}")).collect();
        println!("{name}: {} steps, last [{}]", outcome.reports.len(), terms.join(", "));
    }

    let ck = &stage2.checkpoint;
    let conv = Converter::new(ck, &corpus.stats)?;
    let pairs = corpus
        .test_pairs()
        .into_iter()
        .map(|(w, n)| Ok((conv.convert(&w, UvPolicy::AllVoiced)?, n)))
        .collect::<cincgan::Result<Vec<_>>>()?;
    let report = evaluate_pairs(&pairs, 32)?;
    print!("{}", report.summary());
    Ok(())
}
