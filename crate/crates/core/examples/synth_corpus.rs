//! Generates a small multi-speaker corpus and shows what it contains:
//! per-speaker frame counts, voicing, and how far whispered cepstra sit
//! from their normal renderings before any conversion.
//!
//!     cargo run --release --example synth_corpus [out-dir]

use std::collections::BTreeMap;

use cincgan::data::{synth_corpus, Domain, Split, SynthSpec};
use cincgan::metrics::mcd;

fn main() -> cincgan::Result<()> {
    let spec = SynthSpec {
        speakers: 2,
        heldout_speakers: 1,
        train_frames: 600,
        test_utterances: 2,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec, 11)?;

    let mut frames: BTreeMap<(String, &str, &str), usize> = BTreeMap::new();
    for (e, u) in corpus.manifest.entries.iter().zip(&corpus.utterances) {
        *frames
            .entry((e.speaker.clone(), e.domain.as_str(), e.split.as_str()))
            .or_default() += u.len();
    }
    println!("{:<8} {:<8} {:<6} frames", "speaker", "domain", "split");
    for ((spk, dom, split), n) in &frames {
        println!("{spk:<8} {dom:<8} {split:<6} {n}");
    }

    let normal = corpus.select(Domain::Normal, Split::Train);
    let voiced: usize = normal.iter().map(|u| u.voiced_count()).sum();
    let total: usize = normal.iter().map(|u| u.len()).sum();
    println!("\nvoiced fraction of normal training frames: {:.3}", voiced as f64 / total as f64);

    println!("\nunconverted whisper vs normal (test):");
    for (w, n) in corpus.test_pairs() {
        println!("  {:<12} {:.2} dB", w.id, mcd(&w, &n)?);
    }

    if let Some(dir) = std::env::args().nth(1) {
        let manifest = corpus.write(std::path::Path::new(&dir))?;
        println!("\nwrote {}", manifest.display());
    }
    Ok(())
}
