//! The evaluation metrics on hand-built utterances whose answers are known
//! in closed form.
//!
//!     cargo run --release --example evaluate_metrics

use cincgan::data::{Domain, FeatureFrame, Utterance};
use cincgan::metrics::{evaluate_pairs, f0_divergences, f0_rmse, mcd, MCD_SCALE};
use cincgan::networks::MCC_DIM;

fn utterance(domain: Domain, c1: f64, f0: impl Fn(usize) -> f64) -> cincgan::Result<Utterance> {
    let frames = (0..100)
        .map(|i| {
            let mut mcc = [0.0; MCC_DIM];
            mcc[0] = 1.0 + 0.01 * i as f64;
            mcc[1] = c1;
            FeatureFrame::new(mcc, f0(i))
        })
        .collect::<cincgan::Result<Vec<_>>>()?;
    Utterance::new("u0", "spk0", domain, frames)
}

fn main() -> cincgan::Result<()> {
    // Only c1 differs, by 0.2, so the distortion is the scale times
    // sqrt(2) times 0.2; c0 is excluded.
    let reference = utterance(Domain::Normal, 0.5, |i| if i % 4 == 0 { 0.0 } else { 200.0 })?;
    let converted = utterance(Domain::Normal, 0.7, |_| 220.0)?;
    println!("MCD            {:.6} dB (closed form {:.6})", mcd(&converted, &reference)?, MCD_SCALE * 2f64.sqrt() * 0.2);

    let r = f0_rmse(&converted, &reference)?;
    println!("log-F0 RMSE    {:.6} over {} co-voiced frames (closed form {:.6})", r.rmse, r.frames, (1.1f64).ln());

    let a: Vec<f64> = (0..500).map(|i| (i % 50) as f64).collect();
    let b: Vec<f64> = (0..500).map(|i| 25.0 + (i % 50) as f64).collect();
    let same = f0_divergences(&a, &a, 20)?;
    let shifted = f0_divergences(&a, &b, 20)?;
    println!("identical      KLD {:.3e}  JSD {:.3e}", same.kld, same.jsd);
    println!("half overlap   KLD {:.4}  JSD {:.4} (JSD never exceeds ln 2 = {:.4})", shifted.kld, shifted.jsd, 2f64.ln());

    let report = evaluate_pairs(&[(converted, reference)], 20)?;
    print!("\n{}", report.summary());
    Ok(())
}
