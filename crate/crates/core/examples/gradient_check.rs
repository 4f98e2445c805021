//! Checks the tape gradient of the joint objective against central
//! differences on a small bundle.
//!
//!     cargo run --release --example gradient_check

use cincgan::gradcheck::GradCheck;
use cincgan::losses::{cinc_total, Adv2Input, LossWeights};
use cincgan::networks::{BundleKind, ModelBundle};
use cincgan::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cincgan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut batch = |cols| Matrix::from_fn(8, cols, |_, _| rng.random_range(-1.5..1.5));
    let (x, y, z) = (batch(40), batch(40), batch(1));

    let kind = BundleKind::CincGan;
    let bundle = ModelBundle::initialize(kind, 3, &[32, 32], 0);
    let weights = LossWeights::default();
    let report = GradCheck::default().check(&bundle, kind.roles(), |t, nets| {
        let (xv, yv, zv) = (t.constant(x.clone()), t.constant(y.clone()), t.constant(z.clone()));
        Ok(cinc_total(t, nets, xv, yv, zv, &weights, Adv2Input::Converted)?.0)
    })?;

    println!("probes checked   {}", report.checked);
    println!("kink skips       {}", report.skipped);
    println!("max rel error    {:.2e} (tolerance {:.0e})", report.max_rel_err, report.tolerance);
    let (a, n) = report.worst_values;
    println!("worst            {} analytic {a:.6e} numeric {n:.6e}", report.worst);
    println!("{}", if report.passes() { "ok" } else { "MISMATCH" });
    Ok(())
}
