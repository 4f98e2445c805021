//! Least-squares adversarial, cycle-consistency and identity objectives.
//!
//! Every function records its computation on the caller's tape and returns
//! a 1x1 [`Value`], so the same code serves evaluation, gradient checks and
//! training. Batches are rows; expectations are means over rows and, for
//! the L1 terms, over feature columns as well.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use crate::networks::{BoundBundle, BoundNet, Role};

/// Term weights for the baseline total and the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            lambda1: 10.0,
            lambda2: 5.0,
            lambda3: 10.0,
            lambda4: 1.0,
            lambda5: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_cyc,
            self.lambda_id,
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which batch feeds the F0 generator in the outer adversarial and
/// cycle terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adv2Input {
    /// `G_X2Y(x)`, the converted whisper batch.
    #[default]
    Converted,
    /// A batch of genuine normal cepstra.
    TrueNormal,
}

impl Adv2Input {
    pub fn as_str(self) -> &'static str {
        match self {
            Adv2Input::Converted => "converted",
            Adv2Input::TrueNormal => "true-normal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "converted" => Ok(Adv2Input::Converted),
            "true-normal" => Ok(Adv2Input::TrueNormal),
            _ => Err(Error::Config(format!(
                "adv2-input must be `converted` or `true-normal`, got `{s}`"
            ))),
        }
    }
}

/// Itemized loss values for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    pub step: usize,
    /// `(name, weight, value)` in a fixed order.
    pub terms: Vec<(String, f64, f64)>,
    pub total: f64,
}

impl LossReport {
    pub fn new(terms: Vec<(String, f64, f64)>) -> Self {
        let total = terms.iter().fold(0.0, |acc, (_, w, v)| acc + w * v);
        LossReport {
            epoch: 0,
            step: 0,
            terms,
            total,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, v)| *v)
    }

    pub fn names(&self) -> Vec<&str> {
        self.terms.iter().map(|(n, _, _)| n.as_str()).collect()
    }

    /// Weighted sum recomputed from the itemized terms.
    pub fn weighted_sum(&self) -> f64 {
        self.terms.iter().map(|(_, w, v)| w * v).sum()
    }

    /// Name of the first non-finite term, or `total` if only that is bad.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.terms
            .iter()
            .find(|(_, _, v)| !v.is_finite())
            .map(|(n, _, _)| n.as_str())
            .or(if self.total.is_finite() {
                None
            } else {
                Some("total")
            })
    }

    pub fn csv_header(&self) -> String {
        let mut s = String::from("step,epoch");
        for (n, _, _) in &self.terms {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",total");
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{}", self.step, self.epoch);
        for (_, _, v) in &self.terms {
            let _ = write!(s, ",{v:?}");
        }
        let _ = write!(s, ",{:?}", self.total);
        s
    }
}

/// Writes one CSV row per report, with a header taken from the first.
pub fn write_loss_csv(path: &Path, reports: &[LossReport]) -> Result<()> {
    let mut out = Vec::new();
    if let Some(first) = reports.first() {
        writeln!(out, "{}", first.csv_header()).unwrap();
    }
    for r in reports {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    crate::codec::write_file(path, &out)
}

fn non_empty(v: Value, what: &str) -> Result<()> {
    if v.rows() == 0 {
        return Err(Error::Empty(format!("{what} batch has no frames")));
    }
    Ok(())
}

/// `mean (D(real) - 1)^2 + mean D(fake)^2`.
pub fn adv_loss(tape: &mut Tape, d: &BoundNet, real: Value, fake: Value) -> Result<Value> {
    non_empty(real, "real")?;
    non_empty(fake, "fake")?;
    let dr = d.forward(tape, real)?;
    let df = d.forward(tape, fake)?;
    let lr = tape.mean_square(dr, 1.0)?;
    let lf = tape.mean_square(df, 0.0)?;
    tape.add(lr, lf)
}

/// Generator side of the least-squares game: `mean (D(fake) - 1)^2`.
pub fn generator_adv_loss(tape: &mut Tape, d: &BoundNet, fake: Value) -> Result<Value> {
    non_empty(fake, "fake")?;
    let df = d.forward(tape, fake)?;
    tape.mean_square(df, 1.0)
}

/// `mean |G_back(G_fwd(a)) - a|`.
pub fn cycle_loss_oneway(
    tape: &mut Tape,
    gfwd: &BoundNet,
    gback: &BoundNet,
    a: Value,
) -> Result<Value> {
    non_empty(a, "cycle")?;
    let there = gfwd.forward(tape, a)?;
    let back = gback.forward(tape, there)?;
    tape.mean_abs_diff(back, a)
}

/// Cycle loss in both directions.
pub fn cycle_loss_bidir(
    tape: &mut Tape,
    gxy: &BoundNet,
    gyx: &BoundNet,
    x: Value,
    y: Value,
) -> Result<Value> {
    let lx = cycle_loss_oneway(tape, gxy, gyx, x)?;
    let ly = cycle_loss_oneway(tape, gyx, gxy, y)?;
    tape.add(lx, ly)
}

/// `mean |G_YX(x) - x| + mean |G_XY(y) - y|`.
pub fn identity_loss(
    tape: &mut Tape,
    gxy: &BoundNet,
    gyx: &BoundNet,
    x: Value,
    y: Value,
) -> Result<Value> {
    non_empty(x, "identity x")?;
    non_empty(y, "identity y")?;
    if x.cols() != gyx.input_dim() || y.cols() != gxy.input_dim() {
        return Err(Error::Shape {
            op: "identity_loss",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let ix = gyx.forward(tape, x)?;
    let lx = tape.mean_abs_diff(ix, x)?;
    let iy = gxy.forward(tape, y)?;
    let ly = tape.mean_abs_diff(iy, y)?;
    tape.add(lx, ly)
}

/// Whisper-domain discriminator over real whisper and both reconstructions:
/// `mean (D_X(x)-1)^2 + mean D_X(G_YX(ŷ))^2 + mean D_X(G_ZX(G_YZ(ŷ)))^2`
/// with `ŷ = G_XY(x)` computed once.
pub fn combined_adv3(tape: &mut Tape, bundle: &BoundBundle, x: Value) -> Result<Value> {
    non_empty(x, "whisper")?;
    let y_hat = bundle.forward(tape, Role::GenXY, x)?;
    let z_hat = bundle.forward(tape, Role::GenYZ, y_hat)?;
    combined_adv3_from(tape, bundle, x, y_hat, z_hat)
}

fn combined_adv3_from(
    tape: &mut Tape,
    bundle: &BoundBundle,
    x: Value,
    y_hat: Value,
    z_hat: Value,
) -> Result<Value> {
    let x_inner = bundle.forward(tape, Role::GenYX, y_hat)?;
    let x_outer = bundle.forward(tape, Role::GenZX, z_hat)?;
    whisper_adv_loss(tape, bundle.get(Role::DiscX)?, x, x_inner, x_outer)
}

/// Discriminator side of the whisper-domain term given both
/// reconstructions: `mean (D(real)-1)^2 + mean D(inner)^2 + mean D(outer)^2`.
pub fn whisper_adv_loss(
    tape: &mut Tape,
    dx: &BoundNet,
    real: Value,
    inner: Value,
    outer: Value,
) -> Result<Value> {
    non_empty(real, "whisper")?;
    let d_real = dx.forward(tape, real)?;
    let d_inner = dx.forward(tape, inner)?;
    let d_outer = dx.forward(tape, outer)?;
    let a = tape.mean_square(d_real, 1.0)?;
    let b = tape.mean_square(d_inner, 0.0)?;
    let c = tape.mean_square(d_outer, 0.0)?;
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}

/// Role assignment of one CycleGAN between domains A and B.
#[derive(Debug, Clone, Copy)]
pub struct CycleRoles {
    pub g_ab: Role,
    pub g_ba: Role,
    pub d_a: Role,
    pub d_b: Role,
    pub ab_label: &'static str,
    pub ba_label: &'static str,
}

impl CycleRoles {
    /// Whisper cepstra (A) ↔ normal cepstra (B).
    pub const STAGE1: CycleRoles = CycleRoles {
        g_ab: Role::GenXY,
        g_ba: Role::GenYX,
        d_a: Role::DiscX,
        d_b: Role::DiscY,
        ab_label: "xy",
        ba_label: "yx",
    };

    /// Converted normal cepstra (A) ↔ normalized log-F0 (B).
    pub const STAGE2: CycleRoles = CycleRoles {
        g_ab: Role::GenYZ,
        g_ba: Role::GenZY,
        d_a: Role::DiscY,
        d_b: Role::DiscZ,
        ab_label: "yz",
        ba_label: "zy",
    };
}

/// Adversarial terms in both directions plus weighted cycle and identity
/// terms. The identity term is only defined when both domains share a
/// width; otherwise it is left out of the report.
pub fn cyclegan_total_roles(
    tape: &mut Tape,
    bundle: &BoundBundle,
    roles: CycleRoles,
    a: Value,
    b: Value,
    weights: &LossWeights,
) -> Result<(Value, LossReport)> {
    let g_ab = bundle.get(roles.g_ab)?;
    let g_ba = bundle.get(roles.g_ba)?;
    non_empty(a, "domain A")?;
    non_empty(b, "domain B")?;
    if a.cols() != g_ab.input_dim() || b.cols() != g_ba.input_dim() {
        return Err(Error::Shape {
            op: "cyclegan_total",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let fake_b = g_ab.forward(tape, a)?;
    let fake_a = g_ba.forward(tape, b)?;
    let adv_ab = adv_loss(tape, bundle.get(roles.d_b)?, b, fake_b)?;
    let adv_ba = adv_loss(tape, bundle.get(roles.d_a)?, a, fake_a)?;
    let back_a = g_ba.forward(tape, fake_b)?;
    let back_b = g_ab.forward(tape, fake_a)?;
    let ca = tape.mean_abs_diff(back_a, a)?;
    let cb = tape.mean_abs_diff(back_b, b)?;
    let cyc = tape.add(ca, cb)?;

    let mut parts = vec![
        (format!("adv_{}", roles.ab_label), 1.0, adv_ab),
        (format!("adv_{}", roles.ba_label), 1.0, adv_ba),
        ("cyc".to_string(), weights.lambda_cyc, cyc),
    ];
    if a.cols() == b.cols() {
        let id = identity_loss(tape, g_ab, g_ba, a, b)?;
        parts.push(("id".to_string(), weights.lambda_id, id));
    }
    finish(tape, parts)
}

/// The baseline objective between whisper `x` and normal `y` cepstra.
pub fn cyclegan_total(
    tape: &mut Tape,
    bundle: &BoundBundle,
    x: Value,
    y: Value,
    weights: &LossWeights,
) -> Result<(Value, LossReport)> {
    cyclegan_total_roles(tape, bundle, CycleRoles::STAGE1, x, y, weights)
}

/// Values of the six joint-objective terms for one set of batches.
pub struct CincTerms {
    pub adv1: Value,
    pub cyc1: Value,
    pub id1: Value,
    pub adv2: Value,
    pub cyc2: Value,
    pub adv3: Value,
}

pub const CINC_TERM_NAMES: [&str; 6] = ["adv1", "cyc1", "id1", "adv2", "cyc2", "adv3"];

/// Records all six terms, sharing `ŷ = G_XY(x)` and `ẑ = G_YZ(ŷ)` between
/// the terms that use them.
pub fn cinc_terms(
    tape: &mut Tape,
    bundle: &BoundBundle,
    x: Value,
    y: Value,
    z: Value,
    adv2_input: Adv2Input,
) -> Result<CincTerms> {
    non_empty(x, "whisper")?;
    non_empty(y, "normal")?;
    non_empty(z, "F0")?;
    let gxy = bundle.get(Role::GenXY)?;
    let gyx = bundle.get(Role::GenYX)?;
    if x.cols() != gxy.input_dim() || y.cols() != gyx.input_dim() {
        return Err(Error::Shape {
            op: "cinc_total",
            left: x.shape(),
            right: y.shape(),
        });
    }
    if z.cols() != bundle.get(Role::DiscZ)?.input_dim() {
        return Err(Error::Shape {
            op: "cinc_total",
            left: z.shape(),
            right: (z.rows(), crate::networks::F0_DIM),
        });
    }

    let y_hat = gxy.forward(tape, x)?;
    let adv1 = adv_loss(tape, bundle.get(Role::DiscY)?, y, y_hat)?;
    let x_back = gyx.forward(tape, y_hat)?;
    let cyc1 = tape.mean_abs_diff(x_back, x)?;
    let id1 = identity_loss(tape, gxy, gyx, x, y)?;

    let z_hat = bundle.forward(tape, Role::GenYZ, y_hat)?;
    let (adv2, cyc2) = match adv2_input {
        Adv2Input::Converted => {
            let adv2 = adv_loss(tape, bundle.get(Role::DiscZ)?, z, z_hat)?;
            let y_back = bundle.forward(tape, Role::GenZY, z_hat)?;
            (adv2, tape.mean_abs_diff(y_back, y_hat)?)
        }
        Adv2Input::TrueNormal => {
            let z_from_y = bundle.forward(tape, Role::GenYZ, y)?;
            let adv2 = adv_loss(tape, bundle.get(Role::DiscZ)?, z, z_from_y)?;
            let y_back = bundle.forward(tape, Role::GenZY, z_from_y)?;
            (adv2, tape.mean_abs_diff(y_back, y)?)
        }
    };

    let x_outer = bundle.forward(tape, Role::GenZX, z_hat)?;
    let adv3 = whisper_adv_loss(tape, bundle.get(Role::DiscX)?, x, x_back, x_outer)?;

    Ok(CincTerms {
        adv1,
        cyc1,
        id1,
        adv2,
        cyc2,
        adv3,
    })
}

/// The full joint objective:
/// `adv1 + λ1 cyc1 + λ2 id1 + λ3 adv2 + λ4 cyc2 + λ5 adv3`.
pub fn cinc_total(
    tape: &mut Tape,
    bundle: &BoundBundle,
    x: Value,
    y: Value,
    z: Value,
    weights: &LossWeights,
    adv2_input: Adv2Input,
) -> Result<(Value, LossReport)> {
    let t = cinc_terms(tape, bundle, x, y, z, adv2_input)?;
    let w = weights;
    let parts = vec![
        ("adv1".to_string(), 1.0, t.adv1),
        ("cyc1".to_string(), w.lambda1, t.cyc1),
        ("id1".to_string(), w.lambda2, t.id1),
        ("adv2".to_string(), w.lambda3, t.adv2),
        ("cyc2".to_string(), w.lambda4, t.cyc2),
        ("adv3".to_string(), w.lambda5, t.adv3),
    ];
    finish(tape, parts)
}

fn finish(tape: &mut Tape, parts: Vec<(String, f64, Value)>) -> Result<(Value, LossReport)> {
    let weighted: Vec<(f64, Value)> = parts.iter().map(|(_, w, v)| (*w, *v)).collect();
    let total = tape.weighted_sum(&weighted)?;
    let mut report = LossReport::new(
        parts
            .iter()
            .map(|(n, w, v)| (n.clone(), *w, tape.scalar(*v)))
            .collect(),
    );
    report.total = tape.scalar(total);
    Ok((total, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::networks::{
        build_discriminator, Activation, BundleKind, DenseNet, Layer, ModelBundle,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    const SMALL: [usize; 2] = [16, 16];

    fn random(seed: u64, r: usize, c: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn const_disc(dim: usize) -> DenseNet {
        let mut d = build_discriminator(dim, "D", 0, &SMALL).unwrap();
        d.zero_params();
        d
    }

    /// Sigmoid of a steep gain on the first feature: exactly 1 for inputs
    /// ≥ +1000/gain-ish and exactly 0 for strongly negative ones.
    fn threshold_disc(dim: usize) -> DenseNet {
        let layers = vec![
            Layer {
                weight: Matrix::from_fn(dim, 2, |r, c| match (r, c) {
                    (0, 0) => 1.0,
                    (0, 1) => -1.0,
                    _ => 0.0,
                }),
                bias: Matrix::zeros(1, 2),
                activation: Activation::Relu,
            },
            Layer {
                weight: Matrix::new(2, 1, vec![1.0, -1.0]).unwrap(),
                bias: Matrix::zeros(1, 1),
                activation: Activation::Sigmoid,
            },
        ];
        DenseNet::new("D", layers).unwrap()
    }

    /// Generator that adds `shift` to every output of an exact identity.
    fn shifted_identity(dim: usize, shift: f64) -> DenseNet {
        let mut g = DenseNet::identity("G", dim, &[2 * dim]).unwrap();
        let last = g.layers_mut().last_mut().unwrap();
        last.bias.as_mut_slice().fill(shift);
        g
    }

    fn zero_map(dim: usize) -> DenseNet {
        let mut g = DenseNet::identity("G", dim, &[2 * dim]).unwrap();
        g.zero_params();
        g
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.lambda_cyc, w.lambda_id), (10.0, 5.0));
        assert_eq!(
            (w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5),
            (10.0, 5.0, 10.0, 1.0, 1.0)
        );
    }

    #[test]
    fn adv_loss_perfect_and_constant_discriminators() {
        let mut tape = Tape::new();
        let d = threshold_disc(1).bind(&mut tape, true);
        let real = tape.constant(Matrix::filled(4, 1, 1000.0));
        let fake = tape.constant(Matrix::filled(5, 1, -1000.0));
        let l = adv_loss(&mut tape, &d, real, fake).unwrap();
        assert_eq!(tape.scalar(l), 0.0);

        let d = const_disc(1).bind(&mut tape, true);
        let l = adv_loss(&mut tape, &d, real, fake).unwrap();
        assert_eq!(tape.scalar(l), 0.5);

        let empty = tape.constant(Matrix::zeros(0, 1));
        assert!(matches!(
            adv_loss(&mut tape, &d, real, empty),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn cycle_and_identity_with_identity_generators() {
        let mut tape = Tape::new();
        let g = DenseNet::identity("G", 4, &[8]).unwrap();
        let gxy = g.bind(&mut tape, true);
        let gyx = g.bind(&mut tape, true);
        let x = tape.constant(random(1, 3, 4));
        let y = tape.constant(random(2, 5, 4));
        let c = cycle_loss_bidir(&mut tape, &gxy, &gyx, x, y).unwrap();
        let i = identity_loss(&mut tape, &gxy, &gyx, x, y).unwrap();
        let o = cycle_loss_oneway(&mut tape, &gxy, &gyx, x).unwrap();
        assert_eq!(tape.scalar(c), 0.0);
        assert_eq!(tape.scalar(i), 0.0);
        assert_eq!(tape.scalar(o), 0.0);
    }

    #[test]
    fn cycle_with_shifted_generator_costs_one_per_direction() {
        let mut tape = Tape::new();
        let gxy = shifted_identity(4, 1.0).bind(&mut tape, true);
        let gyx = DenseNet::identity("G", 4, &[8]).unwrap().bind(&mut tape, true);
        let x = tape.constant(random(1, 3, 4));
        let lx = cycle_loss_oneway(&mut tape, &gxy, &gyx, x).unwrap();
        assert!((tape.scalar(lx) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_loss_zero_map_on_ones() {
        let mut tape = Tape::new();
        let gxy = zero_map(4).bind(&mut tape, true);
        let gyx = DenseNet::identity("G", 4, &[8]).unwrap().bind(&mut tape, true);
        let x = tape.constant(random(1, 3, 4));
        let y = tape.constant(Matrix::filled(2, 4, 1.0));
        let l = identity_loss(&mut tape, &gxy, &gyx, x, y).unwrap();
        assert_eq!(tape.scalar(l), 1.0);
    }

    #[test]
    fn cycle_matches_direct_recomputation() {
        let b = ModelBundle::initialize(BundleKind::CycleGanStage1, 3, &SMALL, 0);
        let (x0, y0) = (random(10, 3, 40), random(11, 3, 40));
        let gxy = b.get(Role::GenXY).unwrap();
        let gyx = b.get(Role::GenYX).unwrap();
        let mad = |a: &Matrix, b: &Matrix| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
                / a.len() as f64
        };
        let want = mad(&gyx.predict(&gxy.predict(&x0).unwrap()).unwrap(), &x0)
            + mad(&gxy.predict(&gyx.predict(&y0).unwrap()).unwrap(), &y0);
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let x = tape.constant(x0);
        let y = tape.constant(y0);
        let got = cycle_loss_bidir(
            &mut tape,
            bb.get(Role::GenXY).unwrap(),
            bb.get(Role::GenYX).unwrap(),
            x,
            y,
        )
        .unwrap();
        assert!((tape.scalar(got) - want).abs() < 1e-12);
    }

    fn degenerate_cinc_bundle(disc: fn(usize) -> DenseNet) -> ModelBundle {
        let mut nets = BTreeMap::new();
        nets.insert(Role::GenXY, DenseNet::identity("G_X2Y", 40, &[80]).unwrap());
        nets.insert(Role::GenYX, DenseNet::identity("G_Y2X", 40, &[80]).unwrap());
        let mut yz = crate::networks::build_generator(
            crate::networks::GeneratorKind::Mcc2F0,
            "G_Y2Z",
            1,
            &[80],
        );
        yz.zero_params();
        nets.insert(Role::GenYZ, yz);
        for role in [Role::GenZY, Role::GenZX] {
            let mut g = crate::networks::build_generator(
                crate::networks::GeneratorKind::F02Mcc,
                role.tag(),
                1,
                &[80],
            );
            g.zero_params();
            nets.insert(role, g);
        }
        nets.insert(Role::DiscX, disc(40));
        nets.insert(Role::DiscY, disc(40));
        nets.insert(Role::DiscZ, disc(1));
        ModelBundle::from_nets(BundleKind::CincGan, 0, 0, nets).unwrap()
    }

    #[test]
    fn combined_adv3_constant_discriminator() {
        let b = degenerate_cinc_bundle(const_disc);
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let x = tape.constant(random(3, 6, 40));
        let l = combined_adv3(&mut tape, &bb, x).unwrap();
        assert_eq!(tape.scalar(l), 0.75);
    }

    #[test]
    fn combined_adv3_perfect_discriminator() {
        // Real whisper sits at +1000 on the first feature; both fake branches
        // come out of zero maps (outer) or a negated identity (inner).
        let mut b = degenerate_cinc_bundle(threshold_disc);
        {
            let gyx = b.get_mut(Role::GenYX).unwrap();
            for v in gyx.layers_mut().last_mut().unwrap().weight.as_mut_slice() {
                *v = -*v;
            }
        }
        {
            let gzx = b.get_mut(Role::GenZX).unwrap();
            gzx.layers_mut().last_mut().unwrap().bias.as_mut_slice()[0] = -1000.0;
        }
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let x = tape.constant(Matrix::from_fn(4, 40, |_, c| if c == 0 { 1000.0 } else { 0.5 }));
        let l = combined_adv3(&mut tape, &bb, x).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn cinc_total_degenerate_terms_and_report() {
        let b = degenerate_cinc_bundle(const_disc);
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let x = tape.constant(random(4, 5, 40));
        let y = tape.constant(random(5, 7, 40));
        let z = tape.constant(random(6, 3, 1));
        let (_, rep) =
            cinc_total(&mut tape, &bb, x, y, z, &LossWeights::default(), Adv2Input::Converted)
                .unwrap();
        assert_eq!(rep.names(), CINC_TERM_NAMES.to_vec());
        assert_eq!(rep.term("cyc1"), Some(0.0));
        assert_eq!(rep.term("id1"), Some(0.0));
        assert_eq!(rep.term("adv1"), Some(0.5));
        assert_eq!(rep.term("adv2"), Some(0.5));
        assert_eq!(rep.term("adv3"), Some(0.75));
        assert!((rep.total - rep.weighted_sum()).abs() < 1e-9);
    }

    #[test]
    fn cyclegan_total_weights_are_linear() {
        let b = ModelBundle::initialize(BundleKind::CycleGanStage1, 8, &SMALL, 0);
        let x0 = random(20, 4, 40);
        let y0 = random(21, 4, 40);
        let run = |w: LossWeights| {
            let mut tape = Tape::new();
            let bb = b.bind(&mut tape, |_| true);
            let x = tape.constant(x0.clone());
            let y = tape.constant(y0.clone());
            cyclegan_total(&mut tape, &bb, x, y, &w).unwrap().1
        };
        let base = run(LossWeights::default());
        let doubled = run(LossWeights {
            lambda_cyc: 20.0,
            ..LossWeights::default()
        });
        let cyc = base.term("cyc").unwrap();
        assert!((doubled.total - base.total - 10.0 * cyc).abs() < 1e-9);
        assert!((base.total - base.weighted_sum()).abs() < 1e-9);
        assert_eq!(base.names(), vec!["adv_xy", "adv_yx", "cyc", "id"]);
    }

    #[test]
    fn stage2_total_has_no_identity_term() {
        let b = ModelBundle::initialize(BundleKind::CycleGanStage2, 8, &SMALL, 0);
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let a = tape.constant(random(1, 4, 40));
        let z = tape.constant(random(2, 4, 1));
        let (_, rep) =
            cyclegan_total_roles(&mut tape, &bb, CycleRoles::STAGE2, a, z, &LossWeights::default())
                .unwrap();
        assert_eq!(rep.names(), vec!["adv_yz", "adv_zy", "cyc"]);
    }

    #[test]
    fn inner_only_joint_objective_reduces_to_baseline_terms() {
        // With the outer weights zeroed, the joint objective equals the
        // baseline total minus the second cycle direction and the D_X
        // adversarial term.
        let cinc = ModelBundle::initialize(BundleKind::CincGan, 12, &SMALL, 0);
        let x0 = random(30, 6, 40);
        let y0 = random(31, 6, 40);
        let z0 = random(32, 6, 1);
        let w = LossWeights {
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            ..LossWeights::default()
        };
        let mut tape = Tape::new();
        let bb = cinc.bind(&mut tape, |_| true);
        let x = tape.constant(x0.clone());
        let y = tape.constant(y0.clone());
        let z = tape.constant(z0);
        let (_, joint) = cinc_total(&mut tape, &bb, x, y, z, &w, Adv2Input::Converted).unwrap();
        let (_, base) = cyclegan_total(&mut tape, &bb, x, y, &w).unwrap();
        let gxy = bb.get(Role::GenXY).unwrap().clone();
        let gyx = bb.get(Role::GenYX).unwrap().clone();
        let cyc_y = cycle_loss_oneway(&mut tape, &gyx, &gxy, y).unwrap();
        let cyc_y = tape.scalar(cyc_y);
        let expect = base.total - w.lambda_cyc * cyc_y - base.term("adv_yx").unwrap();
        assert!((joint.total - expect).abs() < 1e-9, "{} vs {}", joint.total, expect);
    }

    #[test]
    fn all_terms_nonnegative_and_bounded() {
        let b = ModelBundle::initialize(BundleKind::CincGan, 2, &SMALL, 0);
        let mut tape = Tape::new();
        let bb = b.bind(&mut tape, |_| true);
        let x = tape.constant(random(40, 8, 40));
        let y = tape.constant(random(41, 8, 40));
        let z = tape.constant(random(42, 8, 1));
        let (_, rep) =
            cinc_total(&mut tape, &bb, x, y, z, &LossWeights::default(), Adv2Input::Converted)
                .unwrap();
        for (name, _, v) in &rep.terms {
            assert!(*v >= 0.0, "{name}");
        }
        for name in ["adv1", "adv2"] {
            assert!(rep.term(name).unwrap() <= 2.0);
        }
        assert!(rep.term("adv3").unwrap() <= 3.0);
    }

    #[test]
    fn report_csv_round() {
        let mut rep = LossReport::new(vec![("a".into(), 2.0, 0.25), ("b".into(), 1.0, 1.5)]);
        rep.step = 7;
        rep.epoch = 1;
        assert_eq!(rep.csv_header(), "step,epoch,a,b,total");
        assert_eq!(rep.csv_row(), "7,1,0.25,1.5,2.0");
        assert_eq!(rep.first_non_finite(), None);
        rep.terms[1].2 = f64::NAN;
        assert_eq!(rep.first_non_finite(), Some("b"));
    }
}
