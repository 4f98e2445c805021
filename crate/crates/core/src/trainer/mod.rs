//! Training loops for the sequential baseline and the joint model.
//!
//! Every step updates all discriminators once, then all generators once.
//! Generator outputs are recorded on one tape; the discriminators train on
//! detached copies of them and are then re-bound, frozen, onto the same
//! tape for the generator objective. Batch order is a pure function of
//! `(seed, epoch)`, so a run can be resumed from any epoch boundary.

mod adam;
mod checkpoint;

pub use adam::{optimizer_step, AdamConfig, NetMoments, OptimizerState};
pub use checkpoint::Checkpoint;

use std::borrow::Cow;
use std::fmt::Write as _;

use crate::autodiff::{Tape, Value};
use crate::codec::fingerprint64;
use crate::data::{BatchSampler, TrainingSet};
use crate::error::{Error, Result};
use crate::losses::{
    adv_loss, generator_adv_loss, identity_loss, whisper_adv_loss, Adv2Input, CycleRoles,
    LossReport, LossWeights, CINC_TERM_NAMES,
};
use crate::matrix::Matrix;
use crate::networks::{BoundNet, BundleKind, ModelBundle, Role, DEFAULT_HIDDEN};

/// Sampler streams of the three data domains.
const STREAM_WHISPER: u64 = 0;
const STREAM_NORMAL: u64 = 1;
const STREAM_F0: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CycleGan,
    CincGan,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CycleGan => "cyclegan",
            Method::CincGan => "cincgan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cyclegan" => Ok(Method::CycleGan),
            "cincgan" => Ok(Method::CincGan),
            _ => Err(Error::Config(format!(
                "method must be `cyclegan` or `cincgan`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub adv2_input: Adv2Input,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub hidden: Vec<usize>,
    /// Discriminator updates per generator update, all on the step's batch.
    pub disc_updates: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::CincGan,
            epochs: 100,
            learning_rate: 1e-4,
            batch_size: 128,
            seed: 0,
            weights: LossWeights::default(),
            adv2_input: Adv2Input::Converted,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            checkpoint_every: 0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            disc_updates: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.disc_updates == 0 {
            return bad("discriminator updates per step must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be a non-empty list of positive sizes".into());
        }
        self.weights.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Hash of every setting that shapes the trajectory. The epoch count
    /// and checkpoint cadence are left out so a run can be extended.
    pub fn fingerprint(&self) -> u64 {
        let w = &self.weights;
        let mut s = String::new();
        let _ = write!(
            s,
            "method={};lr={:?};batch={};seed={};weights={:?},{:?},{:?},{:?},{:?},{:?},{:?};\
             adv2={};adam={:?},{:?},{:?};hidden={:?};disc_updates={}",
            self.method.as_str(),
            self.learning_rate,
            self.batch_size,
            self.seed,
            w.lambda_cyc,
            w.lambda_id,
            w.lambda1,
            w.lambda2,
            w.lambda3,
            w.lambda4,
            w.lambda5,
            self.adv2_input.as_str(),
            self.beta1,
            self.beta2,
            self.epsilon,
            self.hidden,
            self.disc_updates,
        );
        fingerprint64(s.as_bytes())
    }
}

/// Final checkpoint plus one report per step.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub reports: Vec<LossReport>,
}

/// A training run in progress.
pub struct Session<'a> {
    config: TrainConfig,
    data: &'a TrainingSet,
    /// Domain-A frames for the second baseline stage: whisper frames
    /// converted by the frozen first stage.
    converted: Option<Matrix>,
    state: Checkpoint,
    reports: Vec<LossReport>,
}

impl<'a> Session<'a> {
    fn start(
        config: &TrainConfig,
        data: &'a TrainingSet,
        kind: BundleKind,
        frozen_stage1: Option<ModelBundle>,
        stats_fingerprint: u64,
    ) -> Result<Self> {
        config.validate()?;
        let fp = config.fingerprint();
        let bundle = ModelBundle::initialize(kind, config.seed, &config.hidden, fp);
        let optimizer = OptimizerState::new(&bundle);
        let state = Checkpoint {
            bundle,
            frozen_stage1,
            optimizer,
            config_fingerprint: fp,
            stats_fingerprint,
            epoch: 0,
            seed: config.seed,
        };
        Self::from_state(config, data, state)
    }

    fn from_state(config: &TrainConfig, data: &'a TrainingSet, state: Checkpoint) -> Result<Self> {
        state.validate()?;
        let converted = match &state.frozen_stage1 {
            Some(s1) => Some(s1.get(Role::GenXY)?.predict(&data.whisper)?),
            None => None,
        };
        Ok(Session {
            config: config.clone(),
            data,
            converted,
            state,
            reports: Vec::new(),
        })
    }

    /// First baseline stage: whisper ↔ normal cepstra.
    pub fn cyclegan_stage1(
        config: &TrainConfig,
        data: &'a TrainingSet,
        stats_fingerprint: u64,
    ) -> Result<Self> {
        Self::start(config, data, BundleKind::CycleGanStage1, None, stats_fingerprint)
    }

    /// Second baseline stage on whisper frames converted by a frozen first
    /// stage.
    pub fn cyclegan_stage2(
        config: &TrainConfig,
        data: &'a TrainingSet,
        stage1: &Checkpoint,
    ) -> Result<Self> {
        if stage1.kind() != BundleKind::CycleGanStage1 {
            return Err(Error::Incompatible(format!(
                "second stage needs a first-stage checkpoint, got {:?}",
                stage1.kind()
            )));
        }
        Self::start(
            config,
            data,
            BundleKind::CycleGanStage2,
            Some(stage1.bundle.clone()),
            stage1.stats_fingerprint,
        )
    }

    pub fn cincgan(
        config: &TrainConfig,
        data: &'a TrainingSet,
        stats_fingerprint: u64,
    ) -> Result<Self> {
        Self::start(config, data, BundleKind::CincGan, None, stats_fingerprint)
    }

    /// Continues from a saved checkpoint. The configuration must match the
    /// one the checkpoint was trained with, apart from the epoch count.
    pub fn resume(
        config: &TrainConfig,
        data: &'a TrainingSet,
        checkpoint: Checkpoint,
        stats_fingerprint: u64,
    ) -> Result<Self> {
        config.validate()?;
        if checkpoint.config_fingerprint != config.fingerprint() {
            return Err(Error::Incompatible(
                "checkpoint was trained with a different configuration".into(),
            ));
        }
        if checkpoint.stats_fingerprint != stats_fingerprint {
            return Err(Error::Incompatible(
                "checkpoint was trained with different normalization statistics".into(),
            ));
        }
        Self::from_state(config, data, checkpoint)
    }

    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn reports(&self) -> &[LossReport] {
        &self.reports
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.whisper.rows().div_ceil(self.config.batch_size)
    }

    fn sampler(&self, n: usize, stream: u64) -> Result<BatchSampler> {
        BatchSampler::new(n, self.config.batch_size, self.config.seed, stream)
    }

    /// Trains one epoch. The whisper domain (or its conversion) sets the
    /// number of steps; the other domains are read cyclically.
    pub fn run_epoch(&mut self) -> Result<()> {
        let epoch = self.state.epoch;
        let data = self.data;
        let sx = self.sampler(data.whisper.rows(), STREAM_WHISPER)?;
        let sy = self.sampler(data.normal.rows(), STREAM_NORMAL)?;
        let sz = self.sampler(data.f0.rows(), STREAM_F0)?;
        let steps = sx.batches_per_epoch();
        let adam = self.config.adam();
        for (step, idx) in sx.epoch_batches(epoch).into_iter().enumerate() {
            let at = StepIndex {
                epoch,
                step: epoch * steps + step,
            };
            let n = idx.len();
            let mut report = match self.state.kind() {
                BundleKind::CycleGanStage1 => {
                    let x = data.whisper.select_rows(&idx);
                    let y = data.normal.select_rows(&sy.cycled_batch(epoch, step, n));
                    cycle_step(&mut self.state, CycleRoles::STAGE1, &x, &y, &self.config, &adam, at)?
                }
                BundleKind::CycleGanStage2 => {
                    let a = self.converted.as_ref().expect("set for stage 2").select_rows(&idx);
                    let z = data.f0.select_rows(&sz.cycled_batch(epoch, step, n));
                    cycle_step(&mut self.state, CycleRoles::STAGE2, &a, &z, &self.config, &adam, at)?
                }
                BundleKind::CincGan => {
                    let x = data.whisper.select_rows(&idx);
                    let y = data.normal.select_rows(&sy.cycled_batch(epoch, step, n));
                    let z = data.f0.select_rows(&sz.cycled_batch(epoch, step, n));
                    cinc_step(&mut self.state, &x, &y, &z, &self.config, &adam, at)?
                }
            };
            report.epoch = epoch;
            report.step = at.step;
            self.reports.push(report);
        }
        self.state.epoch += 1;
        Ok(())
    }

    /// Runs until the configured epoch count, calling `on_checkpoint` at the
    /// configured cadence and after the final epoch.
    pub fn run(
        &mut self,
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
    ) -> Result<()> {
        while self.state.epoch < self.config.epochs {
            self.run_epoch()?;
            let e = self.state.epoch;
            let every = self.config.checkpoint_every;
            if e == self.config.epochs || (every > 0 && e.is_multiple_of(every)) {
                on_checkpoint(&self.state)?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            checkpoint: self.state,
            reports: self.reports,
        }
    }
}

pub fn train_cyclegan_stage1(
    data: &TrainingSet,
    config: &TrainConfig,
    stats_fingerprint: u64,
) -> Result<TrainOutcome> {
    let mut s = Session::cyclegan_stage1(config, data, stats_fingerprint)?;
    s.run(|_| Ok(()))?;
    Ok(s.finish())
}

pub fn train_cyclegan_stage2(
    stage1: &Checkpoint,
    data: &TrainingSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut s = Session::cyclegan_stage2(config, data, stage1)?;
    s.run(|_| Ok(()))?;
    Ok(s.finish())
}

pub fn train_cincgan(
    data: &TrainingSet,
    config: &TrainConfig,
    stats_fingerprint: u64,
) -> Result<TrainOutcome> {
    let mut s = Session::cincgan(config, data, stats_fingerprint)?;
    s.run(|_| Ok(()))?;
    Ok(s.finish())
}

/// Both baseline stages in sequence: `(stage 1, stage 2)`.
pub fn train_cyclegan(
    data: &TrainingSet,
    config: &TrainConfig,
    stats_fingerprint: u64,
) -> Result<(TrainOutcome, TrainOutcome)> {
    let s1 = train_cyclegan_stage1(data, config, stats_fingerprint)?;
    let s2 = train_cyclegan_stage2(&s1.checkpoint, data, config)?;
    Ok((s1, s2))
}

#[derive(Debug, Clone, Copy)]
struct StepIndex {
    epoch: usize,
    step: usize,
}

impl StepIndex {
    fn non_finite(self, term: impl Into<String>) -> Error {
        Error::NonFinite {
            term: term.into(),
            epoch: self.epoch,
            step: self.step,
        }
    }
}

fn check_finite(tape: &Tape, terms: &[(&str, Value)], at: StepIndex) -> Result<()> {
    for (name, v) in terms {
        if !tape.scalar(*v).is_finite() {
            return Err(at.non_finite(*name));
        }
    }
    Ok(())
}

/// Applies one optimizer update to each bound network from `tape`'s
/// gradients. All gradients are checked before any parameter moves.
fn apply(
    state: &mut Checkpoint,
    tape: &Tape,
    bound: &[(Role, &BoundNet)],
    adam: &AdamConfig,
    at: StepIndex,
) -> Result<()> {
    let grads: Vec<(Role, Vec<Cow<'_, Matrix>>)> = bound
        .iter()
        .map(|(role, b)| {
            let g = b
                .layers()
                .iter()
                .flat_map(|l| [tape.grad(l.weight), tape.grad(l.bias)])
                .collect();
            (*role, g)
        })
        .collect();
    for (role, g) in &grads {
        if g.iter().any(|m| !m.all_finite()) {
            return Err(at.non_finite(format!("gradient of {role}")));
        }
    }
    for (role, g) in grads {
        let net = state.bundle.get_mut(role)?;
        let moments = state.optimizer.get_mut(role)?;
        let g: Vec<&Matrix> = g.iter().map(|m| m.as_ref()).collect();
        optimizer_step(net, &g, moments, adam)?;
    }
    Ok(())
}

fn bind(state: &Checkpoint, tape: &mut Tape, role: Role, trainable: bool) -> Result<BoundNet> {
    Ok(state.bundle.get(role)?.bind(tape, trainable))
}

/// One step of a CycleGAN between domains A and B.
fn cycle_step(
    state: &mut Checkpoint,
    roles: CycleRoles,
    a: &Matrix,
    b: &Matrix,
    config: &TrainConfig,
    adam: &AdamConfig,
    at: StepIndex,
) -> Result<LossReport> {
    let w = &config.weights;
    let adv_ab_name = format!("adv_{}", roles.ab_label);
    let adv_ba_name = format!("adv_{}", roles.ba_label);

    let mut gt = Tape::new();
    let g_ab = bind(state, &mut gt, roles.g_ab, true)?;
    let g_ba = bind(state, &mut gt, roles.g_ba, true)?;
    let av = gt.constant(a.clone());
    let bv = gt.constant(b.clone());
    let fake_b = g_ab.forward(&mut gt, av)?;
    let fake_a = g_ba.forward(&mut gt, bv)?;

    // Reported adversarial values come from the first discriminator pass.
    let mut reported = None;
    for _ in 0..config.disc_updates {
        let mut dt = Tape::new();
        let d_a = bind(state, &mut dt, roles.d_a, true)?;
        let d_b = bind(state, &mut dt, roles.d_b, true)?;
        let ra = dt.constant(a.clone());
        let rb = dt.constant(b.clone());
        let fb = dt.constant(gt.value(fake_b).clone());
        let fa = dt.constant(gt.value(fake_a).clone());
        let adv_ab = adv_loss(&mut dt, &d_b, rb, fb)?;
        let adv_ba = adv_loss(&mut dt, &d_a, ra, fa)?;
        check_finite(&dt, &[(&adv_ab_name, adv_ab), (&adv_ba_name, adv_ba)], at)?;
        let d_total = dt.add(adv_ab, adv_ba)?;
        dt.backward(d_total)?;
        apply(state, &dt, &[(roles.d_a, &d_a), (roles.d_b, &d_b)], adam, at)?;
        reported.get_or_insert((dt.scalar(adv_ab), dt.scalar(adv_ba)));
    }
    let (adv_ab, adv_ba) = reported.expect("at least one discriminator update");

    let d_a = bind(state, &mut gt, roles.d_a, false)?;
    let d_b = bind(state, &mut gt, roles.d_b, false)?;
    let g_adv_ab = generator_adv_loss(&mut gt, &d_b, fake_b)?;
    let g_adv_ba = generator_adv_loss(&mut gt, &d_a, fake_a)?;
    let back_a = g_ba.forward(&mut gt, fake_b)?;
    let back_b = g_ab.forward(&mut gt, fake_a)?;
    let ca = gt.mean_abs_diff(back_a, av)?;
    let cb = gt.mean_abs_diff(back_b, bv)?;
    let cyc = gt.add(ca, cb)?;
    let mut parts = vec![(1.0, g_adv_ab), (1.0, g_adv_ba), (w.lambda_cyc, cyc)];
    let mut checks = vec![("cyc", cyc)];
    let id = if a.cols() == b.cols() {
        let id = identity_loss(&mut gt, &g_ab, &g_ba, av, bv)?;
        parts.push((w.lambda_id, id));
        checks.push(("id", id));
        Some(id)
    } else {
        None
    };
    checks.push(("generator adversarial", g_adv_ab));
    checks.push(("generator adversarial", g_adv_ba));
    check_finite(&gt, &checks, at)?;
    let g_total = gt.weighted_sum(&parts)?;
    gt.backward(g_total)?;
    apply(state, &gt, &[(roles.g_ab, &g_ab), (roles.g_ba, &g_ba)], adam, at)?;

    let mut terms = vec![
        (adv_ab_name, 1.0, adv_ab),
        (adv_ba_name, 1.0, adv_ba),
        ("cyc".to_string(), w.lambda_cyc, gt.scalar(cyc)),
    ];
    if let Some(id) = id {
        terms.push(("id".to_string(), w.lambda_id, gt.scalar(id)));
    }
    Ok(LossReport::new(terms))
}

/// One joint step over all eight networks.
fn cinc_step(
    state: &mut Checkpoint,
    x: &Matrix,
    y: &Matrix,
    z: &Matrix,
    config: &TrainConfig,
    adam: &AdamConfig,
    at: StepIndex,
) -> Result<LossReport> {
    let w = &config.weights;
    let gens = [Role::GenXY, Role::GenYX, Role::GenYZ, Role::GenZY, Role::GenZX];

    let mut gt = Tape::new();
    let gxy = bind(state, &mut gt, Role::GenXY, true)?;
    let gyx = bind(state, &mut gt, Role::GenYX, true)?;
    let gyz = bind(state, &mut gt, Role::GenYZ, true)?;
    let gzy = bind(state, &mut gt, Role::GenZY, true)?;
    let gzx = bind(state, &mut gt, Role::GenZX, true)?;
    let xv = gt.constant(x.clone());
    let yv = gt.constant(y.clone());
    let y_hat = gxy.forward(&mut gt, xv)?;
    let x_back = gyx.forward(&mut gt, y_hat)?;
    let z_hat = gyz.forward(&mut gt, y_hat)?;
    let x_outer = gzx.forward(&mut gt, z_hat)?;
    // Input of the outer cycle and the F0 adversarial term.
    let (outer_in, z_fake) = match config.adv2_input {
        Adv2Input::Converted => (y_hat, z_hat),
        Adv2Input::TrueNormal => (yv, gyz.forward(&mut gt, yv)?),
    };

    let mut reported = None;
    for _ in 0..config.disc_updates {
        let mut dt = Tape::new();
        let dx = bind(state, &mut dt, Role::DiscX, true)?;
        let dy = bind(state, &mut dt, Role::DiscY, true)?;
        let dz = bind(state, &mut dt, Role::DiscZ, true)?;
        let detached = |dt: &mut Tape, v: Value| dt.constant(gt.value(v).clone());
        let rx = dt.constant(x.clone());
        let ry = dt.constant(y.clone());
        let rz = dt.constant(z.clone());
        let f_y = detached(&mut dt, y_hat);
        let f_z = detached(&mut dt, z_fake);
        let f_inner = detached(&mut dt, x_back);
        let f_outer = detached(&mut dt, x_outer);
        let adv1 = adv_loss(&mut dt, &dy, ry, f_y)?;
        let adv2 = adv_loss(&mut dt, &dz, rz, f_z)?;
        let adv3 = whisper_adv_loss(&mut dt, &dx, rx, f_inner, f_outer)?;
        check_finite(&dt, &[("adv1", adv1), ("adv2", adv2), ("adv3", adv3)], at)?;
        let d_total = dt.weighted_sum(&[(1.0, adv1), (1.0, adv2), (1.0, adv3)])?;
        dt.backward(d_total)?;
        apply(
            state,
            &dt,
            &[(Role::DiscX, &dx), (Role::DiscY, &dy), (Role::DiscZ, &dz)],
            adam,
            at,
        )?;
        reported.get_or_insert([dt.scalar(adv1), dt.scalar(adv2), dt.scalar(adv3)]);
    }
    let [adv1, adv2, adv3] = reported.expect("at least one discriminator update");

    let dx = bind(state, &mut gt, Role::DiscX, false)?;
    let dy = bind(state, &mut gt, Role::DiscY, false)?;
    let dz = bind(state, &mut gt, Role::DiscZ, false)?;
    let g_adv1 = generator_adv_loss(&mut gt, &dy, y_hat)?;
    let cyc1 = gt.mean_abs_diff(x_back, xv)?;
    let id1 = identity_loss(&mut gt, &gxy, &gyx, xv, yv)?;
    let g_adv2 = generator_adv_loss(&mut gt, &dz, z_fake)?;
    let y_back = gzy.forward(&mut gt, z_fake)?;
    let cyc2 = gt.mean_abs_diff(y_back, outer_in)?;
    let g_inner = generator_adv_loss(&mut gt, &dx, x_back)?;
    let g_outer = generator_adv_loss(&mut gt, &dx, x_outer)?;
    let g_adv3 = gt.add(g_inner, g_outer)?;
    check_finite(
        &gt,
        &[
            ("cyc1", cyc1),
            ("id1", id1),
            ("cyc2", cyc2),
            ("generator adversarial", g_adv1),
            ("generator adversarial", g_adv2),
            ("generator adversarial", g_adv3),
        ],
        at,
    )?;
    let g_total = gt.weighted_sum(&[
        (1.0, g_adv1),
        (w.lambda1, cyc1),
        (w.lambda2, id1),
        (w.lambda3, g_adv2),
        (w.lambda4, cyc2),
        (w.lambda5, g_adv3),
    ])?;
    gt.backward(g_total)?;
    let bound = [&gxy, &gyx, &gyz, &gzy, &gzx];
    let pairs: Vec<(Role, &BoundNet)> = gens.iter().copied().zip(bound).collect();
    apply(state, &gt, &pairs, adam, at)?;

    let values = [
        adv1,
        gt.scalar(cyc1),
        gt.scalar(id1),
        adv2,
        gt.scalar(cyc2),
        adv3,
    ];
    let weights = [1.0, w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5];
    Ok(LossReport::new(
        CINC_TERM_NAMES
            .iter()
            .zip(weights)
            .zip(values)
            .map(|((n, w), v)| (n.to_string(), w, v))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_corpus, SynthSpec};

    fn tiny_data() -> (TrainingSet, u64) {
        let spec = SynthSpec {
            train_frames: 60,
            test_utterances: 1,
            frames_per_utterance: 30,
            ..SynthSpec::default()
        };
        let c = synth_corpus(&spec, 11).unwrap();
        let w: Vec<_> = c
            .manifest
            .entries
            .iter()
            .zip(&c.utterances)
            .filter(|(e, _)| e.split == crate::data::Split::Train)
            .map(|(_, u)| u.clone())
            .collect();
        let (wh, no): (Vec<_>, Vec<_>) = w
            .into_iter()
            .partition(|u| u.domain == crate::data::Domain::Whisper);
        (
            TrainingSet::from_utterances(&wh, &no, &c.stats).unwrap(),
            c.stats.fingerprint(),
        )
    }

    fn tiny_config(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            epochs: 4,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 3,
            hidden: vec![8, 8],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (data, fp) = tiny_data();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..tiny_config(Method::CincGan)
        };
        let out = train_cincgan(&data, &cfg, fp).unwrap();
        let init = ModelBundle::initialize(BundleKind::CincGan, cfg.seed, &cfg.hidden, cfg.fingerprint());
        assert_eq!(out.checkpoint.bundle.param_hashes(), init.param_hashes());

        let (s1, s2) = train_cyclegan(&data, &TrainConfig { method: Method::CycleGan, ..cfg.clone() }, fp)
            .unwrap();
        let cfg1 = TrainConfig { method: Method::CycleGan, ..cfg };
        let init1 = ModelBundle::initialize(BundleKind::CycleGanStage1, cfg1.seed, &cfg1.hidden, cfg1.fingerprint());
        assert_eq!(s1.checkpoint.bundle.param_hashes(), init1.param_hashes());
        let init2 = ModelBundle::initialize(BundleKind::CycleGanStage2, cfg1.seed, &cfg1.hidden, cfg1.fingerprint());
        assert_eq!(s2.checkpoint.bundle.param_hashes(), init2.param_hashes());
    }

    #[test]
    fn same_seed_same_checkpoint_bytes() {
        let (data, fp) = tiny_data();
        let cfg = tiny_config(Method::CincGan);
        let a = train_cincgan(&data, &cfg, fp).unwrap();
        let b = train_cincgan(&data, &cfg, fp).unwrap();
        assert_eq!(a.checkpoint.encode(), b.checkpoint.encode());
        assert_eq!(a.reports, b.reports);
        let other = train_cincgan(&data, &TrainConfig { seed: 4, ..cfg }, fp).unwrap();
        assert_ne!(a.checkpoint.encode(), other.checkpoint.encode());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (data, fp) = tiny_data();
        for method in [Method::CincGan, Method::CycleGan] {
            let cfg = tiny_config(method);
            let half = TrainConfig { epochs: 2, ..cfg.clone() };
            let start = |c: &TrainConfig| match method {
                Method::CincGan => Session::cincgan(c, &data, fp),
                Method::CycleGan => Session::cyclegan_stage1(c, &data, fp),
            };
            let mut full = start(&cfg).unwrap();
            full.run(|_| Ok(())).unwrap();
            let mut first = start(&half).unwrap();
            first.run(|_| Ok(())).unwrap();
            let bytes = first.checkpoint().encode();
            let restored = Checkpoint::decode(&bytes).unwrap();
            let mut second = Session::resume(&cfg, &data, restored, fp).unwrap();
            second.run(|_| Ok(())).unwrap();
            assert_eq!(second.checkpoint().encode(), full.checkpoint().encode());
            assert_eq!(
                [first.reports(), second.reports()].concat(),
                full.reports().to_vec()
            );
        }
    }

    #[test]
    fn resume_rejects_other_config_or_stats() {
        let (data, fp) = tiny_data();
        let cfg = tiny_config(Method::CincGan);
        let s = Session::cincgan(&cfg, &data, fp).unwrap();
        let ck = s.checkpoint().clone();
        let other = TrainConfig { learning_rate: 0.5, ..cfg.clone() };
        assert!(Session::resume(&other, &data, ck.clone(), fp).is_err());
        assert!(Session::resume(&cfg, &data, ck.clone(), fp ^ 1).is_err());
        let longer = TrainConfig { epochs: 500, ..cfg };
        assert!(Session::resume(&longer, &data, ck, fp).is_ok());
    }

    #[test]
    fn reports_itemize_each_step() {
        let (data, fp) = tiny_data();
        let cfg = tiny_config(Method::CincGan);
        let out = train_cincgan(&data, &cfg, fp).unwrap();
        let steps = data.whisper.rows().div_ceil(cfg.batch_size);
        assert_eq!(out.reports.len(), cfg.epochs * steps);
        for (i, r) in out.reports.iter().enumerate() {
            assert_eq!(r.names(), CINC_TERM_NAMES.to_vec());
            assert_eq!(r.step, i);
            assert!((r.total - r.weighted_sum()).abs() <= 1e-9 * r.total.abs().max(1.0));
            assert!(r.first_non_finite().is_none());
        }
        let (s1, s2) = train_cyclegan(&data, &TrainConfig { method: Method::CycleGan, ..cfg }, fp)
            .unwrap();
        assert_eq!(s1.reports[0].names(), vec!["adv_xy", "adv_yx", "cyc", "id"]);
        assert_eq!(s2.reports[0].names(), vec!["adv_yz", "adv_zy", "cyc"]);
    }

    #[test]
    fn discriminators_take_the_configured_number_of_updates() {
        let (data, fp) = tiny_data();
        let steps = data.whisper.rows().div_ceil(16) as u64;
        for method in [Method::CincGan, Method::CycleGan] {
            let cfg = TrainConfig {
                epochs: 1,
                disc_updates: 3,
                ..tiny_config(method)
            };
            let ck = match method {
                Method::CincGan => train_cincgan(&data, &cfg, fp).unwrap().checkpoint,
                Method::CycleGan => train_cyclegan(&data, &cfg, fp).unwrap().1.checkpoint,
            };
            for (role, m) in &ck.optimizer.nets {
                let want = if role.is_generator() { steps } else { 3 * steps };
                assert_eq!(m.step, want, "{method:?} {role}");
            }
        }
        let one = train_cincgan(&data, &TrainConfig { epochs: 1, ..tiny_config(Method::CincGan) }, fp)
            .unwrap();
        let three = train_cincgan(
            &data,
            &TrainConfig {
                epochs: 1,
                disc_updates: 3,
                ..tiny_config(Method::CincGan)
            },
            fp,
        )
        .unwrap();
        // The first discriminator pass of step 0 sees identical networks.
        assert_eq!(one.reports[0].term("adv1"), three.reports[0].term("adv1"));
        assert_ne!(one.checkpoint.bundle, three.checkpoint.bundle);
    }

    #[test]
    fn stage2_leaves_stage1_untouched_and_every_cinc_net_moves() {
        let (data, fp) = tiny_data();
        let cfg = TrainConfig {
            epochs: 1,
            ..tiny_config(Method::CycleGan)
        };
        let s1 = train_cyclegan_stage1(&data, &cfg, fp).unwrap();
        let before = s1.checkpoint.bundle.param_hashes();
        let s2 = train_cyclegan_stage2(&s1.checkpoint, &data, &cfg).unwrap();
        assert_eq!(s1.checkpoint.bundle.param_hashes(), before);
        assert_eq!(s2.checkpoint.frozen_stage1.as_ref().unwrap().param_hashes(), before);

        let cfg = TrainConfig {
            epochs: 1,
            ..tiny_config(Method::CincGan)
        };
        let init = ModelBundle::initialize(BundleKind::CincGan, cfg.seed, &cfg.hidden, cfg.fingerprint());
        let out = train_cincgan(&data, &cfg, fp).unwrap();
        let after = out.checkpoint.bundle.param_hashes();
        for (role, h) in init.param_hashes() {
            assert_ne!(after[&role], h, "{role} did not change");
        }
    }

    #[test]
    fn stage2_requires_stage1_checkpoint() {
        let (data, fp) = tiny_data();
        let cfg = tiny_config(Method::CincGan);
        let s = Session::cincgan(&cfg, &data, fp).unwrap();
        assert!(Session::cyclegan_stage2(&cfg, &data, s.checkpoint()).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let (data, fp) = tiny_data();
        let cfg = TrainConfig { epochs: 1, ..tiny_config(Method::CycleGan) };
        let (s1, s2) = train_cyclegan(&data, &cfg, fp).unwrap();
        for ck in [s1.checkpoint, s2.checkpoint] {
            let bytes = ck.encode();
            let back = Checkpoint::decode(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.encode(), bytes);
            let mut bad = bytes.clone();
            bad[1] ^= 0xff;
            assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { offset: 0, .. })));
            let mut v = bytes.clone();
            v[4..8].copy_from_slice(&9u32.to_le_bytes());
            assert!(matches!(Checkpoint::decode(&v), Err(Error::Version { found: 9, .. })));
            assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn nan_data_aborts_with_term_name() {
        let (mut data, fp) = tiny_data();
        data.normal.set(0, 0, f64::NAN);
        for r in 0..data.normal.rows() {
            data.normal.set(r, 0, f64::NAN);
        }
        let err = train_cincgan(&data, &tiny_config(Method::CincGan), fp).unwrap_err();
        match err {
            Error::NonFinite { term, epoch, step } => {
                assert_eq!(term, "adv1");
                assert_eq!((epoch, step), (0, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { learning_rate: f64::NAN, ..ok.clone() },
            TrainConfig { hidden: vec![], ..ok.clone() },
            TrainConfig { beta1: 1.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        let longer = TrainConfig { epochs: 7, checkpoint_every: 3, ..ok.clone() };
        assert_eq!(longer.fingerprint(), ok.fingerprint());
        assert_ne!(TrainConfig { seed: 1, ..ok.clone() }.fingerprint(), ok.fingerprint());
    }
}
