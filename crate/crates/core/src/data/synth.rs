//! Synthetic whisper/normal corpora with known generating maps.
//!
//! A smooth latent trajectory `h(t)` (one AR(1) walk per utterance, shifted
//! by a per-speaker offset) drives everything:
//!
//! * normal cepstra `y = A·h + b`,
//! * whisper cepstra `x = C·tanh(y) + noise`,
//! * voiced F0 `exp(ln f0_base + f0_log_std · h₀)` on a voicing mask.
//!
//! The first latent coordinate is a standardized log-normal rather than a
//! Gaussian, so the F0 distribution is skewed and its orientation can be
//! told apart from its mirror image by distribution matching alone.
//!
//! Training whisper and normal utterances come from independent walks
//! (non-parallel). Each test utterance is rendered in both domains from a
//! single walk, which gives every converted whisper utterance a
//! frame-aligned reference.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{
    encode_utterance, CorpusManifest, Domain, FeatureFrame, ManifestEntry, NormStats, Split,
    TrainingSet, Utterance,
};
use crate::codec::write_file;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::networks::MCC_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Speakers with training data (and test utterances).
    pub speakers: usize,
    /// Speakers that only appear in the test split.
    pub heldout_speakers: usize,
    /// Training frames per domain per training speaker.
    pub train_frames: usize,
    /// Test utterances per speaker.
    pub test_utterances: usize,
    pub frames_per_utterance: usize,
    pub latent_dim: usize,
    /// Fraction of voiced frames in each normal utterance.
    pub voicing_ratio: f64,
    pub whisper_noise: f64,
    /// AR(1) coefficient of the latent walk.
    pub smoothness: f64,
    /// Standard deviation of the per-speaker latent offsets.
    pub speaker_spread: f64,
    pub f0_base_hz: f64,
    pub f0_log_std: f64,
    /// Shape of the log-normal first latent coordinate; 0 makes it Gaussian.
    pub f0_skew: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            speakers: 1,
            heldout_speakers: 0,
            train_frames: 2000,
            test_utterances: 4,
            frames_per_utterance: 200,
            latent_dim: 4,
            voicing_ratio: 0.7,
            whisper_noise: 0.05,
            smoothness: 0.95,
            speaker_spread: 0.5,
            f0_base_hz: 150.0,
            f0_log_std: 0.15,
            f0_skew: 0.6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if self.speakers == 0 {
            return bad("need at least one training speaker");
        }
        if self.train_frames == 0 || self.frames_per_utterance == 0 {
            return bad("frame counts must be positive");
        }
        if self.test_utterances == 0 {
            return bad("need at least one test utterance per speaker");
        }
        if self.latent_dim == 0 || self.latent_dim > MCC_DIM {
            return bad("latent_dim must be in 1..=40");
        }
        if !(self.voicing_ratio > 0.0 && self.voicing_ratio <= 1.0) {
            return bad("voicing_ratio must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return bad("smoothness must be in [0, 1)");
        }
        if self.whisper_noise < 0.0 || self.speaker_spread < 0.0 || self.f0_skew < 0.0 {
            return bad("noise, spread and skew must be nonnegative");
        }
        if self.f0_base_hz <= 0.0 || self.f0_log_std <= 0.0 {
            return bad("f0_base_hz and f0_log_std must be positive");
        }
        Ok(())
    }
}

/// The generating maps, recorded so tests can compare against them.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `40 x L`.
    pub a: Matrix,
    pub b: Vec<f64>,
    /// `40 x 40`.
    pub c: Matrix,
    /// F0 reads `f0_log_std · (w · h)`.
    pub w: Vec<f64>,
    pub f0_base_hz: f64,
    pub f0_log_std: f64,
    /// Latent offset of every speaker, training speakers first.
    pub speaker_offsets: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn normal_mcc(&self, h: &[f64]) -> [f64; MCC_DIM] {
        let mut y = [0.0; MCC_DIM];
        for (d, yd) in y.iter_mut().enumerate() {
            *yd = self.b[d] + (0..h.len()).map(|j| self.a.get(d, j) * h[j]).sum::<f64>();
        }
        y
    }

    pub fn log_f0(&self, h: &[f64]) -> f64 {
        self.f0_base_hz.ln()
            + self.f0_log_std * self.w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, v: &[f64]| {
            let _ = write!(s, "{name}");
            for x in v {
                let _ = write!(s, "\t{x:?}");
            }
            s.push('\n');
        };
        let _ = writeln!(s, "latent_dim\t{}", self.a.cols());
        let _ = writeln!(s, "f0_base_hz\t{:?}", self.f0_base_hz);
        let _ = writeln!(s, "f0_log_std\t{:?}", self.f0_log_std);
        for d in 0..self.a.rows() {
            row(&mut s, &format!("A[{d}]"), self.a.row(d));
        }
        row(&mut s, "b", &self.b);
        for d in 0..self.c.rows() {
            row(&mut s, &format!("C[{d}]"), self.c.row(d));
        }
        row(&mut s, "w", &self.w);
        for (k, o) in self.speaker_offsets.iter().enumerate() {
            row(&mut s, &format!("offset[{k}]"), o);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub seed: u64,
    pub truth: GroundTruth,
    pub manifest: CorpusManifest,
    /// Parallel to `manifest.entries`.
    pub utterances: Vec<Utterance>,
    /// Latent trajectory (`frames x L`) of every utterance, parallel to
    /// `utterances`. Test counterparts share a trajectory.
    pub latents: Vec<Matrix>,
    pub stats: NormStats,
}

impl SynthCorpus {
    pub fn utterance(&self, id: &str, domain: Domain) -> Option<&Utterance> {
        self.utterances
            .iter()
            .find(|u| u.id == id && u.domain == domain)
    }

    /// Utterances of one domain and split, in manifest order.
    pub fn select(&self, domain: Domain, split: Split) -> Vec<Utterance> {
        self.manifest
            .entries
            .iter()
            .zip(&self.utterances)
            .filter(|(e, _)| e.domain == domain && e.split == split)
            .map(|(_, u)| u.clone())
            .collect()
    }

    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::from_utterances(
            &self.select(Domain::Whisper, Split::Train),
            &self.select(Domain::Normal, Split::Train),
            &self.stats,
        )
    }

    /// `(whisper, normal)` test utterances sharing an id.
    pub fn test_pairs(&self) -> Vec<(Utterance, Utterance)> {
        self.select(Domain::Whisper, Split::Test)
            .into_iter()
            .map(|w| {
                let n = self
                    .utterance(&w.id, Domain::Normal)
                    .expect("every test utterance has both renderings")
                    .clone();
                (w, n)
            })
            .collect()
    }

    /// Writes utterance files, `manifest.tsv`, `stats.wns` and `truth.tsv`
    /// under `dir`, returning the manifest path.
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        for sub in ["whisper", "normal"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for (e, u) in self.manifest.entries.iter().zip(&self.utterances) {
            write_file(&dir.join(&e.path), &encode_utterance(u))?;
        }
        let manifest_path = dir.join("manifest.tsv");
        self.manifest.save(&manifest_path)?;
        self.stats.save(&dir.join(super::manifest::STATS_FILE))?;
        write_file(&dir.join("truth.tsv"), self.truth.to_text().as_bytes())?;
        Ok(manifest_path)
    }
}

fn keyed_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"synth");
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(key)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Standardized log-normal: `(exp(s·g) - E) / SD` for standard normal `g`.
fn skewed(g: f64, s: f64) -> f64 {
    if s == 0.0 {
        return g;
    }
    let mean = (s * s / 2.0).exp();
    let sd = ((s * s).exp() - 1.0).sqrt() * mean;
    ((s * g).exp() - mean) / sd
}

fn ground_truth(spec: &SynthSpec, seed: u64) -> GroundTruth {
    let l = spec.latent_dim;
    let mut rng = keyed_rng(seed, &[0]);
    // Cepstral loadings decay with coefficient index.
    let a = Matrix::from_fn(MCC_DIM, l, |d, _| {
        normal(&mut rng) / (l as f64).sqrt() / (1.0 + d as f64 / 8.0)
    });
    let b: Vec<f64> = (0..MCC_DIM)
        .map(|d| {
            let base = if d == 0 { 1.5 } else { 0.0 };
            base + 0.3 * normal(&mut rng) / (1.0 + d as f64 / 8.0)
        })
        .collect();
    let c = Matrix::from_fn(MCC_DIM, MCC_DIM, |r, k| {
        let diag = if r == k { 0.8 } else { 0.0 };
        diag + 0.2 * normal(&mut rng) / (MCC_DIM as f64).sqrt()
    });
    let mut w = vec![0.0; l];
    w[0] = 1.0;
    let total = spec.speakers + spec.heldout_speakers;
    let speaker_offsets = (0..total)
        .map(|k| {
            let mut r = keyed_rng(seed, &[1, k as u64]);
            (0..l).map(|_| spec.speaker_spread * normal(&mut r)).collect()
        })
        .collect();
    GroundTruth {
        a,
        b,
        c,
        w,
        f0_base_hz: spec.f0_base_hz,
        f0_log_std: spec.f0_log_std,
        speaker_offsets,
    }
}

/// `frames x L` latent walk for one utterance.
fn latent_walk(spec: &SynthSpec, offset: &[f64], rng: &mut ChaCha8Rng, frames: usize) -> Matrix {
    let l = spec.latent_dim;
    let rho = spec.smoothness;
    let innov = (1.0 - rho * rho).sqrt();
    let mut state: Vec<f64> = (0..l).map(|_| normal(rng)).collect();
    let mut out = Matrix::zeros(frames, l);
    for t in 0..frames {
        if t > 0 {
            for s in state.iter_mut() {
                *s = rho * *s + innov * normal(rng);
            }
        }
        for j in 0..l {
            let v = if j == 0 {
                skewed(state[j], spec.f0_skew)
            } else {
                state[j]
            };
            out.set(t, j, offset[j] + v);
        }
    }
    out
}

/// Voicing mask marking the `round(ratio · T)` frames with the highest
/// score, where the score is the last latent coordinate (or a fresh walk
/// when the latent is one-dimensional).
fn voicing_mask(spec: &SynthSpec, h: &Matrix, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let t = h.rows();
    let l = spec.latent_dim;
    let score: Vec<f64> = if l > 1 {
        (0..t).map(|r| h.get(r, l - 1)).collect()
    } else {
        let mut s = normal(rng);
        (0..t)
            .map(|_| {
                s = spec.smoothness * s + (1.0 - spec.smoothness.powi(2)).sqrt() * normal(rng);
                s
            })
            .collect()
    };
    let voiced = ((spec.voicing_ratio * t as f64).round() as usize).clamp(1, t);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));
    let mut mask = vec![false; t];
    for &i in &order[..voiced] {
        mask[i] = true;
    }
    mask
}

fn render(
    truth: &GroundTruth,
    spec: &SynthSpec,
    h: &Matrix,
    domain: Domain,
    rng: &mut ChaCha8Rng,
) -> Vec<FeatureFrame> {
    let mask = match domain {
        Domain::Normal => voicing_mask(spec, h, rng),
        Domain::Whisper => vec![false; h.rows()],
    };
    (0..h.rows())
        .map(|t| {
            let y = truth.normal_mcc(h.row(t));
            match domain {
                Domain::Normal => {
                    let f0 = if mask[t] {
                        truth.log_f0(h.row(t)).exp()
                    } else {
                        0.0
                    };
                    FeatureFrame { mcc: y, f0_hz: f0 }
                }
                Domain::Whisper => {
                    let ty: Vec<f64> = y.iter().map(|v| v.tanh()).collect();
                    let mut x = [0.0; MCC_DIM];
                    for (d, xd) in x.iter_mut().enumerate() {
                        *xd = (0..MCC_DIM).map(|k| truth.c.get(d, k) * ty[k]).sum::<f64>()
                            + spec.whisper_noise * normal(rng);
                    }
                    FeatureFrame::unvoiced(x)
                }
            }
        })
        .collect()
}

/// Generates a corpus in memory. Same `(spec, seed)`, same corpus.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let truth = ground_truth(spec, seed);
    let mut entries = Vec::new();
    let mut utterances = Vec::new();
    let mut latents = Vec::new();
    let total = spec.speakers + spec.heldout_speakers;

    let mut push = |id: String, speaker: &str, domain: Domain, split: Split, h: Matrix, frames| {
        let u = Utterance {
            id: id.clone(),
            speaker: speaker.to_string(),
            domain,
            frames,
            frame_shift_ms: super::DEFAULT_FRAME_SHIFT_MS,
        };
        entries.push(ManifestEntry {
            path: Path::new(domain.as_str()).join(format!("{id}.wnf")),
            speaker: speaker.to_string(),
            domain,
            split,
        });
        utterances.push(u);
        latents.push(h);
    };

    for k in 0..total {
        let speaker = format!("spk{k}");
        let offset = &truth.speaker_offsets[k];
        if k < spec.speakers {
            for (di, domain) in [Domain::Whisper, Domain::Normal].into_iter().enumerate() {
                let mut left = spec.train_frames;
                let mut idx = 0u64;
                while left > 0 {
                    let n = left.min(spec.frames_per_utterance);
                    let mut rng = keyed_rng(seed, &[2, k as u64, di as u64, idx]);
                    let h = latent_walk(spec, offset, &mut rng, n);
                    let frames = render(&truth, spec, &h, domain, &mut rng);
                    let tag = if domain == Domain::Whisper { 'w' } else { 'n' };
                    push(
                        format!("{speaker}_train_{tag}{idx:03}"),
                        &speaker,
                        domain,
                        Split::Train,
                        h,
                        frames,
                    );
                    left -= n;
                    idx += 1;
                }
            }
        }
        for i in 0..spec.test_utterances {
            let mut rng = keyed_rng(seed, &[3, k as u64, i as u64]);
            let h = latent_walk(spec, offset, &mut rng, spec.frames_per_utterance);
            let id = format!("{speaker}_test_{i:03}");
            let wf = render(&truth, spec, &h, Domain::Whisper, &mut rng);
            let nf = render(&truth, spec, &h, Domain::Normal, &mut rng);
            push(id.clone(), &speaker, Domain::Whisper, Split::Test, h.clone(), wf);
            push(id, &speaker, Domain::Normal, Split::Test, h, nf);
        }
    }

    let splits: Vec<Split> = entries.iter().map(|e| e.split).collect();
    let stats = NormStats::compute(utterances.iter().zip(splits))?;
    Ok(SynthCorpus {
        spec: spec.clone(),
        seed,
        truth,
        manifest: CorpusManifest::new("", entries),
        utterances,
        latents,
        stats,
    })
}
