//! Run configuration files.
//!
//! Plain text, one `key = value` per line under `[section]` headers; `#`
//! starts a comment. Every key has a default, so an empty file is valid.
//! Unknown sections and keys are rejected, as are repeated keys.
//!
//! ```text
//! [run]
//! seed = 7
//! out = runs/demo
//!
//! [train]
//! method = cincgan
//! epochs = 100
//! hidden = 512, 512
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::codec::write_file;
use crate::convert::{UvPolicy, DEFAULT_VOICED_FRACTION};
use crate::data::{Split, SynthSpec};
use crate::error::{Error, Result};
use crate::losses::Adv2Input;
use crate::metrics::DEFAULT_BINS;
use crate::trainer::{Method, TrainConfig};

pub const RESOLVED_CONFIG_FILE: &str = "resolved.conf";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOptions {
    pub bins: usize,
    pub uv_policy: UvPolicy,
    /// Split evaluated by `evaluate` and `compare`.
    pub split: Split,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            bins: DEFAULT_BINS,
            uv_policy: UvPolicy::AllVoiced,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seeds both corpus synthesis and training.
    pub seed: u64,
    pub out: PathBuf,
    /// Corpus to train and evaluate on; `None` means the corpus that
    /// `synth` writes under `out`.
    pub manifest: Option<PathBuf>,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub metrics: MetricOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            manifest: None,
            synth: SynthSpec::default(),
            train: TrainConfig::default(),
            metrics: MetricOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen = std::collections::BTreeSet::new();
        let mut voiced_fraction: Option<f64> = None;
        let mut uv_policy: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config(format!("line {line_no}: {msg}"));
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header `{line}`")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!(
                        "unknown section `[{name}]`; expected one of {SECTIONS:?}"
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| err(format!("`{key}` appears before any section header")))?;
            if !seen.insert((sec.to_string(), key.to_string())) {
                return Err(err(format!("`{key}` set twice in [{sec}]")));
            }
            match (sec, key) {
                ("metrics", "uv-policy") => uv_policy = Some(value.to_string()),
                ("metrics", "voiced-fraction") => voiced_fraction = Some(num(value).map_err(err)?),
                _ => cfg.set(sec, key, value).map_err(err)?,
            }
        }
        let fraction = voiced_fraction.unwrap_or(DEFAULT_VOICED_FRACTION);
        if let Some(name) = uv_policy {
            cfg.metrics.uv_policy = UvPolicy::parse(&name, fraction)?;
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies the command-line overrides, then re-checks the result.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.seed != self.seed {
            return Err(Error::Config("train seed must equal the run seed".into()));
        }
        if self.metrics.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        self.synth.validate()?;
        self.train.validate()
    }

    /// Every setting, defaults included, in the format `parse` reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, (section, entries)) in self.entries().into_iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let _ = writeln!(s, "[{section}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        write_file(&path, self.to_text().as_bytes())?;
        Ok(path)
    }

    /// The manifest that training and evaluation read.
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.corpus_dir().join("manifest.tsv"))
    }

    /// Where `synth` writes its corpus.
    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    fn entries(&self) -> Vec<(&'static str, Vec<(&'static str, String)>)> {
        let s = &self.synth;
        let t = &self.train;
        let w = &t.weights;
        let hidden = t
            .hidden
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let (policy, fraction) = match self.metrics.uv_policy {
            UvPolicy::AllVoiced => ("all-voiced", DEFAULT_VOICED_FRACTION),
            UvPolicy::SourceEnergyQuantile { voiced_fraction } => {
                ("source-energy-quantile", voiced_fraction)
            }
        };
        vec![
            (
                "run",
                vec![
                    ("seed", self.seed.to_string()),
                    ("out", self.out.display().to_string()),
                    (
                        "manifest",
                        self.manifest
                            .as_ref()
                            .map_or(String::new(), |p| p.display().to_string()),
                    ),
                ],
            ),
            (
                "synth",
                vec![
                    ("speakers", s.speakers.to_string()),
                    ("heldout-speakers", s.heldout_speakers.to_string()),
                    ("train-frames", s.train_frames.to_string()),
                    ("test-utterances", s.test_utterances.to_string()),
                    ("frames-per-utterance", s.frames_per_utterance.to_string()),
                    ("latent-dim", s.latent_dim.to_string()),
                    ("voicing-ratio", fmt(s.voicing_ratio)),
                    ("whisper-noise", fmt(s.whisper_noise)),
                    ("smoothness", fmt(s.smoothness)),
                    ("speaker-spread", fmt(s.speaker_spread)),
                    ("f0-base-hz", fmt(s.f0_base_hz)),
                    ("f0-log-std", fmt(s.f0_log_std)),
                    ("f0-skew", fmt(s.f0_skew)),
                ],
            ),
            (
                "train",
                vec![
                    ("method", t.method.as_str().to_string()),
                    ("epochs", t.epochs.to_string()),
                    ("learning-rate", fmt(t.learning_rate)),
                    ("batch-size", t.batch_size.to_string()),
                    ("hidden", hidden),
                    ("adv2-input", t.adv2_input.as_str().to_string()),
                    ("beta1", fmt(t.beta1)),
                    ("beta2", fmt(t.beta2)),
                    ("epsilon", fmt(t.epsilon)),
                    ("checkpoint-every", t.checkpoint_every.to_string()),
                    ("disc-updates", t.disc_updates.to_string()),
                    ("lambda-cyc", fmt(w.lambda_cyc)),
                    ("lambda-id", fmt(w.lambda_id)),
                    ("lambda1", fmt(w.lambda1)),
                    ("lambda2", fmt(w.lambda2)),
                    ("lambda3", fmt(w.lambda3)),
                    ("lambda4", fmt(w.lambda4)),
                    ("lambda5", fmt(w.lambda5)),
                ],
            ),
            (
                "metrics",
                vec![
                    ("bins", self.metrics.bins.to_string()),
                    ("uv-policy", policy.to_string()),
                    ("voiced-fraction", fmt(fraction)),
                    ("split", self.metrics.split.as_str().to_string()),
                ],
            ),
        ]
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.synth;
        let t = &mut self.train;
        let w = &mut t.weights;
        match (section, key) {
            ("run", "seed") => self.seed = int(v)?,
            ("run", "out") => self.out = PathBuf::from(v),
            ("run", "manifest") => {
                self.manifest = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            ("synth", "speakers") => s.speakers = int(v)?,
            ("synth", "heldout-speakers") => s.heldout_speakers = int(v)?,
            ("synth", "train-frames") => s.train_frames = int(v)?,
            ("synth", "test-utterances") => s.test_utterances = int(v)?,
            ("synth", "frames-per-utterance") => s.frames_per_utterance = int(v)?,
            ("synth", "latent-dim") => s.latent_dim = int(v)?,
            ("synth", "voicing-ratio") => s.voicing_ratio = num(v)?,
            ("synth", "whisper-noise") => s.whisper_noise = num(v)?,
            ("synth", "smoothness") => s.smoothness = num(v)?,
            ("synth", "speaker-spread") => s.speaker_spread = num(v)?,
            ("synth", "f0-base-hz") => s.f0_base_hz = num(v)?,
            ("synth", "f0-log-std") => s.f0_log_std = num(v)?,
            ("synth", "f0-skew") => s.f0_skew = num(v)?,
            ("train", "method") => t.method = Method::parse(v).map_err(|e| e.to_string())?,
            ("train", "epochs") => t.epochs = int(v)?,
            ("train", "learning-rate") => t.learning_rate = num(v)?,
            ("train", "batch-size") => t.batch_size = int(v)?,
            ("train", "hidden") => {
                t.hidden = v
                    .split(',')
                    .map(|p| int(p.trim()))
                    .collect::<std::result::Result<_, _>>()?;
            }
            ("train", "adv2-input") => {
                t.adv2_input = Adv2Input::parse(v).map_err(|e| e.to_string())?;
            }
            ("train", "beta1") => t.beta1 = num(v)?,
            ("train", "beta2") => t.beta2 = num(v)?,
            ("train", "epsilon") => t.epsilon = num(v)?,
            ("train", "checkpoint-every") => t.checkpoint_every = int(v)?,
            ("train", "disc-updates") => t.disc_updates = int(v)?,
            ("train", "lambda-cyc") => w.lambda_cyc = num(v)?,
            ("train", "lambda-id") => w.lambda_id = num(v)?,
            ("train", "lambda1") => w.lambda1 = num(v)?,
            ("train", "lambda2") => w.lambda2 = num(v)?,
            ("train", "lambda3") => w.lambda3 = num(v)?,
            ("train", "lambda4") => w.lambda4 = num(v)?,
            ("train", "lambda5") => w.lambda5 = num(v)?,
            ("metrics", "bins") => self.metrics.bins = int(v)?,
            ("metrics", "split") => {
                self.metrics.split = Split::parse(v).map_err(|e| e.to_string())?;
            }
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }
}

const SECTIONS: [&str; 4] = ["run", "synth", "train", "metrics"];

/// Shortest text that parses back to the same bits.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn int<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("expected a nonnegative integer, got `{v}`"))
}

fn num(v: &str) -> std::result::Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got `{v}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "[run]\nseed = 9\nout = /tmp/x\nmanifest = corpus/manifest.tsv\n\
                    [train]\nmethod = cyclegan\nhidden = 16, 8\nlearning-rate = 3e-4\n\
                    lambda4 = 0.25\nadv2-input = true-normal\n\
                    [metrics]\nuv-policy = source-energy-quantile\nvoiced-fraction = 0.6\n\
                    split = train\n[synth]\nspeakers = 3 # trailing comment\nf0-skew = 0.1\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.method, Method::CycleGan);
        assert_eq!(cfg.train.hidden, vec![16, 8]);
        assert_eq!(cfg.synth.speakers, 3);
        assert_eq!(
            cfg.metrics.uv_policy,
            UvPolicy::SourceEnergyQuantile { voiced_fraction: 0.6 }
        );
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
        let default = RunConfig::default();
        assert_eq!(RunConfig::parse(&default.to_text()).unwrap(), default);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        for bad in [
            "[train]\nlearnig-rate = 0.1\n",
            "[trian]\nepochs = 3\n",
            "epochs = 3\n",
            "[train]\nepochs 3\n",
            "[train]\nepochs = 3\nepochs = 4\n",
            "[train]\nepochs = -1\n",
            "[train]\nlearning-rate = nan\n",
            "[train]\nmethod = gan\n",
            "[metrics]\nuv-policy = sometimes\n",
            "[synth]\nspeakers = 0\n",
            "[train]\nepochs = 0\n",
            "[run\n",
        ] {
            match RunConfig::parse(bad) {
                Err(Error::Config(msg)) => assert!(!msg.is_empty()),
                other => panic!("{bad:?} gave {other:?}"),
            }
        }
        let msg = RunConfig::parse("[train]\n\nlearnig-rate = 0.1\n").unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("learnig-rate"), "{msg}");
    }

    #[test]
    fn every_written_key_is_accepted() {
        let cfg = RunConfig::default();
        for (section, entries) in cfg.entries() {
            for (k, v) in entries {
                let text = format!("[{section}]\n{k} = {v}\n");
                RunConfig::parse(&text).unwrap_or_else(|e| panic!("{k}: {e}"));
            }
        }
    }

    #[test]
    fn overrides_reach_the_trainer() {
        let cfg = RunConfig::default()
            .with_overrides(Some(42), Some(PathBuf::from("elsewhere")))
            .unwrap();
        assert_eq!((cfg.seed, cfg.train.seed), (42, 42));
        assert_eq!(cfg.manifest_path(), PathBuf::from("elsewhere/corpus/manifest.tsv"));
    }
}
