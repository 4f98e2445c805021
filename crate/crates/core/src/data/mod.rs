//! Frame-level feature corpora: utterance files, manifests, normalization,
//! synthetic corpus generation and batch sampling.

mod format;
mod manifest;
mod sampler;
mod stats;
mod synth;

pub use format::{decode_utterance, encode_utterance, read_utterance, write_utterance};
pub use manifest::{CorpusManifest, ManifestEntry, STATS_FILE};
pub use sampler::{BatchSampler, TrainingSet};
pub use stats::{DimStats, NormStats, NormalizedUtterance};
pub use synth::{synth_corpus, GroundTruth, SynthCorpus, SynthSpec};

use crate::error::{Error, Result};
use crate::networks::MCC_DIM;

pub const DEFAULT_FRAME_SHIFT_MS: f32 = 5.0;
/// Analysis window length the features are assumed to come from.
pub const WINDOW_MS: f32 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Whisper,
    Normal,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Whisper => "whisper",
            Domain::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "whisper" => Ok(Domain::Whisper),
            "normal" => Ok(Domain::Normal),
            _ => Err(Error::Config(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// One analysis frame: 40 cepstral coefficients and F0 in Hz (0 = unvoiced).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub mcc: [f64; MCC_DIM],
    pub f0_hz: f64,
}

impl FeatureFrame {
    pub fn new(mcc: [f64; MCC_DIM], f0_hz: f64) -> Result<Self> {
        if !f0_hz.is_finite() || f0_hz < 0.0 {
            return Err(Error::Domain {
                op: "frame",
                msg: format!("f0 must be finite and >= 0, got {f0_hz}"),
            });
        }
        if mcc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                op: "frame",
                msg: "non-finite cepstral coefficient".into(),
            });
        }
        Ok(FeatureFrame { mcc, f0_hz })
    }

    pub fn unvoiced(mcc: [f64; MCC_DIM]) -> Self {
        FeatureFrame { mcc, f0_hz: 0.0 }
    }

    pub fn voiced(&self) -> bool {
        self.f0_hz > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub domain: Domain,
    pub frames: Vec<FeatureFrame>,
    pub frame_shift_ms: f32,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        speaker: impl Into<String>,
        domain: Domain,
        frames: Vec<FeatureFrame>,
    ) -> Result<Self> {
        let u = Utterance {
            id: id.into(),
            speaker: speaker.into(),
            domain,
            frames,
            frame_shift_ms: DEFAULT_FRAME_SHIFT_MS,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Empty(format!("utterance `{}` has no frames", self.id)));
        }
        if self.domain == Domain::Whisper && self.frames.iter().any(FeatureFrame::voiced) {
            return Err(Error::Domain {
                op: "utterance",
                msg: format!("whisper utterance `{}` has voiced frames", self.id),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.voiced()).count()
    }

    /// Frames as rows of an `n x 40` matrix.
    pub fn mcc_matrix(&self) -> crate::Matrix {
        let rows: Vec<&[f64]> = self.frames.iter().map(|f| &f.mcc[..]).collect();
        crate::Matrix::from_rows(&rows).expect("frames have equal width")
    }

    pub fn f0_track(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.f0_hz).collect()
    }
}
