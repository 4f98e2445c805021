//! Whisper-to-normal conversion with a trained checkpoint.

use crate::data::{Domain, FeatureFrame, NormStats, Utterance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::networks::{DenseNet, MCC_DIM};
use crate::trainer::Checkpoint;

/// Voicing mask of converted utterances. F0 is predicted for every frame;
/// the policy decides which frames keep it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum UvPolicy {
    #[default]
    AllVoiced,
    /// Voiced where the source frame's energy coefficient `c0` is within
    /// the top `voiced_fraction` of the utterance.
    SourceEnergyQuantile { voiced_fraction: f64 },
}

pub const DEFAULT_VOICED_FRACTION: f64 = 0.7;

impl UvPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            UvPolicy::AllVoiced => "all-voiced",
            UvPolicy::SourceEnergyQuantile { .. } => "source-energy-quantile",
        }
    }

    pub fn parse(name: &str, voiced_fraction: f64) -> Result<Self> {
        match name {
            "all-voiced" => Ok(UvPolicy::AllVoiced),
            "source-energy-quantile" => {
                if !(voiced_fraction > 0.0 && voiced_fraction <= 1.0) {
                    return Err(Error::Config(format!(
                        "voiced fraction must be in (0, 1], got {voiced_fraction}"
                    )));
                }
                Ok(UvPolicy::SourceEnergyQuantile { voiced_fraction })
            }
            _ => Err(Error::Config(format!(
                "uv-policy must be `all-voiced` or `source-energy-quantile`, got `{name}`"
            ))),
        }
    }

    pub fn mask(&self, source: &Utterance) -> Vec<bool> {
        match *self {
            UvPolicy::AllVoiced => vec![true; source.len()],
            UvPolicy::SourceEnergyQuantile { voiced_fraction } => {
                let n = source.len();
                let keep = ((voiced_fraction * n as f64).round() as usize).clamp(1, n);
                let mut order: Vec<usize> = (0..n).collect();
                let c0 = |i: usize| source.frames[i].mcc[0];
                order.sort_by(|&i, &j| c0(j).total_cmp(&c0(i)).then(i.cmp(&j)));
                let mut mask = vec![false; n];
                for &i in &order[..keep] {
                    mask[i] = true;
                }
                mask
            }
        }
    }
}

/// The two networks a conversion needs, plus the statistics they were
/// trained under.
#[derive(Debug, Clone, Copy)]
pub struct Converter<'a> {
    pub mcc: &'a DenseNet,
    pub f0: &'a DenseNet,
    pub stats: &'a NormStats,
}

impl<'a> Converter<'a> {
    /// Checks that `stats` are the ones the checkpoint was trained with.
    pub fn new(checkpoint: &'a Checkpoint, stats: &'a NormStats) -> Result<Self> {
        if checkpoint.stats_fingerprint != stats.fingerprint() {
            return Err(Error::Incompatible(
                "normalization statistics differ from the ones the checkpoint was trained with"
                    .into(),
            ));
        }
        Ok(Converter {
            mcc: checkpoint.mcc_generator()?,
            f0: checkpoint.f0_generator()?,
            stats,
        })
    }

    /// Normal-domain cepstra and F0 for every frame of a whisper utterance.
    pub fn convert(&self, source: &Utterance, policy: UvPolicy) -> Result<Utterance> {
        if source.domain != Domain::Whisper {
            return Err(Error::Incompatible(format!(
                "`{}` is not a whisper utterance",
                source.id
            )));
        }
        let x = self.stats.normalize_mcc(Domain::Whisper, &source.mcc_matrix());
        let y_hat = self.mcc.predict(&x)?;
        let z_hat = self.f0.predict(&y_hat)?;
        let mcc = self.stats.denormalize_mcc(Domain::Normal, &y_hat);
        let mask = policy.mask(source);
        let frames = (0..source.len())
            .map(|t| {
                let mut c = [0.0; MCC_DIM];
                c.copy_from_slice(mcc.row(t));
                let f0 = if mask[t] {
                    self.stats.denormalize_f0(z_hat.get(t, 0))
                } else {
                    0.0
                };
                FeatureFrame::new(c, f0)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Utterance::new(source.id.clone(), source.speaker.clone(), Domain::Normal, frames)?;
        out.frame_shift_ms = source.frame_shift_ms;
        Ok(out)
    }

    /// Normalized F0 predictions for a batch of normalized normal cepstra.
    pub fn predict_f0(&self, y: &Matrix) -> Result<Matrix> {
        self.f0.predict(y)
    }
}
