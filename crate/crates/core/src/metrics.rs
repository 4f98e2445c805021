//! Objective evaluation: mel-cepstral distortion, log-F0 RMSE and
//! histogram divergences between predicted and reference F0.
//!
//! MCD per frame is `(10 / ln 10) · sqrt(2 · Σ_{d=1..39} (c_d - ĉ_d)^2)` dB,
//! leaving out the energy coefficient `c_0`. F0 RMSE is taken in natural
//! log Hz over frames voiced in both utterances.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::codec::write_file;
use crate::convert::{Converter, UvPolicy};
use crate::data::{CorpusManifest, Domain, NormStats, Split, Utterance};
use crate::error::{Error, Result};
use crate::networks::MCC_DIM;
use crate::trainer::Checkpoint;

pub const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;
pub const DEFAULT_BINS: usize = 64;
pub const SMOOTHING: f64 = 1e-10;

/// Distortion between two cepstral frames in dB, `c_0` excluded.
pub fn mcd_frame(a: &[f64; MCC_DIM], b: &[f64; MCC_DIM]) -> f64 {
    let sq: f64 = a[1..].iter().zip(&b[1..]).map(|(x, y)| (x - y) * (x - y)).sum();
    MCD_SCALE * (2.0 * sq).sqrt()
}

fn same_length(a: &Utterance, b: &Utterance) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Incompatible(format!(
            "`{}` has {} frames but `{}` has {}",
            a.id,
            a.len(),
            b.id,
            b.len()
        )));
    }
    Ok(())
}

/// Mean frame distortion in dB.
pub fn mcd(converted: &Utterance, reference: &Utterance) -> Result<f64> {
    same_length(converted, reference)?;
    let total: f64 = converted
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| mcd_frame(&a.mcc, &b.mcc))
        .sum();
    Ok(total / converted.len() as f64)
}

/// Squared log-F0 errors over frames voiced in both utterances.
fn log_f0_sq_errors(converted: &Utterance, reference: &Utterance) -> Result<Vec<f64>> {
    same_length(converted, reference)?;
    Ok(converted
        .frames
        .iter()
        .zip(&reference.frames)
        .filter(|(a, b)| a.voiced() && b.voiced())
        .map(|(a, b)| (a.f0_hz.ln() - b.f0_hz.ln()).powi(2))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Rmse {
    pub rmse: f64,
    pub frames: usize,
}

/// Natural-log F0 RMSE over co-voiced frames; undefined when there are
/// none.
pub fn f0_rmse(converted: &Utterance, reference: &Utterance) -> Result<F0Rmse> {
    let sq = log_f0_sq_errors(converted, reference)?;
    if sq.is_empty() {
        return Err(Error::Undefined(format!(
            "`{}` and `{}` share no voiced frames",
            converted.id, reference.id
        )));
    }
    Ok(F0Rmse {
        rmse: (sq.iter().sum::<f64>() / sq.len() as f64).sqrt(),
        frames: sq.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergences {
    /// `KL(P ‖ Q)` with `P` predicted and `Q` reference, in nats.
    pub kld: f64,
    pub jsd: f64,
    pub bins: usize,
}

/// Histogram over `[lo, hi]` with `bins` equal-width bins, smoothed by
/// adding `SMOOTHING` to every bin frequency and renormalizing.
fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1.0;
    }
    let n = values.len() as f64;
    let raw: Vec<f64> = counts.iter().map(|c| c / n + SMOOTHING).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|p| p / z).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// KLD and JSD between the histograms of two F0 samples on their shared
/// range.
pub fn f0_divergences(predicted: &[f64], reference: &[f64], bins: usize) -> Result<Divergences> {
    if predicted.is_empty() || reference.is_empty() {
        return Err(Error::Empty("F0 divergence needs voiced values on both sides".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let all = predicted.iter().chain(reference);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain {
            op: "f0_divergences",
            msg: "non-finite F0 value".into(),
        });
    }
    let p = histogram(predicted, lo, hi, bins);
    let q = histogram(reference, lo, hi, bins);
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    let jsd = (0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).min(std::f64::consts::LN_2);
    Ok(Divergences {
        kld: kl(&p, &q),
        jsd,
        bins,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceMetrics {
    pub id: String,
    pub speaker: String,
    pub mcd_db: f64,
    /// `None` when the pair shares no voiced frame.
    pub f0_rmse: Option<f64>,
    pub co_voiced: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerMetrics {
    pub speaker: String,
    pub utterances: usize,
    pub mean_mcd_db: f64,
    /// Pooled over the speaker's co-voiced frames.
    pub f0_rmse: Option<f64>,
    pub co_voiced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<UtteranceMetrics>,
    pub speakers: Vec<SpeakerMetrics>,
    /// Mean of the per-utterance MCD values.
    pub mean_mcd_db: f64,
    /// Pooled over every co-voiced frame of the corpus.
    pub f0_rmse: Option<f64>,
    pub co_voiced: usize,
    pub frames: usize,
    pub divergences: Option<Divergences>,
}

fn pooled(sq: &[f64]) -> Option<f64> {
    if sq.is_empty() {
        None
    } else {
        Some((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
    }
}

/// Aggregates metrics over `(converted, reference)` pairs in order.
pub fn evaluate_pairs(pairs: &[(Utterance, Utterance)], bins: usize) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("no utterance pairs to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut all_sq = Vec::new();
    let mut by_speaker: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut predicted = Vec::new();
    let mut reference = Vec::new();
    for (c, r) in pairs {
        let mcd_db = mcd(c, r)?;
        let sq = log_f0_sq_errors(c, r)?;
        rows.push(UtteranceMetrics {
            id: r.id.clone(),
            speaker: r.speaker.clone(),
            mcd_db,
            f0_rmse: pooled(&sq),
            co_voiced: sq.len(),
            frames: r.len(),
        });
        let e = by_speaker.entry(r.speaker.clone()).or_default();
        e.0.push(mcd_db);
        e.1.extend_from_slice(&sq);
        all_sq.extend_from_slice(&sq);
        predicted.extend(c.frames.iter().filter(|f| f.voiced()).map(|f| f.f0_hz));
        reference.extend(r.frames.iter().filter(|f| f.voiced()).map(|f| f.f0_hz));
    }
    let speakers = by_speaker
        .into_iter()
        .map(|(speaker, (mcds, sq))| SpeakerMetrics {
            speaker,
            utterances: mcds.len(),
            mean_mcd_db: mcds.iter().sum::<f64>() / mcds.len() as f64,
            f0_rmse: pooled(&sq),
            co_voiced: sq.len(),
        })
        .collect();
    let divergences = if predicted.is_empty() || reference.is_empty() {
        None
    } else {
        Some(f0_divergences(&predicted, &reference, bins)?)
    };
    Ok(MetricsReport {
        mean_mcd_db: rows.iter().map(|r| r.mcd_db).sum::<f64>() / rows.len() as f64,
        f0_rmse: pooled(&all_sq),
        co_voiced: all_sq.len(),
        frames: rows.iter().map(|r| r.frames).sum(),
        rows,
        speakers,
        divergences,
    })
}

/// Converts every whisper utterance of `split` and scores it against its
/// normal counterpart with the same id.
pub fn evaluate_corpus(
    checkpoint: &Checkpoint,
    manifest: &CorpusManifest,
    split: Split,
    stats: &NormStats,
    policy: UvPolicy,
    bins: usize,
) -> Result<MetricsReport> {
    let conv = Converter::new(checkpoint, stats)?;
    let mut pairs = Vec::new();
    for e in manifest.select(Domain::Whisper, split) {
        let id = e.id();
        let counterpart = manifest
            .counterpart(&id, Domain::Normal, split)
            .ok_or_else(|| Error::Incompatible(format!("no normal counterpart for `{id}`")))?;
        let src = manifest.load_utterance(e)?;
        let reference = manifest.load_utterance(counterpart)?;
        pairs.push((conv.convert(&src, policy)?, reference));
    }
    evaluate_pairs(&pairs, bins)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_else(|| "undefined".into())
}

impl MetricsReport {
    /// One row per utterance: `id,speaker,mcd_db,f0_rmse_ln,co_voiced_frames`.
    pub fn utterance_csv(&self) -> String {
        let mut s = String::from(
            "# mcd_db = (10/ln10)*sqrt(2*sum_{d=1..39}(c_d-c'_d)^2), c0 excluded; \
             f0_rmse_ln over co-voiced frames in natural-log Hz\n\
             id,speaker,mcd_db,f0_rmse_ln,co_voiced_frames\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:?},{},{}",
                r.id,
                r.speaker,
                r.mcd_db,
                opt(r.f0_rmse),
                r.co_voiced
            );
        }
        s
    }

    pub fn speaker_csv(&self) -> String {
        let mut s = String::from("speaker,utterances,mean_mcd_db,f0_rmse_ln,co_voiced_frames\n");
        for r in &self.speakers {
            let _ = writeln!(
                s,
                "{},{},{:?},{},{}",
                r.speaker,
                r.utterances,
                r.mean_mcd_db,
                opt(r.f0_rmse),
                r.co_voiced
            );
        }
        s
    }

    pub fn divergence_csv(&self) -> String {
        let mut s = String::from("bins,smoothing,kld,jsd\n");
        if let Some(d) = &self.divergences {
            let _ = writeln!(s, "{},{:?},{:?},{:?}", d.bins, SMOOTHING, d.kld, d.jsd);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "utterances        {}", self.rows.len());
        let _ = writeln!(s, "frames            {}", self.frames);
        let _ = writeln!(s, "co-voiced frames  {}", self.co_voiced);
        let _ = writeln!(s, "mean MCD (dB)     {:.6}", self.mean_mcd_db);
        let _ = writeln!(
            s,
            "log-F0 RMSE       {}",
            self.f0_rmse.map_or("undefined".to_string(), |v| format!("{v:.6}"))
        );
        if let Some(d) = &self.divergences {
            let _ = writeln!(s, "F0 KLD (nats)     {:.6}", d.kld);
            let _ = writeln!(s, "F0 JSD (nats)     {:.6}", d.jsd);
        }
        s
    }

    /// Writes `metrics.csv`, `speakers.csv`, `divergence.csv` and
    /// `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("metrics.csv"), self.utterance_csv().as_bytes())?;
        write_file(&dir.join("speakers.csv"), self.speaker_csv().as_bytes())?;
        write_file(&dir.join("divergence.csv"), self.divergence_csv().as_bytes())?;
        write_file(&dir.join("summary.txt"), self.summary().as_bytes())
    }
}

/// `(base - new) / base`; positive when `new` improves on `base`.
pub fn relative_reduction(base: f64, new: f64) -> f64 {
    (base - new) / base
}

/// Per-speaker and overall comparison of a baseline against a new system.
pub fn comparison_csv(base: &MetricsReport, new: &MetricsReport) -> Result<String> {
    let mut s = String::from(
        "speaker,base_mcd_db,new_mcd_db,mcd_reduction,base_f0_rmse_ln,new_f0_rmse_ln,f0_rmse_reduction\n",
    );
    let rmse_cols = |b: Option<f64>, n: Option<f64>| match (b, n) {
        (Some(b), Some(n)) => format!("{b:?},{n:?},{:?}", relative_reduction(b, n)),
        _ => format!("{},{},undefined", opt(b), opt(n)),
    };
    for (b, n) in base.speakers.iter().zip(&new.speakers) {
        if b.speaker != n.speaker {
            return Err(Error::Incompatible(format!(
                "speaker lists differ: `{}` vs `{}`",
                b.speaker, n.speaker
            )));
        }
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{}",
            b.speaker,
            b.mean_mcd_db,
            n.mean_mcd_db,
            relative_reduction(b.mean_mcd_db, n.mean_mcd_db),
            rmse_cols(b.f0_rmse, n.f0_rmse)
        );
    }
    if base.speakers.len() != new.speakers.len() {
        return Err(Error::Incompatible("reports cover different speakers".into()));
    }
    let _ = writeln!(
        s,
        "all,{:?},{:?},{:?},{}",
        base.mean_mcd_db,
        new.mean_mcd_db,
        relative_reduction(base.mean_mcd_db, new.mean_mcd_db),
        rmse_cols(base.f0_rmse, new.f0_rmse)
    );
    Ok(s)
}
