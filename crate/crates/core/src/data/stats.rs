//! Normalization statistics and the `WNS1` blob that stores them.

use std::path::Path;

use super::{Domain, FeatureFrame, Split, Utterance};
use crate::codec::{fingerprint64, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::networks::MCC_DIM;

const MAGIC: &[u8; 4] = b"WNS1";
const VERSION: u32 = 1;

/// Mean and population standard deviation of one feature. A constant
/// feature has `std == 0` and passes through normalization unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimStats {
    pub mean: f64,
    pub std: f64,
}

impl DimStats {
    pub fn is_constant(&self) -> bool {
        self.std == 0.0
    }

    fn from_values(values: &[f64], what: &str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty(format!("no training values for {what}")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let all_equal = values.iter().all(|&v| v == values[0]);
        if all_equal {
            return Ok(DimStats {
                mean: values[0],
                std: 0.0,
            });
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Domain {
                op: "normalize",
                msg: format!("{what} varies but its standard deviation rounds to zero"),
            });
        }
        Ok(DimStats { mean, std })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            v
        } else {
            (v - self.mean) / self.std
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            v
        } else {
            v * self.std + self.mean
        }
    }
}

/// Per-dimension cepstral statistics for each domain plus voiced log-F0
/// statistics, all from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub whisper: Vec<DimStats>,
    pub normal: Vec<DimStats>,
    pub log_f0: DimStats,
}

/// Network-ready view of an utterance. Unvoiced frames carry F0 target 0
/// with `voiced == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedUtterance {
    pub mcc: Matrix,
    pub f0: Matrix,
    pub voiced: Vec<bool>,
}

impl NormStats {
    /// Statistics over the training utterances. Utterances are visited in
    /// (domain, speaker, id) order so the result does not depend on the
    /// order they are supplied in.
    pub fn compute<'a>(utterances: impl IntoIterator<Item = (&'a Utterance, Split)>) -> Result<Self> {
        let mut train: Vec<&Utterance> = utterances
            .into_iter()
            .filter(|(_, s)| *s == Split::Train)
            .map(|(u, _)| u)
            .collect();
        train.sort_by(|a, b| (a.domain, &a.speaker, &a.id).cmp(&(b.domain, &b.speaker, &b.id)));

        let per_dim = |domain: Domain| -> Result<Vec<DimStats>> {
            let frames: Vec<&FeatureFrame> = train
                .iter()
                .filter(|u| u.domain == domain)
                .flat_map(|u| u.frames.iter())
                .collect();
            (0..MCC_DIM)
                .map(|d| {
                    let vals: Vec<f64> = frames.iter().map(|f| f.mcc[d]).collect();
                    DimStats::from_values(&vals, &format!("{} mcc[{d}]", domain.as_str()))
                })
                .collect()
        };
        let log_f0: Vec<f64> = train
            .iter()
            .filter(|u| u.domain == Domain::Normal)
            .flat_map(|u| u.frames.iter())
            .filter(|f| f.voiced())
            .map(|f| f.f0_hz.ln())
            .collect();
        Ok(NormStats {
            whisper: per_dim(Domain::Whisper)?,
            normal: per_dim(Domain::Normal)?,
            log_f0: DimStats::from_values(&log_f0, "voiced log-F0")?,
        })
    }

    pub fn mcc_stats(&self, domain: Domain) -> &[DimStats] {
        match domain {
            Domain::Whisper => &self.whisper,
            Domain::Normal => &self.normal,
        }
    }

    /// Dimensions whose training values were constant.
    pub fn constant_dims(&self, domain: Domain) -> Vec<usize> {
        self.mcc_stats(domain)
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_constant())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn normalize_mcc(&self, domain: Domain, mcc: &Matrix) -> Matrix {
        let st = self.mcc_stats(domain);
        Matrix::from_fn(mcc.rows(), mcc.cols(), |r, c| st[c].normalize(mcc.get(r, c)))
    }

    pub fn denormalize_mcc(&self, domain: Domain, mcc: &Matrix) -> Matrix {
        let st = self.mcc_stats(domain);
        Matrix::from_fn(mcc.rows(), mcc.cols(), |r, c| st[c].denormalize(mcc.get(r, c)))
    }

    /// Z-scored natural-log F0 for a voiced frame, `None` when unvoiced.
    pub fn normalize_f0(&self, f0_hz: f64) -> Option<f64> {
        (f0_hz > 0.0).then(|| self.log_f0.normalize(f0_hz.ln()))
    }

    pub fn denormalize_f0(&self, value: f64) -> f64 {
        self.log_f0.denormalize(value).exp()
    }

    pub fn normalize(&self, u: &Utterance) -> NormalizedUtterance {
        let mcc = self.normalize_mcc(u.domain, &u.mcc_matrix());
        let voiced: Vec<bool> = u.frames.iter().map(FeatureFrame::voiced).collect();
        let f0 = Matrix::from_fn(u.len(), 1, |r, _| {
            self.normalize_f0(u.frames[r].f0_hz).unwrap_or(0.0)
        });
        NormalizedUtterance { mcc, f0, voiced }
    }

    /// Inverse of [`normalize`](Self::normalize); frames flagged unvoiced
    /// get F0 0.
    pub fn denormalize(&self, n: &NormalizedUtterance, domain: Domain) -> Vec<FeatureFrame> {
        let mcc = self.denormalize_mcc(domain, &n.mcc);
        (0..mcc.rows())
            .map(|r| {
                let mut m = [0.0; MCC_DIM];
                m.copy_from_slice(mcc.row(r));
                let f0 = if n.voiced[r] {
                    self.denormalize_f0(n.f0.get(r, 0))
                } else {
                    0.0
                };
                FeatureFrame { mcc: m, f0_hz: f0 }
            })
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(MCC_DIM as u32);
        for s in self.whisper.iter().chain(&self.normal).chain([&self.log_f0]) {
            w.f64(s.mean);
            w.f64(s.std);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Version {
                what: "WNS",
                found: version,
                expected: VERSION,
            });
        }
        let at = r.offset();
        let dim = r.u32("dimension")? as usize;
        if dim != MCC_DIM {
            return Err(Error::format(at, format!("stats width {dim}, expected {MCC_DIM}")));
        }
        let mut read = |what: &str| -> Result<DimStats> {
            let v = r.finite_f64s(2, what)?;
            if v[1] < 0.0 {
                return Err(Error::format(r.offset() - 8, format!("negative std in {what}")));
            }
            Ok(DimStats {
                mean: v[0],
                std: v[1],
            })
        };
        let whisper = (0..dim).map(|_| read("whisper stats")).collect::<Result<Vec<_>>>()?;
        let normal = (0..dim).map(|_| read("normal stats")).collect::<Result<Vec<_>>>()?;
        let log_f0 = read("log-F0 stats")?;
        r.expect_end()?;
        Ok(NormStats {
            whisper,
            normal,
            log_f0,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint64(&self.encode())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}
