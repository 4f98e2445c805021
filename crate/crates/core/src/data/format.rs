//! `WNF1` utterance files.
//!
//! Little-endian layout: magic `WNF1`, u32 version (1), u32 frame count,
//! u32 cepstral width (40), f32 frame shift in ms, then per frame 40 f64
//! cepstra followed by one f64 F0 in Hz.

use std::path::Path;

use super::{Domain, FeatureFrame, Utterance};
use crate::codec::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::networks::MCC_DIM;

const MAGIC: &[u8; 4] = b"WNF1";
const VERSION: u32 = 1;

pub fn encode_utterance(u: &Utterance) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(u.frames.len() as u32);
    w.u32(MCC_DIM as u32);
    w.f32(u.frame_shift_ms);
    for f in &u.frames {
        w.f64s(&f.mcc);
        w.f64(f.f0_hz);
    }
    w.finish()
}

/// Decodes a file body. The id and speaker are left empty and the domain
/// is inferred from voicing (no voiced frame means whisper); callers with a
/// manifest entry overwrite these.
pub fn decode_utterance(bytes: &[u8]) -> Result<Utterance> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            what: "WNF",
            found: version,
            expected: VERSION,
        });
    }
    let at = r.offset();
    let count = r.u32("frame count")? as usize;
    if count == 0 {
        return Err(Error::format(at, "utterance has zero frames"));
    }
    let at = r.offset();
    let dim = r.u32("cepstral width")? as usize;
    if dim != MCC_DIM {
        return Err(Error::format(
            at,
            format!("cepstral width {dim}, expected {MCC_DIM}"),
        ));
    }
    let at = r.offset();
    let frame_shift_ms = r.f32("frame shift")?;
    if !frame_shift_ms.is_finite() || frame_shift_ms <= 0.0 {
        return Err(Error::format(at, format!("bad frame shift {frame_shift_ms}")));
    }
    let need = count * (MCC_DIM + 1) * 8;
    if r.remaining() < need {
        return Err(Error::format(
            r.offset(),
            format!(
                "truncated frames: {count} frames need {need} bytes, {} left",
                r.remaining()
            ),
        ));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let vals = r.finite_f64s(MCC_DIM, "cepstra")?;
        let at = r.offset();
        let f0 = r.f64("f0")?;
        if !f0.is_finite() || f0 < 0.0 {
            return Err(Error::format(at, format!("invalid f0 {f0}")));
        }
        let mut mcc = [0.0; MCC_DIM];
        mcc.copy_from_slice(&vals);
        frames.push(FeatureFrame { mcc, f0_hz: f0 });
    }
    r.expect_end()?;
    let domain = if frames.iter().any(FeatureFrame::voiced) {
        Domain::Normal
    } else {
        Domain::Whisper
    };
    Ok(Utterance {
        id: String::new(),
        speaker: String::new(),
        domain,
        frames,
        frame_shift_ms,
    })
}

pub fn write_utterance(path: &Path, u: &Utterance) -> Result<()> {
    u.validate()?;
    write_file(path, &encode_utterance(u))
}

/// Reads a file; the id is the file stem.
pub fn read_utterance(path: &Path) -> Result<Utterance> {
    let bytes = read_file(path)?;
    let mut u = decode_utterance(&bytes)?;
    u.id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(u)
}
