//! Checkpoint files.
//!
//! Layout: magic `CINC`, u32 version, u64 config fingerprint, u64
//! normalization-stats fingerprint, u64 completed epochs, u64 seed, u8 flag
//! followed by the frozen first-stage bundle when set, the trained bundle,
//! then the optimizer moments. Batch order is a pure function of the seed
//! and epoch, so no generator state needs storing.

use std::path::Path;

use super::adam::OptimizerState;
use crate::codec::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::networks::{BundleKind, DenseNet, ModelBundle, Role};

const MAGIC: &[u8; 4] = b"CINC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub bundle: ModelBundle,
    /// The first-stage baseline networks a second-stage run was trained on.
    pub frozen_stage1: Option<ModelBundle>,
    pub optimizer: OptimizerState,
    pub config_fingerprint: u64,
    pub stats_fingerprint: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn kind(&self) -> BundleKind {
        self.bundle.kind()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(self.config_fingerprint);
        w.u64(self.stats_fingerprint);
        w.u64(self.epoch as u64);
        w.u64(self.seed);
        match &self.frozen_stage1 {
            Some(b) => {
                w.u8(1);
                b.encode(&mut w);
            }
            None => w.u8(0),
        }
        self.bundle.encode(&mut w);
        self.optimizer.encode(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: version,
                expected: VERSION,
            });
        }
        let config_fingerprint = r.u64("config fingerprint")?;
        let stats_fingerprint = r.u64("stats fingerprint")?;
        let epoch = r.u64("epoch")? as usize;
        let seed = r.u64("seed")?;
        let at = r.offset();
        let frozen_stage1 = match r.u8("stage-1 flag")? {
            0 => None,
            1 => Some(ModelBundle::decode(&mut r)?),
            f => return Err(Error::format(at, format!("bad stage-1 flag {f}"))),
        };
        let bundle = ModelBundle::decode(&mut r)?;
        let optimizer = OptimizerState::decode(&mut r)?;
        r.expect_end()?;
        let ck = Checkpoint {
            bundle,
            frozen_stage1,
            optimizer,
            config_fingerprint,
            stats_fingerprint,
            epoch,
            seed,
        };
        ck.validate()?;
        Ok(ck)
    }

    /// Cross-field consistency: optimizer shapes, stage pairing.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.check(&self.bundle)?;
        match (self.kind(), &self.frozen_stage1) {
            (BundleKind::CycleGanStage2, Some(s1)) if s1.kind() == BundleKind::CycleGanStage1 => {
                Ok(())
            }
            (BundleKind::CycleGanStage2, _) => Err(Error::Incompatible(
                "second-stage checkpoint lacks its first-stage networks".into(),
            )),
            (_, None) => Ok(()),
            (k, Some(_)) => Err(Error::Incompatible(format!(
                "{k:?} checkpoint must not carry first-stage networks"
            ))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }

    /// The cepstral conversion network `G_X2Y`.
    pub fn mcc_generator(&self) -> Result<&DenseNet> {
        match self.kind() {
            BundleKind::CycleGanStage2 => self
                .frozen_stage1
                .as_ref()
                .expect("validated")
                .get(Role::GenXY),
            _ => self.bundle.get(Role::GenXY),
        }
    }

    /// The F0 network `G_Y2Z`, absent from first-stage checkpoints.
    pub fn f0_generator(&self) -> Result<&DenseNet> {
        match self.kind() {
            BundleKind::CycleGanStage1 => Err(Error::Incompatible(
                "first-stage checkpoint has no F0 generator; train the second stage".into(),
            )),
            _ => self.bundle.get(Role::GenYZ),
        }
    }
}
