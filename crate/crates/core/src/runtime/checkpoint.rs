use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FEATURE_LAYOUT_VERSION;
use crate::learner::OptimizerState;
use crate::net::{NetError, QNetParams};
use crate::sim::RULES_VERSION;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FDCK";
pub const CHECKPOINT_FORMAT: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format {0}")]
    Format(u16),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint parameters: {0}")]
    Net(#[from] NetError),
    #[error("checkpoint was written for {what} {found:?}, this build uses {expected:?}")]
    Version {
        what: &'static str,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub rules_version: String,
    pub feature_layout_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub train_steps: u64,
    pub target_syncs: u64,
    pub episodes: u64,
    pub snapshot_version: u64,
}

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub online: QNetParams,
    pub target: QNetParams,
    pub opt: OptimizerState,
}

// Layout: magic, u16 format, u32 header length, JSON header, online blob,
// target blob, u64 Adam step, u64 n, n f64 first moments, n f64 second
// moments. Integers and floats are little-endian.
impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_FORMAT.to_le_bytes());
        b.extend_from_slice(&(header.len() as u32).to_le_bytes());
        b.extend_from_slice(&header);
        b.extend_from_slice(&self.online.to_bytes());
        b.extend_from_slice(&self.target.to_bytes());
        b.extend_from_slice(&self.opt.step.to_le_bytes());
        b.extend_from_slice(&(self.opt.m.len() as u64).to_le_bytes());
        for v in self.opt.m.iter().chain(&self.opt.v) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
            let s = bytes.get(*pos..*pos + n).ok_or(CheckpointError::Truncated)?;
            *pos += n;
            Ok(s)
        };
        let mut pos = 0;
        if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let format = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
        if format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(format));
        }
        let hlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let header: CheckpointHeader = serde_json::from_slice(take(&mut pos, hlen)?)?;
        for (what, expected, found) in [
            ("rules", RULES_VERSION, &header.rules_version),
            ("feature layout", FEATURE_LAYOUT_VERSION, &header.feature_layout_version),
        ] {
            if expected != found {
                return Err(CheckpointError::Version {
                    what,
                    expected: expected.into(),
                    found: found.clone(),
                });
            }
        }
        let (online, used) = QNetParams::from_bytes(&bytes[pos..])?;
        pos += used;
        let (target, used) = QNetParams::from_bytes(&bytes[pos..])?;
        pos += used;
        let step = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        if n != online.data.len() {
            return Err(CheckpointError::Truncated);
        }
        let mut moments = Vec::with_capacity(2 * n);
        for _ in 0..2 * n {
            moments.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let v = moments.split_off(n);
        Ok(Checkpoint {
            header,
            online,
            target,
            opt: OptimizerState { m: moments, v, step },
        })
    }

    /// Write atomically: a temporary file renamed over the target.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let online = QNetParams::init(1, true);
        let mut opt = OptimizerState::new(online.data.len());
        opt.step = 7;
        opt.m[3] = 0.25;
        opt.v[9] = 1e-9;
        Checkpoint {
            header: CheckpointHeader {
                rules_version: RULES_VERSION.into(),
                feature_layout_version: FEATURE_LAYOUT_VERSION.into(),
                config_hash: "00ff".into(),
                config: serde_json::json!({"actors": 2}),
                train_steps: 7,
                target_syncs: 0,
                episodes: 40,
                snapshot_version: 8,
            },
            target: QNetParams::init(2, true),
            online,
            opt,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn rules_mismatch_is_reported() {
        let mut c = sample();
        c.header.rules_version = "fogduel-v0".into();
        let err = Checkpoint::from_bytes(&c.to_bytes()).unwrap_err();
        assert!(matches!(err, CheckpointError::Version { what: "rules", .. }), "{err}");
    }

    #[test]
    fn truncation_is_reported() {
        let b = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 3]).is_err());
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(CheckpointError::BadMagic)));
    }
}
