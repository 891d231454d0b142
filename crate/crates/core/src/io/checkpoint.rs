//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! "THCM"  u32 version
//! u64 config length, config JSON
//! u64 step
//! u32 tensor count, then for the online and EMA sets in turn, per tensor:
//!     u32 name length, name, u64 rows, u64 cols, rows·cols f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, FormatError};
use crate::autodiff::{Params, Tensor};
use crate::consistency::{EmaPair, NoiseSchedule};
use crate::model::{Denoiser, DenoiserConfig};
use crate::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"THCM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    model: DenoiserConfig,
    schedule: NoiseSchedule,
}

/// Model configuration, update counter, and online plus EMA parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserConfig,
    pub schedule: NoiseSchedule,
    pub step: u64,
    pub params: EmaPair,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&Snapshot { model: self.model.clone(), schedule: self.schedule })
            .unwrap_or_default();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.online.len() as u32).to_le_bytes());
        for set in [&self.params.online, &self.params.target] {
            for (name, t) in set.names().iter().zip(set.tensors()) {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
                out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(FormatError::BadMagic { expected: "THCM".into() });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let len = r.len64("config length")?;
        let config = r.take(len, "config")?;
        let snap: Snapshot = serde_json::from_slice(config).map_err(|e| FormatError::json(&e))?;
        let step = r.u64("step")?;
        let count = r.u32("tensor count")? as usize;
        let online = r.params(count, "online")?;
        let target = r.params(count, "ema")?;
        if r.pos != bytes.len() {
            return Err(FormatError::Field {
                field: "checkpoint".into(),
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let ckpt = Self { model: snap.model, schedule: snap.schedule, step, params: EmaPair { online, target } };
        if let Ok(net) = Denoiser::new(ckpt.model.clone()) {
            ckpt.check_against(&net)?;
        }
        Ok(ckpt)
    }

    /// Verifies both parameter sets against a network's layout.
    pub fn check_against(&self, net: &Denoiser) -> Result<(), FormatError> {
        for (set, label) in [(&self.params.online, "online"), (&self.params.target, "ema")] {
            let specs = net.param_specs();
            if set.len() != specs.len() {
                return Err(FormatError::Field {
                    field: format!("{label} tensors"),
                    message: format!("found {}, the model needs {}", set.len(), specs.len()),
                });
            }
            for (spec, (name, t)) in specs.iter().zip(set.names().iter().zip(set.tensors())) {
                if &spec.name != name || t.shape() != [spec.rows, spec.cols] {
                    return Err(FormatError::Shape {
                        tensor: format!("{label}:{name}"),
                        expected: vec![spec.rows, spec.cols],
                        found: t.shape().to_vec(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn denoiser(&self) -> Result<Denoiser, Error> {
        let net = Denoiser::new(self.model.clone())?;
        self.check_against(&net)?;
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { what: what.into(), needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap_or_default()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap_or_default()))
    }

    fn len64(&mut self, what: &str) -> Result<usize, FormatError> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| FormatError::Truncated { what: what.into(), needed: usize::MAX, available: 0 })
    }

    fn params(&mut self, count: usize, label: &str) -> Result<Params, FormatError> {
        let mut params = Params::new();
        for i in 0..count {
            let what = format!("{label} tensor {i}");
            let len = self.u32(&what)? as usize;
            let name = std::str::from_utf8(self.take(len, &what)?)
                .map_err(|_| FormatError::Field { field: what.clone(), message: "name is not UTF-8".into() })?
                .to_string();
            let rows = self.len64(&name)?;
            let cols = self.len64(&name)?;
            let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| FormatError::Truncated {
                what: name.clone(),
                needed: usize::MAX,
                available: self.bytes.len() - self.pos,
            })?;
            let raw = self.take(n, &name)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default())).collect();
            let tensor = Tensor::matrix(rows, cols, data).map_err(|e| FormatError::Field { field: name.clone(), message: e.to_string() })?;
            params
                .push(name.clone(), tensor)
                .map_err(|e| FormatError::Field { field: name, message: e.to_string() })?;
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), Error> {
    Ok(write_atomic(path, &ckpt.to_bytes())?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    Ok(Checkpoint::from_bytes(&std::fs::read(path)?)?)
}
