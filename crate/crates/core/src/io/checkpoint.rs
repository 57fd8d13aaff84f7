//! Single-file little-endian checkpoints with a trailing CRC32.
//!
//! Layout: `"NSTC"`, version (u32), config length (u64) + UTF-8 text,
//! tensor count (u32), then per tensor: name length (u32) + bytes, dtype tag
//! (u8), rank (u32), extents (u64 each), raw payload; finally CRC32 (u32) of
//! every preceding byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::params::ParamSet;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;
use crate::training::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NSTC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            AnyTensor::F32(t) => t.data().iter().for_each(|v| v.write_le(out)),
            AnyTensor::F64(t) => t.data().iter().for_each(|v| v.write_le(out)),
        }
    }
}

/// Raw checkpoint contents: configuration text plus a named tensor table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, AnyTensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated checkpoint while reading {}", what),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype().tag());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            t.write_payload(&mut out);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Integrity("bad checkpoint magic".into()));
        }
        if bytes.len() < 12 {
            return Err(Error::Parse {
                offset: bytes.len(),
                message: "truncated checkpoint".into(),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("checkpoint CRC mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32("version")?;
        if version > CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let clen = r.u64("config length")? as usize;
        let config_at = r.pos;
        let config = std::str::from_utf8(r.take(clen, "config")?)
            .map_err(|_| Error::Parse {
                offset: config_at,
                message: "config is not UTF-8".into(),
            })?
            .to_string();
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let nlen = r.u32("name length")? as usize;
            let name_at = r.pos;
            let name = std::str::from_utf8(r.take(nlen, "tensor name")?)
                .map_err(|_| Error::Parse {
                    offset: name_at,
                    message: "tensor name is not UTF-8".into(),
                })?
                .to_string();
            let tag_at = r.pos;
            let dtype = DType::from_tag(r.u8("dtype")?).ok_or_else(|| Error::Parse {
                offset: tag_at,
                message: "unknown dtype tag".into(),
            })?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64("extent")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(dtype.size()))
                .ok_or_else(|| Error::Parse {
                    offset: r.pos,
                    message: "tensor size overflows".into(),
                })?;
            let payload = r.take(n, "tensor payload")?;
            let t = match dtype {
                DType::F32 => AnyTensor::F32(Tensor::new(&shape, payload.chunks(4).map(f32::read_le).collect())?),
                DType::F64 => AnyTensor::F64(Tensor::new(&shape, payload.chunks(8).map(f64::read_le).collect())?),
            };
            tensors.push((name, t));
        }
        if r.pos != body.len() {
            return Err(Error::Parse {
                offset: r.pos,
                message: "trailing bytes after tensor table".into(),
            });
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Parameters, optimizer state and configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedState<T> {
    pub params: ParamSet<T>,
    pub adam: Option<AdamState<T>>,
    pub config: RunConfig,
}

impl<T: Scalar> TrainedState<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut config = self.config.clone();
        let mut tensors: Vec<(String, AnyTensor)> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), AnyTensor::from_tensor(v)))
            .collect();
        if let Some(adam) = &self.adam {
            config.meta.insert("adam_step".into(), adam.step.to_string());
            for (k, v) in adam.first.iter() {
                tensors.push((format!("adam.m.{}", k), AnyTensor::from_tensor(v)));
            }
            for (k, v) in adam.second.iter() {
                tensors.push((format!("adam.v.{}", k), AnyTensor::from_tensor(v)));
            }
        }
        Checkpoint {
            config: config.serialize(),
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut config = RunConfig::parse(&ck.config)?;
        let mut params = ParamSet::new();
        let mut first = ParamSet::new();
        let mut second = ParamSet::new();
        for (name, t) in &ck.tensors {
            if let Some(k) = name.strip_prefix("adam.m.") {
                first.insert(k, t.cast());
            } else if let Some(k) = name.strip_prefix("adam.v.") {
                second.insert(k, t.cast());
            } else {
                params.insert(name.clone(), t.cast());
            }
        }
        let adam = match config.meta.remove("adam_step") {
            Some(s) => {
                let step = s
                    .parse()
                    .map_err(|_| Error::Integrity(format!("bad adam step `{}`", s)))?;
                Some(AdamState {
                    first,
                    second,
                    step,
                    config: config.adam_config(),
                })
            }
            None => None,
        };
        Ok(TrainedState { params, adam, config })
    }
}

pub fn save_checkpoint<T: Scalar>(
    params: &ParamSet<T>,
    adam: Option<&AdamState<T>>,
    config: &RunConfig,
    path: &Path,
) -> Result<()> {
    TrainedState {
        params: params.clone(),
        adam: adam.cloned(),
        config: config.clone(),
    }
    .to_checkpoint()
    .save(path)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TrainedState<T>> {
    TrainedState::from_checkpoint(&Checkpoint::load(path)?)
}
