//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ASRH" | u32 version | u32 n | n bytes canonical JSON header
//! u32 record count
//! per record: u32 name length | name | u8 dtype tag | u32 rank | rank × u64 extents | raw data
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frontend::{FrontendConfig, Normalizer};
use crate::mixer::{Model, ModelConfig, ParamStore};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ASRH";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub epoch: usize,
    pub step: u64,
}

/// JSON header of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub normalizer: Normalizer,
    pub dtype: DType,
    /// SHA-256 of the canonical JSON of `[model, frontend]`.
    pub config_hash: String,
    pub train_state: Option<TrainState>,
}

pub fn config_hash(model: &ModelConfig, frontend: &FrontendConfig) -> String {
    let json = serde_json::to_vec(&(model, frontend)).expect("configs serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub params: ParamStore<T>,
    /// Optimizer moments and any other auxiliary arrays, after the parameters.
    pub extra: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: &Model<T>, frontend: &FrontendConfig, normalizer: Normalizer) -> Self {
        let header = CheckpointHeader {
            model: model.config().clone(),
            frontend: frontend.clone(),
            normalizer,
            dtype: T::DTYPE,
            config_hash: config_hash(model.config(), frontend),
            train_state: None,
        };
        Checkpoint { header, params: model.params().clone(), extra: Vec::new() }
    }

    pub fn model(&self) -> Result<Model<T>> {
        Model::from_params(self.header.model.clone(), self.params.clone())
    }

    /// Rejects a checkpoint whose model configuration differs from `expected`,
    /// naming every differing field.
    pub fn ensure_matches(&self, expected: &ModelConfig) -> Result<()> {
        let have = serde_json::to_value(&self.header.model).expect("serialize");
        let want = serde_json::to_value(expected).expect("serialize");
        let (have, want) = (have.as_object().expect("struct"), want.as_object().expect("struct"));
        let fields: Vec<String> = want
            .iter()
            .filter(|(k, v)| have.get(*k) != Some(v))
            .map(|(k, v)| format!("{k} (checkpoint {}, expected {v})", have.get(k).cloned().unwrap_or_default()))
            .collect();
        if fields.is_empty() {
            Ok(())
        } else {
            Err(Error::Incompatible(fields))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let count = self.params.len() + self.extra.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        let records = self.params.iter().chain(self.extra.iter().map(|(n, t)| (n.as_str(), t)));
        for (name, t) in records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE.tag());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = read_header(&mut r)?;
        if header.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "checkpoint holds {:?} arrays, requested {:?}",
                header.dtype,
                T::DTYPE
            )));
        }
        let count = r.u32()? as usize;
        let n_params = header.model.param_shapes().len();
        let mut params = ParamStore::new();
        let mut extra = Vec::new();
        for i in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format(format!("record {i} name is not UTF-8")))?
                .to_string();
            let tag = r.take(1)?[0];
            if DType::from_tag(tag) != Some(T::DTYPE) {
                return Err(Error::Format(format!("record `{name}` has dtype tag {tag}")));
            }
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("record `{name}` claims rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("extent overflow".into()))?);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(T::DTYPE.size()).ok_or_else(|| Error::Format("size overflow".into()))?)?;
            let data: Vec<T> = raw.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
            let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Format(format!("record `{name}`: {e}")))?;
            if i < n_params {
                params.insert(name, t);
            } else {
                extra.push((name, t));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after last record", bytes.len() - r.pos)));
        }
        Model::from_params(header.model.clone(), params.clone())
            .map_err(|e| Error::Format(format!("parameter records do not match header: {e}")))?;
        Ok(Checkpoint { header, params, extra })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Reads only the header, e.g. to learn the dtype before a full load.
pub fn read_checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_header(&mut Reader { bytes: &bytes, pos: 0 })
}

fn read_header(r: &mut Reader<'_>) -> Result<CheckpointHeader> {
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}, expected {VERSION}")));
    }
    let len = r.u32()? as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Format(format!("header JSON: {e}")))?;
    let hash = config_hash(&header.model, &header.frontend);
    if hash != header.config_hash {
        return Err(Error::Format(format!("config hash mismatch: header says {}, content hashes to {hash}", header.config_hash)));
    }
    Ok(header)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
