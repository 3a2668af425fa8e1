//! Versioned single-file checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` metadata length, JSON
//! metadata, the parameters as little-endian `f64` in store order, then the
//! Adam first and second moments in the same order when present, and finally
//! a SHA-256 digest of everything before it.

use std::fs;
use std::path::Path;

use nowcast_autograd::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{Adam, AdamConfig};
use super::{Progress, TrainConfig};
use crate::model::{BaselineConfig, ConvLstmBaseline, Model, ModelConfig, ModelKind, Svfp};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"NWCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub svfp: Option<ModelConfig>,
    pub baseline: Option<BaselineConfig>,
    pub train: TrainConfig,
    pub progress: Progress,
    pub adam: Option<AdamConfig>,
    pub optimizer_step: u64,
    pub tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

fn push_f64s(buf: &mut Vec<u8>, t: &Tensor) {
    for x in t.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor::new(shape, data)?)
    }
}

impl Checkpoint {
    pub fn new(model: &Model, optimizer: Option<&Adam>, train: &TrainConfig, progress: Progress) -> Self {
        let (svfp, baseline) = match model {
            Model::Svfp(m) => (Some(m.config.clone()), None),
            Model::Baseline(m) => (None, Some(m.config.clone())),
        };
        let params = model.params().clone();
        let tensors = params
            .iter()
            .map(|p| TensorMeta {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect();
        Self {
            meta: CheckpointMeta {
                kind: model.kind(),
                svfp,
                baseline,
                train: train.clone(),
                progress,
                adam: optimizer.map(|o| o.config),
                optimizer_step: optimizer.map_or(0, |o| o.step),
                tensors,
            },
            params,
            optimizer: optimizer.cloned(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut buf = Vec::with_capacity(meta.len() + 8 * 3 * self.params.num_scalars() + 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta);
        for p in self.params.iter() {
            push_f64s(&mut buf, &p.value);
        }
        if let Some(opt) = &self.optimizer {
            for t in opt.m.iter().chain(&opt.v) {
                push_f64s(&mut buf, t);
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 + 32 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body)[..] != digest[..] {
            return Err(Error::Checkpoint("checksum mismatch (corrupt file)".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let meta_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut params = ParamStore::new();
        for t in &meta.tensors {
            params.add(t.name.clone(), r.tensor(&t.shape)?);
        }
        let optimizer = match meta.adam {
            Some(config) => {
                let read_all = |r: &mut Reader| -> Result<Vec<Tensor>> {
                    meta.tensors.iter().map(|t| r.tensor(&t.shape)).collect()
                };
                let m = read_all(&mut r)?;
                let v = read_all(&mut r)?;
                Some(Adam {
                    config,
                    step: meta.optimizer_step,
                    m,
                    v,
                })
            }
            None => None,
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after tensors".into()));
        }
        Ok(Self {
            meta,
            params,
            optimizer,
        })
    }

    /// Write to `path`; returns the checkpoint identifier.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(hex::encode(&bytes[bytes.len() - 32..bytes.len() - 24]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Short identifier derived from the stored checksum.
    pub fn id(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(hex::encode(&bytes[bytes.len() - 32..bytes.len() - 24]))
    }

    /// Rebuild the network described by the metadata.
    pub fn build_model(&self) -> Result<Model> {
        let mut model = match (self.meta.kind, &self.meta.svfp, &self.meta.baseline) {
            (ModelKind::Svfp, Some(c), _) => Model::Svfp(Svfp::new(c.clone(), 0)?),
            (ModelKind::Convlstm, _, Some(c)) => Model::Baseline(ConvLstmBaseline::new(c.clone(), 0)?),
            _ => return Err(Error::Checkpoint("metadata lacks the model configuration".into())),
        };
        self.restore_into(&mut model)?;
        Ok(model)
    }

    /// Copy parameters into an existing model; names and shapes must match.
    pub fn restore_into(&self, model: &mut Model) -> Result<()> {
        if model.kind() != self.meta.kind {
            return Err(Error::Shape(format!(
                "checkpoint holds a {} model, target is {}",
                self.meta.kind,
                model.kind()
            )));
        }
        model.params_mut().load_from(&self.params)?;
        Ok(())
    }
}
