//! Versioned binary checkpoints.
//!
//! Layout, little-endian:
//! `magic[8] | version u32 | header_len u64 | header JSON | n_params u64 |
//!  params f32[n] | has_adam u8 | (adam_step u64 | m f32[n] | v f32[n])? | sha256[32]`.
//! The digest covers every preceding byte. The header carries the model
//! configuration plus training bookkeeping.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Result, TcnError};
use crate::model::Model;
use crate::train::{AdamState, History, TrainConfig, Trainer};

const MAGIC: &[u8; 8] = b"RALTTCN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    n_params: usize,
    epochs_completed: usize,
    train: Option<TrainConfig>,
    history: Option<History>,
    /// Best-validation parameters follow the Adam state when present.
    has_best: bool,
}

/// Everything needed to run inference or continue training.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub epochs_completed: usize,
    pub train: Option<TrainConfig>,
    pub history: Option<History>,
    pub adam: Option<AdamState>,
    pub best_params: Option<Vec<f32>>,
}

impl Checkpoint {
    pub fn weights_only(model: Model<f32>) -> Self {
        Self { model, epochs_completed: 0, train: None, history: None, adam: None, best_params: None }
    }

    /// Full training state for resuming.
    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            model: t.model.clone(),
            epochs_completed: t.epochs_completed(),
            train: Some(t.cfg.clone()),
            history: Some(t.history.clone()),
            adam: Some(t.adam.clone()),
            best_params: t.best_params.clone(),
        }
    }

    pub fn into_trainer(self, cfg: TrainConfig) -> Result<Trainer> {
        let adam = self
            .adam
            .ok_or_else(|| TcnError::IncompatibleCheckpoint("checkpoint has no optimizer state to resume".into()))?;
        Trainer::resume(self.model, cfg, adam, self.history.unwrap_or_default(), self.best_params)
    }
}

fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    buf.reserve(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let n = ck.model.n_params();
    let header = Header {
        model: ck.model.config().clone(),
        n_params: n,
        epochs_completed: ck.epochs_completed,
        train: ck.train.clone(),
        history: ck.history.clone(),
        has_best: ck.best_params.is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(64 + json.len() + n * 12);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    put_f32s(&mut buf, ck.model.params());
    match &ck.adam {
        Some(a) => {
            buf.push(1);
            buf.extend_from_slice(&a.step.to_le_bytes());
            put_f32s(&mut buf, &a.m);
            put_f32s(&mut buf, &a.v);
        }
        None => buf.push(0),
    }
    if let Some(b) = &ck.best_params {
        put_f32s(&mut buf, b);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| TcnError::IncompatibleCheckpoint("truncated checkpoint".into()))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| TcnError::IncompatibleCheckpoint("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Parses a checkpoint. With `expected`, the embedded model config must match it.
pub fn decode(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bad = |m: &str| TcnError::IncompatibleCheckpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let mut r = Reader { b: body, pos: 8 };
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(TcnError::IncompatibleCheckpoint(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let hlen = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)?;
    if let Some(want) = expected {
        if want != &header.model {
            return Err(TcnError::IncompatibleCheckpoint(format!(
                "checkpoint geometry (input_len {}, variant {:?}) differs from the requested model (input_len {}, variant {:?})",
                header.model.input_len, header.model.variant, want.input_len, want.variant
            )));
        }
    }
    let n = r.u64()? as usize;
    if n != header.n_params {
        return Err(bad("parameter count disagrees with header"));
    }
    let params = r.f32s(n)?;
    let model = Model::from_params(header.model.clone(), params)
        .map_err(|e| TcnError::IncompatibleCheckpoint(e.to_string()))?;
    let adam = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step = r.u64()?;
            Some(AdamState { step, m: r.f32s(n)?, v: r.f32s(n)? })
        }
        _ => return Err(bad("corrupt optimizer flag")),
    };
    let best_params = if header.has_best { Some(r.f32s(n)?) } else { None };
    if r.pos != body.len() {
        return Err(bad("trailing bytes after checkpoint payload"));
    }
    Ok(Checkpoint {
        model,
        epochs_completed: header.epochs_completed,
        train: header.train,
        history: header.history,
        adam,
        best_params,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ck)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    decode(&fs::read(path)?, expected)
}

pub fn save_weights(model: &Model<f32>, path: &Path) -> Result<()> {
    save_checkpoint(&Checkpoint::weights_only(model.clone()), path)
}

pub fn load_weights(path: &Path, expected: Option<&ModelConfig>) -> Result<Model<f32>> {
    Ok(load_checkpoint(path, expected)?.model)
}
