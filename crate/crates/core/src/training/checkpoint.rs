//! Versioned binary checkpoint.
//!
//! ```text
//! "OTCK" | version u32 | dim u32 | gcn_layers u32
//!        | dep_hidden u32 | head_hidden u32 | disc_hidden u32
//! parameters            f64 LE, tensor declaration order
//! epoch u64 | adam step u64
//! adam first moments    f64 LE, same order
//! adam second moments   f64 LE, same order
//! rng: seed [u8; 32] | stream u64 | word position u128
//! config JSON           (u32 length + bytes)
//! frequency table JSON  (u32 length + bytes)
//! crc32 u32             over every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::embeddings::FrequencyTable;
use crate::error::{Error, Result};
use crate::reranker::{ModelParams, ModelShape};

use super::{AdamState, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Snapshot of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    pub adam: AdamState,
    pub rng: RngState,
    /// Frequency table the model was trained with; needed to align new data.
    pub freq: FrequencyTable,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shape = self.params.shape();
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            shape.dim as u32,
            shape.gcn_layers as u32,
            shape.dep_hidden as u32,
            shape.head_hidden as u32,
            shape.disc_hidden as u32,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        put_params(&mut b, &self.params);
        b.extend_from_slice(&self.epoch.to_le_bytes());
        b.extend_from_slice(&self.adam.step.to_le_bytes());
        put_params(&mut b, &self.adam.m);
        put_params(&mut b, &self.adam.v);
        b.extend_from_slice(&self.rng.seed);
        b.extend_from_slice(&self.rng.stream.to_le_bytes());
        b.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_blob(&mut b, &serde_json::to_vec(&self.config)?);
        put_blob(&mut b, &serde_json::to_vec(&self.freq)?);
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let shape = ModelShape {
            dim: r.u32()? as usize,
            gcn_layers: r.u32()? as usize,
            dep_hidden: r.u32()? as usize,
            head_hidden: r.u32()? as usize,
            disc_hidden: r.u32()? as usize,
        };
        shape.validate()?;
        let params = r.params(shape)?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let m = r.params(shape)?;
        let v = r.params(shape)?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let config: TrainConfig = serde_json::from_slice(r.blob()?)?;
        let freq: FrequencyTable = serde_json::from_slice(r.blob()?)?;
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes before checksum".into()));
        }
        Ok(Self {
            params,
            config,
            epoch,
            adam: AdamState { step, m, v },
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            freq,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_params(b: &mut Vec<u8>, p: &ModelParams) {
    for (_, t) in p.tensors() {
        for v in t {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn put_blob(b: &mut Vec<u8>, blob: &[u8]) {
    b.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    b.extend_from_slice(blob);
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
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn params(&mut self, shape: ModelShape) -> Result<ModelParams> {
        let mut p = ModelParams::zeros(shape);
        for t in p.tensors_mut() {
            let raw = self.take(t.len() * 8)?;
            for (v, c) in t.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
        }
        Ok(p)
    }
}
