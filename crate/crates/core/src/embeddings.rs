//! Precomputed token embeddings and the question-frequency table that
//! drives the transport marginals.
//!
//! Binary store layout (little-endian):
//!
//! ```text
//! "OTRK" | version u32 | dim u32 | record count u64
//! record := str instance_id | str window_id ("-" for questions)
//!           | role u8 (q,c,p,n) | token_index u32 | dim x f32
//! str    := byte length u32 | UTF-8 bytes
//! ```
//!
//! Records are written in key order so that save → load → save is
//! byte-identical.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, Role, Sentence, Split, Token};
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"OTRK";
pub const STORE_VERSION: u32 = 1;
/// Window id used for question records.
pub const QUESTION_WINDOW: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub instance_id: String,
    pub window_id: String,
    pub role: Role,
}

impl SentenceKey {
    pub fn new(instance_id: &str, window_id: &str, role: Role) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            window_id: window_id.to_string(),
            role,
        }
    }

    pub fn question(instance_id: &str) -> Self {
        Self::new(instance_id, QUESTION_WINDOW, Role::Question)
    }
}

impl std::fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(instance {:?}, window {:?}, role {})",
            self.instance_id, self.window_id, self.role
        )
    }
}

/// Frozen per-token vectors keyed by (instance, window, role, token index).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    sentences: BTreeMap<SentenceKey, BTreeMap<u32, Vec<f32>>>,
}

/// Contents of the JSON sidecar written next to a store file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreSidecar {
    pub format_version: u32,
    pub dim: usize,
    pub count: u64,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmbeddingFormat("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            sentences: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of token records.
    pub fn count(&self) -> u64 {
        self.sentences.values().map(|m| m.len() as u64).sum()
    }

    pub fn insert(&mut self, key: SentenceKey, token_index: u32, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        let slot = self.sentences.entry(key.clone()).or_default();
        if slot.insert(token_index, vector).is_some() {
            return Err(Error::EmbeddingFormat(format!(
                "duplicate record for {key}, token {token_index}"
            )));
        }
        Ok(())
    }

    pub fn insert_sentence(&mut self, key: SentenceKey, vectors: Vec<Vec<f32>>) -> Result<()> {
        for (i, v) in vectors.into_iter().enumerate() {
            self.insert(key.clone(), i as u32, v)?;
        }
        Ok(())
    }

    pub fn contains(&self, key: &SentenceKey) -> bool {
        self.sentences.contains_key(key)
    }

    /// All vectors for a key, in token order, widened to f64.
    pub fn vectors(&self, key: &SentenceKey) -> Result<Vec<Vec<f64>>> {
        let tokens = self
            .sentences
            .get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))?;
        tokens
            .iter()
            .enumerate()
            .map(|(expect, (&idx, v))| {
                if idx as usize != expect {
                    Err(Error::MissingEmbedding(format!("{key}, token {expect}")))
                } else {
                    Ok(v.iter().map(|&x| f64::from(x)).collect())
                }
            })
            .collect()
    }

    /// Vectors for one sentence of a window. Padding yields a single zero
    /// vector; otherwise there must be exactly one vector per token.
    pub fn sentence_vectors(
        &self,
        instance_id: &str,
        window_id: &str,
        sentence: &Sentence,
    ) -> Result<Vec<Vec<f64>>> {
        if sentence.is_padding {
            return Ok(vec![vec![0.0; self.dim]]);
        }
        let window_id = if sentence.role == Role::Question {
            QUESTION_WINDOW
        } else {
            window_id
        };
        let key = SentenceKey::new(instance_id, window_id, sentence.role);
        let vs = self.vectors(&key)?;
        if vs.len() != sentence.tokens.len() {
            return Err(Error::EmbeddingFormat(format!(
                "{key} has {} vectors but the sentence has {} tokens",
                vs.len(),
                sentence.tokens.len()
            )));
        }
        Ok(vs)
    }

    pub fn question_vectors(
        &self,
        instance_id: &str,
        question: &Sentence,
    ) -> Result<Vec<Vec<f64>>> {
        self.sentence_vectors(instance_id, QUESTION_WINDOW, question)
    }

    /// Check that every non-padding sentence of the corpus is covered.
    pub fn check_covers(&self, corpus: &Corpus) -> Result<()> {
        for inst in &corpus.instances {
            self.question_vectors(&inst.question_id, &inst.question)?;
            for w in &inst.windows {
                for s in w.sentences()? {
                    self.sentence_vectors(&inst.question_id, &w.id, s)?;
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<embedding writer>", e);
        w.write_all(STORE_MAGIC).map_err(io)?;
        w.write_all(&STORE_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&self.count().to_le_bytes()).map_err(io)?;
        for (key, tokens) in &self.sentences {
            for (idx, v) in tokens {
                write_str(&mut w, &key.instance_id).map_err(io)?;
                write_str(&mut w, &key.window_id).map_err(io)?;
                w.write_all(&[key.role.code()]).map_err(io)?;
                w.write_all(&idx.to_le_bytes()).map_err(io)?;
                for x in v {
                    w.write_all(&x.to_le_bytes()).map_err(io)?;
                }
            }
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(Error::EmbeddingFormat(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != STORE_VERSION {
            return Err(Error::EmbeddingFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)?;
        let mut store = EmbeddingStore::new(dim)?;
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let instance_id = read_str(&mut r)?;
            let window_id = read_str(&mut r)?;
            let mut role = [0u8];
            read_exact(&mut r, &mut role)?;
            let role = Role::from_code(role[0]).ok_or_else(|| {
                Error::EmbeddingFormat(format!("unknown role byte {:#04x}", role[0]))
            })?;
            let idx = read_u32(&mut r)?;
            read_exact(&mut r, &mut buf)?;
            let v = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(
                SentenceKey {
                    instance_id,
                    window_id,
                    role,
                },
                idx,
                v,
            )?;
        }
        let mut probe = [0u8];
        match r.read(&mut probe) {
            Ok(0) => Ok(store),
            Ok(_) => Err(Error::EmbeddingFormat(
                "trailing bytes after last record".into(),
            )),
            Err(e) => Err(Error::io("<embedding reader>", e)),
        }
    }

    pub fn sidecar(&self) -> StoreSidecar {
        StoreSidecar {
            format_version: STORE_VERSION,
            dim: self.dim,
            count: self.count(),
        }
    }

    /// Write the store and its JSON sidecar (`<path>.json`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(&side, json + "\n").map_err(|e| Error::io(side, e))
    }

    /// Read a store; if a sidecar exists it must agree with the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let store = Self::read(BufReader::new(file))?;
        let side = sidecar_path(path);
        if side.exists() {
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let meta: StoreSidecar = serde_json::from_str(&text)?;
            if meta != store.sidecar() {
                return Err(Error::EmbeddingFormat(format!(
                    "sidecar {} says dim={} count={}, file has dim={} count={}",
                    side.display(),
                    meta.dim,
                    meta.count,
                    store.dim,
                    store.count()
                )));
            }
        }
        Ok(store)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::EmbeddingFormat("truncated file".into())
        } else {
            Error::io("<embedding reader>", e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::EmbeddingFormat("key is not valid UTF-8".into()))
}

/// Number of training questions containing each normalized word.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub num_questions: u64,
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// `max(count, 1)`: unseen words get weight 1.
    pub fn smoothed_count(&self, word: &str) -> u64 {
        self.count(word).max(1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ft: FrequencyTable = serde_json::from_str(&text)?;
        if ft.num_questions == 0 || ft.counts.values().any(|&c| c > ft.num_questions) {
            return Err(Error::Config(format!(
                "{}: counts exceed num_questions",
                path.display()
            )));
        }
        Ok(ft)
    }
}

/// Count, for every normalized word, the training questions it occurs in
/// (once per question, over all tokens before stopword filtering).
pub fn build_frequency_table(train: &Corpus) -> Result<FrequencyTable> {
    if train.split != Split::Train {
        return Err(Error::WrongSplit {
            expected: "train",
            found: train.split.as_str(),
        });
    }
    if train.instances.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = BTreeMap::new();
    for inst in &train.instances {
        let words: HashSet<&str> = inst
            .question
            .tokens
            .iter()
            .map(|t| t.normalized.as_str())
            .collect();
        for w in words {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    Ok(FrequencyTable {
        num_questions: train.instances.len() as u64,
        counts,
    })
}

/// A probability vector over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("probability vector"));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Config(format!(
                "probability vector sums to {s}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("probability vector"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Smoothed question frequencies of the tokens, normalized to sum to one.
pub fn marginal_distribution(tokens: &[Token], ft: &FrequencyTable) -> Result<ProbVector> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token list"));
    }
    let counts: Vec<f64> = tokens
        .iter()
        .map(|t| ft.smoothed_count(&t.normalized) as f64)
        .collect();
    let total: f64 = counts.iter().sum();
    ProbVector::new(counts.into_iter().map(|c| c / total).collect())
}
