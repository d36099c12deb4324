//! Text and image embeddings from named encoder models.
//!
//! Encoders live behind an [`EmbeddingBackend`]: either the HTTP protocol
//! ([`HttpBackend`]) or the in-process deterministic stub ([`StubBackend`]).
//! The [`Embedder`] adds batching, contract checks and the on-disk cache.

mod cache;
mod http;
mod stub;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use cache::EmbeddingCache;
pub use http::HttpBackend;
pub use stub::{stub_image_vector, stub_text_vector, stub_token_weight, stub_vector, StubBackend};

/// Default number of inputs per provider request.
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Rows whose norm is further than this from 1 are renormalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// A named encoder and the width of its embeddings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProviderId {
    pub name: String,
    pub dim: usize,
}

impl ProviderId {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        ProviderId {
            name: name.into(),
            dim,
        }
    }
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.dim)
    }
}

/// Known model names and their embedding widths.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    models: Vec<ProviderId>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        ModelRegistry {
            models: [("vsrn", 2048), ("clip", 512), ("vse-infty", 1024), ("blip", 256), ("stub", 64)]
                .into_iter()
                .map(|(n, d)| ProviderId::new(n, d))
                .collect(),
        }
    }
}

impl ModelRegistry {
    pub fn models(&self) -> &[ProviderId] {
        &self.models
    }

    pub fn get(&self, name: &str) -> Option<&ProviderId> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Adds or replaces a model entry.
    pub fn register(&mut self, id: ProviderId) {
        match self.models.iter_mut().find(|m| m.name == id.name) {
            Some(slot) => *slot = id,
            None => self.models.push(id),
        }
    }

    /// Resolves `name` or `name:dim`. An explicit dim must agree with a
    /// registered one; unregistered names need an explicit dim.
    pub fn resolve(&self, spec: &str) -> Result<ProviderId> {
        let (name, dim) = match spec.split_once(':') {
            Some((n, d)) => {
                let dim: usize = d
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad model dim in {spec:?}")))?;
                (n, Some(dim))
            }
            None => (spec, None),
        };
        if name.is_empty() {
            return Err(Error::InvalidArgument("empty model name".into()));
        }
        match (self.get(name), dim) {
            (Some(known), Some(d)) if known.dim != d => Err(Error::InvalidArgument(format!(
                "model {name} has dim {} in the registry, not {d}",
                known.dim
            ))),
            (Some(known), _) => Ok(known.clone()),
            (None, Some(d)) if d >= 2 => Ok(ProviderId::new(name, d)),
            (None, Some(_)) => Err(Error::InvalidArgument(format!("model {name} needs dim >= 2"))),
            (None, None) => Err(Error::InvalidArgument(format!(
                "unknown model {name}; pass it as {name}:<dim>"
            ))),
        }
    }
}

/// SHA-256 cache key of a provider input.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    fn of(provider: &str, payload: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(provider.as_bytes());
        hasher.update([0x1f]);
        hasher.update(payload);
        let mut out = [0u8; 32];
        out.copy_from_slice(&hasher.finalize());
        ContentHash(out)
    }

    /// Key of `text` under `provider`, after whitespace normalization.
    pub fn text(provider: &str, text: &str) -> Self {
        Self::of(provider, normalize_text(text).as_bytes())
    }

    /// Key of raw (encoded) image file bytes under `provider`.
    pub fn image(provider: &str, bytes: &[u8]) -> Self {
        Self::of(provider, bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for ContentHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)
            .map_err(|e| Error::InvalidArgument(format!("bad content hash {s:?}: {e}")))?;
        Ok(ContentHash(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Trims and collapses runs of whitespace to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Dense row-major embeddings, one row per input.
///
/// Rows follow input order. Repeated inputs repeat their key and row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub provider: ProviderId,
    pub keys: Vec<ContentHash>,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(provider: ProviderId, keys: Vec<ContentHash>, data: Vec<f32>) -> Result<Self> {
        if data.len() != keys.len() * provider.dim {
            return Err(Error::Shape(format!(
                "{} keys of dim {} need {} values, got {}",
                keys.len(),
                provider.dim,
                keys.len() * provider.dim,
                data.len()
            )));
        }
        Ok(EmbeddingMatrix { provider, keys, data })
    }

    /// Builds a matrix from rows, with placeholder keys hashed from the row index.
    pub fn from_rows(provider: ProviderId, rows: &[Vec<f32>]) -> Result<Self> {
        let keys = (0..rows.len())
            .map(|i| ContentHash::of(&provider.name, &(i as u64).to_le_bytes()))
            .collect();
        let mut data = Vec::with_capacity(rows.len() * provider.dim);
        for row in rows {
            if row.len() != provider.dim {
                return Err(Error::Shape(format!("row of length {} for dim {}", row.len(), provider.dim)));
            }
            data.extend_from_slice(row);
        }
        Self::new(provider, keys, data)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.provider.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.provider.dim;
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.provider.dim.max(1)).take(self.len())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Multiplies every entry by `factor` (for invariance checks).
    pub fn scaled(&self, factor: f32) -> Self {
        EmbeddingMatrix {
            provider: self.provider.clone(),
            keys: self.keys.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &EmbeddingMatrix) -> Result<Self> {
        if self.provider != other.provider {
            return Err(Error::Shape(format!(
                "cannot stack {} rows on {} rows",
                other.provider, self.provider
            )));
        }
        let mut keys = self.keys.clone();
        keys.extend_from_slice(&other.keys);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.provider.clone(), keys, data)
    }
}

/// A source of raw embeddings. Implementations return one row per input,
/// in input order.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_texts(&self, model: &ProviderId, texts: &[String]) -> Result<Vec<Vec<f32>>>;
    fn embed_images(&self, model: &ProviderId, images: &[Vec<u8>]) -> Result<Vec<Vec<f32>>>;
}

/// Backend for a provider URL; `None` or `"stub"` selects the in-process stub.
pub fn backend_for(url: Option<&str>) -> Arc<dyn EmbeddingBackend> {
    match url {
        None | Some("stub") | Some("") => Arc::new(StubBackend::new()),
        Some(url) => Arc::new(HttpBackend::new(url)),
    }
}

/// Checks one provider row and normalizes it to unit length.
fn check_row(provider: &ProviderId, mut row: Vec<f32>) -> Result<Vec<f32>> {
    let violation = |message: String| Error::ProviderContractViolation {
        provider: provider.name.clone(),
        message,
    };
    if row.len() != provider.dim {
        return Err(violation(format!("row has {} values, expected {}", row.len(), provider.dim)));
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(violation("non-finite value in embedding".into()));
    }
    let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(violation("zero-norm embedding".into()));
    }
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        log::warn!("{}: renormalizing row with norm {norm:.6}", provider.name);
        for v in &mut row {
            *v = (*v as f64 / norm) as f32;
        }
    }
    Ok(row)
}

enum Inputs<'a> {
    Texts(&'a [String]),
    Images(&'a [Vec<u8>]),
}

/// Batching, validating, caching front end over a backend.
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache_dir: Option<PathBuf>,
    caches: Mutex<HashMap<ProviderId, Arc<EmbeddingCache>>>,
    batch_size: usize,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        Embedder {
            backend,
            cache_dir: None,
            caches: Mutex::new(HashMap::new()),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    /// In-process stub without a cache.
    pub fn stub() -> Self {
        Self::new(Arc::new(StubBackend::new()))
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache_dir.as_deref()
    }

    fn cache(&self, provider: &ProviderId) -> Result<Option<Arc<EmbeddingCache>>> {
        let Some(dir) = &self.cache_dir else {
            return Ok(None);
        };
        let mut caches = self.caches.lock().unwrap();
        if let Some(c) = caches.get(provider) {
            return Ok(Some(c.clone()));
        }
        let cache = Arc::new(EmbeddingCache::open(dir, provider)?);
        caches.insert(provider.clone(), cache.clone());
        Ok(Some(cache))
    }

    pub fn embed_texts(&self, provider: &ProviderId, texts: &[String]) -> Result<EmbeddingMatrix> {
        let keys = texts
            .iter()
            .map(|t| ContentHash::text(&provider.name, t))
            .collect();
        self.embed(provider, keys, Inputs::Texts(texts))
    }

    /// Embeds image files, keyed by their raw bytes.
    pub fn embed_images(&self, provider: &ProviderId, paths: &[PathBuf]) -> Result<EmbeddingMatrix> {
        let bytes = paths
            .par_iter()
            .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
            .collect::<Result<Vec<_>>>()?;
        self.embed_image_bytes(provider, &bytes)
    }

    /// Embeds encoded image files already in memory.
    pub fn embed_image_bytes(&self, provider: &ProviderId, images: &[Vec<u8>]) -> Result<EmbeddingMatrix> {
        let keys = images
            .iter()
            .map(|b| ContentHash::image(&provider.name, b))
            .collect();
        self.embed(provider, keys, Inputs::Images(images))
    }

    fn embed(&self, provider: &ProviderId, keys: Vec<ContentHash>, inputs: Inputs<'_>) -> Result<EmbeddingMatrix> {
        let cache = self.cache(provider)?;
        let mut known: HashMap<ContentHash, Vec<f32>> = HashMap::new();
        let mut misses: Vec<usize> = Vec::new();
        let mut pending = HashSet::new();
        for (i, key) in keys.iter().enumerate() {
            if known.contains_key(key) || pending.contains(key) {
                continue;
            }
            match cache.as_ref().and_then(|c| c.get(key)) {
                Some(v) => {
                    known.insert(*key, v);
                }
                None => {
                    pending.insert(*key);
                    misses.push(i);
                }
            }
        }

        let batches: Vec<Vec<(ContentHash, Vec<f32>)>> = misses
            .par_chunks(self.batch_size)
            .map(|chunk| {
                let rows = match inputs {
                    Inputs::Texts(t) => {
                        let batch: Vec<String> = chunk.iter().map(|&i| t[i].clone()).collect();
                        self.backend.embed_texts(provider, &batch)?
                    }
                    Inputs::Images(b) => {
                        let batch: Vec<Vec<u8>> = chunk.iter().map(|&i| b[i].clone()).collect();
                        self.backend.embed_images(provider, &batch)?
                    }
                };
                if rows.len() != chunk.len() {
                    return Err(Error::ProviderContractViolation {
                        provider: provider.name.clone(),
                        message: format!("{} rows returned for {} inputs", rows.len(), chunk.len()),
                    });
                }
                chunk
                    .iter()
                    .zip(rows)
                    .map(|(&i, row)| Ok((keys[i], check_row(provider, row)?)))
                    .collect()
            })
            .collect::<Result<_>>()?;

        for batch in batches {
            if let Some(c) = &cache {
                c.put_many(&batch)?;
            }
            known.extend(batch);
        }

        let mut data = Vec::with_capacity(keys.len() * provider.dim);
        for key in &keys {
            data.extend_from_slice(&known[key]);
        }
        EmbeddingMatrix::new(provider.clone(), keys, data)
    }
}
