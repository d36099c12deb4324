//! File-backed embedding cache.
//!
//! One file per provider:
//!
//! ```text
//! magic    4 bytes  "EMBC"
//! version  u32
//! name_len u16, name bytes (UTF-8 provider name)
//! dim      u32
//! count    u64
//! count × { hash [u8; 32], dim × f32 }
//! ```
//!
//! All integers and floats are little-endian. Records are appended and the
//! count field is rewritten after each append, so a torn append leaves
//! trailing bytes past `count` that are ignored (and truncated) on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::{ContentHash, ProviderId};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMBC";
pub const VERSION: u32 = 1;

struct Writer {
    file: File,
    count: u64,
}

pub struct EmbeddingCache {
    path: PathBuf,
    provider: ProviderId,
    count_offset: u64,
    entries: RwLock<HashMap<ContentHash, Vec<f32>>>,
    writer: Mutex<Writer>,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Validation {
        id: path.display().to_string(),
        reason: reason.into(),
    }
}

fn header_bytes(provider: &ProviderId, count: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(provider.name.len() as u16).to_le_bytes());
    out.extend_from_slice(provider.name.as_bytes());
    out.extend_from_slice(&(provider.dim as u32).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out
}

impl EmbeddingCache {
    /// Cache file path for `provider` inside `dir`.
    pub fn file_for(dir: &Path, provider: &ProviderId) -> PathBuf {
        let safe: String = provider
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        dir.join(format!("{safe}-{}.embc", provider.dim))
    }

    /// Opens (or creates) the cache file of `provider` inside `dir`.
    pub fn open(dir: &Path, provider: &ProviderId) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::file_for(dir, provider);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e))?;

        let header = header_bytes(provider, 0);
        let count_offset = (header.len() - 8) as u64;
        let mut entries = HashMap::new();
        let count = if bytes.is_empty() {
            file.write_all(&header).map_err(|e| Error::io(&path, e))?;
            0
        } else {
            if bytes.len() < header.len() || &bytes[..4] != MAGIC {
                return Err(corrupt(&path, "not an embedding cache file"));
            }
            let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
            if version != VERSION {
                return Err(corrupt(&path, format!("unsupported cache version {version}")));
            }
            if bytes[..header.len() - 8] != header[..header.len() - 8] {
                return Err(corrupt(&path, format!("cache does not belong to {}/{}", provider.name, provider.dim)));
            }
            let count = u64::from_le_bytes(bytes[header.len() - 8..header.len()].try_into().unwrap());
            let record = 32 + 4 * provider.dim;
            let body = &bytes[header.len()..];
            let needed = count as usize * record;
            if body.len() < needed {
                return Err(corrupt(&path, format!("{count} records declared, file holds {}", body.len() / record)));
            }
            for rec in body[..needed].chunks_exact(record) {
                let mut key = [0u8; 32];
                key.copy_from_slice(&rec[..32]);
                let vector = rec[32..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                entries.insert(ContentHash(key), vector);
            }
            if body.len() > needed {
                log::warn!("{}: dropping {} bytes of a torn append", path.display(), body.len() - needed);
                file.set_len((header.len() + needed) as u64)
                    .map_err(|e| Error::io(&path, e))?;
            }
            count
        };
        Ok(EmbeddingCache {
            path,
            provider: provider.clone(),
            count_offset,
            entries: RwLock::new(entries),
            writer: Mutex::new(Writer { file, count }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn provider(&self) -> &ProviderId {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &ContentHash) -> Option<Vec<f32>> {
        self.entries.read().unwrap().get(key).cloned()
    }

    /// Appends the entries not already cached.
    pub fn put_many(&self, items: &[(ContentHash, Vec<f32>)]) -> Result<()> {
        let mut writer = self.writer.lock().unwrap();
        let mut fresh: Vec<&(ContentHash, Vec<f32>)> = Vec::new();
        {
            let entries = self.entries.read().unwrap();
            let mut seen = std::collections::HashSet::new();
            for item in items {
                if item.1.len() != self.provider.dim {
                    return Err(Error::Shape(format!(
                        "cache for {} holds {}-dim vectors, got {}",
                        self.provider.name,
                        self.provider.dim,
                        item.1.len()
                    )));
                }
                if !entries.contains_key(&item.0) && seen.insert(item.0) {
                    fresh.push(item);
                }
            }
        }
        if fresh.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::with_capacity(fresh.len() * (32 + 4 * self.provider.dim));
        for (key, vector) in &fresh {
            buf.extend_from_slice(&key.0);
            for v in vector {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let new_count = writer.count + fresh.len() as u64;
        let io = |e| Error::io(&self.path, e);
        writer.file.seek(SeekFrom::End(0)).map_err(io)?;
        writer.file.write_all(&buf).map_err(io)?;
        writer.file.seek(SeekFrom::Start(self.count_offset)).map_err(io)?;
        writer.file.write_all(&new_count.to_le_bytes()).map_err(io)?;
        writer.file.flush().map_err(io)?;
        writer.count = new_count;

        let mut entries = self.entries.write().unwrap();
        for (key, vector) in fresh {
            entries.insert(*key, vector.clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provider() -> ProviderId {
        ProviderId::new("stub", 4)
    }

    fn key(b: u8) -> ContentHash {
        ContentHash([b; 32])
    }

    #[test]
    fn read_after_write_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path(), &provider()).unwrap();
        let v = vec![0.5f32, -0.5, 0.5, -0.5];
        cache.put_many(&[(key(1), v.clone())]).unwrap();
        assert_eq!(cache.get(&key(1)), Some(v.clone()));
        drop(cache);

        let reopened = EmbeddingCache::open(dir.path(), &provider()).unwrap();
        assert_eq!(reopened.len(), 1);
        let got = reopened.get(&key(1)).unwrap();
        assert!(got.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path(), &provider()).unwrap();
        cache.put_many(&[(key(1), vec![1.0, 0.0, 0.0, 0.0]), (key(2), vec![0.0, 1.0, 0.0, 0.0])]).unwrap();
        let bytes = std::fs::read(cache.path()).unwrap();
        assert_eq!(&bytes[..4], b"EMBC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(bytes[8..10].try_into().unwrap()), 4);
        assert_eq!(&bytes[10..14], b"stub");
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[18..26].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 26 + 2 * (32 + 16));
    }

    #[test]
    fn duplicates_are_not_appended() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path(), &provider()).unwrap();
        let item = (key(3), vec![0.0, 0.0, 1.0, 0.0]);
        cache.put_many(&[item.clone(), item.clone()]).unwrap();
        cache.put_many(&[item]).unwrap();
        let bytes = std::fs::read(cache.path()).unwrap();
        assert_eq!(bytes.len(), 26 + 48);
    }

    #[test]
    fn torn_append_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = {
            let cache = EmbeddingCache::open(dir.path(), &provider()).unwrap();
            cache.put_many(&[(key(1), vec![1.0, 0.0, 0.0, 0.0])]).unwrap();
            cache.path().to_path_buf()
        };
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[9u8; 20]).unwrap();
        drop(f);
        let cache = EmbeddingCache::open(dir.path(), &provider()).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 26 + 48);
    }

    #[test]
    fn foreign_provider_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = provider();
        EmbeddingCache::open(dir.path(), &p).unwrap();
        let other_path = EmbeddingCache::file_for(dir.path(), &ProviderId::new("clip", 4));
        std::fs::copy(EmbeddingCache::file_for(dir.path(), &p), other_path).unwrap();
        assert!(EmbeddingCache::open(dir.path(), &ProviderId::new("clip", 4)).is_err());
    }
}
