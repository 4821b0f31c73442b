//! Append-only relevance-score cache.
//!
//! Data file (all integers little-endian):
//!
//! ```text
//! header   "SCBMCACH" | u32 version (=1) | u32 reserved (=0)
//! record   u32 body_len | body | 8-byte checksum
//! body     u16 model_len | model id | u16 lexver_len | lexicon version
//!          | 32-byte SHA-256 of the rendered prompt | f64 score bits
//! checksum first 8 bytes of SHA-256(body)
//! ```
//!
//! Index sidecar `<data>.idx`:
//!
//! ```text
//! header   "SCBMIDX1" | u32 version (=1) | u32 reserved | u64 covered data length
//! entry    32-byte key digest | u64 record offset
//! ```
//!
//! The data file is authoritative. A torn record at its end is dropped on
//! open; a stale or damaged index is rebuilt from the data. When a key
//! appears more than once the last record wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DATA_MAGIC: &[u8; 8] = b"SCBMCACH";
const INDEX_MAGIC: &[u8; 8] = b"SCBMIDX1";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;
const INDEX_HEADER_LEN: u64 = 24;
const INDEX_ENTRY_LEN: usize = 40;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub model_id: String,
    pub lexicon_version: String,
    pub prompt_sha256: [u8; 32],
}

impl CacheKey {
    pub fn new(model_id: &str, lexicon_version: &str, prompt_sha256: [u8; 32]) -> Self {
        Self {
            model_id: model_id.to_string(),
            lexicon_version: lexicon_version.to_string(),
            prompt_sha256,
        }
    }

    /// Fixed-width identity of the key, used by the index.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for part in [self.model_id.as_bytes(), self.lexicon_version.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        h.update(self.prompt_sha256);
        h.finalize().into()
    }

    fn encode_body(&self, score: f64) -> Result<Vec<u8>> {
        let mut body = Vec::with_capacity(4 + self.model_id.len() + self.lexicon_version.len() + 40);
        for part in [&self.model_id, &self.lexicon_version] {
            let len = u16::try_from(part.len())
                .map_err(|_| Error::InvalidInput(format!("cache key component too long: {} bytes", part.len())))?;
            body.extend_from_slice(&len.to_le_bytes());
            body.extend_from_slice(part.as_bytes());
        }
        body.extend_from_slice(&self.prompt_sha256);
        body.extend_from_slice(&score.to_bits().to_le_bytes());
        Ok(body)
    }
}

fn checksum(body: &[u8]) -> [u8; CHECKSUM_LEN] {
    let full = Sha256::digest(body);
    full[..CHECKSUM_LEN].try_into().expect("8 bytes")
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at + n)?;
        self.at += n;
        Some(s)
    }

    fn string(&mut self) -> Option<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().ok()?) as usize;
        String::from_utf8(self.take(len)?.to_vec()).ok()
    }
}

fn decode_body(body: &[u8]) -> Option<(CacheKey, f64)> {
    let mut c = Cursor { bytes: body, at: 0 };
    let model_id = c.string()?;
    let lexicon_version = c.string()?;
    let prompt_sha256: [u8; 32] = c.take(32)?.try_into().ok()?;
    let score = f64::from_bits(u64::from_le_bytes(c.take(8)?.try_into().ok()?));
    if c.at != body.len() {
        return None;
    }
    Some((
        CacheKey {
            model_id,
            lexicon_version,
            prompt_sha256,
        },
        score,
    ))
}

struct Files {
    data: File,
    index: File,
    data_len: u64,
}

struct Inner {
    scores: HashMap<CacheKey, f64>,
    files: Option<Files>,
}

/// Score cache; in memory, or persisted with [`ScoreCache::open`].
///
/// Safe to share between threads; writes are serialized.
pub struct ScoreCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                scores: HashMap::new(),
                files: None,
            }),
        }
    }

    pub fn index_path(data_path: &Path) -> PathBuf {
        let mut name = data_path.as_os_str().to_owned();
        name.push(".idx");
        PathBuf::from(name)
    }

    /// Opens (or creates) a cache file, recovering from a torn tail.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let io = |e| Error::io(&path, e);
        let corrupt = |message: String| Error::CorruptCache {
            path: path.clone(),
            message,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut data = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        data.read_to_end(&mut bytes).map_err(io)?;
        if bytes.is_empty() {
            let mut header = Vec::with_capacity(HEADER_LEN as usize);
            header.extend_from_slice(DATA_MAGIC);
            header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            header.extend_from_slice(&0u32.to_le_bytes());
            data.write_all(&header).map_err(io)?;
            bytes = header;
        }
        if bytes.len() < HEADER_LEN as usize || &bytes[..8] != DATA_MAGIC {
            return Err(corrupt("bad header".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }

        let mut scores = HashMap::new();
        let mut offsets = Vec::new();
        let mut at = HEADER_LEN as usize;
        while at < bytes.len() {
            let record = (|| {
                let len = u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?) as usize;
                let body = bytes.get(at + 4..at + 4 + len)?;
                let sum = bytes.get(at + 4 + len..at + 4 + len + CHECKSUM_LEN)?;
                if sum != checksum(body) {
                    return None;
                }
                decode_body(body).map(|(k, s)| (k, s, 4 + len + CHECKSUM_LEN))
            })();
            match record {
                Some((key, score, size)) => {
                    offsets.push((key.digest(), at as u64));
                    scores.insert(key, score);
                    at += size;
                }
                None => {
                    let remaining = bytes.len() - at;
                    // Only the final record may be damaged (an interrupted append).
                    if Self::is_torn_tail(&bytes[at..]) {
                        log::warn!(
                            "dropping {remaining} trailing byte(s) of an interrupted write in {}",
                            path.display()
                        );
                        data.set_len(at as u64).map_err(io)?;
                        break;
                    }
                    return Err(corrupt(format!("unreadable record at offset {at}")));
                }
            }
        }
        let data_len = at as u64;
        data.seek(SeekFrom::Start(data_len)).map_err(io)?;

        let index_path = Self::index_path(&path);
        let index = Self::open_index(&index_path, data_len, &offsets)?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Inner {
                scores,
                files: Some(Files {
                    data,
                    index,
                    data_len,
                }),
            }),
        })
    }

    /// A damaged region is a torn tail if it cannot hold a complete record.
    fn is_torn_tail(rest: &[u8]) -> bool {
        match rest.get(..4) {
            None => true,
            Some(len) => {
                let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
                rest.len() <= 4 + len + CHECKSUM_LEN
            }
        }
    }

    fn open_index(index_path: &Path, data_len: u64, offsets: &[([u8; 32], u64)]) -> Result<File> {
        let io = |e| Error::io(index_path, e);
        let mut index = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(index_path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        index.read_to_end(&mut bytes).map_err(io)?;
        let expected_len = INDEX_HEADER_LEN as usize + offsets.len() * INDEX_ENTRY_LEN;
        let consistent = bytes.len() == expected_len
            && &bytes[..8] == INDEX_MAGIC
            && u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) == data_len
            && bytes[INDEX_HEADER_LEN as usize..]
                .chunks_exact(INDEX_ENTRY_LEN)
                .zip(offsets)
                .all(|(entry, (digest, offset))| {
                    entry[..32] == digest[..] && entry[32..] == offset.to_le_bytes()
                });
        if !consistent {
            if !bytes.is_empty() {
                log::info!("rebuilding stale cache index {}", index_path.display());
            }
            let mut fresh = Vec::with_capacity(expected_len);
            fresh.extend_from_slice(INDEX_MAGIC);
            fresh.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            fresh.extend_from_slice(&0u32.to_le_bytes());
            fresh.extend_from_slice(&data_len.to_le_bytes());
            for (digest, offset) in offsets {
                fresh.extend_from_slice(digest);
                fresh.extend_from_slice(&offset.to_le_bytes());
            }
            index.set_len(0).map_err(io)?;
            index.seek(SeekFrom::Start(0)).map_err(io)?;
            index.write_all(&fresh).map_err(io)?;
        }
        index.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(index)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.inner.lock().expect("cache lock").scores.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores a score; persisted immediately for file-backed caches.
    pub fn insert(&self, key: CacheKey, score: f64) -> Result<()> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(files) = inner.files.as_mut() {
            let path = self.path.as_deref().expect("file-backed");
            let body = key.encode_body(score)?;
            let mut record = Vec::with_capacity(4 + body.len() + CHECKSUM_LEN);
            record.extend_from_slice(&(body.len() as u32).to_le_bytes());
            record.extend_from_slice(&body);
            record.extend_from_slice(&checksum(&body));
            files.data.write_all(&record).map_err(|e| Error::io(path, e))?;
            files.data.flush().map_err(|e| Error::io(path, e))?;
            let offset = files.data_len;
            files.data_len += record.len() as u64;

            let index_path = Self::index_path(path);
            let io = |e| Error::io(&index_path, e);
            let mut entry = [0u8; INDEX_ENTRY_LEN];
            entry[..32].copy_from_slice(&key.digest());
            entry[32..].copy_from_slice(&offset.to_le_bytes());
            files.index.write_all(&entry).map_err(io)?;
            files.index.seek(SeekFrom::Start(16)).map_err(io)?;
            files.index.write_all(&files.data_len.to_le_bytes()).map_err(io)?;
            files.index.seek(SeekFrom::End(0)).map_err(io)?;
        }
        inner.scores.insert(key, score);
        Ok(())
    }
}

/// Looks a key up through the index sidecar without loading the cache.
pub fn lookup_indexed(data_path: impl AsRef<Path>, key: &CacheKey) -> Result<Option<f64>> {
    let data_path = data_path.as_ref();
    let index_path = ScoreCache::index_path(data_path);
    let index = std::fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
    if index.len() < INDEX_HEADER_LEN as usize || &index[..8] != INDEX_MAGIC {
        return Err(Error::CorruptCache {
            path: index_path,
            message: "bad index header".into(),
        });
    }
    let digest = key.digest();
    let Some(offset) = index[INDEX_HEADER_LEN as usize..]
        .chunks_exact(INDEX_ENTRY_LEN)
        .filter(|e| e[..32] == digest[..])
        .map(|e| u64::from_le_bytes(e[32..].try_into().expect("8 bytes")))
        .last()
    else {
        return Ok(None);
    };
    let io = |e| Error::io(data_path, e);
    let mut data = File::open(data_path).map_err(io)?;
    data.seek(SeekFrom::Start(offset)).map_err(io)?;
    let mut len = [0u8; 4];
    data.read_exact(&mut len).map_err(io)?;
    let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
    data.read_exact(&mut body).map_err(io)?;
    let mut sum = [0u8; CHECKSUM_LEN];
    data.read_exact(&mut sum).map_err(io)?;
    let corrupt = || Error::CorruptCache {
        path: data_path.to_path_buf(),
        message: format!("index points at an unreadable record (offset {offset})"),
    };
    if sum != checksum(&body) {
        return Err(corrupt());
    }
    match decode_body(&body) {
        Some((stored, score)) if stored == *key => Ok(Some(score)),
        _ => Err(corrupt()),
    }
}
