//! Exact nearest-neighbour index over 4 s chunk embeddings.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "CMEI" | version u16 | dimension u32 | record count u64
//! per record: track_id (u16 len + UTF-8) | chunk_index u32 | dimension x f32
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, CLIP_SECONDS, SAMPLE_RATE};
use crate::embedder::{AudioEmbedder, EmbeddingSource};
use crate::error::{precondition, Error, Result};
use crate::mel::MelExtractor;
use crate::nn::checkpoint::Reader;
use crate::scalar::Scalar;

pub const INDEX_MAGIC: &[u8; 4] = b"CMEI";
pub const INDEX_VERSION: u16 = 1;

/// `(track_id, chunk_index)`, ordered lexicographically.
pub type ChunkKey = EmbeddingSource;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord<T> {
    pub key: ChunkKey,
    pub embedding: Vec<T>,
}

impl<T> ChunkRecord<T> {
    pub fn track_id(&self) -> &str {
        &self.key.track_id
    }

    pub fn chunk_index(&self) -> u32 {
        self.key.chunk_index
    }

    pub fn start_time(&self) -> f64 {
        CLIP_SECONDS * self.key.chunk_index as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Position of the record in the index.
    pub position: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex<T> {
    dimension: usize,
    records: Vec<ChunkRecord<T>>,
}

impl<T: Scalar> EmbeddingIndex<T> {
    /// Sorts records by key; rejects duplicates and mixed dimensions.
    pub fn new(dimension: usize, mut records: Vec<ChunkRecord<T>>) -> Result<Self> {
        if dimension == 0 {
            return precondition("index dimension must be >= 1");
        }
        if let Some(r) = records.iter().find(|r| r.embedding.len() != dimension) {
            return Err(Error::Shape(format!("record {:?} has dimension {}, index has {dimension}", r.key, r.embedding.len())));
        }
        records.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = records.windows(2).find(|w| w[0].key == w[1].key) {
            return precondition(format!("duplicate chunk {:?}", w[0].key));
        }
        Ok(EmbeddingIndex { dimension, records })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[ChunkRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, key: &ChunkKey) -> Option<usize> {
        self.records.binary_search_by(|r| r.key.cmp(key)).ok()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ChunkKey> {
        self.records.iter().map(|r| &r.key)
    }

    fn distance_to(&self, query: &[T], position: usize) -> f64 {
        self.records[position]
            .embedding
            .iter()
            .zip(query)
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Exact `k` nearest records, ascending by distance then key. With a
    /// filter, only its members are considered; keys absent from the index
    /// are ignored.
    pub fn nearest(&self, query: &[T], k: usize, filter: Option<&BTreeSet<ChunkKey>>) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return precondition("k must be >= 1");
        }
        if query.len() != self.dimension {
            return Err(Error::Shape(format!("query has dimension {}, index has {}", query.len(), self.dimension)));
        }
        let candidates: Vec<usize> = match filter {
            Some(f) => f.iter().filter_map(|key| self.position(key)).collect(),
            None => (0..self.records.len()).collect(),
        };
        if candidates.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut scored: Vec<Neighbor> =
            candidates.into_iter().map(|p| Neighbor { position: p, distance: self.distance_to(query, p) }).collect();
        // positions follow key order, so they break distance ties
        let order = |a: &Neighbor, b: &Neighbor| a.distance.total_cmp(&b.distance).then(a.position.cmp(&b.position));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored)
    }

    pub fn record(&self, neighbor: &Neighbor) -> &ChunkRecord<T> {
        &self.records[neighbor.position]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.records.len() * (self.dimension * 4 + 16));
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.key.track_id.len() as u16).to_le_bytes());
            out.extend_from_slice(r.key.track_id.as_bytes());
            out.extend_from_slice(&r.key.chunk_index.to_le_bytes());
            for v in &r.embedding {
                out.extend_from_slice(&v.as_f32().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != INDEX_MAGIC {
            return Err(Error::Format("not an embedding index (bad magic)".into()));
        }
        let mut r = Reader::new(&bytes[4..]);
        let version = r.u16()?;
        if version != INDEX_VERSION {
            return Err(Error::Version { found: version, expected: INDEX_VERSION });
        }
        let dimension = r.u32()? as usize;
        let count = r.u64()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let track_id = r.str16()?;
            let chunk_index = r.u32()?;
            let raw = r.take(dimension * 4)?;
            let embedding = raw
                .chunks_exact(4)
                .map(|b| T::cast(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect();
            records.push(ChunkRecord { key: ChunkKey { track_id, chunk_index }, embedding });
        }
        if !r.is_empty() {
            return Err(Error::Corruption(format!("{} trailing bytes after {count} records", r.remaining())));
        }
        let sorted = records.windows(2).all(|w| w[0].key < w[1].key);
        if !sorted {
            return Err(Error::Corruption("index records are not in strictly ascending key order".into()));
        }
        Ok(EmbeddingIndex { dimension, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

/// Build-time notes, e.g. tracks too short to yield a chunk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub warnings: Vec<String>,
    pub records: usize,
}

/// Embed every whole 4 s chunk of every track.
pub fn build_index<T: Scalar>(tracks: &[(String, AudioClip)], embedder: &AudioEmbedder<T>) -> Result<(EmbeddingIndex<T>, BuildReport)> {
    const BATCH: usize = 16;
    let extractor = MelExtractor::<T>::new();
    let mut report = BuildReport::default();
    let mut records = Vec::new();
    for (track_id, clip) in tracks {
        if clip.sample_rate != SAMPLE_RATE {
            return precondition(format!("track {track_id:?} is {} Hz, expected {SAMPLE_RATE}", clip.sample_rate));
        }
        let chunks: Vec<AudioClip> = clip.canonical_chunks().collect();
        if chunks.is_empty() {
            report.warnings.push(format!("track {track_id:?} skipped: {:.2} s is shorter than one 4 s chunk", clip.duration()));
            continue;
        }
        for (b, group) in chunks.chunks(BATCH).enumerate() {
            let mels = group.iter().map(|c| extractor.extract(c)).collect::<Result<Vec<_>>>()?;
            for (j, embedding) in embedder.embed_batch(&mels)?.into_iter().enumerate() {
                let key = ChunkKey { track_id: track_id.clone(), chunk_index: (b * BATCH + j) as u32 };
                records.push(ChunkRecord { key, embedding });
            }
        }
    }
    report.records = records.len();
    Ok((EmbeddingIndex::new(embedder.dimension(), records)?, report))
}

/// Human-readable companion to an index file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub tracks: Vec<IndexedTrack>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondence: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedTrack {
    pub track_id: String,
    pub source: PathBuf,
    pub duration: f64,
    pub chunks: usize,
}

impl IndexManifest {
    /// `<index>.manifest.json` next to the index file.
    pub fn path_for(index_path: &Path) -> PathBuf {
        let mut name = index_path.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::from(e).at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
    }
}
