//! JSON manifests describing libraries of tracks/paintings and labeled clips.
//! Paths inside a manifest are resolved relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{precondition, Error, Result};
use crate::imaging::{read_image, ImageTensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub track_id: String,
    pub audio_path: PathBuf,
    pub artwork_path: PathBuf,
    pub album_id: String,
    /// Ground-truth cross-modal class, known only for synthetic corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaintingEntry {
    pub painting_id: String,
    pub image_path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub tracks: Vec<TrackEntry>,
    #[serde(default)]
    pub paintings: Vec<PaintingEntry>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::from(e).at(path))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl LibraryManifest {
    /// Load, resolve relative paths, and check ids and referenced files.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: LibraryManifest = read_json(path)?;
        let base = base_dir(path);
        for t in &mut m.tracks {
            t.audio_path = base.join(&t.audio_path);
            t.artwork_path = base.join(&t.artwork_path);
        }
        for p in &mut m.paintings {
            p.image_path = base.join(&p.image_path);
        }
        m.validate().map_err(|e| e.at(path))?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tracks {
            if !seen.insert(&t.track_id) {
                return precondition(format!("duplicate track id {:?}", t.track_id));
            }
            for p in [&t.audio_path, &t.artwork_path] {
                if !p.exists() {
                    return precondition(format!("track {:?} references missing file {}", t.track_id, p.display()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.paintings {
            if !seen.insert(&p.painting_id) {
                return precondition(format!("duplicate painting id {:?}", p.painting_id));
            }
            if !p.image_path.exists() {
                return precondition(format!("painting {:?} references missing file {}", p.painting_id, p.image_path.display()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledClipEntry {
    pub path: PathBuf,
    pub class_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub classes: Vec<String>,
    pub clips: Vec<LabeledClipEntry>,
}

impl LabelManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: LabelManifest = read_json(path)?;
        let base = base_dir(path);
        for c in &mut m.clips {
            c.path = base.join(&c.path);
            if c.class_id >= m.classes.len() {
                return Err(Error::Precondition(format!("clip class {} out of range", c.class_id)).at(path));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// A library track decoded into memory.
#[derive(Debug, Clone)]
pub struct CatalogTrack {
    pub track_id: String,
    pub album_id: String,
    pub class_id: Option<usize>,
    pub audio: AudioClip,
    pub artwork: ImageTensor<f32>,
}

impl CatalogTrack {
    /// Number of whole 4 s chunks.
    pub fn chunk_count(&self) -> usize {
        self.audio.len() / CLIP_SAMPLES
    }
}

/// Decoded tracks (16 kHz audio + standardized artwork).
#[derive(Debug, Clone)]
pub struct Catalog {
    pub tracks: Vec<CatalogTrack>,
}

impl Catalog {
    pub fn load(manifest: &LibraryManifest) -> Result<Self> {
        let tracks = manifest
            .tracks
            .iter()
            .map(|t| {
                Ok(CatalogTrack {
                    track_id: t.track_id.clone(),
                    album_id: t.album_id.clone(),
                    class_id: t.class_id,
                    audio: read_wav(&t.audio_path, SAMPLE_RATE)?,
                    artwork: read_image(&t.artwork_path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Catalog { tracks })
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn index_of(&self, track_id: &str) -> Option<usize> {
        self.tracks.iter().position(|t| t.track_id == track_id)
    }
}
