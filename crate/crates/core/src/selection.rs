//! Two-step selection: keep the library chunks whose visual correspondence
//! score against the current painting is lowest, then pick the survivor whose
//! audio embedding is nearest to the brush-stroke audio. Also the smoothed
//! congruity meter.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::correspondence::CorrespondenceModel;
use crate::embedder::AudioEmbedder;
use crate::error::{precondition, Error, Result};
use crate::imaging::ImageTensor;
use crate::index::{ChunkKey, EmbeddingIndex};
use crate::mel::{MelExtractor, MelPatch};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const DEFAULT_FRACTION: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 0.3;

/// `max(1, ceil(fraction * total))`, never more than `total`. Products that
/// land within rounding error of an integer count as that integer.
pub fn survivor_count(total: usize, fraction: f64) -> usize {
    let x = fraction * total as f64;
    let nearest = x.round();
    let ceil = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    (ceil as usize).clamp(1, total.max(1))
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        precondition(format!("fraction must be in (0, 1], got {fraction}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survivor {
    pub key: ChunkKey,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneResult {
    pub painting_id: String,
    /// Ascending by score, ties by key.
    pub survivors: Vec<Survivor>,
    pub fraction: f64,
    pub total: usize,
}

impl StageOneResult {
    pub fn keys(&self) -> BTreeSet<ChunkKey> {
        self.survivors.iter().map(|s| s.key.clone()).collect()
    }

    pub fn score_of(&self, key: &ChunkKey) -> Option<f64> {
        self.survivors.iter().find(|s| &s.key == key).map(|s| s.score)
    }

    pub fn contains(&self, key: &ChunkKey) -> bool {
        self.survivors.iter().any(|s| &s.key == key)
    }
}

/// The lowest-scoring `survivor_count` entries; `keys` must be in ascending order.
pub fn select_lowest(keys: &[ChunkKey], scores: &[f64], fraction: f64) -> Result<Vec<Survivor>> {
    check_fraction(fraction)?;
    if keys.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if keys.len() != scores.len() {
        return Err(Error::Shape(format!("{} keys vs {} scores", keys.len(), scores.len())));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(keys[a].cmp(&keys[b])));
    order.truncate(survivor_count(keys.len(), fraction));
    Ok(order.into_iter().map(|i| Survivor { key: keys[i].clone(), score: scores[i] }).collect())
}

/// Library chunks as mel patches, in key order.
#[derive(Debug, Clone)]
pub struct ChunkLibrary<T> {
    pub keys: Vec<ChunkKey>,
    pub mels: Vec<MelPatch<T>>,
}

impl<T: Scalar> ChunkLibrary<T> {
    pub fn new(entries: Vec<(ChunkKey, MelPatch<T>)>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return precondition("duplicate chunk in library");
        }
        let (keys, mels) = entries.into_iter().unzip();
        Ok(ChunkLibrary { keys, mels })
    }

    /// Same chunking as the embedding index: whole 4 s chunks, remainder dropped.
    pub fn from_tracks(tracks: &[(String, AudioClip)]) -> Result<Self> {
        let extractor = MelExtractor::<T>::new();
        let mut entries = Vec::new();
        for (track_id, clip) in tracks {
            for (i, chunk) in clip.canonical_chunks().enumerate() {
                entries.push((ChunkKey { track_id: track_id.clone(), chunk_index: i as u32 }, extractor.extract(&chunk)?));
            }
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Batched forward in fixed-size groups, fanned out over the rayon pool.
fn project_parallel<T: Scalar, F>(items: usize, project: F) -> Result<Vec<Vec<T>>>
where
    F: Fn(std::ops::Range<usize>) -> Result<Tensor<T>> + Sync,
{
    const GROUP: usize = 16;
    let groups: Vec<std::ops::Range<usize>> =
        (0..items).step_by(GROUP).map(|s| s..(s + GROUP).min(items)).collect();
    let parts: Vec<Tensor<T>> = groups.into_par_iter().map(&project).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(items);
    for t in parts {
        let width = t.shape()[1];
        rows.extend(t.data().chunks(width).map(<[T]>::to_vec));
    }
    Ok(rows)
}

fn stack_rows<T: Scalar>(rows: &[Vec<T>], repeat: Option<usize>) -> Result<Tensor<T>> {
    let width = rows.first().map_or(0, Vec::len);
    let data: Vec<T> = match repeat {
        Some(n) => rows[0].iter().copied().cycle().take(width * n).collect(),
        None => rows.iter().flatten().copied().collect(),
    };
    Tensor::from_vec(&[data.len() / width.max(1), width], data)
}

/// Stage-1 scorer with cached per-chunk audio projections and per-painting
/// score vectors keyed by painting and model content hashes.
pub struct StageOneScorer<T: Scalar> {
    model: Arc<CorrespondenceModel<T>>,
    model_hash: String,
    keys: Vec<ChunkKey>,
    audio_proj: Vec<Vec<T>>,
    cache: Mutex<HashMap<(String, String), Arc<Vec<f64>>>>,
}

impl<T: Scalar> StageOneScorer<T> {
    pub fn new(model: Arc<CorrespondenceModel<T>>, library: &ChunkLibrary<T>) -> Result<Self> {
        if library.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let audio_proj = project_parallel(library.len(), |r| {
            let mels: Vec<Tensor<T>> = library.mels[r].iter().map(MelPatch::to_tensor).collect();
            model.audio_projection(&Tensor::stack(&mels)?)
        })?;
        Ok(StageOneScorer { model_hash: model.content_hash(), model, keys: library.keys.clone(), audio_proj, cache: Mutex::default() })
    }

    /// From audio projections computed elsewhere, one row per key in key order.
    pub fn from_projections(model: Arc<CorrespondenceModel<T>>, keys: Vec<ChunkKey>, audio_proj: Vec<Vec<T>>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if keys.len() != audio_proj.len() {
            return Err(Error::Shape(format!("{} keys vs {} projections", keys.len(), audio_proj.len())));
        }
        let width = model.config().audio.output_dim;
        if audio_proj.iter().any(|p| p.len() != width) {
            return Err(Error::Shape(format!("audio projections must have length {width}")));
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return precondition("keys must be strictly ascending");
        }
        Ok(StageOneScorer { model_hash: model.content_hash(), model, keys, audio_proj, cache: Mutex::default() })
    }

    pub fn keys(&self) -> &[ChunkKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn model(&self) -> &CorrespondenceModel<T> {
        &self.model
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    /// Dissimilarity of the painting against every chunk, in key order.
    pub fn scores(&self, painting: &ImageTensor<T>) -> Result<Arc<Vec<f64>>> {
        let cache_key = (painting.content_hash(), self.model_hash.clone());
        if let Some(hit) = self.cache.lock().expect("score cache").get(&cache_key) {
            return Ok(hit.clone());
        }
        let img = self.model.image_projection(&painting.to_tensor().batched())?;
        let img_row = vec![img.data().to_vec()];
        let scores: Vec<f64> = self
            .audio_proj
            .par_chunks(256)
            .map(|rows| {
                let imgs = stack_rows(&img_row, Some(rows.len()))?;
                self.model.scores_from_projections(&imgs, &stack_rows(rows, None)?)
            })
            .collect::<Result<Vec<_>>>()?
            .concat();
        let scores = Arc::new(scores);
        self.cache.lock().expect("score cache").insert(cache_key, scores.clone());
        Ok(scores)
    }

    pub fn is_cached(&self, painting: &ImageTensor<T>) -> bool {
        self.cache.lock().expect("score cache").contains_key(&(painting.content_hash(), self.model_hash.clone()))
    }

    pub fn filter(&self, painting: &ImageTensor<T>, painting_id: &str, fraction: f64) -> Result<StageOneResult> {
        check_fraction(fraction)?;
        let scores = self.scores(painting)?;
        Ok(StageOneResult {
            painting_id: painting_id.to_string(),
            survivors: select_lowest(&self.keys, &scores, fraction)?,
            fraction,
            total: self.keys.len(),
        })
    }
}

/// One-shot stage-1 filter without caching.
pub fn stage1_filter<T: Scalar>(
    model: &CorrespondenceModel<T>,
    painting: &ImageTensor<T>,
    painting_id: &str,
    library: &ChunkLibrary<T>,
    fraction: f64,
) -> Result<StageOneResult> {
    check_fraction(fraction)?;
    if library.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let scorer = StageOneScorer::new(Arc::new(model.clone()), library)?;
    scorer.filter(painting, painting_id, fraction)
}

/// Scores library paintings against a music excerpt (the reverse direction).
pub struct PaintingScorer<T: Scalar> {
    model: Arc<CorrespondenceModel<T>>,
    ids: Vec<String>,
    image_proj: Vec<Vec<T>>,
}

impl<T: Scalar> PaintingScorer<T> {
    pub fn new(model: Arc<CorrespondenceModel<T>>, paintings: &[(String, ImageTensor<T>)]) -> Result<Self> {
        let image_proj = project_parallel(paintings.len(), |r| {
            let imgs: Vec<Tensor<T>> = paintings[r].iter().map(|(_, p)| p.to_tensor()).collect();
            model.image_projection(&Tensor::stack(&imgs)?)
        })?;
        Ok(PaintingScorer { model, ids: paintings.iter().map(|(id, _)| id.clone()).collect(), image_proj })
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Lowest-scoring painting id (ties by id) and its score.
    pub fn best(&self, music: &MelPatch<T>) -> Result<Option<(String, f64)>> {
        if self.ids.is_empty() {
            return Ok(None);
        }
        let aud = self.model.audio_projection(&music.to_tensor().batched())?;
        let auds = stack_rows(&[aud.data().to_vec()], Some(self.ids.len()))?;
        let scores = self.model.scores_from_projections(&stack_rows(&self.image_proj, None)?, &auds)?;
        let best = (0..self.ids.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(self.ids[a].cmp(&self.ids[b])))
            .expect("non-empty");
        Ok(Some((self.ids[best].clone(), scores[best])))
    }
}

/// A retrieved chunk, as published on the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEvent {
    pub track_id: String,
    pub chunk_index: u32,
    pub start_time: f64,
    pub stage1_score: f64,
    pub stage2_distance: f64,
    /// Seconds since session start.
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub painting_id: Option<String>,
}

impl MatchEvent {
    pub fn key(&self) -> ChunkKey {
        ChunkKey { track_id: self.track_id.clone(), chunk_index: self.chunk_index }
    }
}

/// Nearest survivor to an already computed brush embedding.
pub fn stage2_from_embedding<T: Scalar>(
    index: &EmbeddingIndex<T>,
    stage1: &StageOneResult,
    brush: &[T],
    timestamp: f64,
) -> Result<MatchEvent> {
    if stage1.survivors.is_empty() {
        return precondition("stage-1 result has no survivors");
    }
    let hit = index.nearest(brush, 1, Some(&stage1.keys()))?.remove(0);
    let record = index.record(&hit);
    let stage1_score = stage1
        .score_of(&record.key)
        .ok_or_else(|| Error::State(format!("{:?} is not a stage-1 survivor", record.key)))?;
    Ok(MatchEvent {
        track_id: record.key.track_id.clone(),
        chunk_index: record.key.chunk_index,
        start_time: record.start_time(),
        stage1_score,
        stage2_distance: hit.distance,
        timestamp,
        painting_id: None,
    })
}

pub fn stage2_retrieve<T: Scalar>(
    embedder: &AudioEmbedder<T>,
    index: &EmbeddingIndex<T>,
    stage1: &StageOneResult,
    brush: &MelPatch<T>,
    timestamp: f64,
) -> Result<MatchEvent> {
    stage2_from_embedding(index, stage1, &embedder.embed(brush)?, timestamp)
}

/// Exponentially smoothed `1 - dissimilarity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongruityState {
    pub raw: f64,
    pub smoothed: f64,
    pub alpha: f64,
    #[serde(skip)]
    pub initialized: bool,
}

impl CongruityState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return precondition(format!("alpha must be in (0, 1], got {alpha}"));
        }
        Ok(CongruityState { raw: 0.0, smoothed: 0.0, alpha, initialized: false })
    }

    /// Fold in one dissimilarity score; the first update sets `smoothed = raw`.
    pub fn apply(self, score: f64) -> Self {
        let raw = (1.0 - score).clamp(0.0, 1.0);
        let smoothed = if self.initialized { self.alpha * raw + (1.0 - self.alpha) * self.smoothed } else { raw };
        CongruityState { raw, smoothed: smoothed.clamp(0.0, 1.0), alpha: self.alpha, initialized: true }
    }
}

pub fn congruity_update<T: Scalar>(
    state: CongruityState,
    model: &CorrespondenceModel<T>,
    painting: &ImageTensor<T>,
    music: &MelPatch<T>,
) -> Result<CongruityState> {
    Ok(state.apply(model.score_pair(painting, music)?))
}
