//! Audio classifier whose pooled last-convolution activations serve as
//! chunk embeddings, compared by Euclidean distance.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, CLIP_SAMPLES, SAMPLE_RATE};
use crate::correspondence::conv_blocks;
use crate::error::{precondition, Error, Result};
use crate::manifest::LabelManifest;
use crate::mel::{MelExtractor, MelPatch, N_FRAMES, N_MELS};
use crate::nn::checkpoint::{gather_params, scatter_params};
use crate::nn::{softmax_cross_entropy_batch, Checkpoint, LayerSpec, Parameter, Section, Sequential, Sgd, Tensor};
use crate::rng::{derived, Rng, RNG_ALGORITHM};
use crate::scalar::Scalar;

pub const CHECKPOINT_KIND: &str = "embedder";
/// Source label for embeddings of live input rather than a library chunk.
pub const LIVE_SOURCE: &str = "live";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub mel_bins: usize,
    pub mel_frames: usize,
    /// Conv block widths; the last one is the embedding dimension.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stem_stride: usize,
    pub classes: usize,
    pub audio_offset: f64,
    pub audio_scale: f64,
    /// L2-normalize embeddings before use.
    pub normalize: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            mel_bins: N_MELS,
            mel_frames: N_FRAMES,
            channels: vec![16, 32, 64, 512],
            kernel: 3,
            stem_stride: 2,
            classes: 3,
            audio_offset: -4.0,
            audio_scale: 6.0,
            normalize: false,
        }
    }
}

impl EmbedderConfig {
    pub fn dimension(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return precondition("embedder needs at least one non-empty conv block");
        }
        if self.classes < 2 {
            return precondition("embedder needs at least 2 classes");
        }
        if self.stem_stride == 0 || self.kernel % 2 == 0 || !(self.audio_scale > 0.0) {
            return precondition("embedder needs an odd kernel, positive stride and positive scale");
        }
        let min_side = self.stem_stride << (self.channels.len() - 1);
        if self.mel_bins.min(self.mel_frames) < min_side {
            return precondition("mel patch too small for the embedder depth");
        }
        Ok(())
    }

    pub fn trunk_specs(&self) -> Vec<LayerSpec> {
        let mut specs = conv_blocks(1, &self.channels, self.kernel, self.stem_stride, false);
        specs.push(LayerSpec::GlobalAvgPool);
        specs
    }

    pub fn classifier_specs(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::Dense { inputs: self.dimension(), outputs: self.classes }]
    }

    fn sections(&self) -> Vec<Section> {
        vec![Section::new("trunk", self.trunk_specs()), Section::new("classifier", self.classifier_specs())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub track_id: String,
    pub chunk_index: u32,
}

impl EmbeddingSource {
    pub fn live() -> Self {
        EmbeddingSource { track_id: LIVE_SOURCE.to_string(), chunk_index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub vector: Vec<T>,
    pub source: EmbeddingSource,
}

/// Euclidean distance accumulated in f64.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("embedding lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>().sqrt())
}

pub fn embedding_distance<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<f64> {
    distance(&a.vector, &b.vector)
}

#[derive(Debug, Clone)]
pub struct AudioEmbedder<T> {
    config: EmbedderConfig,
    trunk: Sequential<T>,
    classifier: Sequential<T>,
}

impl<T: Scalar> AudioEmbedder<T> {
    pub fn new(config: EmbedderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let trunk = Sequential::new(&config.trunk_specs(), rng)?;
        let classifier = Sequential::new(&config.classifier_specs(), rng)?;
        Ok(AudioEmbedder { config, trunk, classifier })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension()
    }

    fn prepare(&self, mels: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, f) = (self.config.mel_bins, self.config.mel_frames);
        match mels.shape() {
            [_, h, w, 1] if *h == b && *w == f => {}
            other => return Err(Error::Shape(format!("mel batch must be [N,{b},{f},1], got {other:?}"))),
        }
        let offset = T::cast(self.config.audio_offset);
        let inv = T::cast(1.0 / self.config.audio_scale);
        Ok(mels.map(|v| (v - offset) * inv))
    }

    fn finish(&self, mut pooled: Tensor<T>) -> Vec<Vec<T>> {
        let d = self.dimension();
        if self.config.normalize {
            for row in pooled.data_mut().chunks_mut(d) {
                let norm = row.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let inv = T::cast(1.0 / norm);
                    row.iter_mut().for_each(|v| *v *= inv);
                }
            }
        }
        pooled.data().chunks(d).map(<[T]>::to_vec).collect()
    }

    /// Pooled final-conv activations for a `[N,bins,frames,1]` batch.
    pub fn embed_tensor(&self, mels: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let pooled = self.trunk.forward(&self.prepare(mels)?)?;
        Ok(self.finish(pooled))
    }

    pub fn embed(&self, mel: &MelPatch<T>) -> Result<Vec<T>> {
        Ok(self.embed_tensor(&mel.to_tensor().batched())?.remove(0))
    }

    pub fn embed_audio(&self, mel: &MelPatch<T>, source: EmbeddingSource) -> Result<Embedding<T>> {
        Ok(Embedding { vector: self.embed(mel)?, source })
    }

    pub fn embed_batch(&self, mels: &[MelPatch<T>]) -> Result<Vec<Vec<T>>> {
        if mels.is_empty() {
            return Ok(vec![]);
        }
        let stacked: Vec<Tensor<T>> = mels.iter().map(MelPatch::to_tensor).collect();
        self.embed_tensor(&Tensor::stack(&stacked)?)
    }

    /// Class logits `[N, classes]`.
    pub fn logits(&self, mels: &Tensor<T>) -> Result<Tensor<T>> {
        self.classifier.forward(&self.trunk.forward(&self.prepare(mels)?)?)
    }

    pub fn predict(&self, mels: &[MelPatch<T>]) -> Result<Vec<usize>> {
        let stacked: Vec<Tensor<T>> = mels.iter().map(MelPatch::to_tensor).collect();
        let logits = self.logits(&Tensor::stack(&stacked)?)?;
        Ok(logits
            .data()
            .chunks(self.config.classes)
            .map(|row| (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best }))
            .collect())
    }

    pub fn accumulate_gradients(&mut self, mels: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let x = self.prepare(mels)?;
        let pooled = self.trunk.forward_train(&x)?;
        let logits = self.classifier.forward_train(&pooled)?;
        let (loss, grad) = softmax_cross_entropy_batch(&logits, labels)?;
        let g = self.classifier.backward(&grad)?;
        self.trunk.backward_params(&g)?;
        Ok(loss.as_f64())
    }

    pub fn train_step(&mut self, mels: &Tensor<T>, labels: &[usize], sgd: &Sgd) -> Result<f64> {
        self.trunk.zero_grad();
        self.classifier.zero_grad();
        let loss = self.accumulate_gradients(mels, labels)?;
        sgd.step(self.trunk.params_mut().chain(self.classifier.params_mut()));
        Ok(loss)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.trunk.params_mut().chain(self.classifier.params_mut())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.to_string(),
            config: serde_json::to_string(&self.config).expect("config serializes"),
            sections: self.config.sections(),
            params: gather_params(&[&self.trunk, &self.classifier]),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected an {CHECKPOINT_KIND} checkpoint, found {:?}", ckpt.kind)));
        }
        let config: EmbedderConfig =
            serde_json::from_str(&ckpt.config).map_err(|e| Error::Corruption(format!("checkpoint config: {e}")))?;
        if ckpt.sections != config.sections() {
            return Err(Error::Corruption("checkpoint layer table disagrees with its config".into()));
        }
        let mut model = AudioEmbedder::new(config, &mut derived(0, 0))?;
        scatter_params(&mut [&mut model.trunk, &mut model.classifier], &ckpt.params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&Checkpoint::load(path)?).map_err(|e| e.at(path))
    }

    pub fn content_hash(&self) -> String {
        crate::hash::digest(&self.to_checkpoint().to_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledClip<T> {
    pub audio: MelPatch<T>,
    pub class_id: usize,
}

/// Decode every clip of a label manifest to a mel patch of its first 4 s.
pub fn load_labeled_clips<T: Scalar>(manifest: &LabelManifest) -> Result<Vec<LabeledClip<T>>> {
    let extractor = MelExtractor::<T>::new();
    manifest
        .clips
        .iter()
        .map(|c| {
            let clip = read_wav(&c.path, SAMPLE_RATE)?.slice(0, CLIP_SAMPLES);
            Ok(LabeledClip { audio: extractor.extract(&clip).map_err(|e| e.at(&c.path))?, class_id: c.class_id })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Held-out evaluation cadence; 0 evaluates only at the end.
    pub eval_every: usize,
}

impl Default for EmbedderTrainConfig {
    fn default() -> Self {
        EmbedderTrainConfig { steps: 300, lr: 0.01, momentum: 0.9, batch_size: 16, seed: 0, holdout_fraction: 0.1, eval_every: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderMetric {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderRun {
    pub seed: u64,
    pub rng: String,
    pub train_clips: usize,
    /// Dataset positions of the held-out clips.
    pub holdout: Vec<usize>,
    pub train: EmbedderTrainConfig,
    pub model: EmbedderConfig,
    pub holdout_accuracy: f64,
    pub final_loss: f64,
}

/// Per-class held-out split: `max(1, round(fraction * n_c))` clips of each class.
pub fn stratified_split(labels: &[usize], classes: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    if !(0.0..1.0).contains(&fraction) {
        return precondition(format!("holdout fraction must be in [0, 1), got {fraction}"));
    }
    let (mut train, mut holdout) = (vec![], vec![]);
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let held = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len().saturating_sub(1));
        holdout.extend_from_slice(&members[..held]);
        train.extend_from_slice(&members[held..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((train, holdout))
}

fn check_dataset<T>(dataset: &[LabeledClip<T>], classes: usize) -> Result<()> {
    let mut counts = vec![0usize; classes];
    for clip in dataset {
        match counts.get_mut(clip.class_id) {
            Some(c) => *c += 1,
            None => return precondition(format!("class id {} outside the {classes} configured classes", clip.class_id)),
        }
    }
    let populated = counts.iter().filter(|&&c| c > 0).count();
    if populated < 2 {
        return precondition("embedder training needs at least 2 populated classes");
    }
    if let Some(c) = counts.iter().position(|&c| c > 0 && c < 10) {
        return precondition(format!("class {c} has {} clips, at least 10 are required", counts[c]));
    }
    Ok(())
}

/// Mean pairwise embedding distance within and across classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub intra: f64,
    pub inter: f64,
    pub intra_pairs: usize,
    pub inter_pairs: usize,
}

/// Mean embedding distance over same-class and cross-class pairs.
pub fn class_separation<T: Scalar>(labeled: &[(usize, Vec<T>)]) -> Result<Separation> {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for (a, (ca, va)) in labeled.iter().enumerate() {
        for (cb, vb) in &labeled[a + 1..] {
            let d = distance(va, vb)?;
            if ca == cb {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                nx += 1;
            }
        }
    }
    if ni == 0 || nx == 0 {
        return precondition("separation needs at least two clips of one class and two classes");
    }
    Ok(Separation { intra: intra / ni as f64, inter: inter / nx as f64, intra_pairs: ni, inter_pairs: nx })
}

/// Accuracy of `model` on the given dataset positions.
pub fn classification_accuracy<T: Scalar>(model: &AudioEmbedder<T>, dataset: &[LabeledClip<T>], which: &[usize]) -> Result<f64> {
    let mut hits = 0;
    for chunk in which.chunks(16) {
        let mels: Vec<MelPatch<T>> = chunk.iter().map(|&i| dataset[i].audio.clone()).collect();
        let pred = model.predict(&mels)?;
        hits += chunk.iter().zip(pred).filter(|(&i, p)| dataset[i].class_id == *p).count();
    }
    Ok(if which.is_empty() { 0.0 } else { hits as f64 / which.len() as f64 })
}

const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_BATCH: u64 = 2;

/// Train with `holdout_fraction = 0` to fit every clip (no evaluation split).
pub fn train_embedder<T: Scalar>(
    dataset: &[LabeledClip<T>],
    model_config: &EmbedderConfig,
    config: &EmbedderTrainConfig,
    mut on_metric: impl FnMut(&EmbedderMetric),
) -> Result<(AudioEmbedder<T>, EmbedderRun)> {
    check_dataset(dataset, model_config.classes)?;
    if config.steps == 0 || config.batch_size == 0 {
        return precondition("steps and batch size must be >= 1");
    }
    let sgd = Sgd::new(config.lr, config.momentum)?;
    let mut model = AudioEmbedder::<T>::new(model_config.clone(), &mut derived(config.seed, STREAM_INIT))?;
    let labels: Vec<usize> = dataset.iter().map(|c| c.class_id).collect();
    let (train, holdout) = if config.holdout_fraction > 0.0 {
        stratified_split(&labels, model_config.classes, config.holdout_fraction, &mut derived(config.seed, STREAM_SPLIT))?
    } else {
        ((0..dataset.len()).collect(), vec![])
    };
    let mut rng = derived(config.seed, STREAM_BATCH);
    let (mut accuracy, mut loss) = (0.0, 0.0);
    for step in 1..=config.steps {
        let picks: Vec<usize> = (0..config.batch_size).map(|_| train[rng.gen_range(0..train.len())]).collect();
        let mels: Vec<Tensor<T>> = picks.iter().map(|&i| dataset[i].audio.to_tensor()).collect();
        let batch_labels: Vec<usize> = picks.iter().map(|&i| labels[i]).collect();
        loss = model.train_step(&Tensor::stack(&mels)?, &batch_labels, &sgd)?;
        if !loss.is_finite() {
            return Err(Error::Training { step, detail: format!("loss became {loss}") });
        }
        if !model.params_mut().all(|p| p.value.is_finite()) {
            return Err(Error::Training { step, detail: "parameters became non-finite".into() });
        }
        let evaluate = !holdout.is_empty() && (step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0));
        let mut record = EmbedderMetric { step, loss, accuracy: None };
        if evaluate {
            accuracy = classification_accuracy(&model, dataset, &holdout)?;
            record.accuracy = Some(accuracy);
        }
        on_metric(&record);
    }
    let run = EmbedderRun {
        seed: config.seed,
        rng: RNG_ALGORITHM.to_string(),
        train_clips: train.len(),
        holdout,
        train: config.clone(),
        model: model_config.clone(),
        holdout_accuracy: accuracy,
        final_loss: loss,
    };
    Ok((model, run))
}
