//! Dual-branch image/audio correspondence scorer.
//!
//! Each branch maps its input to a fixed-width projection; the concatenated
//! projections go through `dense -> relu -> dense` to two logits. Class 0 means
//! the pair belongs together, class 1 that it does not, and the score of a
//! pair is the probability of class 1.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{augment_audio, CLIP_SAMPLES};
use crate::error::{precondition, Error, Result};
use crate::imaging::{augment_image, ImageTensor, CHANNELS, IMAGE_SIZE};
use crate::manifest::Catalog;
use crate::mel::{MelExtractor, MelPatch, N_FRAMES, N_MELS};
use crate::nn::checkpoint::{gather_params, scatter_params};
use crate::nn::gradcheck::Objective;
use crate::nn::{concat, softmax_cross_entropy_batch, split, Checkpoint, LayerSpec, Padding, Parameter, Section, Sequential, Sgd, Tensor};
use crate::rng::{derived, Rng, RNG_ALGORITHM};
use crate::scalar::Scalar;

pub const LABEL_MATCH: usize = 0;
pub const LABEL_MISMATCH: usize = 1;
pub const CHECKPOINT_KIND: &str = "correspondence";

/// A convolutional branch: `channels.len()` blocks of conv-relu-maxpool,
/// global average pooling, then a dense projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    /// Stride of the first convolution.
    pub stem_stride: usize,
    pub output_dim: usize,
}

impl BranchConfig {
    pub fn standard(in_channels: usize) -> Self {
        BranchConfig { in_channels, channels: vec![16, 32, 64, 128], kernel: 3, stem_stride: 2, output_dim: 512 }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut specs = conv_blocks(self.in_channels, &self.channels, self.kernel, self.stem_stride, true);
        specs.push(LayerSpec::GlobalAvgPool);
        specs.push(LayerSpec::Dense { inputs: *self.channels.last().unwrap_or(&self.in_channels), outputs: self.output_dim });
        specs
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.in_channels == 0 || self.output_dim == 0 {
            return precondition(format!("{name} branch needs non-zero channels and output width"));
        }
        if self.stem_stride == 0 || self.kernel % 2 == 0 {
            return precondition(format!("{name} branch needs an odd kernel and a positive stride"));
        }
        Ok(())
    }

    /// Smallest input side that survives the stem stride and every 2x2 pool.
    pub fn min_side(&self) -> usize {
        self.stem_stride * (1 << self.channels.len())
    }
}

/// Conv-relu(-maxpool) blocks; the first convolution uses `stem_stride`.
pub fn conv_blocks(in_channels: usize, channels: &[usize], kernel: usize, stem_stride: usize, pool_last: bool) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut c_in = in_channels;
    for (i, &c) in channels.iter().enumerate() {
        let stride = if i == 0 { stem_stride } else { 1 };
        specs.push(LayerSpec::Conv2d { kernel, stride, padding: Padding::Same, in_channels: c_in, out_channels: c });
        specs.push(LayerSpec::Relu);
        if pool_last || i + 1 < channels.len() {
            specs.push(LayerSpec::MaxPool { size: 2, stride: 2 });
        }
        c_in = c;
    }
    specs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    /// Input images are `image_size x image_size x 3`.
    pub image_size: usize,
    pub mel_bins: usize,
    pub mel_frames: usize,
    pub image: BranchConfig,
    pub audio: BranchConfig,
    pub head_hidden: usize,
    /// Log-mel inputs enter the audio branch as `(x - audio_offset) / audio_scale`.
    pub audio_offset: f64,
    pub audio_scale: f64,
}

impl Default for CorrespondenceConfig {
    fn default() -> Self {
        CorrespondenceConfig {
            image_size: IMAGE_SIZE,
            mel_bins: N_MELS,
            mel_frames: N_FRAMES,
            image: BranchConfig::standard(CHANNELS),
            audio: BranchConfig::standard(1),
            head_hidden: 128,
            audio_offset: -4.0,
            audio_scale: 6.0,
        }
    }
}

impl CorrespondenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.image.validate("image")?;
        self.audio.validate("audio")?;
        if self.image.in_channels != CHANNELS || self.audio.in_channels != 1 {
            return precondition("image branch takes 3 channels and audio branch 1");
        }
        if self.head_hidden == 0 || !(self.audio_scale > 0.0) || !self.audio_offset.is_finite() {
            return precondition("head width and audio scale must be positive");
        }
        if self.image_size < self.image.min_side() || self.mel_bins.min(self.mel_frames) < self.audio.min_side() {
            return precondition("inputs too small for the branch depth");
        }
        Ok(())
    }

    pub fn head_specs(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense { inputs: self.image.output_dim + self.audio.output_dim, outputs: self.head_hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: self.head_hidden, outputs: 2 },
        ]
    }

    fn sections(&self) -> Vec<Section> {
        vec![
            Section::new("image", self.image.specs()),
            Section::new("audio", self.audio.specs()),
            Section::new("join", vec![LayerSpec::Concat { left: self.image.output_dim, right: self.audio.output_dim }]),
            Section::new("head", self.head_specs()),
            Section::new("output", vec![LayerSpec::Softmax]),
        ]
    }
}

/// Probability of class 1 from a pair of logits, computed in f64.
fn mismatch_probability<T: Scalar>(logits: &[T]) -> f64 {
    let d = logits[0].as_f64() - logits[1].as_f64();
    1.0 / (1.0 + d.exp())
}

#[derive(Debug, Clone)]
pub struct CorrespondenceModel<T> {
    config: CorrespondenceConfig,
    image: Sequential<T>,
    audio: Sequential<T>,
    head: Sequential<T>,
}

impl<T: Scalar> CorrespondenceModel<T> {
    pub fn new(config: CorrespondenceConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let image = Sequential::new(&config.image.specs(), rng)?;
        let audio = Sequential::new(&config.audio.specs(), rng)?;
        let head = Sequential::new(&config.head_specs(), rng)?;
        Ok(CorrespondenceModel { config, image, audio, head })
    }

    pub fn config(&self) -> &CorrespondenceConfig {
        &self.config
    }

    pub fn head(&self) -> &Sequential<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Sequential<T> {
        &mut self.head
    }

    pub fn image_branch(&self) -> &Sequential<T> {
        &self.image
    }

    pub fn audio_branch(&self) -> &Sequential<T> {
        &self.audio
    }

    fn check_images(&self, images: &Tensor<T>) -> Result<()> {
        let s = self.config.image_size;
        match images.shape() {
            [_, h, w, c] if *h == s && *w == s && *c == CHANNELS => Ok(()),
            other => Err(Error::Shape(format!("image batch must be [N,{s},{s},3], got {other:?}"))),
        }
    }

    fn check_mels(&self, mels: &Tensor<T>) -> Result<()> {
        let (b, f) = (self.config.mel_bins, self.config.mel_frames);
        match mels.shape() {
            [_, h, w, 1] if *h == b && *w == f => Ok(()),
            other => Err(Error::Shape(format!("mel batch must be [N,{b},{f},1], got {other:?}"))),
        }
    }

    fn normalize_mels(&self, mels: &Tensor<T>) -> Tensor<T> {
        let offset = T::cast(self.config.audio_offset);
        let inv = T::cast(1.0 / self.config.audio_scale);
        mels.map(|v| (v - offset) * inv)
    }

    /// `[N,H,W,3]` standardized images to `[N,D]` projections.
    pub fn image_projection(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_images(images)?;
        self.image.forward(images)
    }

    /// `[N,bins,frames,1]` raw log-mel patches to `[N,D]` projections.
    pub fn audio_projection(&self, mels: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_mels(mels)?;
        self.audio.forward(&self.normalize_mels(mels))
    }

    /// Two logits per row from precomputed projections.
    pub fn head_logits(&self, image_proj: &Tensor<T>, audio_proj: &Tensor<T>) -> Result<Tensor<T>> {
        self.head.forward(&concat(image_proj, audio_proj)?)
    }

    pub fn logits(&self, images: &Tensor<T>, mels: &Tensor<T>) -> Result<Tensor<T>> {
        self.head_logits(&self.image_projection(images)?, &self.audio_projection(mels)?)
    }

    /// Mismatch probability per row of a pair of projection batches.
    pub fn scores_from_projections(&self, image_proj: &Tensor<T>, audio_proj: &Tensor<T>) -> Result<Vec<f64>> {
        let logits = self.head_logits(image_proj, audio_proj)?;
        Ok(logits.data().chunks(2).map(mismatch_probability).collect())
    }

    /// `[p(match), p(mismatch)]` for one pair.
    pub fn probabilities(&self, image: &ImageTensor<T>, audio: &MelPatch<T>) -> Result<[f64; 2]> {
        let p1 = self.score_pair(image, audio)?;
        Ok([1.0 - p1, p1])
    }

    /// Dissimilarity in [0, 1]: 0 for a strong association, 1 for none.
    pub fn score_pair(&self, image: &ImageTensor<T>, audio: &MelPatch<T>) -> Result<f64> {
        let scores = self.logits(&image.to_tensor().batched(), &audio.to_tensor().batched())?;
        Ok(mismatch_probability(scores.data()))
    }

    pub fn score_batch(&self, images: &[ImageTensor<T>], mels: &[MelPatch<T>]) -> Result<Vec<f64>> {
        if images.len() != mels.len() {
            return Err(Error::Shape(format!("{} images vs {} mel patches", images.len(), mels.len())));
        }
        if images.is_empty() {
            return Ok(vec![]);
        }
        let (imgs, auds) = pair_tensors(images, mels)?;
        let logits = self.logits(&imgs, &auds)?;
        Ok(logits.data().chunks(2).map(mismatch_probability).collect())
    }

    /// Forward + backward on one batch, accumulating parameter gradients.
    /// Returns the mean cross-entropy.
    pub fn accumulate_gradients(&mut self, images: &Tensor<T>, mels: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        self.check_images(images)?;
        self.check_mels(mels)?;
        let mels = self.normalize_mels(mels);
        let img = self.image.forward_train(images)?;
        let aud = self.audio.forward_train(&mels)?;
        let logits = self.head.forward_train(&concat(&img, &aud)?)?;
        let (loss, grad) = softmax_cross_entropy_batch(&logits, labels)?;
        let joined = self.head.backward(&grad)?;
        let (g_img, g_aud) = split(&joined, self.config.image.output_dim)?;
        self.image.backward_params(&g_img)?;
        self.audio.backward_params(&g_aud)?;
        Ok(loss.as_f64())
    }

    /// One SGD step; returns the batch loss before the update.
    pub fn train_step(&mut self, images: &Tensor<T>, mels: &Tensor<T>, labels: &[usize], sgd: &Sgd) -> Result<f64> {
        self.zero_grad();
        let loss = self.accumulate_gradients(images, mels, labels)?;
        sgd.step(self.params_mut());
        Ok(loss)
    }

    pub fn zero_grad(&mut self) {
        self.image.zero_grad();
        self.audio.zero_grad();
        self.head.zero_grad();
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.image.params_mut().chain(self.audio.params_mut()).chain(self.head.params_mut())
    }

    pub fn param_count(&self) -> usize {
        self.image.param_count() + self.audio.param_count() + self.head.param_count()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.to_string(),
            config: serde_json::to_string(&self.config).expect("config serializes"),
            sections: self.config.sections(),
            params: gather_params(&[&self.image, &self.audio, &self.head]),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected a {CHECKPOINT_KIND} checkpoint, found {:?}", ckpt.kind)));
        }
        let config: CorrespondenceConfig = serde_json::from_str(&ckpt.config)
            .map_err(|e| Error::Corruption(format!("checkpoint config: {e}")))?;
        if ckpt.sections != config.sections() {
            return Err(Error::Corruption("checkpoint layer table disagrees with its config".into()));
        }
        let mut model = CorrespondenceModel::new(config, &mut derived(0, 0))?;
        scatter_params(&mut [&mut model.image, &mut model.audio, &mut model.head], &ckpt.params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&Checkpoint::load(path)?).map_err(|e| e.at(path))
    }

    /// Digest of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        crate::hash::digest(&self.to_checkpoint().to_bytes())
    }
}

fn pair_tensors<T: Scalar>(images: &[ImageTensor<T>], mels: &[MelPatch<T>]) -> Result<(Tensor<T>, Tensor<T>)> {
    let imgs: Vec<Tensor<T>> = images.iter().map(ImageTensor::to_tensor).collect();
    let auds: Vec<Tensor<T>> = mels.iter().map(MelPatch::to_tensor).collect();
    Ok((Tensor::stack(&imgs)?, Tensor::stack(&auds)?))
}

/// Mean cross-entropy of a fixed batch, for gradient checking the full model.
pub struct CorrespondenceProbe<T: Scalar> {
    pub model: CorrespondenceModel<T>,
    pub images: Tensor<T>,
    pub mels: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> CorrespondenceProbe<T> {
    fn param_at(&mut self, mut i: usize) -> &mut Parameter<T> {
        for stack in [&mut self.model.image, &mut self.model.audio, &mut self.model.head] {
            let n = stack.params().count();
            if i < n {
                return stack.params_mut().nth(i).expect("index checked");
            }
            i -= n;
        }
        panic!("parameter index out of range")
    }
}

impl<T: Scalar> Objective<T> for CorrespondenceProbe<T> {
    fn loss(&self) -> Result<f64> {
        let logits = self.model.logits(&self.images, &self.mels)?;
        let mut total = 0.0;
        for (row, &label) in logits.data().chunks(2).zip(&self.labels) {
            let (a, b) = (row[0].as_f64(), row[1].as_f64());
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            total += lse - row[label].as_f64();
        }
        Ok(total / self.labels.len() as f64)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.model.accumulate_gradients(&self.images, &self.mels, &self.labels)
    }

    fn num_params(&self) -> usize {
        [&self.model.image, &self.model.audio, &self.model.head].iter().map(|s| s.params().count()).sum()
    }

    fn param_mut(&mut self, i: usize) -> &mut Parameter<T> {
        self.param_at(i)
    }
}

/// One labeled (image, 4 s audio) pair.
#[derive(Debug, Clone)]
pub struct PairSample<T> {
    pub image: ImageTensor<T>,
    pub audio: MelPatch<T>,
    pub label: usize,
    pub image_track: usize,
    pub audio_track: usize,
    /// First sample of the audio excerpt within its track.
    pub audio_start: usize,
}

/// Draws balanced batches of pairs. Anchors supply the image; negatives come
/// from `negative_pool` tracks outside the anchor's album.
pub struct PairSampler<'a, T: Scalar> {
    catalog: &'a Catalog,
    anchors: Vec<usize>,
    negatives: Vec<Vec<usize>>,
    augment: bool,
    extractor: MelExtractor<T>,
}

impl<'a, T: Scalar> PairSampler<'a, T> {
    pub fn new(catalog: &'a Catalog, anchors: &[usize], negative_pool: &[usize], augment: bool) -> Result<Self> {
        if catalog.len() < 2 {
            return precondition("pair sampling needs at least 2 tracks");
        }
        if anchors.is_empty() {
            return precondition("pair sampling needs at least one anchor track");
        }
        for t in &catalog.tracks {
            if t.audio.len() < CLIP_SAMPLES {
                return precondition(format!("track {:?} is shorter than 4 s", t.track_id));
            }
        }
        let negatives = anchors
            .iter()
            .map(|&a| {
                let album = &catalog.tracks[a].album_id;
                let pool: Vec<usize> =
                    negative_pool.iter().copied().filter(|&t| t != a && &catalog.tracks[t].album_id != album).collect();
                if pool.is_empty() {
                    precondition(format!("track {:?} has no track outside its album to pair with", catalog.tracks[a].track_id))
                } else {
                    Ok(pool)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairSampler { catalog, anchors: anchors.to_vec(), negatives, augment, extractor: MelExtractor::new() })
    }

    /// Sampler over the whole catalog with augmentation on.
    pub fn for_catalog(catalog: &'a Catalog) -> Result<Self> {
        let all: Vec<usize> = (0..catalog.len()).collect();
        Self::new(catalog, &all, &all, true)
    }

    fn pair(&self, slot: usize, label: usize, rng: &mut Rng) -> Result<PairSample<T>> {
        let anchor = self.anchors[slot];
        let audio_track = if label == LABEL_MATCH {
            anchor
        } else {
            let pool = &self.negatives[slot];
            pool[rng.gen_range(0..pool.len())]
        };
        let track = &self.catalog.tracks[audio_track];
        let audio_start = rng.gen_range(0..=track.audio.len() - CLIP_SAMPLES);
        let mut clip = track.audio.slice(audio_start, CLIP_SAMPLES);
        let mut image = self.catalog.tracks[anchor].artwork.cast::<T>();
        if self.augment {
            image = augment_image(&image, rng);
            clip = augment_audio(&clip, rng);
        }
        Ok(PairSample { image, audio: self.extractor.extract(&clip)?, label, image_track: anchor, audio_track, audio_start })
    }

    /// `batch_size / 2` matching and `batch_size / 2` mismatching pairs, interleaved.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<PairSample<T>>> {
        if batch_size < 2 || batch_size % 2 != 0 {
            return precondition(format!("batch size must be even and >= 2, got {batch_size}"));
        }
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size / 2 {
            for label in [LABEL_MATCH, LABEL_MISMATCH] {
                let slot = rng.gen_range(0..self.anchors.len());
                out.push(self.pair(slot, label, rng)?);
            }
        }
        Ok(out)
    }
}

/// Balanced, augmented pairs over the whole catalog.
pub fn sample_pairs<T: Scalar>(catalog: &Catalog, batch_size: usize, rng: &mut Rng) -> Result<Vec<PairSample<T>>> {
    PairSampler::for_catalog(catalog)?.sample(batch_size, rng)
}

/// Stack pairs into model inputs.
pub fn batch_tensors<T: Scalar>(pairs: &[PairSample<T>]) -> Result<(Tensor<T>, Tensor<T>, Vec<usize>)> {
    let imgs: Vec<Tensor<T>> = pairs.iter().map(|p| p.image.to_tensor()).collect();
    let auds: Vec<Tensor<T>> = pairs.iter().map(|p| p.audio.to_tensor()).collect();
    Ok((Tensor::stack(&imgs)?, Tensor::stack(&auds)?, pairs.iter().map(|p| p.label).collect()))
}

/// Held-out track split: `max(1, round(fraction * n))` tracks drawn at random.
/// Returns `(train, holdout)`, each sorted.
pub fn split_tracks(n: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return precondition(format!("holdout fraction must be in [0, 1), got {fraction}"));
    }
    if n < 3 {
        return precondition("a held-out split needs at least 3 tracks");
    }
    let held = ((fraction * n as f64).round() as usize).clamp(1, n - 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut holdout = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

/// Pair-level accuracy, split by whether a negative shares the anchor's class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub pairs: usize,
    pub accuracy: f64,
    pub positive_accuracy: f64,
    pub negative_accuracy: f64,
    /// Positives plus negatives drawn from a different class.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_class_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub same_class_negative_accuracy: Option<f64>,
    pub cross_class_negatives: usize,
    pub same_class_negatives: usize,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// A score of 0.5 or above predicts "mismatch".
pub fn predicted_label(score: f64) -> usize {
    if score >= 0.5 {
        LABEL_MISMATCH
    } else {
        LABEL_MATCH
    }
}

pub fn evaluate_pairs<T: Scalar>(model: &CorrespondenceModel<T>, catalog: &Catalog, pairs: &[PairSample<T>]) -> Result<PairAccuracy> {
    const CHUNK: usize = 16;
    let mut scores = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(CHUNK) {
        let (imgs, auds, _) = batch_tensors(chunk)?;
        let logits = model.logits(&imgs, &auds)?;
        scores.extend(logits.data().chunks(2).map(mismatch_probability));
    }
    Ok(tally(catalog, pairs, &scores))
}

/// Accuracy breakdown for externally computed scores.
pub fn tally<T>(catalog: &Catalog, pairs: &[PairSample<T>], scores: &[f64]) -> PairAccuracy {
    let (mut pos, mut pos_ok, mut neg_ok) = (0, 0, 0);
    let (mut cross, mut cross_ok, mut same, mut same_ok) = (0, 0, 0, 0);
    let mut has_classes = true;
    for (p, &s) in pairs.iter().zip(scores) {
        let ok = predicted_label(s) == p.label;
        if p.label == LABEL_MATCH {
            pos += 1;
            pos_ok += ok as usize;
            continue;
        }
        neg_ok += ok as usize;
        match (catalog.tracks[p.image_track].class_id, catalog.tracks[p.audio_track].class_id) {
            (Some(a), Some(b)) if a != b => {
                cross += 1;
                cross_ok += ok as usize;
            }
            (Some(_), Some(_)) => {
                same += 1;
                same_ok += ok as usize;
            }
            _ => has_classes = false,
        }
    }
    let neg = pairs.len() - pos;
    PairAccuracy {
        pairs: pairs.len(),
        accuracy: ratio(pos_ok + neg_ok, pairs.len()),
        positive_accuracy: ratio(pos_ok, pos),
        negative_accuracy: ratio(neg_ok, neg),
        cross_class_accuracy: has_classes.then(|| ratio(pos_ok + cross_ok, pos + cross)),
        same_class_negative_accuracy: (has_classes && same > 0).then(|| ratio(same_ok, same)),
        cross_class_negatives: cross,
        same_class_negatives: same,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Held-out evaluation cadence in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    pub eval_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
            holdout_fraction: 0.1,
            eval_every: 100,
            eval_pairs: 200,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_class_accuracy: Option<f64>,
}

/// Everything needed to reproduce or audit a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub seed: u64,
    pub rng: String,
    pub train_tracks: Vec<String>,
    pub holdout_tracks: Vec<String>,
    pub train: TrainConfig,
    pub model: CorrespondenceConfig,
    pub final_eval: PairAccuracy,
    pub final_loss: f64,
}

const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// Fixed, non-augmented evaluation pairs anchored on the held-out tracks.
pub fn holdout_pairs<T: Scalar>(catalog: &Catalog, holdout: &[usize], count: usize, seed: u64) -> Result<Vec<PairSample<T>>> {
    let all: Vec<usize> = (0..catalog.len()).collect();
    let sampler = PairSampler::new(catalog, holdout, &all, false)?;
    sampler.sample(count.max(2) & !1, &mut derived(seed, STREAM_EVAL))
}

/// Train from scratch; `on_metric` sees every log record as it is produced.
pub fn train_correspondence<T: Scalar>(
    catalog: &Catalog,
    model_config: &CorrespondenceConfig,
    config: &TrainConfig,
    mut on_metric: impl FnMut(&MetricRecord),
) -> Result<(CorrespondenceModel<T>, TrainRun)> {
    if config.steps == 0 {
        return precondition("steps must be >= 1");
    }
    let sgd = Sgd::new(config.lr, config.momentum)?;
    let mut model = CorrespondenceModel::<T>::new(model_config.clone(), &mut derived(config.seed, STREAM_INIT))?;
    let (train, holdout) = split_tracks(catalog.len(), config.holdout_fraction, &mut derived(config.seed, STREAM_SPLIT))?;
    let sampler = PairSampler::<T>::new(catalog, &train, &train, true)?;
    let eval = holdout_pairs::<T>(catalog, &holdout, config.eval_pairs, config.seed)?;
    let mut rng = derived(config.seed, STREAM_BATCH);
    let mut last = (0.0, PairAccuracy::default());
    for step in 1..=config.steps {
        let batch = sampler.sample(config.batch_size, &mut rng)?;
        let (imgs, auds, labels) = batch_tensors(&batch)?;
        let loss = model.train_step(&imgs, &auds, &labels, &sgd)?;
        if !loss.is_finite() {
            return Err(Error::Training { step, detail: format!("loss became {loss}") });
        }
        if !model.params_mut().all(|p| p.value.is_finite()) {
            return Err(Error::Training { step, detail: "parameters became non-finite".into() });
        }
        let evaluate = step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0);
        let mut record = MetricRecord { step, loss, accuracy: None, cross_class_accuracy: None };
        if evaluate {
            let acc = evaluate_pairs(&model, catalog, &eval)?;
            record.accuracy = Some(acc.accuracy);
            record.cross_class_accuracy = acc.cross_class_accuracy;
            last.1 = acc;
        }
        last.0 = loss;
        on_metric(&record);
    }
    let ids = |v: &[usize]| v.iter().map(|&i| catalog.tracks[i].track_id.clone()).collect();
    let run = TrainRun {
        seed: config.seed,
        rng: RNG_ALGORITHM.to_string(),
        train_tracks: ids(&train),
        holdout_tracks: ids(&holdout),
        train: config.clone(),
        model: model_config.clone(),
        final_eval: last.1,
        final_loss: last.0,
    };
    Ok((model, run))
}
