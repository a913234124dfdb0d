//! Synthetic paired artwork/audio corpus with a known class structure.
//!
//! Class `k` owns a hue band and a disjoint audio frequency band with its own
//! pulse rate. A separate three-class clip set (tones, noise, clicks) feeds the
//! audio embedder.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_pcm16, AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{precondition, Error, Result};
use crate::imaging::write_png;
use crate::manifest::{LabelManifest, LabeledClipEntry, LibraryManifest, PaintingEntry, TrackEntry};
use crate::rng::{derived, Rng};

/// Lowest and highest edge of the audio band partition, in Hz.
const BAND_LOW: f64 = 200.0;
const BAND_HIGH: f64 = 7000.0;
/// Fraction of each hue sector left unused on either side.
const HUE_MARGIN: f64 = 0.15;
/// Multiplicative guard between neighbouring audio bands.
const BAND_GUARD: f64 = 1.1;
const ART_SIDE: usize = 256;

const STREAM_TRACK_AUDIO: u64 = 1 << 32;
const STREAM_TRACK_ART: u64 = 2 << 32;
const STREAM_PAINTING: u64 = 3 << 32;
const STREAM_BRUSH: u64 = 4 << 32;
const STREAM_CLIP: u64 = 5 << 32;

pub const CLIP_CLASSES: [&str; 3] = ["tones", "noise", "clicks"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_tracks: usize,
    pub classes: usize,
    pub seed: u64,
    pub track_duration: f64,
    pub tracks_per_album: usize,
    /// Labeled clips per embedder class; 0 skips the clip set.
    pub clips_per_class: usize,
    pub brush_duration: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_tracks: 20,
            classes: 4,
            seed: 7,
            track_duration: 40.0,
            tracks_per_album: 2,
            clips_per_class: 100,
            brush_duration: 12.0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return precondition("toy corpus needs at least 2 classes");
        }
        if self.n_tracks < 2 {
            return precondition("toy corpus needs at least 2 tracks");
        }
        if self.tracks_per_album == 0 {
            return precondition("tracks_per_album must be >= 1");
        }
        if !(self.track_duration >= 4.0) {
            return precondition("track_duration must be at least 4 s");
        }
        if !(self.brush_duration >= 4.0) {
            return precondition("brush_duration must be at least 4 s");
        }
        Ok(())
    }

    /// Hue band of class `k` in degrees, `[lo, hi]`.
    pub fn hue_band(&self, k: usize) -> (f64, f64) {
        let sector = 360.0 / self.classes as f64;
        (sector * (k as f64 + HUE_MARGIN), sector * (k as f64 + 1.0 - HUE_MARGIN))
    }

    /// Audio frequency band of class `k` in Hz, `[lo, hi]`.
    pub fn audio_band(&self, k: usize) -> (f64, f64) {
        let edge = |i: usize| BAND_LOW * (BAND_HIGH / BAND_LOW).powf(i as f64 / self.classes as f64);
        (edge(k) * BAND_GUARD, edge(k + 1) / BAND_GUARD)
    }

    /// Amplitude pulse rate of class `k` in Hz.
    pub fn pulse_rate(&self, k: usize) -> f64 {
        1.0 + 1.5 * k as f64
    }

    pub fn class_of(&self, track: usize) -> usize {
        (track / self.tracks_per_album) % self.classes
    }

    pub fn album_of(&self, track: usize) -> usize {
        track / self.tracks_per_album
    }
}

/// Paths written by [`generate`].
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub manifest_path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub brush_path: PathBuf,
    pub manifest: LibraryManifest,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::from(e).at(path))
}

pub fn generate(spec: &ToySpec, out_dir: impl AsRef<Path>) -> Result<ToyCorpus> {
    spec.validate()?;
    let out = out_dir.as_ref();
    for sub in ["tracks", "art", "paintings"] {
        create_dir(&out.join(sub))?;
    }
    let width = (spec.n_tracks - 1).to_string().len().max(2);
    let mut manifest = LibraryManifest::default();
    for i in 0..spec.n_tracks {
        let class = spec.class_of(i);
        let name = format!("track-{i:0width$}");
        let audio_rel = PathBuf::from("tracks").join(format!("{name}.wav"));
        let art_rel = PathBuf::from("art").join(format!("{name}.png"));
        let clip = class_audio(spec, class, spec.track_duration, &mut derived(spec.seed, STREAM_TRACK_AUDIO + i as u64));
        write_wav_pcm16(out.join(&audio_rel), &clip)?;
        let art = class_artwork(spec, class, &mut derived(spec.seed, STREAM_TRACK_ART + i as u64));
        write_png(out.join(&art_rel), &art, ART_SIDE as u32, ART_SIDE as u32)?;
        manifest.tracks.push(TrackEntry {
            track_id: name,
            audio_path: audio_rel,
            artwork_path: art_rel,
            album_id: format!("album-{:0width$}", spec.album_of(i)),
            class_id: Some(class),
        });
    }
    for k in 0..spec.classes {
        let rel = PathBuf::from("paintings").join(format!("painting-{k}.png"));
        let art = class_artwork(spec, k, &mut derived(spec.seed, STREAM_PAINTING + k as u64));
        write_png(out.join(&rel), &art, ART_SIDE as u32, ART_SIDE as u32)?;
        manifest.paintings.push(PaintingEntry { painting_id: format!("painting-{k}"), image_path: rel });
    }
    let brush_path = out.join("brush.wav");
    write_wav_pcm16(&brush_path, &brush_audio(spec, &mut derived(spec.seed, STREAM_BRUSH)))?;

    let manifest_path = out.join("manifest.json");
    manifest.save(&manifest_path)?;

    let labels_path = if spec.clips_per_class > 0 {
        let path = out.join("labels.json");
        generate_clip_set(spec.clips_per_class, spec.seed, out)?.save(&path)?;
        Some(path)
    } else {
        None
    };
    Ok(ToyCorpus { manifest_path, labels_path, brush_path, manifest })
}

/// Writes `clips/<class>-NNN.wav` and returns the label manifest (paths relative to `out`).
pub fn generate_clip_set(per_class: usize, seed: u64, out: &Path) -> Result<LabelManifest> {
    create_dir(&out.join("clips"))?;
    let mut labels = LabelManifest { classes: CLIP_CLASSES.iter().map(|s| s.to_string()).collect(), clips: vec![] };
    for (c, name) in CLIP_CLASSES.iter().enumerate() {
        for j in 0..per_class {
            let mut rng = derived(seed, STREAM_CLIP + (c * per_class + j) as u64);
            let clip = labeled_clip(c, &mut rng);
            let rel = PathBuf::from("clips").join(format!("{name}-{j:03}.wav"));
            write_wav_pcm16(out.join(&rel), &clip)?;
            labels.clips.push(LabeledClipEntry { path: rel, class_id: c });
        }
    }
    Ok(labels)
}

fn n_samples(seconds: f64) -> usize {
    (seconds * SAMPLE_RATE as f64).round() as usize
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn peak_normalize(mut x: Vec<f64>, peak: f64) -> AudioClip {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / max);
    }
    AudioClip::new(x.into_iter().map(|v| v as f32).collect(), SAMPLE_RATE).expect("finite synthetic audio")
}

/// Gaussian noise with every FFT bin outside `[lo, hi]` Hz removed, unit RMS.
fn band_noise(n: usize, lo: f64, hi: f64, rng: &mut Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(normal(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = SAMPLE_RATE as f64 / n as f64;
    for (i, v) in buf.iter_mut().enumerate() {
        let f = i.min(n - i) as f64 * bin_hz;
        if f < lo || f > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Raised-cosine pulse train in [floor, 1].
fn pulse_envelope(n: usize, rate: f64, phase: f64, floor: f64) -> Vec<f64> {
    const WIDTH: f64 = 0.12;
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let pos = (t * rate + phase).fract() / rate;
            let bump = if pos < WIDTH { 0.5 - 0.5 * (2.0 * PI * pos / WIDTH).cos() } else { 0.0 };
            floor + (1.0 - floor) * bump
        })
        .collect()
}

/// Band-limited noise plus a note sequence inside the class band, pulsed at the class rate.
pub fn class_audio(spec: &ToySpec, class: usize, seconds: f64, rng: &mut Rng) -> AudioClip {
    let n = n_samples(seconds);
    let (lo, hi) = spec.audio_band(class);
    let noise = band_noise(n, lo, hi, rng);
    let (note_lo, note_hi) = (lo * 1.05, hi / 1.05);
    let note_len = n_samples(rng.gen_range(0.4..0.8));
    let mut tones = vec![0.0; n];
    let mut phases = [0.0f64; 2];
    let mut freqs = [0.0f64; 2];
    for (i, out) in tones.iter_mut().enumerate() {
        if i % note_len == 0 {
            for f in &mut freqs {
                *f = note_lo * (note_hi / note_lo).powf(rng.gen::<f64>());
            }
        }
        for (p, f) in phases.iter_mut().zip(freqs) {
            *p = (*p + 2.0 * PI * f / SAMPLE_RATE as f64) % (2.0 * PI);
            *out += p.sin();
        }
    }
    let rate = spec.pulse_rate(class) * rng.gen_range(0.9..1.1);
    let env = pulse_envelope(n, rate, rng.gen(), 0.3);
    let noise_gain = rng.gen_range(0.3..0.6);
    let x = (0..n).map(|i| env[i] * (noise_gain * noise[i] + 0.5 * tones[i])).collect();
    peak_normalize(x, rng.gen_range(0.5..0.8))
}

/// Scratchy brush-stroke bursts: band noise of a random class gated by irregular strokes.
fn brush_audio(spec: &ToySpec, rng: &mut Rng) -> AudioClip {
    let n = n_samples(spec.brush_duration);
    let class = rng.gen_range(0..spec.classes);
    let (lo, hi) = spec.audio_band(class);
    let noise = band_noise(n, lo, hi, rng);
    let mut env = vec![0.05; n];
    let mut t = 0;
    while t < n {
        let len = n_samples(rng.gen_range(0.15..0.6));
        let amp = rng.gen_range(0.5..1.0);
        for (j, e) in env.iter_mut().skip(t).take(len).enumerate() {
            *e += amp * (PI * j as f64 / len as f64).sin();
        }
        t += len + n_samples(rng.gen_range(0.05..0.3));
    }
    peak_normalize(noise.iter().zip(&env).map(|(a, b)| a * b).collect(), 0.7)
}

/// One 4 s clip of class `class` in [`CLIP_CLASSES`] order.
pub fn labeled_clip(class: usize, rng: &mut Rng) -> AudioClip {
    let n = CLIP_SAMPLES;
    let rate = SAMPLE_RATE as f64;
    let x: Vec<f64> = match class {
        0 => {
            let k = rng.gen_range(1..=3);
            let parts: Vec<(f64, f64, f64)> = (0..k)
                .map(|_| (200.0 * 20f64.powf(rng.gen::<f64>()), rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)))
                .collect();
            (0..n)
                .map(|i| parts.iter().map(|(f, a, p)| a * (2.0 * PI * f * i as f64 / rate + p).sin()).sum())
                .collect()
        }
        1 => (0..n).map(|_| normal(rng)).collect(),
        _ => {
            let period = (rate / rng.gen_range(2.0..8.0)) as usize;
            let decay = rng.gen_range(0.002..0.008) * rate;
            let offset = rng.gen_range(0..period);
            (0..n)
                .map(|i| {
                    let since = (i + period - offset) % period;
                    normal(rng) * (-(since as f64) / decay).exp()
                })
                .collect()
        }
    };
    let peak = rng.gen_range(0.2..0.9);
    peak_normalize(x, peak)
}

/// HSV (hue in degrees) to unit RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Textured 256x256 RGB image whose every pixel hue lies in the class band.
pub fn class_artwork(spec: &ToySpec, class: usize, rng: &mut Rng) -> Vec<u8> {
    let (lo, hi) = spec.hue_band(class);
    let span = hi - lo;
    let base = rng.gen_range(lo + 0.3 * span..hi - 0.3 * span);
    let clamp_hue = |h: f64| h.clamp(lo + 0.02 * span, hi - 0.02 * span);
    // hue, saturation, value per pixel
    let mut hsv = vec![[base, rng.gen_range(0.5..0.8), rng.gen_range(0.5..0.8)]; ART_SIDE * ART_SIDE];
    let strokes = rng.gen_range(30..60);
    for _ in 0..strokes {
        let (cx, cy) = (rng.gen_range(0.0..ART_SIDE as f64), rng.gen_range(0.0..ART_SIDE as f64));
        let angle = rng.gen_range(0.0..PI);
        let (len, thick) = (rng.gen_range(20.0..90.0), rng.gen_range(3.0..12.0));
        let colour = [
            clamp_hue(base + rng.gen_range(-0.3..0.3) * span),
            rng.gen_range(0.35..1.0),
            rng.gen_range(0.35..1.0),
        ];
        let (dx, dy) = (angle.cos(), angle.sin());
        for y in 0..ART_SIDE {
            for x in 0..ART_SIDE {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let along = px * dx + py * dy;
                let across = -px * dy + py * dx;
                if along.abs() <= len / 2.0 && across.abs() <= thick / 2.0 {
                    hsv[y * ART_SIDE + x] = colour;
                }
            }
        }
    }
    hsv.iter()
        .flat_map(|&[h, s, v]| {
            let jitter = 1.0 + 0.06 * (rng.gen::<f64>() - 0.5);
            hsv_to_rgb(h, s, (v * jitter).min(1.0)).map(|c| (c * 255.0).round() as u8)
        })
        .collect()
}
