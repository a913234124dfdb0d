//! Audio decoding, resampling, amplitude augmentation and WAV writing.

use std::io::Cursor;
use std::path::Path;

use rand::Rng as _;

use crate::error::{precondition, Error, Result};
use crate::rng::Rng;

pub const SAMPLE_RATE: u32 = 16_000;
pub const CLIP_SECONDS: f64 = 4.0;
/// Samples in one canonical 4 s clip at 16 kHz.
pub const CLIP_SAMPLES: usize = 64_000;

/// Mono audio in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return precondition("sample rate must be > 0");
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return precondition("samples must be finite");
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioClip { samples: vec![0.0; len], sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Consecutive non-overlapping 4 s clips; a trailing remainder is dropped.
    pub fn canonical_chunks(&self) -> impl Iterator<Item = AudioClip> + '_ {
        let rate = self.sample_rate;
        self.samples
            .chunks_exact(CLIP_SAMPLES)
            .map(move |c| AudioClip { samples: c.to_vec(), sample_rate: rate })
    }

    /// Samples `[start, start + len)`, zero-filled past the end.
    pub fn slice(&self, start: usize, len: usize) -> AudioClip {
        let mut samples = vec![0.0; len];
        if start < self.samples.len() {
            let end = (start + len).min(self.samples.len());
            samples[..end - start].copy_from_slice(&self.samples[start..end]);
        }
        AudioClip { samples, sample_rate: self.sample_rate }
    }
}

/// Decoded WAV: one vector per channel.
struct Decoded {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

fn decode_wav(raw: &[u8]) -> Result<Decoded> {
    let reader = hound::WavReader::new(Cursor::new(raw)).map_err(|e| match e {
        hound::Error::Unsupported => Error::UnsupportedFormat("WAV encoding".into()),
        other => Error::Decode(format!("malformed WAV: {other}")),
    })?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::Decode("WAV declares zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} WAV (only 16-bit PCM and 32-bit float are read)"
            )))
        }
    }
    .map_err(|e| Error::Decode(format!("WAV sample data: {e}")))?;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Decoded { channels, sample_rate: spec.sample_rate })
}

/// Decode a WAV as-is: mono mixdown at the file's own rate, plus its channel count.
pub fn decode_native(raw: &[u8]) -> Result<(AudioClip, usize)> {
    let decoded = decode_wav(raw)?;
    let channels = decoded.channels.len();
    let inv = 1.0 / channels as f32;
    let n = decoded.channels[0].len();
    let samples = (0..n).map(|i| decoded.channels.iter().map(|c| c[i]).sum::<f32>() * inv).collect();
    Ok((AudioClip::new(samples, decoded.sample_rate)?, channels))
}

/// Decode a PCM16 or float32 WAV, average channels to mono and resample.
pub fn decode_resample(raw: &[u8], target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return precondition("target rate must be > 0");
    }
    let decoded = decode_wav(raw)?;
    let n = decoded.channels[0].len();
    let inv = 1.0 / decoded.channels.len() as f32;
    let mono: Vec<f32> = (0..n)
        .map(|i| {
            let v = decoded.channels.iter().map(|c| c[i]).sum::<f32>() * inv;
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let samples = resample(&mono, decoded.sample_rate, target_rate);
    Ok(AudioClip { samples, sample_rate: target_rate })
}

pub fn read_wav(path: impl AsRef<Path>, target_rate: u32) -> Result<AudioClip> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode_resample(&raw, target_rate).map_err(|e| e.at(path))
}

const SINC_ZEROS: f64 = 24.0;
const ROLLOFF: f64 = 0.94;

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let t = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited (Blackman-windowed sinc) resampling. Output length is
/// `round(len * to / from)`; equal rates return the input unchanged.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = SINC_ZEROS / cutoff;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|m| {
            let t = m as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0f64;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                acc += x as f64 * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

/// Scale by `10^(db/20)` and clip to [-1, 1].
pub fn apply_gain_db(clip: &AudioClip, db: f64) -> AudioClip {
    let gain = 10f64.powf(db / 20.0);
    AudioClip {
        samples: clip.samples.iter().map(|&s| ((s as f64) * gain).clamp(-1.0, 1.0) as f32).collect(),
        sample_rate: clip.sample_rate,
    }
}

/// Random attenuation drawn uniformly from [-12, 0] dB.
pub fn augment_audio(clip: &AudioClip, rng: &mut Rng) -> AudioClip {
    let db = rng.gen_range(-12.0..=0.0);
    apply_gain_db(clip, db)
}

fn wav_bytes<F>(clip: &AudioClip, spec: hound::WavSpec, write: F) -> Vec<u8>
where
    F: Fn(&mut hound::WavWriter<&mut Cursor<Vec<u8>>>, f32) -> hound::Result<()>,
{
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory WAV writer");
        for &s in &clip.samples {
            write(&mut w, s).expect("in-memory WAV write");
        }
        w.finalize().expect("in-memory WAV finalize");
    }
    cursor.into_inner()
}

pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    wav_bytes(clip, spec, |w, s| w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16))
}

pub fn encode_wav_f32(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    wav_bytes(clip, spec, |w, s| w.write_sample(s))
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(clip)).map_err(|e| Error::from(e).at(path))
}
