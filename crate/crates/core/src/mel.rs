//! Log-mel patches: 25 ms Hann frames every 12.5 ms, 512-point FFT, 100 HTK
//! triangular filters over 0–8 kHz, `ln(energy + 1e-6)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{precondition, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const N_MELS: usize = 100;
pub const N_FRAMES: usize = 320;
pub const N_FFT: usize = 512;
pub const WIN_LENGTH: usize = 400;
pub const HOP_LENGTH: usize = 200;
pub const LOG_FLOOR: f64 = 1e-6;
pub const F_MAX: f64 = 8000.0;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, peak weight 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    /// `n_mels x n_bins`, row-major.
    weights: Vec<T>,
    /// `n_mels + 2` edge frequencies; filter `m` spans `edges[m]..edges[m+2]`
    /// and peaks at `edges[m+1]`.
    edges: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut weights = vec![T::zero(); n_mels * n_bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - left) / (center - left)).min((right - f) / (right - center));
                if w > 0.0 {
                    weights[m * n_bins + k] = T::cast(w);
                }
            }
        }
        MelFilterbank { weights, edges, n_mels, n_bins }
    }

    pub fn canonical() -> Self {
        Self::new(N_MELS, N_FFT, SAMPLE_RATE, 0.0, F_MAX)
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn filter(&self, m: usize) -> &[T] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges[1..=self.n_mels].to_vec()
    }

    /// Continuous support `(left, right)` of filter `m` in Hz.
    pub fn support(&self, m: usize) -> (f64, f64) {
        (self.edges[m], self.edges[m + 2])
    }

    /// Mel energies of one power spectrum.
    pub fn apply(&self, power: &[T], out: &mut [T]) {
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            *o = self.filter(m).iter().zip(power).map(|(&w, &p)| w * p).sum();
        }
    }
}

/// 100 x 320 log-mel matrix (bins x frames), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelPatch<T> {
    pub values: Vec<T>,
    pub bins: usize,
    pub frames: usize,
    pub bin_centers: Vec<f64>,
}

impl<T: Scalar> MelPatch<T> {
    pub fn get(&self, bin: usize, frame: usize) -> T {
        self.values[bin * self.frames + frame]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    /// `[bins, frames, 1]` image-like tensor for the convolutional branches.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(&[self.bins, self.frames, 1], self.values.clone()).expect("mel patch shape")
    }

    /// Index of the loudest bin in `frame`.
    pub fn argmax_bin(&self, frame: usize) -> usize {
        (0..self.bins)
            .max_by(|&a, &b| self.get(a, frame).partial_cmp(&self.get(b, frame)).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0)
    }

    pub fn cast<U: Scalar>(&self) -> MelPatch<U> {
        MelPatch {
            values: self.values.iter().map(|v| U::cast(v.as_f64())).collect(),
            bins: self.bins,
            frames: self.frames,
            bin_centers: self.bin_centers.clone(),
        }
    }

    /// Stable content digest used for caching.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        crate::hash::digest(&bytes)
    }
}

/// Reusable STFT + filterbank front end.
pub struct MelExtractor<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    bank: MelFilterbank<T>,
}

impl<T: Scalar> Default for MelExtractor<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MelExtractor<T> {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        // periodic Hann
        let window = (0..WIN_LENGTH)
            .map(|n| T::cast(0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WIN_LENGTH as f64).cos()))
            .collect();
        MelExtractor { fft, window, bank: MelFilterbank::canonical() }
    }

    pub fn filterbank(&self) -> &MelFilterbank<T> {
        &self.bank
    }

    /// Log-mel patch of a 16 kHz clip of at most 64000 samples (zero-padded).
    pub fn extract(&self, clip: &AudioClip) -> Result<MelPatch<T>> {
        if clip.sample_rate != SAMPLE_RATE {
            return precondition(format!("mel patch needs {SAMPLE_RATE} Hz audio, got {}", clip.sample_rate));
        }
        if clip.samples.len() > CLIP_SAMPLES {
            return precondition(format!(
                "mel patch takes at most {CLIP_SAMPLES} samples, got {}",
                clip.samples.len()
            ));
        }
        let n_bins = self.bank.n_bins();
        let floor = T::cast(LOG_FLOOR);
        let mut values = vec![T::zero(); N_MELS * N_FRAMES];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); N_FFT];
        let mut power = vec![T::zero(); n_bins];
        let mut mel = vec![T::zero(); N_MELS];
        for frame in 0..N_FRAMES {
            let start = frame * HOP_LENGTH;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = if i < WIN_LENGTH {
                    clip.samples.get(start + i).map_or(T::zero(), |&v| T::cast(v as f64)) * self.window[i]
                } else {
                    T::zero()
                };
                *b = Complex::new(s, T::zero());
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.bank.apply(&power, &mut mel);
            for (m, &e) in mel.iter().enumerate() {
                values[m * N_FRAMES + frame] = (e + floor).ln();
            }
        }
        Ok(MelPatch { values, bins: N_MELS, frames: N_FRAMES, bin_centers: self.bank.centers() })
    }
}

/// One-shot convenience over [`MelExtractor::extract`].
pub fn mel_patch<T: Scalar>(clip: &AudioClip) -> Result<MelPatch<T>> {
    MelExtractor::new().extract(clip)
}
