//! Painting-to-music retrieval: audio and image front ends, a dual-branch
//! correspondence scorer, an audio embedder with an exact chunk index, and the
//! two-step selection pipeline that combines them.

pub mod audio;
pub mod correspondence;
pub mod embedder;
pub mod error;
pub mod hash;
pub mod imaging;
pub mod index;
pub mod manifest;
pub mod mel;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod selection;
pub mod toy;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision instantiations used by the pipeline and tools.
pub type Tensor = nn::Tensor<f32>;
pub type ImageTensor = imaging::ImageTensor<f32>;
pub type MelPatch = mel::MelPatch<f32>;
pub type CorrespondenceModel = correspondence::CorrespondenceModel<f32>;
pub type AudioEmbedder = embedder::AudioEmbedder<f32>;
pub type EmbeddingIndex = index::EmbeddingIndex<f32>;
