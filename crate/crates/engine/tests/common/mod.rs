#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use brushwork::audio::{encode_wav_pcm16, write_wav_pcm16, AudioClip, SAMPLE_RATE};
use brushwork::correspondence::{BranchConfig, CorrespondenceConfig};
use brushwork::embedder::EmbedderConfig;
use brushwork::imaging::{encode_png, ingest_image, write_png};
use brushwork::index::{build_index, IndexManifest, IndexedTrack};
use brushwork::manifest::{LibraryManifest, PaintingEntry};
use brushwork::rng::{derived, seeded};
use brushwork::selection::ChunkLibrary;
use brushwork::toy::{class_artwork, class_audio, ToySpec};
use brushwork::{AudioEmbedder, CorrespondenceModel, ImageTensor};
use brushwork_engine::{Resources, SessionConfig};

pub const ART: u32 = 256;

pub fn compact_config() -> CorrespondenceConfig {
    let branch = |c| BranchConfig { in_channels: c, channels: vec![8, 8, 16, 16], kernel: 3, stem_stride: 2, output_dim: 32 };
    CorrespondenceConfig { image: branch(3), audio: branch(1), head_hidden: 16, ..CorrespondenceConfig::default() }
}

pub fn compact_embedder() -> EmbedderConfig {
    EmbedderConfig { channels: vec![8, 8, 16, 16], ..EmbedderConfig::default() }
}

pub fn tracks(n: usize, seconds: f64) -> Vec<(String, AudioClip)> {
    let spec = ToySpec::default();
    (0..n).map(|i| (format!("t{i:02}"), class_audio(&spec, i % spec.classes, seconds, &mut derived(21, i as u64)))).collect()
}

/// PNG bytes of a class-`class` artwork.
pub fn painting_png(class: usize, stream: u64) -> Vec<u8> {
    let px = class_artwork(&ToySpec::default(), class, &mut derived(22, stream));
    encode_png(&px, ART, ART).unwrap()
}

pub fn painting(class: usize, stream: u64) -> ImageTensor {
    ingest_image(&painting_png(class, stream)).unwrap()
}

pub fn brush(seconds: f64, seed: u64) -> AudioClip {
    class_audio(&ToySpec::default(), 1, seconds, &mut derived(23, seed))
}

pub fn models() -> (CorrespondenceModel, AudioEmbedder) {
    (
        CorrespondenceModel::new(compact_config(), &mut seeded(31)).unwrap(),
        AudioEmbedder::new(compact_embedder(), &mut seeded(32)).unwrap(),
    )
}

/// In-memory resources over `n` tracks with four library paintings.
pub fn resources(n: usize, seconds: f64) -> Arc<Resources> {
    let (model, embedder) = models();
    let tracks = tracks(n, seconds);
    let (index, _) = build_index(&tracks, &embedder).unwrap();
    let library = ChunkLibrary::from_tracks(&tracks).unwrap();
    let paintings: Vec<(String, ImageTensor)> = (0..4).map(|k| (format!("painting-{k}"), painting(k, 100 + k as u64))).collect();
    Arc::new(Resources::from_parts(model, embedder, index, &library, &paintings).unwrap())
}

/// Models, index, manifests and audio on disk; returns a config pointing at them.
pub fn write_fixture(dir: &Path, n: usize, seconds: f64) -> SessionConfig {
    let (model, embedder) = models();
    let tracks = tracks(n, seconds);
    std::fs::create_dir_all(dir.join("tracks")).unwrap();
    let mut manifest = IndexManifest::default();
    for (id, clip) in &tracks {
        let rel = PathBuf::from("tracks").join(format!("{id}.wav"));
        write_wav_pcm16(dir.join(&rel), clip).unwrap();
        manifest.tracks.push(IndexedTrack { track_id: id.clone(), source: rel, duration: clip.duration(), chunks: clip.canonical_chunks().count() });
    }
    // the index is built from the audio as it was written to disk
    let on_disk: Vec<(String, AudioClip)> = tracks
        .iter()
        .map(|(id, _)| (id.clone(), brushwork::audio::read_wav(dir.join("tracks").join(format!("{id}.wav")), SAMPLE_RATE).unwrap()))
        .collect();
    let (index, _) = build_index(&on_disk, &embedder).unwrap();
    let mut library = LibraryManifest::default();
    for k in 0..2 {
        let name = format!("painting-{k}.png");
        let px = class_artwork(&ToySpec::default(), k, &mut derived(22, 100 + k as u64));
        write_png(dir.join(&name), &px, ART, ART).unwrap();
        library.paintings.push(PaintingEntry { painting_id: format!("painting-{k}"), image_path: name.into() });
    }
    library.save(dir.join("library.json")).unwrap();
    manifest.library = Some("library.json".into());
    model.save(dir.join("correspondence.ckpt")).unwrap();
    embedder.save(dir.join("embedder.ckpt")).unwrap();
    index.save(dir.join("library.idx")).unwrap();
    manifest.save(IndexManifest::path_for(&dir.join("library.idx"))).unwrap();
    SessionConfig::new(dir.join("correspondence.ckpt"), dir.join("embedder.ckpt"), dir.join("library.idx"))
}

pub fn wav_bytes(clip: &AudioClip) -> Vec<u8> {
    encode_wav_pcm16(clip)
}

/// `seconds` of audio as consecutive 1 s blocks.
pub fn one_second_blocks(clip: &AudioClip) -> Vec<AudioClip> {
    clip.samples
        .chunks(SAMPLE_RATE as usize)
        .map(|c| AudioClip { samples: c.to_vec(), sample_rate: SAMPLE_RATE })
        .collect()
}
