#![allow(dead_code)]

use brushwork::audio::{AudioClip, SAMPLE_RATE};
use brushwork::correspondence::{BranchConfig, CorrespondenceConfig};
use brushwork::imaging::ImageTensor;
use brushwork::manifest::{Catalog, CatalogTrack};
use brushwork::rng::derived;
use brushwork::toy::{class_artwork, class_audio, ToySpec};

/// In-memory toy catalog: track `i` is in album `i / 2`, class `(i / 2) % classes`.
pub fn toy_catalog(n_tracks: usize, classes: usize, seconds: f64, seed: u64) -> Catalog {
    let spec = ToySpec { n_tracks, classes, seed, track_duration: seconds, ..ToySpec::default() };
    let tracks = (0..n_tracks)
        .map(|i| {
            let class = spec.class_of(i);
            let audio = class_audio(&spec, class, seconds, &mut derived(seed, 100 + i as u64));
            CatalogTrack {
                track_id: format!("t{i:02}"),
                album_id: format!("a{:02}", spec.album_of(i)),
                class_id: Some(class),
                audio,
                artwork: artwork(&spec, class, seed, 200 + i as u64),
            }
        })
        .collect();
    Catalog { tracks }
}

pub fn artwork(spec: &ToySpec, class: usize, seed: u64, stream: u64) -> ImageTensor<f32> {
    let px: Vec<f32> = class_artwork(spec, class, &mut derived(seed, stream)).iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::from_unit_rgb(&px, 256, 256).unwrap()
}

pub fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let s = (0..n)
        .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
        .collect();
    AudioClip::new(s, SAMPLE_RATE).unwrap()
}

/// Narrow branches that train in seconds on full-size inputs.
pub fn compact_config() -> CorrespondenceConfig {
    let branch = |c| BranchConfig { in_channels: c, channels: vec![8, 8, 16, 16], kernel: 3, stem_stride: 2, output_dim: 32 };
    CorrespondenceConfig { image: branch(3), audio: branch(1), head_hidden: 16, ..CorrespondenceConfig::default() }
}
