mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use brushwork::audio::AudioClip;
use brushwork::embedder::{AudioEmbedder, EmbedderConfig};
use brushwork::error::Error;
use brushwork::index::*;
use brushwork::rng::{derived, seeded, Rng};
use brushwork::toy::{class_audio, ToySpec};
use common::sine;
use proptest::prelude::*;
use rand::Rng as _;

fn embedder() -> AudioEmbedder<f32> {
    let config = EmbedderConfig { channels: vec![8, 8, 16, 16], ..EmbedderConfig::default() };
    AudioEmbedder::new(config, &mut seeded(3)).unwrap()
}

fn key(track: &str, chunk: u32) -> ChunkKey {
    ChunkKey { track_id: track.to_string(), chunk_index: chunk }
}

fn random_index(n: usize, dim: usize, rng: &mut Rng) -> EmbeddingIndex<f32> {
    let records = (0..n)
        .map(|i| ChunkRecord {
            key: key(&format!("track-{:03}", i / 10), (i % 10) as u32),
            embedding: (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        })
        .collect();
    EmbeddingIndex::new(dim, records).unwrap()
}

/// Full scan with its own f64 distance, ordered by (distance, key).
fn brute_force(index: &EmbeddingIndex<f32>, query: &[f32], k: usize, filter: Option<&BTreeSet<ChunkKey>>) -> Vec<(ChunkKey, f64)> {
    let mut all: Vec<(ChunkKey, f64)> = index
        .records()
        .iter()
        .filter(|r| filter.map_or(true, |f| f.contains(&r.key)))
        .map(|r| {
            let d2: f64 = r.embedding.iter().zip(query).map(|(&a, &b)| (a as f64 - b as f64) * (a as f64 - b as f64)).sum();
            (r.key.clone(), d2.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn answer(index: &EmbeddingIndex<f32>, query: &[f32], k: usize, filter: Option<&BTreeSet<ChunkKey>>) -> Vec<(ChunkKey, f64)> {
    index.nearest(query, k, filter).unwrap().iter().map(|n| (index.record(n).key.clone(), n.distance)).collect()
}

#[test]
fn sixty_seconds_make_fifteen_chunks() {
    let (index, report) = build_index(&[("solo".to_string(), sine(440.0, 60.0, 0.5))], &embedder()).unwrap();
    assert_eq!(index.len(), 15);
    assert!(report.warnings.is_empty());
    for (i, r) in index.records().iter().enumerate() {
        assert_eq!(r.chunk_index(), i as u32);
        assert_eq!(r.start_time(), 4.0 * i as f64);
        assert_eq!(r.embedding.len(), 16);
    }
}

#[test]
fn five_tracks_make_fifty_sorted_records_and_rebuild_identically() {
    let spec = ToySpec::default();
    // insertion order deliberately differs from key order
    let tracks: Vec<(String, AudioClip)> = [3, 0, 4, 1, 2]
        .iter()
        .map(|&i| (format!("t{i}"), class_audio(&spec, i % 4, 40.0, &mut derived(1, i as u64))))
        .collect();
    let (a, _) = build_index(&tracks, &embedder()).unwrap();
    assert_eq!(a.len(), 50);
    let keys: Vec<&ChunkKey> = a.keys().collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(keys[0], &key("t0", 0));
    assert_eq!(keys[49], &key("t4", 9));

    let (b, _) = build_index(&tracks, &embedder()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path().join("a.idx")).unwrap();
    b.save(dir.path().join("b.idx")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("a.idx")).unwrap(), std::fs::read(dir.path().join("b.idx")).unwrap());
}

#[test]
fn short_tracks_are_skipped_with_a_warning() {
    let tracks = vec![("short".to_string(), sine(300.0, 3.9, 0.5)), ("long".to_string(), sine(300.0, 9.0, 0.5))];
    let (index, report) = build_index(&tracks, &embedder()).unwrap();
    assert_eq!(index.len(), 2);
    assert_eq!(report.records, 2);
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("short"));
}

#[test]
fn exact_hit_comes_first() {
    let index = random_index(200, 8, &mut seeded(1));
    let target = index.records()[37].clone();
    let hits = index.nearest(&target.embedding, 3, None).unwrap();
    assert_eq!(index.record(&hits[0]).key, target.key);
    assert_eq!(hits[0].distance, 0.0);
}

#[test]
fn matches_brute_force_scan() {
    let mut rng = seeded(2);
    let index = random_index(1000, 32, &mut rng);
    for _ in 0..100 {
        let q: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        assert_eq!(answer(&index, &q, 5, None), brute_force(&index, &q, 5, None));
    }
}

#[test]
fn equal_distances_rank_by_key() {
    let records = vec![
        ChunkRecord { key: key("b", 0), embedding: vec![1.0f32, 0.0] },
        ChunkRecord { key: key("a", 7), embedding: vec![0.0, 1.0] },
        ChunkRecord { key: key("a", 2), embedding: vec![-1.0, 0.0] },
        ChunkRecord { key: key("c", 0), embedding: vec![5.0, 5.0] },
    ];
    let index = EmbeddingIndex::new(2, records).unwrap();
    let got = answer(&index, &[0.0, 0.0], 4, None);
    let keys: Vec<ChunkKey> = got.iter().map(|g| g.0.clone()).collect();
    assert_eq!(keys, vec![key("a", 2), key("a", 7), key("b", 0), key("c", 0)]);
    assert_eq!(got[0].1, got[2].1);
}

#[test]
fn k_equal_to_size_returns_every_record_once() {
    let mut rng = seeded(4);
    let index = random_index(120, 6, &mut rng);
    let q: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let all = index.nearest(&q, 120, None).unwrap();
    let positions: BTreeSet<usize> = all.iter().map(|n| n.position).collect();
    assert_eq!(positions.len(), 120);
    assert!(all.windows(2).all(|w| w[0].distance <= w[1].distance));
    assert_eq!(index.nearest(&q, 500, None).unwrap().len(), 120);
}

#[test]
fn filtered_queries_stay_inside_the_filter() {
    let mut rng = seeded(5);
    let index = random_index(300, 8, &mut rng);
    for _ in 0..20 {
        let filter: BTreeSet<ChunkKey> = index.keys().filter(|_| rng.gen_bool(0.1)).cloned().collect();
        let q: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let got = answer(&index, &q, 4, Some(&filter));
        assert!(got.iter().all(|g| filter.contains(&g.0)));
        assert_eq!(got, brute_force(&index, &q, 4, Some(&filter)));
    }
}

#[test]
fn query_errors() {
    let index = random_index(10, 4, &mut seeded(6));
    assert!(matches!(index.nearest(&[0.0; 3], 1, None).unwrap_err(), Error::Shape(_)));
    assert!(matches!(index.nearest(&[0.0; 4], 0, None).unwrap_err(), Error::Precondition(_)));
    assert!(matches!(index.nearest(&[0.0; 4], 1, Some(&BTreeSet::new())).unwrap_err(), Error::EmptyIndex));
    let unknown: BTreeSet<ChunkKey> = [key("nope", 0)].into();
    assert!(matches!(index.nearest(&[0.0; 4], 1, Some(&unknown)).unwrap_err(), Error::EmptyIndex));
    let empty = EmbeddingIndex::<f32>::new(4, vec![]).unwrap();
    assert!(matches!(empty.nearest(&[0.0; 4], 1, None).unwrap_err(), Error::EmptyIndex));
}

#[test]
fn construction_rejects_duplicates_and_mixed_dimensions() {
    let dup = vec![
        ChunkRecord { key: key("a", 0), embedding: vec![0.0f32; 2] },
        ChunkRecord { key: key("a", 0), embedding: vec![1.0; 2] },
    ];
    assert!(matches!(EmbeddingIndex::new(2, dup).unwrap_err(), Error::Precondition(_)));
    let mixed = vec![ChunkRecord { key: key("a", 0), embedding: vec![0.0f32; 3] }];
    assert!(matches!(EmbeddingIndex::new(2, mixed).unwrap_err(), Error::Shape(_)));
}

#[test]
fn persistence_round_trip_and_damage() {
    let index = random_index(10, 5, &mut seeded(7));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.idx");
    index.save(&path).unwrap();
    let back = EmbeddingIndex::<f32>::load(&path).unwrap();
    assert_eq!(back, index);
    let bytes = index.to_bytes();
    assert_eq!(&bytes[..4], b"CMEI");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 5);
    assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 10);
    for (a, b) in back.records().iter().zip(index.records()) {
        assert_eq!(
            a.embedding.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.embedding.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(EmbeddingIndex::<f32>::from_bytes(&bad).unwrap_err(), Error::Format(_)));

    let mut future = bytes.clone();
    future[4] = 2;
    assert!(matches!(EmbeddingIndex::<f32>::from_bytes(&future).unwrap_err(), Error::Version { found: 2, expected: 1 }));

    // header still says 10 records, but only 9 follow
    let record_len = 2 + "track-000".len() + 4 + 5 * 4;
    let nine = &bytes[..bytes.len() - record_len];
    assert!(matches!(EmbeddingIndex::<f32>::from_bytes(nine).unwrap_err(), Error::Corruption(_)));

    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(EmbeddingIndex::<f32>::from_bytes(&extra).unwrap_err(), Error::Corruption(_)));

    std::fs::write(&path, nine).unwrap();
    let err = EmbeddingIndex::<f32>::load(&path).unwrap_err();
    assert!(matches!(err.root(), Error::Corruption(_)));
    assert!(err.to_string().contains("lib.idx"));
}

#[test]
fn manifest_sits_next_to_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.idx");
    let manifest = IndexManifest {
        tracks: vec![IndexedTrack { track_id: "t0".into(), source: "tracks/t0.wav".into(), duration: 40.0, chunks: 10 }],
        ..IndexManifest::default()
    };
    let mpath = IndexManifest::path_for(&path);
    assert_eq!(mpath.file_name().unwrap(), "lib.idx.manifest.json");
    manifest.save(&mpath).unwrap();
    assert_eq!(IndexManifest::load(&mpath).unwrap(), manifest);
}

#[test]
fn ten_thousand_records_scan_quickly() {
    let mut rng = seeded(8);
    let index = random_index(10_000, 512, &mut rng);
    let q: Vec<f32> = (0..512).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    index.nearest(&q, 1, None).unwrap();
    let runs = 10;
    let start = Instant::now();
    for _ in 0..runs {
        index.nearest(&q, 1, None).unwrap();
    }
    let per_query = start.elapsed().as_secs_f64() * 1000.0 / runs as f64;
    eprintln!("10k x 512 exact scan: {per_query:.2} ms");
    assert!(per_query < 50.0, "{per_query} ms");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn filtered_nearest_equals_restricted_brute_force(seed in any::<u64>(), n in 1usize..80, k in 1usize..6) {
        let mut rng = seeded(seed);
        let index = random_index(n, 3, &mut rng);
        let mut filter: BTreeSet<ChunkKey> = index.keys().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        filter.insert(index.records()[0].key.clone());
        let q: Vec<f32> = (0..3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        prop_assert_eq!(answer(&index, &q, k, Some(&filter)), brute_force(&index, &q, k, Some(&filter)));
    }
}
