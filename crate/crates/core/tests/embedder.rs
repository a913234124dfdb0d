mod common;

use brushwork::embedder::*;
use brushwork::error::Error;
use brushwork::mel::{mel_patch, MelPatch};
use brushwork::nn::{Sgd, Tensor};
use brushwork::rng::{derived, seeded};
use brushwork::toy::labeled_clip;
use common::sine;
use proptest::prelude::*;
use rand::Rng as _;

fn compact() -> EmbedderConfig {
    EmbedderConfig { channels: vec![8, 8, 16, 16], ..EmbedderConfig::default() }
}

fn clips(per_class: usize, seed: u64) -> Vec<LabeledClip<f32>> {
    (0..3)
        .flat_map(|c| (0..per_class).map(move |j| (c, j)))
        .map(|(c, j)| {
            let audio = labeled_clip(c, &mut derived(seed, (c * 1000 + j) as u64));
            LabeledClip { audio: mel_patch(&audio).unwrap(), class_id: c }
        })
        .collect()
}

fn stack(patches: &[&MelPatch<f32>]) -> Tensor<f32> {
    Tensor::stack(&patches.iter().map(|p| p.to_tensor()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn distance_examples() {
    let a = vec![0.0f32; 8];
    let mut b = vec![0.0f32; 8];
    b[0] = 3.0;
    b[1] = 4.0;
    assert_eq!(distance(&a, &b).unwrap(), 5.0);
    assert_eq!(distance(&b, &b).unwrap(), 0.0);
    assert!(matches!(distance(&a, &b[..7]).unwrap_err(), Error::Shape(_)));
}

#[test]
fn distance_matches_a_compensated_f64_sum() {
    let mut rng = seeded(12);
    for _ in 0..100 {
        let a: Vec<f32> = (0..512).map(|_| rng.gen_range(-10.0f32..10.0)).collect();
        let b: Vec<f32> = (0..512).map(|_| rng.gen_range(-10.0f32..10.0)).collect();
        // Kahan summation, in reverse order
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for i in (0..512).rev() {
            let d = a[i] as f64 - b[i] as f64;
            let y = d * d - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
        }
        let oracle = sum.sqrt();
        let got = distance(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-5 * oracle, "{got} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn distance_is_a_metric(
        (a, b, c) in (1usize..48).prop_flat_map(|n| {
            let v = || proptest::collection::vec(-100.0f32..100.0, n);
            (v(), v(), v())
        })
    ) {
        let ab = distance(&a, &b).unwrap();
        let ba = distance(&b, &a).unwrap();
        let bc = distance(&b, &c).unwrap();
        let ac = distance(&a, &c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ac <= ab + bc + 1e-5 * (1.0 + ab + bc));
    }
}

#[test]
fn separation_averages_pair_distances() {
    let labeled = vec![(0, vec![0.0f32, 0.0]), (0, vec![3.0, 4.0]), (1, vec![0.0, 1.0])];
    let s = class_separation(&labeled).unwrap();
    assert_eq!((s.intra_pairs, s.inter_pairs), (1, 2));
    assert!((s.intra - 5.0).abs() < 1e-12);
    let inter = (1.0 + (9.0f64 + 9.0).sqrt()) / 2.0;
    assert!((s.inter - inter).abs() < 1e-6);

    let singletons = vec![(0, vec![0.0f32]), (1, vec![1.0])];
    assert!(matches!(class_separation(&singletons), Err(Error::Precondition(_))));
    assert!(matches!(class_separation(&labeled[..2]), Err(Error::Precondition(_))));
}

#[test]
fn embeddings_have_configured_length_and_are_pure() {
    let model = AudioEmbedder::<f32>::new(EmbedderConfig::default(), &mut seeded(1)).unwrap();
    assert_eq!(model.dimension(), 512);
    let mel = mel_patch::<f32>(&sine(440.0, 4.0, 0.5)).unwrap();
    let e1 = model.embed_audio(&mel, EmbeddingSource::live()).unwrap();
    let e2 = model.embed_audio(&mel, EmbeddingSource::live()).unwrap();
    assert_eq!(e1.vector.len(), 512);
    assert!(e1.vector.iter().all(|v| v.is_finite()));
    assert_eq!(e1, e2);
    assert_eq!(embedding_distance(&e1, &e2).unwrap(), 0.0);
    assert_eq!(e1.source.track_id, "live");

    let other = mel_patch::<f32>(&sine(2000.0, 4.0, 0.5)).unwrap();
    let batch = model.embed_batch(&[mel.clone(), other.clone()]).unwrap();
    assert_eq!(batch[0], e1.vector);
    assert_eq!(batch[1], model.embed(&other).unwrap());
}

#[test]
fn wrong_patch_shape_is_a_shape_error() {
    let model = AudioEmbedder::<f32>::new(compact(), &mut seeded(1)).unwrap();
    let err = model.embed_tensor(&Tensor::zeros(&[1, 100, 300, 1])).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn normalized_embeddings_have_unit_length() {
    let config = EmbedderConfig { normalize: true, ..compact() };
    let model = AudioEmbedder::<f32>::new(config, &mut seeded(2)).unwrap();
    let v = model.embed(&mel_patch(&sine(700.0, 4.0, 0.5)).unwrap()).unwrap();
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-5);
}

#[test]
fn training_preconditions() {
    let data = clips(10, 3);
    let one_class: Vec<_> = data.iter().filter(|c| c.class_id == 0).cloned().collect();
    let err = train_embedder(&one_class, &compact(), &EmbedderTrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));

    let mut thin: Vec<_> = data.iter().filter(|c| c.class_id != 2).cloned().collect();
    thin.truncate(15);
    let err = train_embedder(&thin, &compact(), &EmbedderTrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));

    let mut bad = data.clone();
    bad[0].class_id = 7;
    let err = train_embedder(&bad, &compact(), &EmbedderTrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn eight_clips_are_memorized() {
    let data = clips(3, 4);
    let picked: Vec<&LabeledClip<f32>> = data.iter().take(8).collect();
    let mels = stack(&picked.iter().map(|c| &c.audio).collect::<Vec<_>>());
    let labels: Vec<usize> = picked.iter().map(|c| c.class_id).collect();
    let mut model = AudioEmbedder::<f32>::new(compact(), &mut seeded(5)).unwrap();
    let sgd = Sgd::new(0.01, 0.9).unwrap();
    let mut last = f64::INFINITY;
    for step in 0..500 {
        last = model.train_step(&mels, &labels, &sgd).unwrap();
        if last < 0.01 {
            eprintln!("memorized after {} steps", step + 1);
            break;
        }
    }
    assert!(last < 0.01, "loss {last}");
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let data = clips(10, 6);
    let config = EmbedderTrainConfig { steps: 4, batch_size: 4, eval_every: 0, ..EmbedderTrainConfig::default() };
    let (a, run_a) = train_embedder(&data, &compact(), &config, |_| {}).unwrap();
    let (b, run_b) = train_embedder(&data, &compact(), &config, |_| {}).unwrap();
    assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
    assert_eq!(run_a, run_b);
    assert_eq!(run_a.holdout.len(), 3);
    assert_eq!(run_a.train_clips, 27);

    let other = EmbedderTrainConfig { seed: 1, ..config };
    let (c, _) = train_embedder(&data, &compact(), &other, |_| {}).unwrap();
    assert_ne!(a.content_hash(), c.content_hash());
}

#[test]
fn checkpoint_round_trip() {
    let model = AudioEmbedder::<f32>::new(compact(), &mut seeded(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("embedder.ckpt");
    model.save(&path).unwrap();
    let back = AudioEmbedder::<f32>::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.content_hash(), model.content_hash());
    let mel = mel_patch::<f32>(&sine(300.0, 4.0, 0.3)).unwrap();
    assert_eq!(back.embed(&mel).unwrap(), model.embed(&mel).unwrap());
}

#[test]
fn stratified_split_holds_out_each_class() {
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let (train, held) = stratified_split(&labels, 3, 0.1, &mut seeded(1)).unwrap();
    assert_eq!(held.len(), 6);
    assert_eq!(train.len() + held.len(), 60);
    for c in 0..3 {
        assert_eq!(held.iter().filter(|&&i| labels[i] == c).count(), 2);
    }
    assert!(stratified_split(&labels, 3, 1.0, &mut seeded(1)).is_err());
}
