use brushwork::correspondence::{BranchConfig, CorrespondenceConfig, CorrespondenceModel, CorrespondenceProbe};
use brushwork::nn::gradcheck::{check, kink_margin, StackProbe};
use brushwork::nn::{concat, LayerSpec, Padding, Sequential, Tensor};
use brushwork::rng::{seeded, Rng};
use rand::Rng as _;

fn uniform(shape: &[usize], rng: &mut Rng) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

const H: f64 = 1e-3;

/// Draw a stack and input whose activations sit at least `4 h` away from
/// every ReLU/max-pool kink. A unit-scale parameter step of `h` moves a
/// pre-activation by at most about `h`.
fn probe(specs: &[LayerSpec], input_shape: &[usize], rng: &mut Rng) -> StackProbe<f32> {
    let (stack, input) = (0..500)
        .map(|_| {
            let stack = Sequential::new(specs, rng).unwrap();
            let input = uniform(input_shape, rng);
            (stack, input)
        })
        .find(|(s, x)| kink_margin(s, x).unwrap() > 4.0 * H)
        .expect("kink-free draw");
    let out_shape = stack.forward(&input).unwrap().shape().to_vec();
    let n = out_shape.iter().product();
    // Positive loss weights keep summed gradients (biases) away from
    // cancellation, where f32 central differences lose all precision.
    // Softmax outputs sum to one, so they need a wide spread instead.
    let range = if specs.last() == Some(&LayerSpec::Softmax) { -3.0f32..3.0 } else { 0.5f32..1.5 };
    let mut w: Vec<f32> = (0..n).map(|_| rng.gen_range(range.clone())).collect();
    if specs.last() == Some(&LayerSpec::Softmax) {
        // A per-row constant adds nothing to the gradient but inflates the
        // loss, and with it the f32 rounding noise of the differences.
        let row = *out_shape.last().unwrap();
        for r in w.chunks_mut(row) {
            let mean = r.iter().sum::<f32>() / row as f32;
            r.iter_mut().for_each(|v| *v -= mean);
        }
    }
    let weights = Tensor::from_vec(&out_shape, w).unwrap();
    StackProbe::new(stack, input, weights)
}

fn random_config(i: usize, rng: &mut Rng) -> (Vec<LayerSpec>, Vec<usize>) {
    let batch = rng.gen_range(1..=2);
    let h = rng.gen_range(5..=9);
    let w = rng.gen_range(5..=9);
    let c = rng.gen_range(1..=3);
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let out_c = rng.gen_range(1..=4);
    let stride = rng.gen_range(1..=2);
    // pooling needs at least a 2x2 map, which valid padding cannot promise
    let pooled = matches!(i % 7, 2 | 6);
    let padding = if i % 2 == 0 || pooled { Padding::Same } else { Padding::Valid };
    let conv = LayerSpec::Conv2d { kernel: k, stride, padding, in_channels: c, out_channels: out_c };
    let specs = match i % 7 {
        0 => vec![conv],
        1 => vec![conv, LayerSpec::Relu],
        2 => vec![conv, LayerSpec::MaxPool { size: 2, stride: 2 }],
        3 => vec![conv, LayerSpec::GlobalAvgPool],
        4 => vec![conv, LayerSpec::GlobalAvgPool, LayerSpec::Dense { inputs: out_c, outputs: 3 }],
        5 => vec![conv, LayerSpec::GlobalAvgPool, LayerSpec::Softmax],
        _ => vec![
            conv,
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2, stride: 2 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { inputs: out_c, outputs: 2 },
        ],
    };
    (specs, vec![batch, h, w, c])
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut rng = seeded(20);
    for i in 0..28 {
        let (specs, shape) = random_config(i, &mut rng);
        // Input gradients behind pooling are too small for f32 differences;
        // parameterless layers are covered by the conv gradients upstream of
        // them and by the standalone input checks below.
        let mut p = probe(&specs, &shape, &mut rng).params_only();
        if specs.last() == Some(&LayerSpec::Softmax) {
            // f32 rounding of outputs near 1/3 alone costs ~1e-3 relative
            // error here; the step stays in f32, the loss is read in f64.
            p = p.promoted();
        }
        let report = check(&mut p, H).unwrap();
        assert!(
            report.max_relative_error() < 1e-3,
            "config {i} {specs:?} {shape:?}: {:?}",
            report.relative_errors
        );
    }
}

#[test]
fn dense_and_softmax_alone() {
    let mut rng = seeded(5);
    for &(n, m) in &[(4usize, 3usize), (7, 2), (1, 5)] {
        let mut p = probe(&[LayerSpec::Dense { inputs: n, outputs: m }], &[3, n], &mut rng);
        assert!(check(&mut p, H).unwrap().max_relative_error() < 1e-3);
        let mut p = probe(&[LayerSpec::Softmax], &[2, m], &mut rng);
        assert!(check(&mut p, H).unwrap().max_relative_error() < 1e-3);
        let mut p = probe(&[LayerSpec::Relu], &[2, n], &mut rng);
        assert!(check(&mut p, H).unwrap().max_relative_error() < 1e-3);
        let mut p = probe(&[LayerSpec::MaxPool { size: 2, stride: 2 }], &[1, 4, 6, n], &mut rng);
        assert!(check(&mut p, H).unwrap().max_relative_error() < 1e-3);
        let mut p = probe(&[LayerSpec::GlobalAvgPool], &[2, 3, 2, m], &mut rng);
        assert!(check(&mut p, H).unwrap().max_relative_error() < 1e-3);
    }
}

#[test]
fn backward_without_forward_is_a_state_error() {
    let mut rng = seeded(1);
    let mut s = Sequential::<f32>::new(&[LayerSpec::Dense { inputs: 2, outputs: 2 }], &mut rng).unwrap();
    let err = s.backward(&Tensor::zeros(&[1, 2])).unwrap_err();
    assert!(matches!(err, brushwork::Error::State(_)));
}

#[test]
fn scaling_the_loss_scales_every_gradient() {
    let mut rng = seeded(9);
    let specs = [
        LayerSpec::Conv2d { kernel: 3, stride: 1, padding: Padding::Same, in_channels: 2, out_channels: 3 },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense { inputs: 3, outputs: 2 },
    ];
    let mut s = Sequential::<f64>::new(&specs, &mut rng).unwrap();
    let x = uniform(&[2, 5, 5, 2], &mut rng).cast::<f64>();
    let seed = Tensor::from_vec(&[2, 2], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
    s.forward_train(&x).unwrap();
    s.backward_params(&seed).unwrap();
    let g1: Vec<f64> = s.params().flat_map(|p| p.gradient.data().to_vec()).collect();
    s.zero_grad();
    let mut scaled = seed.clone();
    scaled.scale(-2.5);
    s.forward_train(&x).unwrap();
    s.backward_params(&scaled).unwrap();
    let g2: Vec<f64> = s.params().flat_map(|p| p.gradient.data().to_vec()).collect();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((b - (-2.5 * a)).abs() < 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn he_initialization_spread() {
    let mut rng = seeded(77);
    let fan_in = 50;
    let w: Tensor<f32> = brushwork::nn::he_normal(&[100, 100], fan_in, &mut rng);
    let n = w.len() as f64;
    let mean = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let target = (2.0 / fan_in as f64).sqrt();
    assert!((var.sqrt() - target).abs() / target < 0.1);
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = seeded(4);
    let specs = [
        LayerSpec::Conv2d { kernel: 3, stride: 2, padding: Padding::Same, in_channels: 3, out_channels: 4 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2, stride: 2 },
        LayerSpec::GlobalAvgPool,
    ];
    let s = Sequential::<f32>::new(&specs, &mut rng).unwrap();
    let x = uniform(&[2, 12, 12, 3], &mut rng);
    let a = s.forward(&x).unwrap();
    let b = s.forward(&x).unwrap();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

fn tiny_model(rng: &mut Rng) -> (CorrespondenceConfig, usize) {
    let depth = rng.gen_range(1..=2);
    let branch = |c: usize, rng: &mut Rng| BranchConfig {
        in_channels: c,
        channels: (0..depth).map(|_| rng.gen_range(2..=4)).collect(),
        kernel: 3,
        stem_stride: 1,
        output_dim: rng.gen_range(3..=6),
    };
    let config = CorrespondenceConfig {
        image_size: rng.gen_range(6..=10),
        mel_bins: rng.gen_range(6..=10),
        mel_frames: rng.gen_range(6..=12),
        image: branch(3, rng),
        audio: branch(1, rng),
        head_hidden: rng.gen_range(3..=6),
        audio_offset: 0.0,
        audio_scale: 1.0,
    };
    (config, rng.gen_range(2..=4))
}

/// Composed check in f64: with hundreds of rectified units a draw clear of
/// every kink by `4 h` at f32's step size is vanishingly rare.
const H64: f64 = 1e-6;

fn composed_probe(rng: &mut Rng) -> CorrespondenceProbe<f64> {
    let (config, n) = tiny_model(rng);
    (0..500)
        .map(|_| {
            let model = CorrespondenceModel::<f64>::new(config.clone(), rng).unwrap();
            let s = config.image_size;
            let images = uniform(&[n, s, s, 3], rng).cast::<f64>();
            let mels = uniform(&[n, config.mel_bins, config.mel_frames, 1], rng).cast::<f64>();
            let labels = (0..n).map(|_| rng.gen_range(0..2)).collect();
            CorrespondenceProbe { model, images, mels, labels }
        })
        .find(|p| {
            let joined = concat(
                &p.model.image_projection(&p.images).unwrap(),
                &p.model.audio_projection(&p.mels).unwrap(),
            )
            .unwrap();
            kink_margin(p.model.image_branch(), &p.images).unwrap() > 4.0 * H64
                && kink_margin(p.model.audio_branch(), &p.mels).unwrap() > 4.0 * H64
                && kink_margin(p.model.head(), &joined).unwrap() > 4.0 * H64
        })
        .expect("kink-free draw")
}

#[test]
fn composed_dual_branch_model_matches_finite_differences() {
    let mut rng = seeded(31);
    for i in 0..20 {
        let mut p = composed_probe(&mut rng);
        let report = check(&mut p, H64).unwrap();
        assert!(report.max_relative_error() < 1e-5, "model {i} {:?}: {:?}", p.model.config(), report.relative_errors);
    }
}
