//! Property tests for the structural invariants the crate promises:
//! deterministic seeded randomness, exact activation degeneracies, shape
//! algebra, schedule coverage, loss-gradient structure, format round-trips,
//! and checkpoint fidelity — each checked over randomized inputs rather
//! than single examples.

use proptest::prelude::*;

use adact::activation::{
    adaptive_backward, adaptive_forward, fixed_deriv, fixed_forward, prelu_backward, prelu_forward,
    ActivationKind, AdaptiveParams,
};
use adact::data;
use adact::layers::{Conv2dLayer, Layer};
use adact::loss::cross_entropy_batch;
use adact::model::{Model, ModelSpec};
use adact::optim::LrSchedule;
use adact::tensor::{Rng, Tensor};
use adact::train::{convergence_area, ConvergenceCurve};

proptest! {
    // ------------------------------------------------------------ rng

    #[test]
    fn same_seed_gives_identical_draw_sequences(seed: u64) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn shuffle_is_a_permutation(seed: u64, n in 1usize..64) {
        let mut v: Vec<usize> = (0..n).collect();
        Rng::new(seed).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_draws_stay_inside_bounds(seed: u64, lo in -100.0f64..100.0, width in 1e-3f64..50.0) {
        let mut rng = Rng::new(seed);
        let hi = lo + width;
        for _ in 0..32 {
            let x = rng.uniform(lo, hi).unwrap();
            prop_assert!(x >= lo && x < hi, "{x} outside [{lo}, {hi})");
        }
    }

    // ----------------------------------------------------- activations

    #[test]
    fn arelu_at_unit_params_is_relu_everywhere(z in -50.0f64..50.0) {
        let t = Tensor::new(vec![1], vec![z]).unwrap();
        let ones = Tensor::filled(vec![1], 1.0).unwrap();
        let p = AdaptiveParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let fwd = adaptive_forward(&ActivationKind::AReLU, &p, &t).unwrap();
        let fixed = fixed_forward(&ActivationKind::ReLU, &t).unwrap();
        prop_assert_eq!(fwd.data()[0].to_bits(), fixed.data()[0].to_bits());
        if z != 0.0 {
            let (dz, _) = adaptive_backward(&ActivationKind::AReLU, &p, &t, &ones).unwrap();
            let dfixed = fixed_deriv(&ActivationKind::ReLU, &t).unwrap();
            prop_assert_eq!(dz.data()[0].to_bits(), dfixed.data()[0].to_bits());
        }
    }

    #[test]
    fn arelu_at_slope_params_is_prelu_everywhere(z in -50.0f64..50.0, s in 1e-3f64..1.0) {
        let t = Tensor::new(vec![1], vec![z]).unwrap();
        let ones = Tensor::filled(vec![1], 1.0).unwrap();
        let p = AdaptiveParams::new(s, 1.0, 0.0, 0.0).unwrap();
        let fwd = adaptive_forward(&ActivationKind::AReLU, &p, &t).unwrap();
        let fixed = prelu_forward(s, &t).unwrap();
        prop_assert_eq!(fwd.data()[0].to_bits(), fixed.data()[0].to_bits());
        let (dz, _) = adaptive_backward(&ActivationKind::AReLU, &p, &t, &ones).unwrap();
        let (dfixed, _) = prelu_backward(s, &t, &ones).unwrap();
        prop_assert_eq!(dz.data()[0].to_bits(), dfixed.data()[0].to_bits());
    }

    /// tanh(z) = 2*sigmoid(2z) - 1, so the scaled-sigmoid quadruple
    /// (2, 2, 0, -1) must reproduce the unit-tanh site.
    #[test]
    fn scaled_sigmoid_reproduces_tanh(z in -20.0f64..20.0) {
        let t = Tensor::new(vec![1], vec![z]).unwrap();
        let sig = AdaptiveParams::new(2.0, 2.0, 0.0, -1.0).unwrap();
        let tanh = AdaptiveParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let via_sigmoid = adaptive_forward(&ActivationKind::ASigmoid, &sig, &t).unwrap();
        let via_tanh = adaptive_forward(&ActivationKind::ATanh, &tanh, &t).unwrap();
        prop_assert!((via_sigmoid.data()[0] - via_tanh.data()[0]).abs() < 1e-12);
    }

    #[test]
    fn adaptive_params_reject_non_finite(which in 0usize..4) {
        let mut vals = [1.0, 1.0, 0.0, 0.0];
        vals[which] = f64::NAN;
        prop_assert!(AdaptiveParams::new(vals[0], vals[1], vals[2], vals[3]).is_err());
        vals[which] = f64::INFINITY;
        prop_assert!(AdaptiveParams::new(vals[0], vals[1], vals[2], vals[3]).is_err());
    }

    // ---------------------------------------------------------- tensor

    #[test]
    fn tensor_requires_shape_to_match_data(n in 1usize..20, extra in 1usize..5) {
        prop_assert!(Tensor::new(vec![n], vec![0.0; n]).is_ok());
        prop_assert!(Tensor::new(vec![n], vec![0.0; n + extra]).is_err());
        prop_assert!(Tensor::new(vec![n + extra], vec![0.0; n]).is_err());
    }

    #[test]
    fn tensor_rejects_non_finite_payloads(n in 1usize..10, at in 0usize..10, inf in proptest::bool::ANY) {
        let at = at % n;
        let mut data = vec![0.5; n];
        data[at] = if inf { f64::INFINITY } else { f64::NAN };
        prop_assert!(Tensor::new(vec![n], data).is_err());
    }

    // ---------------------------------------------------------- layers

    /// Accepted geometries obey `extent = (in + 2*pad - k)/stride + 1`
    /// (integer division exact, so this coincides with the floor form);
    /// geometries where the stride does not tile evenly are rejected
    /// rather than silently cropped.
    #[test]
    fn conv_output_extent_follows_the_stride_formula(
        in_size in 1usize..12,
        k in 1usize..5,
        stride in 1usize..4,
        pad in 0usize..3,
        seed: u64,
    ) {
        prop_assume!(in_size + 2 * pad >= k);
        let mut rng = Rng::new(seed);
        let kernels = rng.rand_uniform(vec![2, 3, k, k], -0.5, 0.5).unwrap();
        let bias = Tensor::zeros(vec![2]).unwrap();
        let mut conv = Layer::Conv2d(Conv2dLayer::new(kernels, bias, stride, pad).unwrap());
        let x = rng.rand_uniform(vec![1, 3, in_size, in_size], 0.0, 1.0).unwrap();
        let result = conv.forward(&x, 1);
        let span = in_size + 2 * pad - k;
        if span % stride == 0 {
            let y = result.unwrap();
            prop_assert_eq!(y.shape(), &[1, 2, span / stride + 1, span / stride + 1]);
        } else {
            prop_assert!(result.is_err(), "ragged tiling must be rejected, not cropped");
        }
    }

    // ------------------------------------------------------- schedules

    #[test]
    fn schedule_covers_exactly_its_spans(spans in proptest::collection::vec((1usize..10, 1e-5f64..1.0), 1..5)) {
        let schedule = LrSchedule::new(spans.clone()).unwrap();
        let total: usize = spans.iter().map(|(n, _)| n).sum();
        let mut epoch = 0;
        for (span, rate) in &spans {
            for _ in 0..*span {
                prop_assert_eq!(schedule.rate_at(epoch).unwrap(), *rate);
                epoch += 1;
            }
        }
        prop_assert!(schedule.rate_at(total).is_err());
        prop_assert_eq!(schedule.total_epochs(), total);
    }

    // ------------------------------------------------------------ loss

    #[test]
    fn cross_entropy_is_nonnegative_with_zero_sum_gradient_rows(
        seed: u64,
        batch in 1usize..6,
        classes in 2usize..8,
    ) {
        let mut rng = Rng::new(seed);
        let logits = rng.rand_uniform(vec![batch, classes], -5.0, 5.0).unwrap();
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(classes)).collect();
        let (loss, grad) = cross_entropy_batch(&logits, &labels).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        for row in grad.data().chunks_exact(classes) {
            let sum: f64 = row.iter().sum();
            prop_assert!(sum.abs() < 1e-12, "gradient row sums to {sum}");
        }
    }

    // ------------------------------------------------------------ data

    #[test]
    fn cifar_bytes_round_trip_exactly(seed: u64, n in 1usize..12) {
        let mut rng = Rng::new(seed);
        let mut bytes = Vec::with_capacity(n * 3073);
        for _ in 0..n {
            bytes.push(rng.gen_range(10) as u8);
            for _ in 0..3072 {
                bytes.push(rng.gen_range(256) as u8);
            }
        }
        let ds = data::parse_cifar10(&bytes).unwrap();
        prop_assert_eq!(data::to_cifar10_bytes(&ds).unwrap(), bytes);
    }

    #[test]
    fn idx_rejects_every_wrong_magic(magic: u32, label_magic: u32) {
        prop_assume!(magic != 0x0000_0803 && label_magic != 0x0000_0801);
        let mut images = Vec::new();
        images.extend(magic.to_be_bytes());
        images.extend(1u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend_from_slice(&[1, 2, 3, 4]);
        let mut labels = Vec::new();
        labels.extend(label_magic.to_be_bytes());
        labels.extend(1u32.to_be_bytes());
        labels.push(1);
        prop_assert!(data::parse_idx(&images, &labels).is_err());
    }

    // ----------------------------------------------------------- train

    #[test]
    fn convergence_area_is_positive_and_linear_in_the_losses(
        losses in proptest::collection::vec(1e-3f64..10.0, 2..12),
        k in 0.1f64..10.0,
    ) {
        let points: Vec<(f64, f64)> = losses.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, l)).collect();
        let scaled: Vec<(f64, f64)> = points.iter().map(|&(e, l)| (e, k * l)).collect();
        let base = convergence_area(&ConvergenceCurve::new(points).unwrap()).unwrap();
        let grown = convergence_area(&ConvergenceCurve::new(scaled).unwrap()).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!((grown - k * base).abs() <= 1e-9 * grown.abs().max(1.0));
    }
}

// Small-case properties that are expensive per case get fewer repetitions.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoints_round_trip_models_bitwise(seed: u64) {
        let spec = ModelSpec::preset("mlp-2", vec![1, 4, 1], 3, ActivationKind::AReLU).unwrap();
        let mut rng = Rng::new(seed);
        let model = Model::init(&spec, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        model.save(&path, seed).unwrap();
        let (loaded, stored_seed) = Model::load(&path).unwrap();
        prop_assert_eq!(stored_seed, seed);

        let x = rng.rand_uniform(vec![2, 1, 4, 1], 0.0, 1.0).unwrap();
        let original = model.infer(&x).unwrap();
        let restored = loaded.infer(&x).unwrap();
        for (a, b) in original.data().iter().zip(restored.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

/// The adaptive family adds exactly four scalars per adaptive site and one
/// per PReLU site, never more.
#[test]
fn adaptive_parameter_budget_is_four_per_site() {
    for preset in ["mlp-2", "cnn-mini", "cnn-mini-res"] {
        let shape = vec![3, 16, 16];
        for kind in [
            ActivationKind::ASigmoid,
            ActivationKind::ATanh,
            ActivationKind::AReLU,
        ] {
            let spec = ModelSpec::preset(preset, shape.clone(), 10, kind).unwrap();
            let model = Model::init(&spec, &mut Rng::new(1)).unwrap();
            let sites = model.adaptive_sites().len();
            assert_eq!(
                model.census().activation,
                4 * sites,
                "{preset}/{kind}: expected 4 params per adaptive site"
            );
        }
        let spec = ModelSpec::preset(preset, shape.clone(), 10, ActivationKind::PReLU).unwrap();
        let model = Model::init(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(model.census().activation, model.adaptive_sites().len());

        let spec = ModelSpec::preset(preset, shape, 10, ActivationKind::ReLU).unwrap();
        let model = Model::init(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(model.census().activation, 0);
    }
}
