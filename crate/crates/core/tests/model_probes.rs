mod common;

use earsep_core::model::{Mode, ModelConfig, NetworkInput, SeparationNet, TRUNK_PREFIXES};
use earsep_core::nn::Tensor;
use earsep_core::signal::{Complex64, ComplexSpectrogram, StftConfig, StftProcessor, Waveform};
use proptest::prelude::*;

fn random_spec(seed: u64, frames: usize) -> ComplexSpectrogram {
    let p = StftProcessor::new(StftConfig::hann(16)).unwrap();
    let mut r = common::rng(seed);
    let chans = (0..8).map(|_| common::uniform(&mut r, 8 * (frames + 1))).collect();
    let spec = p.stft(&Waveform::new(chans, 16000).unwrap()).unwrap();
    assert_eq!(spec.frames(), frames);
    spec
}

fn bump(spec: &ComplexSpectrogram, ch: usize, t: usize, f: usize, by: f64) -> ComplexSpectrogram {
    let mut s = spec.clone();
    s.frame_mut(ch, t)[f] += Complex64::new(by, -by);
    s
}

fn features(net: &SeparationNet, spec: &ComplexSpectrogram) -> Tensor {
    let input = NetworkInput::from_spectrogram(spec).unwrap();
    let tr = net.trace(&input, Mode::Eval).unwrap();
    tr.graph.value(tr.features).clone()
}

fn row(t: &Tensor, i: usize) -> &[f64] {
    let c = t.cols();
    &t.data[i * c..(i + 1) * c]
}

fn diff(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn encoder_receptive_field_is_two_tau_plus_one_frames() {
    let cfg = common::tiny_config();
    let tau = cfg.tau;
    let net = SeparationNet::init(cfg, 5).unwrap();
    let spec = random_spec(1, 9);
    let base = features(&net, &spec);
    let t = 3;
    for other in 0..spec.frames() {
        let moved = features(&net, &bump(&spec, 2, other, 4, 0.5));
        let changed = row(&base, t) != row(&moved, t);
        let inside = other + tau >= t && other <= t + tau;
        assert_eq!(changed, inside, "frame {other} vs feature {t}");
    }
}

#[test]
fn right_group_reaches_only_the_right_decoder_without_trunk() {
    let mut net = SeparationNet::init(common::tiny_config(), 2).unwrap();
    net.zero_params(&TRUNK_PREFIXES);
    let spec = random_spec(3, 7);
    let out = net.forward(&spec, Mode::Eval).unwrap();
    for ch in 4..8 {
        for (t, f) in [(0, 0), (3, 4), (6, 8)] {
            let moved = net.forward(&bump(&spec, ch, t, f, 0.3), Mode::Eval).unwrap();
            assert_eq!(out.left, moved.left, "channel {ch} leaked into the left decoder");
            assert!(diff(&out.right, &moved.right) > 0.0, "channel {ch} did not reach the right decoder");
        }
    }
    for ch in 0..4 {
        let moved = net.forward(&bump(&spec, ch, 2, 3, 0.3), Mode::Eval).unwrap();
        assert_eq!(out.right, moved.right);
        assert!(diff(&out.left, &moved.left) > 0.0);
    }
}

#[test]
fn decoders_differ_after_init() {
    let net = SeparationNet::init(common::tiny_config(), 8).unwrap();
    let out = net.forward(&random_spec(4, 7), Mode::Eval).unwrap();
    assert!(diff(&out.left, &out.right) > 1e-6);
}

#[test]
fn zero_input_and_zero_biases_give_zero_features() {
    let net = SeparationNet::init(common::tiny_config(), 1).unwrap();
    let spec = ComplexSpectrogram::zeros(8, 5, StftConfig::hann(16), 16000, 48);
    assert!(features(&net, &spec).data.iter().all(|v| *v == 0.0));
}

#[test]
fn full_loss_gradient_matches_central_differences() {
    let (worst, n) = common::full_gradient_check(11, 1e-5);
    assert!(n <= 5000);
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn config_errors() {
    let bad = ModelConfig {
        embed_dim: 127,
        ..ModelConfig::default()
    };
    assert!(SeparationNet::init(bad, 0).is_err());
    let a = SeparationNet::init(common::tiny_config(), 0).unwrap();
    let b = SeparationNet::init(common::tiny_config(), 1).unwrap();
    assert_ne!(a.digest(), b.digest());
    assert_eq!(a.digest(), SeparationNet::init(common::tiny_config(), 0).unwrap().digest());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn output_shape_tracks_frames(frames in 1usize..20, seed in any::<u64>()) {
        let net = SeparationNet::init(common::tiny_config(), seed).unwrap();
        let out = net.forward(&random_spec(seed, frames), Mode::Train { dropout_seed: seed }).unwrap();
        for s in [&out.left, &out.right] {
            prop_assert_eq!((s.channels(), s.frames(), s.bins()), (1, frames, 9));
            prop_assert!(s.values().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        }
    }

    #[test]
    fn attention_rows_are_distributions(frames in 1usize..12, seed in any::<u64>()) {
        let net = SeparationNet::init(common::tiny_config(), seed).unwrap();
        let input = NetworkInput::from_spectrogram(&random_spec(seed, frames)).unwrap();
        let tr = net.trace(&input, Mode::Eval).unwrap();
        for &w in &tr.attention {
            let w = tr.graph.value(w);
            for r in w.data.chunks(frames) {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                prop_assert!(r.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn skip_projection_is_affine(seed in any::<u64>()) {
        let net = SeparationNet::init(common::tiny_config(), seed).unwrap();
        let skip = |spec: &ComplexSpectrogram| {
            let input = NetworkInput::from_spectrogram(spec).unwrap();
            let tr = net.trace(&input, Mode::Eval).unwrap();
            tr.graph.value(tr.skip[0]).data.clone()
        };
        let a = random_spec(seed, 5);
        let b = random_spec(seed ^ 1, 5);
        let mut ab = a.clone();
        for (x, y) in ab.values_mut().iter_mut().zip(b.values()) {
            *x += y;
        }
        let zero = skip(&ComplexSpectrogram::zeros(8, 5, StftConfig::hann(16), 16000, 48));
        let (sa, sb, sab) = (skip(&a), skip(&b), skip(&ab));
        for i in 0..zero.len() {
            prop_assert!(((sab[i] - zero[i]) - (sa[i] - zero[i]) - (sb[i] - zero[i])).abs() <= 1e-9);
        }
    }
}
