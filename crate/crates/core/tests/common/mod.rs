//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use earsep_core::model::ModelConfig;
use earsep_core::scene::dataset::generate_split;
use earsep_core::scene::{ConditionGrid, Corpus, DatasetConfig, MixtureExample, SceneTemplate, Split, SplitCounts};
use earsep_core::signal::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest useful network: F = 9 (16-point FFT), two encoder stages.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        tau: 1,
        bins: 9,
        encoder_channels: vec![3, 4],
        n_residual_blocks: 1,
        attention_heads: 2,
        embed_dim: 4,
        decoder_layers: 2,
        skip_proj_dim: 4,
        dropout: 0.1,
    }
}

/// Small full-resolution network used by the training probes.
pub fn probe_config() -> ModelConfig {
    ModelConfig {
        tau: 2,
        bins: 257,
        encoder_channels: vec![16],
        n_residual_blocks: 1,
        attention_heads: 2,
        embed_dim: 32,
        decoder_layers: 1,
        skip_proj_dim: 256,
        dropout: 0.1,
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random mixture/target triple of `len` samples; not a physical scene.
pub fn random_example(seed: u64, len: usize) -> MixtureExample {
    let mut r = rng(seed);
    let mut ch = |n: usize| (0..n).map(|_| uniform(&mut r, len)).collect::<Vec<_>>();
    let mixture = Waveform::new(ch(8), 16000).unwrap();
    let left = Waveform::new(ch(1), 16000).unwrap();
    let right = Waveform::new(ch(1), 16000).unwrap();
    MixtureExample {
        mixture,
        target_left: left,
        target_right: right,
        metadata: serde_json::from_value(serde_json::json!({
            "seed": seed, "t60": 0.0, "snr_db": 0.0, "distance_left": 1.0, "distance_right": 1.0,
            "distance_noise": null, "azimuth_noise": null, "speaker_left": "a", "speaker_right": "b",
            "utterance_left": 0, "utterance_right": 0, "noise_id": null,
            "normalization_gain": 1.0, "noise_gain": 0.0
        }))
        .unwrap(),
    }
}

/// Rendered scenes of `duration_s` over `grid`, from a small synthetic corpus.
pub fn scenes(count: usize, duration_s: f64, grid: ConditionGrid, seed: u64) -> Vec<MixtureExample> {
    let cfg = DatasetConfig {
        scene: SceneTemplate {
            duration_s,
            ..Default::default()
        },
        grid,
        splits: SplitCounts { train: count, val: 0, test: 0 },
        seed,
        relax_unique_pairs: true,
    };
    let corpus = Corpus::synthetic(12, 4, 3, seed);
    generate_split(&corpus, &cfg, Split::Train).unwrap()
}

pub fn anechoic_grid(snr_db: Vec<f64>) -> ConditionGrid {
    ConditionGrid { t60: vec![0.0], snr_db }
}

/// T60 from Schroeder backward integration, extrapolated from the
/// -5 dB to -25 dB span of the energy decay curve.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> f64 {
    ensemble_schroeder_t60(&[h.to_vec()], sample_rate)
}

/// T20 (-5 to -25 dB) of the Schroeder curve of the spatially averaged
/// energy response: each RIR's squared response is normalized to unit
/// energy before averaging, as in multi-position room measurements.
pub fn ensemble_schroeder_t60(hs: &[Vec<f64>], sample_rate: u32) -> f64 {
    let len = hs.iter().map(Vec::len).max().unwrap_or(0);
    let mut energy = vec![0.0; len];
    for h in hs {
        let total: f64 = h.iter().map(|v| v * v).sum();
        for (e, v) in energy.iter_mut().zip(h) {
            *e += v * v / total;
        }
    }
    let mut edc = vec![0.0; len];
    let mut acc = 0.0;
    for i in (0..len).rev() {
        acc += energy[i];
        edc[i] = acc;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / edc[0]).log10()).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &d) in db.iter().enumerate() {
        if (-25.0..=-5.0).contains(&d) {
            xs.push(i as f64 / sample_rate as f64);
            ys.push(d);
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -60.0 / (sxy / sxx)
}

/// RIRs at T60 `t60` from talker-like positions around the default listener
/// to both in-ear microphones.
pub fn listener_rirs(t60: f64) -> Vec<Vec<f64>> {
    use earsep_core::scene::{image_source_rirs, ArrayGeometry, RirHorizon, RoomSpec};
    let room = RoomSpec::default().with_t60(t60);
    let array = ArrayGeometry::default();
    let mics = array.mic_positions();
    let ears = [mics[array.in_ear[0]], mics[array.in_ear[1]]];
    [(60.0, 1.5), (-60.0, 1.4), (60.0, 1.8), (-140.0, 3.5), (0.0, 1.0)]
        .iter()
        .flat_map(|&(az, d)| image_source_rirs(&room, &array.source_position(az, d), &ears, RirHorizon::T60, 16000).unwrap())
        .collect()
}

pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300);
    got.iter().zip(want).fold(0.0_f64, |a, (g, w)| a.max((g - w).abs())) / scale
}

/// Max relative error between the analytic loss gradient (forward, iSTFT,
/// smooth SI-SDR) and central differences over every trainable parameter.
///
/// Biases and BN shifts are moved off zero first: with zero biases some
/// ReLU inputs sit exactly on the kink, where differences are meaningless.
pub fn full_gradient_check(seed: u64, step: f64) -> (f64, usize) {
    use earsep_core::model::{Mode, SeparationNet};
    use earsep_core::signal::{StftConfig, StftProcessor};
    use earsep_core::train::example_gradient;

    let mut r = rng(seed);
    let mut net = SeparationNet::init(tiny_config(), seed).unwrap();
    let ids: Vec<_> = net.params().ids().collect();
    for &id in &ids {
        let name = net.params().name(id).to_string();
        if name.ends_with(".b") || name.ends_with(".beta") {
            for v in net.params_mut().get_mut(id).data.iter_mut() {
                *v = r.gen_range(-0.3..0.3);
            }
        }
    }
    let ex = random_example(seed + 1, 48);
    let stft = StftProcessor::new(StftConfig::hann(16)).unwrap();
    let mode = Mode::Train { dropout_seed: seed + 2 };
    let analytic = example_gradient(&net, &stft, &ex, mode).unwrap();
    let loss_at = |n: &SeparationNet| example_gradient(n, &stft, &ex, mode).unwrap().loss;
    let mut worst = 0.0_f64;
    for &id in &ids {
        if !net.params().is_trainable(id) {
            continue;
        }
        for i in 0..net.params().get(id).numel() {
            let orig = net.params().get(id).data[i];
            net.params_mut().get_mut(id).data[i] = orig + step;
            let lp = loss_at(&net);
            net.params_mut().get_mut(id).data[i] = orig - step;
            let lm = loss_at(&net);
            net.params_mut().get_mut(id).data[i] = orig;
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic.grads.get(id).map_or(0.0, |t| t.data[i]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    (worst, net.params().num_trainable())
}

/// A hand-built scene with generated talkers and pink noise.
pub fn scene_spec(
    t60: f64,
    noise: bool,
    shadow: earsep_core::scene::HeadShadow,
    snr_db: f64,
    num_samples: usize,
) -> earsep_core::scene::SceneSpec {
    use earsep_core::scene::corpus::{noise_signal, speech_like};
    use earsep_core::scene::{ArrayGeometry, NoiseKind, RirHorizon, RoomSpec, SceneSpec, SourceKind, SourceSpec, Voice};
    let fs = 16000;
    let talker = |az: f64, d: f64, k: usize| SourceSpec {
        kind: SourceKind::Speech,
        azimuth: az,
        distance: d,
        signal: Waveform::mono(speech_like(&Voice::for_speaker(3, k), k as u64, num_samples, fs), fs).unwrap(),
    };
    SceneSpec {
        room: RoomSpec::default().with_t60(t60),
        array: ArrayGeometry::default(),
        shadow,
        horizon: RirHorizon::T60,
        talker_left: talker(-60.0, 1.4, 1),
        talker_right: talker(60.0, 1.8, 2),
        noise: noise.then(|| SourceSpec {
            kind: SourceKind::Noise,
            azimuth: -140.0,
            distance: 3.5,
            signal: Waveform::mono(noise_signal(NoiseKind::Pink, 9, num_samples, fs), fs).unwrap(),
        }),
        snr_db,
        num_samples,
        sample_rate: fs,
    }
}

/// Channel-wise `sum_k gains[k] * waves[k]`.
pub fn weighted_sum(waves: &[&Waveform], gains: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; waves[0].len()]; waves[0].num_channels()];
    for (w, g) in waves.iter().zip(gains) {
        for (o, c) in out.iter_mut().zip(w.channels()) {
            for (a, b) in o.iter_mut().zip(c) {
                *a += g * b;
            }
        }
    }
    out
}

pub fn mean_power(channels: &[Vec<f64>]) -> f64 {
    let n: usize = channels.iter().map(Vec::len).sum();
    channels.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64
}

pub fn flat(channels: &[Vec<f64>]) -> Vec<f64> {
    channels.iter().flatten().copied().collect()
}
