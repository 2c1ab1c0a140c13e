//! Ear-conditioned complex-spectrum separation network.
//!
//! Data flow for one utterance of `T` frames:
//!
//! ```text
//! mixture STFT (8 ch) -> [T, F, 16] -> freq convs (stride 2) + BN + ReLU
//!   -> residual blocks -> flatten -> temporal conv (2 tau + 1) -> [T, D]
//!   -> self-attention over frames (+ residual)
//!   -> per side: concat(features, linear(raw side channels)) -> decoder -> [T, F, 2]
//! ```
//!
//! The 16 input reals per bin are ordered `mic * 2 + {0: re, 1: im}`, so the
//! left group (mics 0..4) is columns 0..8 and the right group columns 8..16.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{uniform_init, BatchNormParams, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::{stream, tag};
use crate::scene::{Side, NUM_MICS};
use crate::signal::{Complex64, ComplexSpectrogram};

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const REALS_PER_BIN: usize = 2 * NUM_MICS;
const SIDE_REALS: usize = REALS_PER_BIN / 2;
/// Momentum of the BN running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Temporal context half-width; the temporal conv spans `2 tau + 1` frames.
    pub tau: usize,
    pub bins: usize,
    pub encoder_channels: Vec<usize>,
    pub n_residual_blocks: usize,
    pub attention_heads: usize,
    pub embed_dim: usize,
    /// Transposed-conv stages per decoder; each one undoes one encoder stage.
    pub decoder_layers: usize,
    pub skip_proj_dim: usize,
    /// Decoder-only dropout probability.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tau: 2,
            bins: 257,
            encoder_channels: vec![32, 64, 128],
            n_residual_blocks: 4,
            attention_heads: 4,
            embed_dim: 128,
            decoder_layers: 3,
            skip_proj_dim: 128,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.bins < 2 {
            return bad(format!("bins must be at least 2, got {}", self.bins));
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return bad("encoder_channels must be a nonempty list of positive widths".into());
        }
        if self.embed_dim == 0 || self.attention_heads == 0 || self.skip_proj_dim == 0 {
            return bad("embed_dim, attention_heads and skip_proj_dim must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.attention_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by attention_heads {}",
                self.embed_dim, self.attention_heads
            ));
        }
        if self.decoder_layers != self.encoder_channels.len() {
            return bad(format!(
                "decoder_layers ({}) must equal the number of encoder stages ({}) so the decoder restores F",
                self.decoder_layers,
                self.encoder_channels.len()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Frequency length after each encoder stage, starting with `bins`.
    pub fn freq_sizes(&self) -> Vec<usize> {
        let mut f = vec![self.bins];
        for _ in &self.encoder_channels {
            let last = *f.last().unwrap();
            f.push((last + 2 - KERNEL) / STRIDE + 1);
        }
        f
    }

    fn last_channels(&self) -> usize {
        *self.encoder_channels.last().unwrap()
    }

    fn flat_dim(&self) -> usize {
        self.freq_sizes().last().unwrap() * self.last_channels()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
struct EncoderStage {
    conv: ParamId,
    bn: BatchNormParams,
}

#[derive(Debug, Clone)]
struct ResidualBlock {
    conv1: Linear,
    conv2: Linear,
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct Decoder {
    fuse: Linear,
    up: Vec<Linear>,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<EncoderStage>,
    residual: Vec<ResidualBlock>,
    temporal: Linear,
    attention: Attention,
    skip: [Linear; 2],
    decoder: [Decoder; 2],
}

/// Parameter name prefixes of the shared trunk (everything before the decoders).
pub const TRUNK_PREFIXES: [&str; 4] = ["enc.", "res.", "temporal.", "attn."];

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

const SIDES: [Side; 2] = [Side::Left, Side::Right];

struct Builder<'a> {
    store: &'a mut ParamStore,
    init: &'a mut dyn FnMut(&[usize], usize, f64) -> Tensor,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize, gain: f64) -> ParamId {
        let t = (self.init)(shape, fan_in, gain);
        self.store.add(name, t, true)
    }

    fn constant(&mut self, name: String, n: usize, value: f64, trainable: bool) -> ParamId {
        self.store.add(name, Tensor::filled(&[n], value), trainable)
    }

    fn linear(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize, gain: f64) -> Linear {
        Linear {
            w: self.weight(format!("{name}.w"), &[rows, cols], fan_in, gain),
            b: self.constant(format!("{name}.b"), cols, 0.0, true),
        }
    }
}

/// Adds every parameter of `cfg` to `store` in a fixed order using `init`
/// for weights; `init(shape, fan_in, gain)`.
fn build_layout(
    cfg: &ModelConfig,
    store: &mut ParamStore,
    init: &mut dyn FnMut(&[usize], usize, f64) -> Tensor,
) -> Layout {
    let relu_gain = 2f64.sqrt();
    let mut b = Builder { store, init };

    let mut encoder = Vec::new();
    let mut c_in = REALS_PER_BIN;
    for (i, &c) in cfg.encoder_channels.iter().enumerate() {
        let conv = b.weight(format!("enc.{i}.conv.w"), &[KERNEL * c_in, c], KERNEL * c_in, relu_gain);
        let bn = BatchNormParams {
            gamma: b.constant(format!("enc.{i}.bn.gamma"), c, 1.0, true),
            beta: b.constant(format!("enc.{i}.bn.beta"), c, 0.0, true),
            running_mean: b.constant(format!("enc.{i}.bn.running_mean"), c, 0.0, false),
            running_var: b.constant(format!("enc.{i}.bn.running_var"), c, 1.0, false),
        };
        encoder.push(EncoderStage { conv, bn });
        c_in = c;
    }
    let c = cfg.last_channels();
    let residual = (0..cfg.n_residual_blocks)
        .map(|i| ResidualBlock {
            conv1: b.linear(&format!("res.{i}.conv1"), KERNEL * c, c, KERNEL * c, relu_gain),
            conv2: b.linear(&format!("res.{i}.conv2"), KERNEL * c, c, KERNEL * c, 1.0),
        })
        .collect();
    let k_t = 2 * cfg.tau + 1;
    let flat = cfg.flat_dim();
    let d = cfg.embed_dim;
    let temporal = b.linear("temporal", k_t * flat, d, k_t * flat, 1.0);
    let attention = Attention {
        q: b.linear("attn.q", d, d, d, 1.0),
        k: b.linear("attn.k", d, d, d, 1.0),
        v: b.linear("attn.v", d, d, d, 1.0),
        o: b.linear("attn.o", d, d, d, 1.0),
    };
    let skip_in = SIDE_REALS * cfg.bins;
    let p = cfg.skip_proj_dim;
    let skip = SIDES.map(|s| b.linear(&format!("skip.{}", side_name(s)), skip_in, p, skip_in, 1.0));
    let mut widths: Vec<usize> = cfg.encoder_channels.iter().rev().copied().collect();
    widths.push(2);
    let decoder = SIDES.map(|s| {
        let name = side_name(s);
        let fuse = b.linear(&format!("dec.{name}.fuse"), d + p, flat, d + p, relu_gain);
        let up = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 2 == widths.len() { 1.0 } else { relu_gain };
                // each output position sees about kernel / stride taps of every input channel
                let fan_in = w[0] * KERNEL.div_ceil(STRIDE);
                // transposed-conv weight layout is [c_in, kernel * c_out]
                Linear {
                    w: b.weight(format!("dec.{name}.up.{i}.w"), &[w[0], KERNEL * w[1]], fan_in, gain),
                    b: b.constant(format!("dec.{name}.up.{i}.b"), w[1], 0.0, true),
                }
            })
            .collect();
        Decoder { fuse, up }
    });
    Layout {
        encoder,
        residual,
        temporal,
        attention,
        skip,
        decoder,
    }
}

/// How a forward pass treats dropout and batch norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Running BN statistics, no dropout.
    Eval,
    /// Batch BN statistics and dropout masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

/// Real network input `[T, F, 16]` built from an 8-channel mixture STFT.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    pub values: Tensor,
}

impl NetworkInput {
    pub fn from_spectrogram(spec: &ComplexSpectrogram) -> Result<Self> {
        if spec.channels() != NUM_MICS {
            return Err(Error::shape("network input channels", NUM_MICS, spec.channels()));
        }
        let (t, f) = (spec.frames(), spec.bins());
        let mut data = vec![0.0; t * f * REALS_PER_BIN];
        for ch in 0..NUM_MICS {
            for ti in 0..t {
                for (fi, v) in spec.frame(ch, ti).iter().enumerate() {
                    let o = (ti * f + fi) * REALS_PER_BIN + 2 * ch;
                    data[o] = v.re;
                    data[o + 1] = v.im;
                }
            }
        }
        Ok(Self {
            values: Tensor::from_vec(&[t, f, REALS_PER_BIN], data),
        })
    }

    pub fn frames(&self) -> usize {
        self.values.shape[0]
    }

    pub fn bins(&self) -> usize {
        self.values.shape[1]
    }
}

/// Per-side complex estimates, each a single-channel spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub left: ComplexSpectrogram,
    pub right: ComplexSpectrogram,
}

impl NetworkOutput {
    pub fn side(&self, side: Side) -> &ComplexSpectrogram {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Recorded forward pass, ready for [`Graph::backward`].
pub struct Trace<'a> {
    pub graph: Graph<'a>,
    pub input: Var,
    /// Encoder output `[T, D]`, before attention.
    pub features: Var,
    pub attended: Var,
    /// Attention weights per head, each `[T, T]` with rows summing to one.
    pub attention: Vec<Var>,
    pub skip: [Var; 2],
    /// Decoder outputs `[T, F, 2]`, left then right.
    pub outputs: [Var; 2],
}

impl Trace<'_> {
    pub fn output(&self, side: Side) -> Var {
        self.outputs[side_index(side)]
    }
}

#[derive(Debug, Clone)]
pub struct SeparationNet {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl SeparationNet {
    /// Fan-in-scaled uniform weights, zero biases, identity BN; deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, &[tag("init")]);
        let mut params = ParamStore::new();
        let layout = build_layout(&config, &mut params, &mut |shape, fan_in, gain| {
            uniform_init(&mut rng, shape, fan_in, gain)
        });
        Ok(Self { config, params, layout })
    }

    /// Rebuilds a network from stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, stored: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = build_layout(&config, &mut params, &mut |shape, _, _| Tensor::zeros(shape));
        if stored.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors for this config, found {}",
                params.len(),
                stored.len()
            )));
        }
        for (want, got) in params.entries().iter().zip(stored.entries()) {
            if want.name != got.name || want.tensor.shape != got.tensor.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    want.name, want.tensor.shape, got.name, got.tensor.shape
                )));
            }
            if !got.tensor.is_finite() {
                return Err(Error::NonFinite(format!("parameter {}", got.name)));
            }
        }
        Ok(Self {
            config,
            params: stored,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn digest(&self) -> String {
        self.params.digest()
    }

    /// Zeroes every tensor whose name starts with one of `prefixes`.
    pub fn zero_params(&mut self, prefixes: &[&str]) {
        for id in self.params.ids().collect::<Vec<_>>() {
            if prefixes.iter().any(|p| self.params.name(id).starts_with(p)) {
                self.params.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Folds training-mode batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[crate::nn::BatchStats], rows: &[usize]) {
        for (s, &n) in stats.iter().zip(rows) {
            let unbias = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
            let rm = &mut self.params.get_mut(s.running_mean).data;
            for (r, m) in rm.iter_mut().zip(&s.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            let rv = &mut self.params.get_mut(s.running_var).data;
            for (r, v) in rv.iter_mut().zip(&s.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
            }
        }
    }

    /// Rows each BN layer normalizes over for an input of `frames` frames.
    pub fn bn_rows(&self, frames: usize) -> Vec<usize> {
        self.config.freq_sizes()[1..].iter().map(|f| f * frames).collect()
    }

    fn check_input(&self, input: &NetworkInput) -> Result<()> {
        let s = &input.values.shape;
        if s.len() != 3 || s[1] != self.config.bins || s[2] != REALS_PER_BIN || s[0] == 0 {
            return Err(Error::shape(
                "network input",
                format!("[T>0, {}, {}]", self.config.bins, REALS_PER_BIN),
                format!("{s:?}"),
            ));
        }
        if !input.values.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Encoder: `[T, F, 16]` -> `[T, D]`.
    pub fn encode(&self, g: &mut Graph, x: Var, train: bool) -> Var {
        let t = g.shape(x)[0];
        let mut h = x;
        for stage in &self.layout.encoder {
            let w = g.param(stage.conv);
            h = g.conv1d(h, w, KERNEL, STRIDE, 1);
            h = g.batch_norm(h, stage.bn, train);
            h = g.relu(h);
        }
        for block in &self.layout.residual {
            let y = conv_same(g, h, block.conv1);
            let y = g.relu(y);
            let y = conv_same(g, y, block.conv2);
            let y = g.add(h, y);
            h = g.relu(y);
        }
        let h = g.reshape(h, &[1, t, self.config.flat_dim()]);
        let w = g.param(self.layout.temporal.w);
        let h = g.conv1d(h, w, 2 * self.config.tau + 1, 1, self.config.tau);
        let b = g.param(self.layout.temporal.b);
        let h = g.add_bias(h, b);
        g.reshape(h, &[t, self.config.embed_dim])
    }

    /// Multi-head self-attention over frames with a residual connection.
    pub fn attend(&self, g: &mut Graph, x: Var) -> (Var, Vec<Var>) {
        let a = &self.layout.attention;
        let q = linear(g, x, a.q);
        let k = linear(g, x, a.k);
        let v = linear(g, x, a.v);
        let heads = self.config.attention_heads;
        let dh = self.config.embed_dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let s = g.matmul_nt(qh, kh);
            let s = g.scale(s, scale);
            let w = g.softmax_rows(s);
            outs.push(g.matmul(w, vh));
            weights.push(w);
        }
        let cat = g.concat_cols(&outs);
        let o = linear(g, cat, a.o);
        (g.add(x, o), weights)
    }

    /// Linear projection of one side's raw re/im values, `[T, skip_proj_dim]`.
    pub fn ear_skip_project(&self, g: &mut Graph, x: Var, side: Side) -> Var {
        let (t, f) = (g.shape(x)[0], g.shape(x)[1]);
        let flat = g.reshape(x, &[t * f, REALS_PER_BIN]);
        let start = side_index(side) * SIDE_REALS;
        let cols = g.slice_cols(flat, start, SIDE_REALS);
        let rows = g.reshape(cols, &[t, f * SIDE_REALS]);
        linear(g, rows, self.layout.skip[side_index(side)])
    }

    /// One side's decoder, `[T, D] + [T, P]` -> `[T, F, 2]`.
    pub fn decode(&self, g: &mut Graph, features: Var, skip: Var, side: Side, mode: Mode) -> Var {
        let dec = &self.layout.decoder[side_index(side)];
        let t = g.shape(features)[0];
        let sizes = self.config.freq_sizes();
        let mut layer = 0u64;
        let mut dropout = |g: &mut Graph, v: Var| -> Var {
            layer += 1;
            match mode {
                Mode::Train { dropout_seed } if self.config.dropout > 0.0 => {
                    let p = self.config.dropout;
                    let mut rng = stream(dropout_seed, &[tag("dropout"), side_index(side) as u64, layer]);
                    let keep = 1.0 / (1.0 - p);
                    let n = g.value(v).numel();
                    let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                    g.mask(v, mask)
                }
                _ => v,
            }
        };
        let cat = g.concat_cols(&[features, skip]);
        let h = linear(g, cat, dec.fuse);
        let h = g.relu(h);
        let h = dropout(g, h);
        let mut h = g.reshape(h, &[t, sizes[sizes.len() - 1], self.config.last_channels()]);
        let n_up = dec.up.len();
        for (i, up) in dec.up.iter().enumerate() {
            let target = sizes[n_up - 1 - i];
            let w = g.param(up.w);
            h = g.conv_transpose1d(h, w, KERNEL, STRIDE, 1, target);
            let b = g.param(up.b);
            h = g.add_bias(h, b);
            if i + 1 < n_up {
                h = g.relu(h);
                h = dropout(g, h);
            }
        }
        h
    }

    /// Full forward pass recorded on a fresh graph.
    pub fn trace(&self, input: &NetworkInput, mode: Mode) -> Result<Trace<'_>> {
        self.check_input(input)?;
        let train = matches!(mode, Mode::Train { .. });
        let mut g = Graph::new(&self.params);
        let x = g.input(input.values.clone());
        let features = self.encode(&mut g, x, train);
        let (attended, attention) = self.attend(&mut g, features);
        let skip = SIDES.map(|s| self.ear_skip_project(&mut g, x, s));
        let outputs = SIDES.map(|s| self.decode(&mut g, attended, skip[side_index(s)], s, mode));
        Ok(Trace {
            graph: g,
            input: x,
            features,
            attended,
            attention,
            skip,
            outputs,
        })
    }

    /// Separates an 8-channel mixture spectrogram into left and right estimates.
    pub fn forward(&self, mixture: &ComplexSpectrogram, mode: Mode) -> Result<NetworkOutput> {
        let input = NetworkInput::from_spectrogram(mixture)?;
        let trace = self.trace(&input, mode)?;
        let [left, right] = trace.outputs.map(|v| to_spectrogram(trace.graph.value(v), mixture));
        Ok(NetworkOutput {
            left: left?,
            right: right?,
        })
    }
}

fn linear(g: &mut Graph, x: Var, l: Linear) -> Var {
    let w = g.param(l.w);
    let y = g.matmul(x, w);
    let b = g.param(l.b);
    g.add_bias(y, b)
}

fn conv_same(g: &mut Graph, x: Var, l: Linear) -> Var {
    let w = g.param(l.w);
    let y = g.conv1d(x, w, KERNEL, 1, 1);
    let b = g.param(l.b);
    g.add_bias(y, b)
}

/// `[T, F, 2]` decoder output as a single-channel spectrogram shaped like `like`.
pub fn to_spectrogram(out: &Tensor, like: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    let values = out.data.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    ComplexSpectrogram::from_values(
        values,
        1,
        like.frames(),
        *like.config(),
        like.sample_rate(),
        like.signal_length(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            tau: 1,
            bins: 9,
            encoder_channels: vec![4, 4],
            n_residual_blocks: 1,
            attention_heads: 2,
            embed_dim: 8,
            decoder_layers: 2,
            skip_proj_dim: 6,
            dropout: 0.1,
        }
    }

    fn random_input(t: usize, f: usize, seed: u64) -> NetworkInput {
        let mut rng = stream(seed, &[]);
        let n = t * f * REALS_PER_BIN;
        NetworkInput {
            values: Tensor::from_vec(&[t, f, REALS_PER_BIN], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            embed_dim: 127,
            ..ModelConfig::default()
        };
        assert!(SeparationNet::init(bad, 0).is_err());
        let bad = ModelConfig {
            decoder_layers: 2,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ModelConfig::default().freq_sizes(), vec![257, 129, 65, 33]);
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let a = SeparationNet::init(tiny_config(), 0).unwrap();
        let b = SeparationNet::init(tiny_config(), 0).unwrap();
        let c = SeparationNet::init(tiny_config(), 1).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert!(a.params().entries().iter().all(|e| e.tensor.is_finite()));
    }

    #[test]
    fn left_and_right_parameters_are_disjoint() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        let names: Vec<&str> = net.params().entries().iter().map(|e| e.name.as_str()).collect();
        let left: Vec<_> = names.iter().filter(|n| n.contains("left")).collect();
        let right: Vec<_> = names.iter().filter(|n| n.contains("right")).collect();
        assert_eq!(left.len(), right.len());
        assert!(!left.is_empty());
        for l in &left {
            assert!(!right.contains(l));
        }
    }

    #[test]
    fn shapes_and_frame_count_preserved() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        let input = random_input(7, 9, 1);
        let tr = net.trace(&input, Mode::Eval).unwrap();
        assert_eq!(tr.graph.shape(tr.features), &[7, 8]);
        assert_eq!(tr.graph.shape(tr.attended), &[7, 8]);
        for o in tr.outputs {
            assert_eq!(tr.graph.shape(o), &[7, 9, 2]);
        }
        for w in &tr.attention {
            for row in tr.graph.value(*w).data.chunks(7) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_frame_attention_is_identity_weighted() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        let tr = net.trace(&random_input(1, 9, 2), Mode::Eval).unwrap();
        for w in &tr.attention {
            assert_eq!(tr.graph.value(*w).data, vec![1.0]);
        }
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let net = SeparationNet::init(tiny_config(), 3).unwrap();
        let input = NetworkInput {
            values: Tensor::zeros(&[5, 9, REALS_PER_BIN]),
        };
        let tr = net.trace(&input, Mode::Eval).unwrap();
        assert!(tr.graph.value(tr.features).data.iter().all(|v| *v == 0.0));
        // skip reduces to its (zero) bias
        assert!(tr.graph.value(tr.skip[0]).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_is_deterministic_and_train_drops_out() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        let input = random_input(4, 9, 5);
        let eval = |m| {
            let tr = net.trace(&input, m).unwrap();
            tr.graph.value(tr.outputs[0]).clone()
        };
        assert_eq!(eval(Mode::Eval), eval(Mode::Eval));
        let a = eval(Mode::Train { dropout_seed: 1 });
        assert_eq!(a, eval(Mode::Train { dropout_seed: 1 }));
        assert_ne!(a, eval(Mode::Train { dropout_seed: 2 }));
    }

    #[test]
    fn bad_input_rejected() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        assert!(net.trace(&random_input(3, 8, 0), Mode::Eval).is_err());
        let mut x = random_input(3, 9, 0);
        x.values.data[4] = f64::NAN;
        assert!(net.trace(&x, Mode::Eval).is_err());
    }

    #[test]
    fn from_params_checks_layout() {
        let net = SeparationNet::init(tiny_config(), 0).unwrap();
        let back = SeparationNet::from_params(tiny_config(), net.params().clone()).unwrap();
        assert_eq!(back.digest(), net.digest());
        let other = ModelConfig {
            skip_proj_dim: 5,
            ..tiny_config()
        };
        assert!(SeparationNet::from_params(other, net.params().clone()).is_err());
    }
}
