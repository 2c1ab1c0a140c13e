//! Training loop: on-the-fly STFT, fixed-pairing SI-SDR objective, Adam,
//! plateau learning-rate halving and early stopping.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::metrics::{si_sdr, training_loss};
use crate::model::{to_spectrogram, Mode, NetworkInput, SeparationNet};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::{Gradients, Tensor};
use crate::rng::{derive_seed, stream, tag};
use crate::scene::MixtureExample;
use crate::signal::{StftConfig, StftProcessor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Halve the learning rate after this many consecutive non-improving epochs.
    pub lr_halving_patience: usize,
    /// Stop after this many consecutive non-improving epochs.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// A validation score improves when it exceeds the best by more than this.
    pub improvement_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            lr_halving_patience: 5,
            early_stop_patience: 10,
            max_epochs: 100,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
            improvement_tolerance: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.lr_halving_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.improvement_tolerance < 0.0 {
            return Err(Error::Config("improvement_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_si_sdr: f64,
    pub improved: bool,
    pub lr_halved: bool,
}

/// Scheduler and progress bookkeeping; everything needed to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub halvings: u32,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement_lr: usize,
    pub epochs_since_improvement_stop: usize,
    pub stopped: bool,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            lr: cfg.learning_rate,
            halvings: 0,
            best_val: None,
            best_epoch: None,
            epochs_since_improvement_lr: 0,
            epochs_since_improvement_stop: 0,
            stopped: false,
            history: Vec::new(),
        }
    }

    /// Applies one epoch's validation score; returns `(improved, halved)`.
    ///
    /// Both counters reset on improvement. The halving counter also resets
    /// after each halving; the stop counter only resets on improvement.
    pub fn observe(&mut self, cfg: &TrainConfig, val: f64) -> (bool, bool) {
        self.epoch += 1;
        let improved = self.best_val.is_none_or(|b| val > b + cfg.improvement_tolerance);
        let mut halved = false;
        if improved {
            self.best_val = Some(val);
            self.best_epoch = Some(self.epoch);
            self.epochs_since_improvement_lr = 0;
            self.epochs_since_improvement_stop = 0;
        } else {
            self.epochs_since_improvement_lr += 1;
            self.epochs_since_improvement_stop += 1;
            if self.epochs_since_improvement_lr >= cfg.lr_halving_patience {
                self.halvings += 1;
                self.lr = cfg.learning_rate / 2f64.powi(self.halvings as i32);
                self.epochs_since_improvement_lr = 0;
                halved = true;
            }
            if self.epochs_since_improvement_stop >= cfg.early_stop_patience {
                self.stopped = true;
            }
        }
        if self.epoch >= cfg.max_epochs {
            self.stopped = true;
        }
        (improved, halved)
    }
}

/// Scores the network after each epoch; higher is better.
pub trait Validator {
    fn validate(&mut self, net: &SeparationNet, stft: &StftProcessor) -> Result<f64>;
}

/// Mean eval-mode SI-SDR over both sources of every example.
pub struct SiSdrValidator<'a> {
    pub examples: &'a [MixtureExample],
}

impl Validator for SiSdrValidator<'_> {
    fn validate(&mut self, net: &SeparationNet, stft: &StftProcessor) -> Result<f64> {
        mean_si_sdr(net, stft, self.examples)
    }
}

pub fn mean_si_sdr(net: &SeparationNet, stft: &StftProcessor, examples: &[MixtureExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Dataset("validation set is empty".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let spec = stft.stft(&ex.mixture)?;
        let out = net.forward(&spec, Mode::Eval)?;
        let l = stft.istft(&out.left)?;
        let r = stft.istft(&out.right)?;
        total += si_sdr(l.channel(0), ex.target_left.channel(0))?.db;
        total += si_sdr(r.channel(0), ex.target_right.channel(0))?.db;
    }
    Ok(total / (2 * examples.len()) as f64)
}

/// Loss, gradients and estimates of one example.
pub struct ExampleGrad {
    pub loss: f64,
    pub grads: Gradients,
    pub estimates: [Vec<f64>; 2],
    pub batch_stats: Vec<crate::nn::BatchStats>,
}

/// Forward through the network and iSTFT, smooth loss, and backward.
pub fn example_gradient(
    net: &SeparationNet,
    stft: &StftProcessor,
    ex: &MixtureExample,
    mode: Mode,
) -> Result<ExampleGrad> {
    let spec = stft.stft(&ex.mixture)?;
    let input = NetworkInput::from_spectrogram(&spec)?;
    let trace = net.trace(&input, mode)?;
    let mut estimates = Vec::with_capacity(2);
    for v in trace.outputs {
        let s = to_spectrogram(trace.graph.value(v), &spec)
            .map_err(|_| Error::NonFinite("network output".into()))?;
        estimates.push(stft.istft(&s)?.into_channels().remove(0));
    }
    let (loss, dl) = training_loss(
        &estimates[0],
        &estimates[1],
        ex.target_left.channel(0),
        ex.target_right.channel(0),
    )?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let frames = spec.frames();
    let bins = spec.bins();
    let seeds = trace
        .outputs
        .iter()
        .zip(&dl)
        .map(|(v, g)| {
            let (re, im) = stft.istft_adjoint(g, frames);
            let mut data = vec![0.0; frames * bins * 2];
            for i in 0..frames * bins {
                data[2 * i] = re[i];
                data[2 * i + 1] = im[i];
            }
            (*v, Tensor::from_vec(&[frames, bins, 2], data))
        })
        .collect();
    let grads = trace.graph.backward(seeds);
    let batch_stats = trace.graph.batch_stats().to_vec();
    let [l, r]: [Vec<f64>; 2] = estimates.try_into().unwrap();
    Ok(ExampleGrad {
        loss,
        grads,
        estimates: [l, r],
        batch_stats,
    })
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    pub losses: Vec<f64>,
    pub estimates: Vec<[Vec<f64>; 2]>,
}

pub struct Trainer {
    pub net: SeparationNet,
    pub stft: StftProcessor,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub state: TrainState,
}

/// Where `fit` writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct FitOutputs {
    pub checkpoint_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Return after this many total epochs even if training would continue.
    pub pause_after: Option<usize>,
}

pub const LAST_CHECKPOINT: &str = "last.json";
pub const BEST_CHECKPOINT: &str = "best.json";

impl Trainer {
    pub fn new(net: SeparationNet, stft: StftConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if stft.bins() != net.config().bins {
            return Err(Error::shape("STFT bins vs model bins", net.config().bins, stft.bins()));
        }
        let optimizer = Adam::new(net.params(), config.adam);
        let state = TrainState::new(&config);
        Ok(Self {
            net,
            stft: StftProcessor::new(stft)?,
            optimizer,
            config,
            state,
        })
    }

    /// Restores network, optimizer and scheduler state from a training checkpoint.
    pub fn resume(ck: &Checkpoint) -> Result<Self> {
        let net = ck.model()?;
        let config = ck
            .train_config
            .clone()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no training config".into()))?;
        let state = ck
            .train_state
            .clone()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no training state".into()))?;
        let optimizer = ck
            .optimizer(&net)?
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
        Ok(Self {
            net,
            stft: StftProcessor::new(ck.stft)?,
            optimizer,
            config,
            state,
        })
    }

    /// Raises the epoch cap. A run that stopped only because it hit the old
    /// cap becomes resumable; an early-stopped run stays stopped.
    pub fn extend_max_epochs(&mut self, max_epochs: usize) {
        self.config.max_epochs = max_epochs;
        let s = &mut self.state;
        if s.epochs_since_improvement_stop < self.config.early_stop_patience {
            s.stopped = s.epoch >= max_epochs;
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.net, *self.stft.config()).with_training(&self.optimizer, &self.config, &self.state)
    }

    /// One optimizer update on `batch`; gradients are averaged over the batch
    /// in example order. Dropout masks derive from `step_seed` and the example position.
    pub fn train_step(&mut self, batch: &[&MixtureExample], step_seed: u64) -> Result<StepOutput> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut sum: Option<Gradients> = None;
        let mut losses = Vec::with_capacity(batch.len());
        let mut estimates = Vec::with_capacity(batch.len());
        let mut stats = Vec::new();
        for (i, ex) in batch.iter().enumerate() {
            let mode = Mode::Train {
                dropout_seed: derive_seed(step_seed, &[i as u64]),
            };
            let eg = example_gradient(&self.net, &self.stft, ex, mode).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("example {i} of batch: {m}")),
                other => other,
            })?;
            if eg.grads.tensors.iter().flatten().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of example {i} of batch")));
            }
            losses.push(eg.loss);
            estimates.push(eg.estimates);
            stats.push((eg.batch_stats, ex.mixture.len()));
            match &mut sum {
                None => sum = Some(eg.grads),
                Some(acc) => {
                    for (a, g) in acc.tensors.iter_mut().zip(eg.grads.tensors) {
                        match (a.as_mut(), g) {
                            (Some(a), Some(g)) => a.add_assign(&g),
                            (None, Some(g)) => *a = Some(g),
                            _ => {}
                        }
                    }
                }
            }
        }
        let mut grads = sum.unwrap();
        let scale = 1.0 / batch.len() as f64;
        for t in grads.tensors.iter_mut().flatten() {
            t.data.iter_mut().for_each(|v| *v *= scale);
        }
        self.optimizer.update(self.net.params_mut(), &grads, self.state.lr);
        for (s, len) in stats {
            let frames = self.stft.config().num_frames(len);
            let rows = self.net.bn_rows(frames);
            self.net.update_running_stats(&s, &rows);
        }
        Ok(StepOutput {
            loss: losses.iter().sum::<f64>() * scale,
            losses,
            estimates,
        })
    }

    /// Runs one epoch of shuffled mini-batches; returns the mean training loss.
    pub fn train_epoch(&mut self, train: &[MixtureExample]) -> Result<f64> {
        let epoch = self.state.epoch as u64 + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(self.config.seed, &[tag("shuffle"), epoch]));
        let mut total = 0.0;
        for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&MixtureExample> = chunk.iter().map(|&i| &train[i]).collect();
            let seed = derive_seed(self.config.seed, &[tag("dropout"), epoch, step as u64]);
            let out = self.train_step(&batch, seed)?;
            total += out.loss * batch.len() as f64;
        }
        Ok(total / train.len() as f64)
    }

    /// Trains until early stop or the epoch cap, validating after every epoch.
    pub fn fit(&mut self, train: &[MixtureExample], validator: &mut dyn Validator, out: &FitOutputs) -> Result<()> {
        if train.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        if let Some(dir) = &out.checkpoint_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        while !self.state.stopped && out.pause_after.is_none_or(|p| self.state.epoch < p) {
            let lr = self.state.lr;
            let train_loss = self.train_epoch(train)?;
            let val = validator.validate(&self.net, &self.stft)?;
            let (improved, lr_halved) = self.state.observe(&self.config, val);
            let record = EpochRecord {
                epoch: self.state.epoch,
                lr,
                train_loss,
                val_si_sdr: val,
                improved,
                lr_halved,
            };
            log::info!(
                "epoch {} lr {:.3e} train loss {:.3} val SI-SDR {:.3} dB{}",
                record.epoch,
                lr,
                train_loss,
                val,
                if improved { " *" } else { "" }
            );
            if let Some(path) = &out.log_path {
                append_line(path, &serde_json::to_string(&record)?)?;
            }
            self.state.history.push(record);
            if let Some(dir) = &out.checkpoint_dir {
                let ck = self.checkpoint();
                ck.save(&dir.join(LAST_CHECKPOINT))?;
                if improved {
                    ck.save(&dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        Ok(())
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stagnant_validation_halves_at_six_and_stops_at_eleven() {
        let cfg = TrainConfig::default();
        let mut s = TrainState::new(&cfg);
        let mut halved_at = Vec::new();
        while !s.stopped {
            let (_, h) = s.observe(&cfg, -3.0);
            if h {
                halved_at.push(s.epoch);
            }
        }
        assert_eq!(s.epoch, 11);
        assert_eq!(halved_at, vec![6, 11]);
        assert_eq!(s.lr, 2.5e-5);
    }

    #[test]
    fn improvement_resets_both_counters() {
        let cfg = TrainConfig::default();
        let mut s = TrainState::new(&cfg);
        for v in [1.0, 1.0, 1.0, 1.0, 2.0] {
            s.observe(&cfg, v);
        }
        assert_eq!(s.epochs_since_improvement_lr, 0);
        assert_eq!(s.epochs_since_improvement_stop, 0);
        assert_eq!(s.best_epoch, Some(5));
        // equal is not an improvement
        s.observe(&cfg, 2.0);
        assert_eq!(s.epochs_since_improvement_stop, 1);
    }

    #[test]
    fn epoch_cap_stops() {
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let mut s = TrainState::new(&cfg);
        for v in [1.0, 2.0, 3.0] {
            assert!(!s.stopped);
            s.observe(&cfg, v);
        }
        assert!(s.stopped);
    }
}
