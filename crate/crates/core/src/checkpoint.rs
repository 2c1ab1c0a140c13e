//! Versioned JSON checkpoints.
//!
//! Tensors are stored as base64 of little-endian `f64` bytes so a
//! save/load round trip is bit-exact on every platform.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, SeparationNet};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::{ParamStore, Tensor};
use crate::signal::StftConfig;
use crate::train::{TrainConfig, TrainState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: String,
}

impl StoredTensor {
    pub fn encode(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape: t.shape.clone(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Checkpoint(format!("bad tensor encoding: {e}")))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != 8 * n {
            return Err(Error::Checkpoint(format!(
                "tensor of shape {:?} needs {} bytes, found {}",
                self.shape,
                8 * n,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::from_vec(&self.shape, data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub trainable: bool,
    pub tensor: StoredTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredOptimizer {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<StoredTensor>,
    pub v: Vec<StoredTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub stft: StftConfig,
    pub params: Vec<StoredParam>,
    pub optimizer: Option<StoredOptimizer>,
    pub train_config: Option<TrainConfig>,
    pub train_state: Option<TrainState>,
}

impl Checkpoint {
    pub fn from_model(net: &SeparationNet, stft: StftConfig) -> Self {
        let params = net
            .params()
            .entries()
            .iter()
            .map(|e| StoredParam {
                name: e.name.clone(),
                trainable: e.trainable,
                tensor: StoredTensor::encode(&e.tensor),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            model: net.config().clone(),
            stft,
            params,
            optimizer: None,
            train_config: None,
            train_state: None,
        }
    }

    pub fn with_training(mut self, opt: &Adam, config: &TrainConfig, state: &TrainState) -> Self {
        self.optimizer = Some(StoredOptimizer {
            config: opt.config,
            step: opt.step,
            m: opt.m.iter().map(StoredTensor::encode).collect(),
            v: opt.v.iter().map(StoredTensor::encode).collect(),
        });
        self.train_config = Some(config.clone());
        self.train_state = Some(state.clone());
        self
    }

    pub fn model(&self) -> Result<SeparationNet> {
        let mut store = ParamStore::new();
        for p in &self.params {
            store.add(p.name.clone(), p.tensor.decode()?, p.trainable);
        }
        SeparationNet::from_params(self.model.clone(), store)
    }

    pub fn optimizer(&self, net: &SeparationNet) -> Result<Option<Adam>> {
        let Some(o) = &self.optimizer else { return Ok(None) };
        let decode = |v: &[StoredTensor]| v.iter().map(StoredTensor::decode).collect::<Result<Vec<_>>>();
        let (m, v) = (decode(&o.m)?, decode(&o.v)?);
        let expected = Adam::new(net.params(), o.config);
        let shapes_ok = |got: &[Tensor]| {
            got.len() == expected.m.len() && got.iter().zip(&expected.m).all(|(a, b)| a.shape == b.shape)
        };
        if !shapes_ok(&m) || !shapes_ok(&v) {
            return Err(Error::Checkpoint("optimizer moments do not match the parameters".into()));
        }
        Ok(Some(Adam {
            config: o.config,
            step: o.step,
            m,
            v,
        }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_encoding_is_bit_exact() {
        let t = Tensor::from_vec(&[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]);
        let back = StoredTensor::encode(&t).decode().unwrap();
        assert_eq!(t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn model_round_trip_and_version_check() {
        let cfg = ModelConfig {
            tau: 1,
            bins: 9,
            encoder_channels: vec![2],
            n_residual_blocks: 1,
            attention_heads: 1,
            embed_dim: 4,
            decoder_layers: 1,
            skip_proj_dim: 3,
            dropout: 0.0,
        };
        let net = SeparationNet::init(cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ck = Checkpoint::from_model(&net, StftConfig::hann(16));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model().unwrap().digest(), net.digest());
        let mut bad = back.clone();
        bad.version = 99;
        bad.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
