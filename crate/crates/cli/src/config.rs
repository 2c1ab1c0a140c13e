//! TOML run configuration shared by every subcommand.
//!
//! Each subcommand reads only the sections it needs; missing sections fall
//! back to library defaults.

use std::path::{Path, PathBuf};

use earsep_core::model::ModelConfig;
use earsep_core::scene::{Corpus, DatasetConfig};
use earsep_core::signal::StftConfig;
use earsep_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub stft: StftSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorpusConfig {
    /// Procedural talkers and noises; needs no files.
    Synthetic {
        speakers: usize,
        utterances: usize,
        noises: usize,
        seed: u64,
    },
    /// One sub-directory of WAVs per speaker plus a flat noise folder.
    Directories { speech_dir: PathBuf, noise_dir: PathBuf },
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig::Synthetic {
            speakers: 40,
            utterances: 8,
            noises: 6,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    /// Relative directories resolve against the config file's directory.
    pub fn load(&self, base: &Path) -> CliResult<Corpus> {
        match self {
            CorpusConfig::Synthetic {
                speakers,
                utterances,
                noises,
                seed,
            } => Ok(Corpus::synthetic(*speakers, *utterances, *noises, *seed)),
            CorpusConfig::Directories { speech_dir, noise_dir } => {
                Ok(Corpus::from_dirs(&base.join(speech_dir), &base.join(noise_dir))?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub window_length: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        Self { window_length: 512 }
    }
}

impl StftSection {
    pub fn config(&self) -> StftConfig {
        StftConfig::hann(self.window_length)
    }
}

pub fn parse(text: &str) -> CliResult<RunConfig> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        if path == "." {
            CliError::config(msg)
        } else {
            CliError::config(format!("at `{path}`: {msg}"))
        }
    })
}

/// Reads a config file, or returns defaults when no file is given.
pub fn load(path: Option<&Path>) -> CliResult<(RunConfig, PathBuf)> {
    match path {
        None => Ok((RunConfig::default(), PathBuf::from("."))),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            let cfg = parse(&text).map_err(|e| CliError::config(format!("{}: {}", p.display(), e.message)))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            Ok((cfg, base))
        }
    }
}
