use std::path::Path;

use super::report::{ExampleRecord, FailedExample, MetricReport, PairScore, SourceScore};
use super::sisdr::si_sdr;
use super::stoi::stoi;
use crate::error::{Error, Result};
use crate::model::{Mode, SeparationNet};
use crate::scene::{read_manifest, MixtureExample, Side};
use crate::signal::{StftConfig, StftProcessor, Waveform};

/// A trained network plus the STFT it was trained with.
pub struct Separator<'a> {
    pub net: &'a SeparationNet,
    pub stft: StftProcessor,
    pub label: String,
}

impl<'a> Separator<'a> {
    pub fn new(net: &'a SeparationNet, stft: StftConfig, label: impl Into<String>) -> Result<Self> {
        if stft.bins() != net.config().bins {
            return Err(Error::shape("STFT bins vs model bins", net.config().bins, stft.bins()));
        }
        Ok(Self {
            net,
            stft: StftProcessor::new(stft)?,
            label: label.into(),
        })
    }

    /// Eval-mode separation of an 8-channel mixture into left/right waveforms.
    pub fn separate(&self, mixture: &Waveform) -> Result<[Vec<f64>; 2]> {
        let spec = self.stft.stft(mixture)?;
        let out = self.net.forward(&spec, Mode::Eval)?;
        let left = self.stft.istft(&out.left)?.into_channels().remove(0);
        let right = self.stft.istft(&out.right)?.into_channels().remove(0);
        Ok([left, right])
    }
}

/// The in-ear microphone leads each side's channel group.
pub fn in_ear_channel(side: Side) -> usize {
    side.channels().start
}

fn score(estimate: &[f64], target: &Waveform) -> Result<SourceScore> {
    let s = si_sdr(estimate, target.channel(0))?;
    Ok(SourceScore {
        si_sdr: s.db,
        si_sdr_clipped: s.clipped,
        stoi: stoi(estimate, target.channel(0), target.sample_rate())?,
    })
}

fn score_pair(estimates: [&[f64]; 2], ex: &MixtureExample) -> Result<PairScore> {
    Ok(PairScore {
        left: score(estimates[0], &ex.target_left)?,
        right: score(estimates[1], &ex.target_right)?,
    })
}

/// Baseline and (optionally) model scores for one example.
pub fn evaluate_example(id: &str, ex: &MixtureExample, separator: Option<&Separator>) -> Result<ExampleRecord> {
    let unprocessed = score_pair(
        [
            ex.mixture.channel(in_ear_channel(Side::Left)),
            ex.mixture.channel(in_ear_channel(Side::Right)),
        ],
        ex,
    )?;
    let model = match separator {
        Some(sep) => {
            let [l, r] = sep.separate(&ex.mixture)?;
            Some(score_pair([&l, &r], ex)?)
        }
        None => None,
    };
    Ok(ExampleRecord {
        id: id.to_string(),
        metadata: ex.metadata.clone(),
        unprocessed,
        model,
    })
}

/// Scores in-memory examples; failures are recorded and skipped.
pub fn evaluate_examples<'e>(
    examples: impl IntoIterator<Item = (String, &'e MixtureExample)>,
    separator: Option<&Separator>,
) -> Result<MetricReport> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, ex) in examples {
        match evaluate_example(&id, ex, separator) {
            Ok(r) => records.push(r),
            Err(e) => failures.push(FailedExample { id, error: e.to_string() }),
        }
    }
    MetricReport::new(separator.map(|s| s.label.clone()), records, failures)
}

/// Scores every example of a manifest; unreadable examples are recorded as failures.
pub fn evaluate_dataset(manifest: &Path, separator: Option<&Separator>) -> Result<MetricReport> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for rec in read_manifest(manifest)? {
        let result = rec.load(root).and_then(|ex| evaluate_example(&rec.id, &ex, separator));
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("{}: {e}", rec.id);
                failures.push(FailedExample {
                    id: rec.id.clone(),
                    error: e.to_string(),
                })
            }
        }
    }
    MetricReport::new(separator.map(|s| s.label.clone()), records, failures)
}
