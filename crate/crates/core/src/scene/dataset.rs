//! Seeded dataset generation with speaker-disjoint splits and JSON-lines
//! manifests.
//!
//! Every example draws from its own RNG stream derived from
//! `(seed, split, index)`, so any single example can be regenerated
//! without the others and output does not depend on generation order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::Corpus;
use super::geometry::{ArrayGeometry, RoomSpec};
use super::render::{
    MixtureExample, SceneMetadata, SceneSpec, SourceKind, SourceSpec, NOISE_DISTANCE, SPEECH_DISTANCE,
    TARGET_AZIMUTH,
};
use super::rir::RirHorizon;
use super::shadow::HeadShadow;
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Waveform;
use crate::wav::{read_wav_at, write_wav, WavFormat};

/// Fixed acoustic setup shared by every scene of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneTemplate {
    pub room_dimensions: [f64; 3],
    pub speed_of_sound: f64,
    pub listener_position: [f64; 3],
    pub head_radius: f64,
    pub shadow: HeadShadow,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Noise azimuths within this many degrees of either talker are redrawn.
    pub noise_exclusion_deg: f64,
}

impl Default for SceneTemplate {
    fn default() -> Self {
        let room = RoomSpec::default();
        let array = ArrayGeometry::default();
        Self {
            room_dimensions: room.dimensions,
            speed_of_sound: room.speed_of_sound,
            listener_position: array.listener_position,
            head_radius: array.head_radius,
            shadow: HeadShadow::default(),
            duration_s: 3.0,
            sample_rate: 16000,
            noise_exclusion_deg: 5.0,
        }
    }
}

impl SceneTemplate {
    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn array(&self) -> ArrayGeometry {
        ArrayGeometry::hearing_aids(self.listener_position, self.head_radius)
    }

    pub fn room(&self, t60: f64) -> RoomSpec {
        RoomSpec {
            dimensions: self.room_dimensions,
            t60,
            speed_of_sound: self.speed_of_sound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionGrid {
    pub t60: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl Default for ConditionGrid {
    fn default() -> Self {
        Self {
            t60: vec![0.0, 0.3, 0.6],
            snr_db: (0..7).map(|i| -10.0 + 5.0 * i as f64).collect(),
        }
    }
}

impl ConditionGrid {
    pub fn len(&self) -> usize {
        self.t60.len() * self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Condition for example `index`: cycles SNR fastest, then T60.
    pub fn condition(&self, index: usize) -> (f64, f64) {
        let i = index % self.len();
        (self.t60[i / self.snr_db.len()], self.snr_db[i % self.snr_db.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn count(self, c: &SplitCounts) -> usize {
        match self {
            Split::Train => c.train,
            Split::Val => c.val,
            Split::Test => c.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub scene: SceneTemplate,
    #[serde(default)]
    pub grid: ConditionGrid,
    pub splits: SplitCounts,
    pub seed: u64,
    /// Allow speaker pairs to repeat within a split when there are too few speakers.
    #[serde(default)]
    pub relax_unique_pairs: bool,
}

/// One manifest line: everything needed to reload or regenerate an example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub index: usize,
    pub sample_rate: u32,
    pub num_samples: usize,
    #[serde(flatten)]
    pub metadata: SceneMetadata,
    pub mixture: PathBuf,
    pub target_left: PathBuf,
    pub target_right: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub counts: Vec<(Split, usize)>,
    pub manifests: Vec<PathBuf>,
    pub digest: String,
    pub t60_values: Vec<f64>,
    pub snr_values: Vec<f64>,
}

fn min_speakers_for_pairs(count: usize, relax: bool) -> usize {
    if count == 0 {
        return 0;
    }
    if relax {
        return 2;
    }
    let mut n = 2;
    while n * (n - 1) / 2 < count {
        n += 1;
    }
    n
}

/// Speaker indices assigned to each split; splits are disjoint.
pub fn allocate_speakers(num_speakers: usize, cfg: &DatasetConfig) -> Result<[Vec<usize>; 3]> {
    if num_speakers < 2 {
        return Err(Error::Dataset(format!("need at least 2 distinct speakers, corpus has {num_speakers}")));
    }
    let need: Vec<usize> = Split::ALL
        .iter()
        .map(|s| min_speakers_for_pairs(s.count(&cfg.splits), cfg.relax_unique_pairs))
        .collect();
    let total: usize = need.iter().sum();
    if total > num_speakers {
        return Err(Error::Dataset(format!(
            "unique speaker pairs for splits {:?} need {total} distinct speakers ({} / {} / {}), corpus has {num_speakers}",
            cfg.splits, need[0], need[1], need[2]
        )));
    }
    let mut order: Vec<usize> = (0..num_speakers).collect();
    order.shuffle(&mut rng::stream(cfg.seed, &[rng::tag("speakers")]));

    // spare speakers go to splits proportionally to their example counts
    let spare = num_speakers - total;
    let counts: Vec<usize> = Split::ALL.iter().map(|s| s.count(&cfg.splits)).collect();
    let sum: usize = counts.iter().sum::<usize>().max(1);
    let mut alloc: Vec<usize> = need
        .iter()
        .zip(&counts)
        .map(|(n, c)| if *c == 0 { 0 } else { n + spare * c / sum })
        .collect();
    let leftover = num_speakers - alloc.iter().sum::<usize>();
    if let Some(i) = counts.iter().position(|c| *c > 0) {
        alloc[i] += leftover;
    }
    let mut out: [Vec<usize>; 3] = Default::default();
    let mut cursor = 0;
    for (slot, n) in out.iter_mut().zip(alloc) {
        *slot = order[cursor..cursor + n].to_vec();
        cursor += n;
    }
    Ok(out)
}

/// Shuffled unordered speaker pairs for a split, one per example.
fn split_pairs(speakers: &[usize], count: usize, split: Split, cfg: &DatasetConfig) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (i, a) in speakers.iter().enumerate() {
        for b in &speakers[i + 1..] {
            pairs.push((*a, *b));
        }
    }
    pairs.shuffle(&mut rng::stream(cfg.seed, &[rng::tag("pairs"), split as u64]));
    if pairs.len() < count && !cfg.relax_unique_pairs {
        return Err(Error::Dataset(format!(
            "{} split needs {count} unique speaker pairs but only {} exist",
            split.name(),
            pairs.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!("{} split has fewer than two speakers", split.name())));
    }
    Ok((0..count).map(|i| pairs[i % pairs.len()]).collect())
}

/// Scene description and metadata for example `index` of `split`.
pub fn example_scene(
    corpus: &Corpus,
    cfg: &DatasetConfig,
    split: Split,
    index: usize,
    pair: (usize, usize),
) -> Result<(SceneSpec, SceneMetadata)> {
    let seed = rng::derive_seed(cfg.seed, &[rng::tag("example"), split as u64, index as u64]);
    let mut r = rng::stream(seed, &[]);
    let tpl = &cfg.scene;
    let n = tpl.num_samples();
    let fs = tpl.sample_rate;
    let (t60, snr_db) = cfg.grid.condition(index);

    let (l, rr) = if r.gen_bool(0.5) { pair } else { (pair.1, pair.0) };
    let spk_l = &corpus.speakers[l];
    let spk_r = &corpus.speakers[rr];
    let utt_l = r.gen_range(0..spk_l.utterances.len());
    let utt_r = r.gen_range(0..spk_r.utterances.len());
    let d_l = r.gen_range(SPEECH_DISTANCE.0..=SPEECH_DISTANCE.1);
    let d_r = r.gen_range(SPEECH_DISTANCE.0..=SPEECH_DISTANCE.1);
    let sig_l = spk_l.utterances[utt_l].load(n, fs, r.gen())?;
    let sig_r = spk_r.utterances[utt_r].load(n, fs, r.gen())?;

    let noise = if corpus.noises.is_empty() {
        None
    } else {
        let k = r.gen_range(0..corpus.noises.len());
        let az = loop {
            let a: f64 = r.gen_range(-180.0..180.0);
            if (a.abs() - TARGET_AZIMUTH).abs() > tpl.noise_exclusion_deg {
                break a;
            }
        };
        let d = r.gen_range(NOISE_DISTANCE.0..=NOISE_DISTANCE.1);
        let sig = corpus.noises[k].source.load(n, fs, r.gen())?;
        Some((k, az, d, sig))
    };

    let metadata = SceneMetadata {
        seed,
        t60,
        snr_db,
        distance_left: d_l,
        distance_right: d_r,
        distance_noise: noise.as_ref().map(|n| n.2),
        azimuth_noise: noise.as_ref().map(|n| n.1),
        speaker_left: spk_l.id.clone(),
        speaker_right: spk_r.id.clone(),
        utterance_left: utt_l,
        utterance_right: utt_r,
        noise_id: noise.as_ref().map(|n| corpus.noises[n.0].id.clone()),
        normalization_gain: 1.0,
        noise_gain: 0.0,
    };
    let talker = |az: f64, d: f64, signal: Waveform| SourceSpec {
        kind: SourceKind::Speech,
        azimuth: az,
        distance: d,
        signal,
    };
    let spec = SceneSpec {
        room: tpl.room(t60),
        array: tpl.array(),
        shadow: tpl.shadow,
        horizon: RirHorizon::T60,
        talker_left: talker(-TARGET_AZIMUTH, d_l, sig_l),
        talker_right: talker(TARGET_AZIMUTH, d_r, sig_r),
        noise: noise.map(|(_, az, d, signal)| SourceSpec {
            kind: SourceKind::Noise,
            azimuth: az,
            distance: d,
            signal,
        }),
        snr_db,
        num_samples: n,
        sample_rate: fs,
    };
    Ok((spec, metadata))
}

/// In-memory generation of a whole split.
pub fn generate_split(corpus: &Corpus, cfg: &DatasetConfig, split: Split) -> Result<Vec<MixtureExample>> {
    let alloc = allocate_speakers(corpus.speakers.len(), cfg)?;
    let count = split.count(&cfg.splits);
    let pairs = split_pairs(&alloc[split as usize], count, split, cfg)?;
    pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let (spec, meta) = example_scene(corpus, cfg, split, i, *pair)?;
            spec.render(meta)
        })
        .collect()
}

/// Renders every split to `root` and writes `train.jsonl`, `val.jsonl`, `test.jsonl`.
pub fn build_dataset(corpus: &Corpus, cfg: &DatasetConfig, root: &Path) -> Result<DatasetSummary> {
    if cfg.grid.is_empty() {
        return Err(Error::Config("condition grid is empty".into()));
    }
    let alloc = allocate_speakers(corpus.speakers.len(), cfg)?;
    let mut manifests = Vec::new();
    let mut counts = Vec::new();
    let mut hasher = Sha256::new();
    let mut t60s = Vec::new();
    let mut snrs = Vec::new();
    for split in Split::ALL {
        let count = split.count(&cfg.splits);
        let pairs = if count == 0 {
            Vec::new()
        } else {
            split_pairs(&alloc[split as usize], count, split, cfg)?
        };
        let dir = root.join(split.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest = root.join(format!("{}.jsonl", split.name()));
        let mut lines = String::new();
        for (i, pair) in pairs.iter().enumerate() {
            let (spec, meta) = example_scene(corpus, cfg, split, i, *pair)?;
            let ex = spec.render(meta)?;
            let id = format!("{}_{i:05}", split.name());
            let rel = |suffix: &str| PathBuf::from(split.name()).join(format!("{id}_{suffix}.wav"));
            let record = ManifestRecord {
                id: id.clone(),
                split,
                index: i,
                sample_rate: cfg.scene.sample_rate,
                num_samples: ex.mixture.len(),
                metadata: ex.metadata.clone(),
                mixture: rel("mix"),
                target_left: rel("left"),
                target_right: rel("right"),
            };
            write_wav(root.join(&record.mixture), &ex.mixture, WavFormat::Float32)?;
            write_wav(root.join(&record.target_left), &ex.target_left, WavFormat::Float32)?;
            write_wav(root.join(&record.target_right), &ex.target_right, WavFormat::Float32)?;
            t60s.push(record.metadata.t60);
            snrs.push(record.metadata.snr_db);
            lines.push_str(&serde_json::to_string(&record)?);
            lines.push('\n');
        }
        let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
        f.write_all(lines.as_bytes()).map_err(|e| Error::io(&manifest, e))?;
        hasher.update(lines.as_bytes());
        counts.push((split, count));
        manifests.push(manifest);
    }
    Ok(DatasetSummary {
        root: root.to_path_buf(),
        counts,
        manifests,
        digest: format!("{:x}", hasher.finalize()),
        t60_values: distinct(t60s),
        snr_values: distinct(snrs),
    })
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// SHA-256 over manifest contents, in the given order.
pub fn manifest_digest(paths: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

impl ManifestRecord {
    /// Loads the example's audio; paths are relative to `root`.
    pub fn load(&self, root: &Path) -> Result<MixtureExample> {
        let mixture = read_wav_at(root.join(&self.mixture), self.sample_rate)?;
        let target_left = read_wav_at(root.join(&self.target_left), self.sample_rate)?;
        let target_right = read_wav_at(root.join(&self.target_right), self.sample_rate)?;
        if mixture.num_channels() != 8 || target_left.num_channels() != 1 || target_right.num_channels() != 1 {
            return Err(Error::Dataset(format!("{}: unexpected channel layout", self.id)));
        }
        if mixture.len() != target_left.len() || mixture.len() != target_right.len() {
            return Err(Error::Dataset(format!("{}: mixture and targets differ in length", self.id)));
        }
        Ok(MixtureExample {
            mixture,
            target_left,
            target_right,
            metadata: self.metadata.clone(),
        })
    }
}

/// Loads every example listed in `manifest`, resolving paths against its directory.
pub fn load_split(manifest: &Path) -> Result<Vec<(ManifestRecord, MixtureExample)>> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            let ex = r.load(root)?;
            Ok((r, ex))
        })
        .collect()
}
