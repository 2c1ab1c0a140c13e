//! Spatialized two-talker scene synthesis.

pub mod corpus;
pub mod dataset;
mod decay;
pub mod geometry;
pub mod render;
pub mod rir;
pub mod shadow;

pub use corpus::{Corpus, NoiseKind, SignalSource, Speaker, Voice};
pub use dataset::{
    build_dataset, load_split, read_manifest, ConditionGrid, DatasetConfig, DatasetSummary, ManifestRecord,
    SceneTemplate, Split, SplitCounts,
};
pub use geometry::{ArrayGeometry, Point, RoomSpec, Side, NUM_MICS};
pub use render::{scale_noise_to_snr, MixtureExample, SceneMetadata, SceneSpec, SourceKind, SourceSpec};
pub use rir::{image_source_rir, image_source_rirs, RirHorizon};
pub use shadow::{head_shadow_filter, HeadShadow, OnePole};
