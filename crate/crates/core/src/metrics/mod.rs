//! SI-SDR objective, STOI, and stratified evaluation reports.

mod evaluate;
mod report;
mod sisdr;
mod stoi;

pub use evaluate::{evaluate_dataset, evaluate_example, evaluate_examples, in_ear_channel, Separator};
pub use report::{aggregate, Aggregate, Aggregates, Bin, ExampleRecord, FailedExample, MetricReport, PairScore, SourceScore};
pub use sisdr::{loss, si_sdr, smooth_si_sdr, training_loss, SiSdr, SI_SDR_CLIP_DB, SMOOTH_EPS};
pub use stoi::{min_stoi_samples, stoi, Resampler, STOI_RATE};
