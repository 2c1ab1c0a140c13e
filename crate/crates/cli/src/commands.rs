use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use earsep_core::checkpoint::Checkpoint;
use earsep_core::metrics::{evaluate_dataset, Aggregates, Bin, MetricReport, Separator};
use earsep_core::model::SeparationNet;
use earsep_core::scene::{build_dataset, load_split, read_manifest, DatasetConfig, MixtureExample, Split};
use earsep_core::train::{EpochRecord, FitOutputs, SiSdrValidator, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use crate::plot::{self, PlotData};

pub const DATASET_SUMMARY: &str = "dataset.json";
pub const TRAIN_LOG: &str = "log.jsonl";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const REPORT: &str = "report.json";
pub const TABLE: &str = "table.txt";
pub const PLOT_DATA: &str = "plot_data.json";
pub const SNR_PLOT: &str = "snr.svg";
pub const T60_PLOT: &str = "t60.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub digest: String,
    pub counts: Vec<(Split, usize)>,
    pub t60_values: Vec<f64>,
    pub snr_values: Vec<f64>,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_si_sdr: Option<f64>,
    pub early_stopped: bool,
    pub final_lr: f64,
    pub model_digest: String,
    pub best_checkpoint: PathBuf,
}

/// Human-readable output; silenced by `--quiet`.
pub struct Console {
    pub quiet: bool,
}

impl Console {
    pub fn say(&self, text: &str) {
        if !self.quiet {
            println!("{text}");
        }
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{what} {} does not exist", path.display())))
    }
}

fn examples(manifest: &Path) -> CliResult<Vec<MixtureExample>> {
    Ok(load_split(manifest)?.into_iter().map(|(_, e)| e).collect())
}

pub fn synth(config_path: Option<&Path>, seed: Option<u64>, out: &Path, overwrite: bool, console: &Console) -> CliResult<DatasetInfo> {
    let (cfg, base) = config::load(config_path)?;
    let mut ds = cfg
        .dataset
        .ok_or_else(|| CliError::config("synth needs a [dataset] section with `splits` and `seed`"))?;
    if let Some(s) = seed {
        ds.seed = s;
    }
    let corpus = cfg.corpus.load(&base)?;
    let artifacts = ["train", "val", "test", "train.jsonl", "val.jsonl", "test.jsonl", DATASET_SUMMARY];
    let out = OutDir::prepare(out, &artifacts, overwrite)?;
    let summary = build_dataset(&corpus, &ds, &out.root)?;
    let info = DatasetInfo {
        digest: summary.digest,
        counts: summary.counts,
        t60_values: summary.t60_values,
        snr_values: summary.snr_values,
        config: ds,
    };
    out.write_json(DATASET_SUMMARY, &info)?;
    let counts: Vec<String> = info.counts.iter().map(|(s, n)| format!("{} {n}", s.name())).collect();
    console.say(&format!(
        "dataset at {}\n  examples: {}\n  T60 (s): {:?}\n  SNR (dB): {:?}\n  manifest digest: {}",
        out.root.display(),
        counts.join(", "),
        info.t60_values,
        info.snr_values,
        info.digest
    ));
    Ok(info)
}

pub struct TrainArgs<'a> {
    pub config: Option<&'a Path>,
    pub manifest: &'a Path,
    pub val: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub overwrite: bool,
}

pub fn train(args: TrainArgs, console: &Console) -> CliResult<TrainSummary> {
    let (mut cfg, _) = config::load(args.config)?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    require_file(args.manifest, "training manifest")?;
    let val_path = args
        .val
        .map(Path::to_path_buf)
        .unwrap_or_else(|| args.manifest.with_file_name("val.jsonl"));
    require_file(&val_path, "validation manifest")?;

    let mut trainer = match args.checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            let mut tr = Trainer::resume(&Checkpoint::load(p)?)?;
            if args.config.is_some() {
                log::info!("resuming: model and optimizer settings come from the checkpoint; only max_epochs is read from the config");
                tr.extend_max_epochs(cfg.train.max_epochs);
            }
            tr
        }
        None => {
            let net = SeparationNet::init(cfg.model.clone(), cfg.train.seed)?;
            Trainer::new(net, cfg.stft.config(), cfg.train.clone())?
        }
    };
    // A resumed run continues the log and checkpoints of the directory it was paused in.
    let artifacts = [TRAIN_LOG, BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_SUMMARY];
    let guarded: &[&str] = if args.checkpoint.is_some() { &[TRAIN_SUMMARY] } else { &artifacts };
    let out = OutDir::prepare(args.out, guarded, args.overwrite || args.checkpoint.is_some())?;

    let train_set = examples(args.manifest)?;
    let val_set = examples(&val_path)?;
    if val_set.is_empty() {
        return Err(CliError::data(format!("validation manifest {} is empty", val_path.display())));
    }
    console.say(&format!(
        "training on {} examples, validating on {} ({} trainable parameters)",
        train_set.len(),
        val_set.len(),
        trainer.net.params().num_trainable()
    ));
    let outputs = FitOutputs {
        checkpoint_dir: Some(out.root.clone()),
        log_path: Some(out.path(TRAIN_LOG)),
        pause_after: None,
    };
    trainer.fit(&train_set, &mut SiSdrValidator { examples: &val_set }, &outputs)?;

    let s = &trainer.state;
    let summary = TrainSummary {
        epochs: s.epoch,
        best_epoch: s.best_epoch,
        best_val_si_sdr: s.best_val,
        early_stopped: s.epoch < trainer.config.max_epochs,
        final_lr: s.lr,
        model_digest: trainer.net.digest(),
        best_checkpoint: out.path(BEST_CHECKPOINT),
    };
    out.write_json(TRAIN_SUMMARY, &summary)?;
    let mut text = String::new();
    for r in &s.history {
        let _ = writeln!(text, "  {}", epoch_line(r));
    }
    console.say(&format!(
        "{text}{} epochs{}; best validation SI-SDR {} at epoch {}\n  checkpoint: {}",
        summary.epochs,
        if summary.early_stopped { " (early stop)" } else { "" },
        summary.best_val_si_sdr.map_or("-".into(), |v| format!("{v:.2} dB")),
        summary.best_epoch.map_or("-".into(), |e| e.to_string()),
        summary.best_checkpoint.display()
    ));
    Ok(summary)
}

fn epoch_line(r: &EpochRecord) -> String {
    format!(
        "epoch {:>3}  lr {:.2e}  train loss {:>8.3}  val SI-SDR {:>7.2} dB{}",
        r.epoch,
        r.lr,
        r.train_loss,
        r.val_si_sdr,
        if r.improved { "  *" } else { "" }
    )
}

pub fn eval(manifest: &Path, checkpoint: Option<&Path>, out: &Path, overwrite: bool, console: &Console) -> CliResult<MetricReport> {
    require_file(manifest, "manifest")?;
    let loaded = match checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            let ck = Checkpoint::load(p)?;
            Some((ck.model()?, ck.stft))
        }
        None => None,
    };
    let separator = match &loaded {
        Some((net, stft)) => Some(Separator::new(net, *stft, "Model")?),
        None => None,
    };
    if let Some(sep) = &separator {
        check_compatible(manifest, sep)?;
    }
    let out = OutDir::prepare(out, &[REPORT, TABLE], overwrite)?;
    let report = evaluate_dataset(manifest, separator.as_ref())?;
    out.write_json(REPORT, &report)?;
    let table = report.table();
    out.write_text(TABLE, &table)?;
    console.say(&format!("{} examples scored\n{table}", report.records.len()));
    Ok(report)
}

/// Runs the model on the first example so dimension mismatches fail loudly
/// instead of turning every example into a recorded failure.
fn check_compatible(manifest: &Path, sep: &Separator) -> CliResult<()> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let Some(first) = read_manifest(manifest)?.into_iter().next() else {
        return Ok(());
    };
    let ex = first.load(root)?;
    sep.separate(&ex.mixture).map(|_| ()).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("checkpoint does not fit the data ({}): {}", first.id, err.message);
        err
    })
}

fn stratified_table(title: &str, report: &MetricReport, bins: fn(&Aggregates) -> &[Bin]) -> String {
    let mut out = String::new();
    let mut header = vec![("Unprocessed".to_string(), &report.unprocessed)];
    if let Some(m) = &report.model {
        header.push((report.system.clone().unwrap_or_else(|| "Model".into()), m));
    }
    let _ = write!(out, "{title:>10}");
    for (name, _) in &header {
        let _ = write!(out, " | {:^21}", name);
    }
    out.push('\n');
    let _ = write!(out, "{:>10}", "");
    for _ in &header {
        let _ = write!(out, " | {:>9} {:>11}", "SI-SDR", "STOI");
    }
    out.push('\n');
    for (i, b) in bins(&report.unprocessed).iter().enumerate() {
        let _ = write!(out, "{:>10}", b.value);
        for (_, agg) in &header {
            let m = bins(agg)[i].mean;
            let _ = write!(out, " | {:>9.2} {:>11.3}", m.si_sdr, m.stoi);
        }
        out.push('\n');
    }
    out
}

pub fn report(path: &Path, out: &Path, overwrite: bool, console: &Console) -> CliResult<PlotData> {
    require_file(path, "report")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let report: MetricReport =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if report.records.is_empty() {
        return Err(CliError::data(format!("{} holds no evaluated examples", path.display())));
    }
    let out = OutDir::prepare(out, &[PLOT_DATA, SNR_PLOT, T60_PLOT, TABLE], overwrite)?;
    let data = PlotData::from_report(&report);
    out.write_json(PLOT_DATA, &data)?;
    plot::render(&data.snr, "SNR-stratified", &out.path(SNR_PLOT))?;
    plot::render(&data.t60, "T60-stratified", &out.path(T60_PLOT))?;
    let tables = format!(
        "{}\n{}\n{}",
        report.table(),
        stratified_table("SNR (dB)", &report, |a| &a.by_snr),
        stratified_table("T60 (s)", &report, |a| &a.by_t60)
    );
    out.write_text(TABLE, &tables)?;
    console.say(&tables);
    console.say(&format!("plots written to {}", out.root.display()));
    Ok(data)
}
